//! Randomized invariants of the numerical kernels.

use proptest::prelude::*;

use velpick::cluster::{assf_cluster, assf_iterate, merge_centers, AssfConfig, Center};
use velpick::ensemble::{confidence_filter, interval_constraint, EnsembleConfig};
use velpick::evalqc::{mean_deviation, nmo_correct, picking_rate, vmae, vmre, PR_GATE};
use velpick::model::{
    dix_interval, CmpGather, SpectrumGrid, SurveyIndex, TimeAxis, VelocityAxis,
    VelocityFunction, WeightedPoint,
};
use velpick::regress::{alwlr_predict, lwlr_predict, AlwlrConfig};
use velpick::spectrum::{
    ln_gain, semblance_spectrum, threshold_points, GainConfig, SemblanceConfig,
};

fn loc() -> SurveyIndex {
    SurveyIndex::new(0, 0)
}

/// Strictly increasing times paired with positive velocities.
fn curve_strategy(max_picks: usize) -> impl Strategy<Value = VelocityFunction> {
    prop::collection::vec((10.0f64..4000.0, 1200.0f64..5000.0), 1..=max_picks).prop_map(|mut raw| {
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        raw.dedup_by(|b, a| (b.0 - a.0).abs() < 1.0);
        VelocityFunction::new(raw).unwrap()
    })
}

fn points_strategy(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<WeightedPoint>> {
    prop::collection::vec((0.0f64..4000.0, 1500.0f64..4500.0, 0.01f64..1.0), n)
        .prop_map(|raw| raw.into_iter().map(|(t, v, c)| WeightedPoint::new(t, v, c)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn semblance_values_stay_in_unit_interval(
        traces in prop::collection::vec(-5.0f64..5.0, 63 * 4),
        m_half in 1usize..4,
        stride in 1usize..4,
    ) {
        let taxis = TimeAxis::new(0.0, 20.0, 63).unwrap();
        let offsets = vec![0.0, 800.0, 1600.0, 2400.0];
        // samples arrive time-major: row i holds all traces at time i
        let g = CmpGather::new(taxis, offsets, traces, loc()).unwrap();
        let cfg = SemblanceConfig::new(
            m_half,
            VelocityAxis::new(1500.0, 250.0, 9).unwrap(),
            stride,
        );
        let s = semblance_spectrum(&g, &cfg).unwrap();
        prop_assert!(s.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn gain_is_invariant_under_input_scaling(
        vals in prop::collection::vec(0.0f64..1.0, 60 * 5),
        k in 0.01f64..100.0,
    ) {
        let taxis = TimeAxis::new(0.0, 20.0, 60).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 5).unwrap();
        let a = SpectrumGrid::new(taxis, vaxis, vals.clone(), loc()).unwrap();
        let scaled: Vec<f64> = vals.iter().map(|v| v * k).collect();
        let b = SpectrumGrid::new(taxis, vaxis, scaled, loc()).unwrap();
        let cfg = GainConfig::new(10, true, 0.3);
        let ga = ln_gain(&a, &cfg).unwrap();
        let gb = ln_gain(&b, &cfg).unwrap();
        for (x, y) in ga.values().iter().zip(gb.values()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn threshold_points_are_exactly_the_cells_above_tau(
        vals in prop::collection::vec(0.0f64..1.0, 12 * 6),
        tau in 0.0f64..1.0,
    ) {
        let taxis = TimeAxis::new(0.0, 20.0, 12).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 6).unwrap();
        let s = SpectrumGrid::new(taxis, vaxis, vals, loc()).unwrap();
        let pts = threshold_points(&s, tau);
        let expected = s.values().iter().filter(|&&v| v > tau).count();
        prop_assert_eq!(pts.len(), expected);
        prop_assert!(pts.iter().all(|p| p.c > tau));
        prop_assert!(pts.windows(2).all(|w| (w[0].t, w[0].v) < (w[1].t, w[1].v)));
    }

    #[test]
    fn alwlr_reproduces_exact_lines(
        slope in -0.5f64..2.0,
        intercept in 1500.0f64..3000.0,
        c in 0.05f64..1.0,
    ) {
        let ts = [100.0, 500.0, 1100.0, 1900.0, 2600.0, 3400.0];
        let pts: Vec<WeightedPoint> = ts
            .iter()
            .map(|&t| WeightedPoint::new(t, slope * t + intercept, c))
            .collect();
        let cfg = AlwlrConfig::new(22500.0, 5.0, vec![300.0, 1000.0, 2200.0, 3000.0]);
        let f = alwlr_predict(&pts, &cfg).unwrap();
        for &(t, v) in f.picks() {
            let want = (slope * t + intercept).max(1.0);
            prop_assert!((v - want).abs() <= 1e-6 * want, "at {t}: {v} vs {want}");
        }
    }

    #[test]
    fn alwlr_lambda_zero_is_lwlr_for_any_lambda(
        pts in points_strategy(3..20),
        lambda in 0.0f64..10.0,
    ) {
        prop_assume!(pts.windows(2).any(|w| w[0].t != w[1].t) || pts[0].t != pts[pts.len() - 1].t);
        let times = vec![200.0, 1000.0, 1800.0, 2600.0];
        let a = alwlr_predict(&pts, &AlwlrConfig::new(40000.0, 0.0, times.clone())).unwrap();
        let b = lwlr_predict(&pts, &AlwlrConfig::new(40000.0, lambda, times)).unwrap();
        for (pa, pb) in a.picks().iter().zip(b.picks()) {
            prop_assert!((pa.1 - pb.1).abs() <= 1e-9 * pa.1.abs().max(1.0));
        }
    }

    #[test]
    fn alwlr_is_invariant_under_coherence_scaling(
        pts in points_strategy(3..20),
        k in 0.1f64..50.0,
    ) {
        prop_assume!(pts.iter().any(|p| p.t != pts[0].t));
        let scaled: Vec<WeightedPoint> = pts
            .iter()
            .map(|p| WeightedPoint::new(p.t, p.v, p.c * k))
            .collect();
        let cfg = AlwlrConfig::new(22500.0, 5.0, vec![500.0, 1500.0, 2500.0]);
        let a = alwlr_predict(&pts, &cfg).unwrap();
        let b = alwlr_predict(&scaled, &cfg).unwrap();
        // k^lambda rescales the normal equations; allow for the rounding
        // drift of a possibly ill-conditioned local solve
        for (pa, pb) in a.picks().iter().zip(b.picks()) {
            prop_assert!((pa.1 - pb.1).abs() <= 1e-3 * pa.1.abs().max(1.0));
        }
    }

    #[test]
    fn assf_iterate_stays_in_point_bounding_box(
        pts in points_strategy(5..40),
        sigma in 50.0f64..2000.0,
        alpha in 0.0f64..3.0,
    ) {
        let lo_t = pts.iter().map(|p| p.t).fold(f64::INFINITY, f64::min);
        let hi_t = pts.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max);
        let lo_v = pts.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
        let hi_v = pts.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
        let centers: Vec<Center> = pts
            .iter()
            .map(|p| Center { t: p.t, v: p.v, mass: p.c })
            .collect();
        let out = assf_iterate(&pts, &centers, sigma, alpha, 30.0).unwrap();
        // every update is a convex combination of the points
        let eps = 1e-9;
        for c in &out {
            prop_assert!(c.t >= lo_t - eps && c.t <= hi_t + eps);
            prop_assert!(c.v >= lo_v - eps && c.v <= hi_v + eps);
        }
    }

    #[test]
    fn merge_preserves_mass_and_never_grows(
        pts in points_strategy(2..30),
        t_merge in 10.0f64..800.0,
    ) {
        let centers: Vec<Center> = pts
            .iter()
            .map(|p| Center { t: p.t, v: p.v, mass: p.c })
            .collect();
        let merged = merge_centers(&centers, t_merge);
        prop_assert!(!merged.is_empty() && merged.len() <= centers.len());
        let before: f64 = centers.iter().map(|c| c.mass).sum();
        let after: f64 = merged.iter().map(|c| c.mass).sum();
        prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
        // idempotent at the same radius
        let again = merge_centers(&merged, t_merge);
        prop_assert_eq!(again.len(), merged.len());
    }

    #[test]
    fn assf_cluster_is_deterministic_and_bounded(pts in points_strategy(5..60)) {
        let cfg = AssfConfig::default();
        let (a, _) = assf_cluster(&pts, &cfg).unwrap();
        let (b, _) = assf_cluster(&pts, &cfg).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x, y);
        }
        prop_assert!(!a.is_empty() && a.len() <= pts.len());
    }

    #[test]
    fn confidence_filter_is_monotone_and_a_subset(
        pts in points_strategy(1..40),
        refc in curve_strategy(6),
        w_small in 1.0f64..300.0,
        w_extra in 0.0f64..300.0,
    ) {
        let small = confidence_filter(&pts, Some(&refc), Some(&refc), w_small);
        let large = confidence_filter(&pts, Some(&refc), Some(&refc), w_small + w_extra);
        for p in &small {
            prop_assert!(large.contains(p));
            prop_assert!(pts.contains(p));
            prop_assert!((p.v - refc.eval(p.t)).abs() < w_small);
        }
        // without references nothing is filtered
        prop_assert_eq!(confidence_filter(&pts, None, None, w_small).len(), pts.len());
    }

    #[test]
    fn interval_constraint_output_is_admissible(
        pts in points_strategy(1..25),
        refc in curve_strategy(6),
    ) {
        let cfg = EnsembleConfig::default();
        let f = interval_constraint(&pts, Some(&refc), Some(&refc), &cfg).unwrap();
        let picks = f.picks();
        prop_assert!(!picks.is_empty());
        // every output pick is one of the inputs
        for &(t, v) in picks {
            prop_assert!(pts.iter().any(|p| p.t == t && p.v == v));
        }
        for w in picks.windows(2) {
            prop_assert!(w[1].0 - w[0].0 >= cfg.t_min_gap);
            let vint = dix_interval(w[0].1, w[0].0, w[1].1, w[1].0).unwrap();
            prop_assert!(vint > cfg.int_v_range.0 && vint < cfg.int_v_range.1);
        }
    }

    #[test]
    fn nmo_zero_offset_trace_is_unchanged(
        traces in prop::collection::vec(-3.0f64..3.0, 50 * 2),
        curve in curve_strategy(5),
    ) {
        let taxis = TimeAxis::new(0.0, 20.0, 50).unwrap();
        let g = CmpGather::new(taxis, vec![0.0, 1000.0], traces, loc()).unwrap();
        let nmo = nmo_correct(&g, &curve, 0.5);
        for i in 0..taxis.n {
            prop_assert!(nmo.is_live(i, 0));
            prop_assert_eq!(nmo.gather.amp(i, 0), g.amp(i, 0));
        }
        // muted samples carry no amplitude
        for i in 0..taxis.n {
            if !nmo.is_live(i, 1) {
                prop_assert_eq!(nmo.gather.amp(i, 1), 0.0);
            }
        }
    }

    #[test]
    fn metric_identities_hold(
        a in curve_strategy(8),
        b in curve_strategy(8),
        shift in 1.0f64..400.0,
    ) {
        let taxis = TimeAxis::new(0.0, 100.0, 41).unwrap();
        prop_assert_eq!(vmae(&a, &a, &taxis), 0.0);
        prop_assert_eq!(vmre(&a, &a, &taxis), 0.0);
        prop_assert!(vmae(&a, &b, &taxis) >= 0.0);
        // vmae is symmetric; vmre is normalized by its second argument only
        prop_assert!((vmae(&a, &b, &taxis) - vmae(&b, &a, &taxis)).abs() < 1e-9);
        let shifted = VelocityFunction::new(
            a.picks().iter().map(|&(t, v)| (t, v + shift)).collect(),
        ).unwrap();
        prop_assert!((vmae(&shifted, &a, &taxis) - shift).abs() <= 1e-9 * shift);
    }

    #[test]
    fn picking_rate_bounds_and_md_gate(
        auto in curve_strategy(6),
        real in prop::collection::vec((10.0f64..4000.0, 1200.0f64..5000.0), 1..15),
    ) {
        let (pr, recognized) = picking_rate(&auto, &real);
        prop_assert!((0.0..=1.0).contains(&pr));
        prop_assert!(recognized.len() <= real.len());
        prop_assert!(
            (pr - recognized.len() as f64 / real.len() as f64).abs() < 1e-12
        );
        if recognized.is_empty() {
            prop_assert!(mean_deviation(&auto, &recognized).is_err());
        } else {
            let md = mean_deviation(&auto, &recognized).unwrap();
            prop_assert!(md >= 0.0 && md < PR_GATE);
        }
    }

    #[test]
    fn eval_velocity_interpolates_within_pick_range(
        curve in curve_strategy(8),
        t in -500.0f64..5000.0,
    ) {
        let picks = curve.picks();
        let v = curve.eval(t);
        let lo = picks.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = picks.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        if t <= picks[0].0 {
            prop_assert_eq!(v, picks[0].1);
        }
        if t >= picks[picks.len() - 1].0 {
            prop_assert_eq!(v, picks[picks.len() - 1].1);
        }
        for &(tp, vp) in picks {
            prop_assert!((curve.eval(tp) - vp).abs() <= 1e-9 * vp);
        }
    }

    #[test]
    fn dix_interval_of_constant_velocity_is_that_velocity(
        v in 1200.0f64..5000.0,
        t1 in 100.0f64..2000.0,
        dt in 10.0f64..2000.0,
    ) {
        let vint = dix_interval(v, t1, v, t1 + dt).unwrap();
        prop_assert!((vint - v).abs() <= 1e-9 * v);
    }

    #[test]
    fn dix_interval_exceeds_rms_for_increasing_picks(
        v1 in 1200.0f64..4000.0,
        dv in 1.0f64..1000.0,
        t1 in 100.0f64..2000.0,
        dt in 10.0f64..2000.0,
    ) {
        let vint = dix_interval(v1, t1, v1 + dv, t1 + dt).unwrap();
        prop_assert!(vint >= v1 + dv - 1e-9);
        // reversed times are rejected
        prop_assert!(dix_interval(v1, t1 + dt, v1 + dv, t1).is_err());
    }
}

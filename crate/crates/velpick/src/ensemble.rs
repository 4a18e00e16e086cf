//! Ensemble picking: near-spectrum and seed reference curves, confidence
//! area filtering of cluster candidates, and the interval-velocity
//! constraint cleanup that produces the final velocity function.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cluster::{assf_cluster, AssfConfig, ClusterError};
use crate::model::{
    dix_interval, SpectrumGrid, SurveyIndex, VelocityFunction, WeightedPoint,
};
use crate::regress::{alwlr_predict, AlwlrConfig, RegressError};
use crate::spectrum::{
    average_blur, ln_gain, stack_maps, threshold_points, GainConfig, SpectrumError,
};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("thresholding produced no points: tau too high")]
    EmptyPointSet,
    #[error("interval constraint removed every pick")]
    AllPicksRemoved,
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Sparse locations whose velocity functions are trusted references.
#[derive(Debug, Clone, Default)]
pub struct SeedSet {
    seeds: BTreeMap<SurveyIndex, VelocityFunction>,
}

impl SeedSet {
    pub fn new(seeds: BTreeMap<SurveyIndex, VelocityFunction>) -> Self {
        Self { seeds }
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn contains(&self, loc: &SurveyIndex) -> bool {
        self.seeds.contains_key(loc)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SurveyIndex, &VelocityFunction)> {
        self.seeds.iter()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    /// Max |delta cdp| on the same line (and |delta line| on the same cdp)
    /// defining near spectra.
    pub neighbor_radius: i64,
    /// Confidence half-width in m/s around each reference curve.
    pub w_conf: f64,
    /// Minimum time gap between adjacent picks (ms).
    pub t_min_gap: f64,
    /// Admissible Dix interval velocity range (m/s).
    pub int_v_range: (f64, f64),
    /// Seed sampling stride in grid steps.
    pub seed_stride: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            neighbor_radius: 2,
            w_conf: 200.0,
            t_min_gap: 200.0,
            int_v_range: (1000.0, 7000.0),
            seed_stride: 10,
        }
    }
}

/// Which pipeline stages are active; used by the ablation studies.
#[derive(Debug, Clone, Copy)]
pub struct UelOptions {
    pub use_gain: bool,
    pub use_near: bool,
    pub use_seed: bool,
    pub use_interval: bool,
}

impl Default for UelOptions {
    fn default() -> Self {
        Self {
            use_gain: true,
            use_near: true,
            use_seed: true,
            use_interval: true,
        }
    }
}

/// Everything the per-location pipeline needs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub gain: GainConfig,
    /// Threshold for candidate extraction from the current spectrum.
    pub tau: f64,
    /// Threshold for the stacked near-spectrum map, as a fraction of the
    /// stacked map's maximum.
    pub tau_near: f64,
    pub blur_w: usize,
    /// ALWLR bandwidth (2h is twice a variance, ms^2).
    pub alwlr_h: f64,
    pub alwlr_lambda: f64,
    pub assf: AssfConfig,
    pub ensemble: EnsembleConfig,
    pub options: UelOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gain: GainConfig::new(25, true, 0.3),
            tau: 0.3,
            tau_near: 0.25,
            blur_w: 3,
            alwlr_h: 22500.0, // (150 ms)^2
            alwlr_lambda: 5.0,
            assf: AssfConfig::default(),
            ensemble: EnsembleConfig::default(),
            options: UelOptions::default(),
        }
    }
}

/// A picked curve plus a flag for the degraded fallback path.
#[derive(Debug, Clone, PartialEq)]
pub struct PickResult {
    pub curve: VelocityFunction,
    pub low_confidence: bool,
}

/// Near locations: same line within `radius` cdps, or same cdp within
/// `radius` lines, excluding the location itself. Output is sorted.
pub fn select_near(
    loc: SurveyIndex,
    all_locs: &[SurveyIndex],
    radius: i64,
) -> Vec<SurveyIndex> {
    let mut out: Vec<SurveyIndex> = all_locs
        .iter()
        .copied()
        .filter(|&o| {
            o != loc
                && ((o.line == loc.line && (o.cdp - loc.cdp).abs() <= radius)
                    || (o.cdp == loc.cdp && (o.line - loc.line).abs() <= radius))
        })
        .collect();
    out.sort();
    out
}

/// Reference curve from the near spectra: optionally gain each, blur,
/// stack, threshold at `tau` times the stacked maximum, then ALWLR sampled
/// on the spectrum time grid. The raw (ungained) chain is the default: the
/// gain inflates flat low-energy columns and drags the regression off the
/// real ridges of the stacked map.
pub fn near_reference(
    near_spectra: &[SpectrumGrid],
    gain_cfg: Option<&GainConfig>,
    blur_w: usize,
    tau: f64,
    alwlr_h: f64,
    alwlr_lambda: f64,
) -> Result<VelocityFunction, EnsembleError> {
    if near_spectra.is_empty() {
        return Err(EnsembleError::EmptyPointSet);
    }
    let mut maps = Vec::with_capacity(near_spectra.len());
    for s in near_spectra {
        let gained = match gain_cfg {
            Some(cfg) => ln_gain(s, cfg)?,
            None => s.clone(),
        };
        maps.push(average_blur(&gained, blur_w)?);
    }
    let stacked = stack_maps(&maps)?;
    let points = threshold_points(&stacked, tau * stacked.max_value());
    if points.is_empty() {
        return Err(EnsembleError::EmptyPointSet);
    }
    let eval_times: Vec<f64> = stacked.taxis.times().collect();
    let cfg = AlwlrConfig::new(alwlr_h, alwlr_lambda, eval_times);
    Ok(alwlr_predict(&points, &cfg)?)
}

/// Velocity function of the seed nearest in (line, cdp); ties break toward
/// the lower line, then the lower cdp.
pub fn seed_reference(loc: SurveyIndex, seeds: &SeedSet) -> Option<VelocityFunction> {
    seeds
        .iter()
        .min_by(|(a, _), (b, _)| {
            let da = (a.line - loc.line).pow(2) + (a.cdp - loc.cdp).pow(2);
            let db = (b.line - loc.line).pow(2) + (b.cdp - loc.cdp).pow(2);
            da.cmp(&db).then(a.cmp(b))
        })
        .map(|(_, f)| f.clone())
}

/// Keep candidates within `w_conf` (vertical velocity deviation) of every
/// provided reference curve.
pub fn confidence_filter(
    candidates: &[WeightedPoint],
    v_rs: Option<&VelocityFunction>,
    v_rn: Option<&VelocityFunction>,
    w_conf: f64,
) -> Vec<WeightedPoint> {
    candidates
        .iter()
        .copied()
        .filter(|p| {
            v_rs.map_or(true, |f| (p.v - f.eval(p.t)).abs() < w_conf)
                && v_rn.map_or(true, |f| (p.v - f.eval(p.t)).abs() < w_conf)
        })
        .collect()
}

fn ref_score(p: &WeightedPoint, v_rs: Option<&VelocityFunction>, v_rn: Option<&VelocityFunction>) -> f64 {
    let ds = v_rs.map(|f| (p.v - f.eval(p.t)).abs());
    let dn = v_rn.map(|f| (p.v - f.eval(p.t)).abs());
    match (ds, dn) {
        (Some(a), Some(b)) => a.max(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        // no references: fall back on (inverted) coherence so the weaker
        // candidate loses a conflict
        (None, None) => -p.c,
    }
}

/// Interval-velocity constraint: repeatedly scan adjacent pick pairs; on a
/// time-gap violation or an out-of-range Dix interval velocity, remove the
/// point of the pair that is farther from the reference curves and restart.
pub fn interval_constraint(
    picks: &[WeightedPoint],
    v_rs: Option<&VelocityFunction>,
    v_rn: Option<&VelocityFunction>,
    cfg: &EnsembleConfig,
) -> Result<VelocityFunction, EnsembleError> {
    let mut cur = picks.to_vec();
    cur.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap().then(a.v.partial_cmp(&b.v).unwrap()));
    'outer: loop {
        if cur.is_empty() {
            return Err(EnsembleError::AllPicksRemoved);
        }
        for i in 0..cur.len().saturating_sub(1) {
            let (a, b) = (cur[i], cur[i + 1]);
            let gap_violation = b.t - a.t < cfg.t_min_gap;
            let dix_violation = if gap_violation {
                false
            } else {
                match dix_interval(a.v, a.t, b.v, b.t) {
                    Ok(v) => v <= cfg.int_v_range.0 || v >= cfg.int_v_range.1,
                    Err(_) => true, // nonpositive radicand: physically impossible pair
                }
            };
            if gap_violation || dix_violation {
                let remove = if ref_score(&a, v_rs, v_rn) >= ref_score(&b, v_rs, v_rn) {
                    i
                } else {
                    i + 1
                };
                cur.remove(remove);
                continue 'outer;
            }
        }
        break;
    }
    let pick_pairs: Vec<(f64, f64)> = cur.iter().map(|p| (p.t, p.v)).collect();
    VelocityFunction::new(pick_pairs).map_err(|_| EnsembleError::AllPicksRemoved)
}

/// Average of the available reference curves sampled at 200 ms spacing over
/// the spectrum time range; used when the ensemble empties out.
fn fallback_curve(
    taxis_t0: f64,
    taxis_t_max: f64,
    v_rs: Option<&VelocityFunction>,
    v_rn: Option<&VelocityFunction>,
    v_mid: f64,
) -> VelocityFunction {
    let mut picks = Vec::new();
    let mut t = taxis_t0;
    while t <= taxis_t_max {
        let v = match (v_rs, v_rn) {
            (Some(a), Some(b)) => 0.5 * (a.eval(t) + b.eval(t)),
            (Some(a), None) => a.eval(t),
            (None, Some(b)) => b.eval(t),
            (None, None) => v_mid,
        };
        picks.push((t, v.max(1.0)));
        t += 200.0;
    }
    VelocityFunction::new(picks).expect("fallback grid is valid")
}

/// Full per-location UEL pipeline: gain, threshold, ASSF clustering, the
/// two reference curves, confidence filtering, and the interval constraint.
pub fn uel_pick(
    spectrum: &SpectrumGrid,
    near_spectra: &[SpectrumGrid],
    seeds: &SeedSet,
    cfg: &PipelineConfig,
) -> Result<PickResult, EnsembleError> {
    let opts = &cfg.options;
    let v_mid = 0.5 * (spectrum.vaxis.v0 + spectrum.vaxis.v_max());

    let v_rs = if opts.use_seed {
        seed_reference(spectrum.location, seeds)
    } else {
        None
    };
    let v_rn = if opts.use_near && !near_spectra.is_empty() {
        match near_reference(
            near_spectra,
            None,
            cfg.blur_w,
            cfg.tau_near,
            cfg.alwlr_h,
            cfg.alwlr_lambda,
        ) {
            Ok(f) => Some(f),
            // a starved near chain degrades the ensemble but must not
            // abort the location
            Err(EnsembleError::EmptyPointSet) | Err(EnsembleError::Regress(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let fallback = |low: bool| PickResult {
        curve: fallback_curve(
            spectrum.taxis.t0,
            spectrum.taxis.t_max(),
            v_rs.as_ref(),
            v_rn.as_ref(),
            v_mid,
        ),
        low_confidence: low,
    };

    let gained;
    let current = if opts.use_gain {
        gained = ln_gain(spectrum, &cfg.gain)?;
        &gained
    } else {
        spectrum
    };
    let candidates = threshold_points(current, cfg.tau);
    if candidates.is_empty() {
        return Ok(fallback(true));
    }
    let (centers, _) = assf_cluster(&candidates, &cfg.assf)?;

    let c2 = confidence_filter(&centers, v_rs.as_ref(), v_rn.as_ref(), cfg.ensemble.w_conf);
    if c2.is_empty() {
        return Ok(fallback(true));
    }

    if opts.use_interval {
        match interval_constraint(&c2, v_rs.as_ref(), v_rn.as_ref(), &cfg.ensemble) {
            Ok(curve) => Ok(PickResult {
                curve,
                low_confidence: false,
            }),
            Err(EnsembleError::AllPicksRemoved) => Ok(fallback(true)),
            Err(e) => Err(e),
        }
    } else {
        // keep the strongest candidate at duplicate times
        let mut sorted = c2;
        sorted.sort_by(|a, b| {
            a.t.partial_cmp(&b.t)
                .unwrap()
                .then(b.c.partial_cmp(&a.c).unwrap())
        });
        sorted.dedup_by(|b, a| {
            if b.t == a.t {
                true // first (higher c) wins
            } else {
                false
            }
        });
        let picks: Vec<(f64, f64)> = sorted.iter().map(|p| (p.t, p.v)).collect();
        match VelocityFunction::new(picks) {
            Ok(curve) => Ok(PickResult {
                curve,
                low_confidence: false,
            }),
            Err(_) => Ok(fallback(true)),
        }
    }
}

//! Scale-space filter clustering with coherence attention (ASSF), lifetime
//! based scale selection, and the K-means / DBSCAN comparison baselines.

use thiserror::Error;

use crate::model::WeightedPoint;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("point set must be nonempty with some c > 0")]
    EmptyPoints,
    #[error("all kernel weights underflowed for a center: scale too small for the data spread")]
    ZeroTotalWeight,
    #[error("k must satisfy 1 <= k <= number of points")]
    BadK,
    #[error("eps must be > 0 and min_samples >= 1")]
    BadDbscanParams,
}

#[derive(Debug, Clone, Copy)]
pub struct AssfConfig {
    pub sigma0: f64,
    /// Scale growth factor per outer iteration.
    pub growth: f64,
    /// Coherence attention exponent.
    pub alpha: f64,
    /// Scanning stops once the center count drops to this floor.
    pub k_min: usize,
    /// Scanning also stops past this scale: the kernel is isotropic over
    /// (ms, m/s), so scales much wider than the event spacing only merge
    /// unrelated ridges.
    pub sigma_max: f64,
    /// Centers closer than this (Euclidean, raw ms / m/s units) merge.
    pub t_merge: f64,
    /// Convergence threshold on squared center displacement.
    pub t_conv: f64,
}

impl Default for AssfConfig {
    fn default() -> Self {
        Self {
            sigma0: 50.0,
            growth: 1.029,
            alpha: 1.0,
            k_min: 12,
            sigma_max: 160.0,
            t_merge: 150.0,
            t_conv: 30.0,
        }
    }
}

/// A center carries its location and the coherence mass accumulated
/// through merges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Center {
    pub t: f64,
    pub v: f64,
    pub mass: f64,
}

impl Center {
    fn to_point(self) -> WeightedPoint {
        WeightedPoint::new(self.t, self.v, self.mass)
    }
}

/// Center sets recorded per scanned scale, with lifetimes per center count.
#[derive(Debug, Clone, Default)]
pub struct ScaleTrace {
    pub steps: Vec<ScaleStep>,
}

#[derive(Debug, Clone)]
pub struct ScaleStep {
    pub sigma: f64,
    pub centers: Vec<Center>,
}

impl ScaleTrace {
    /// Runs of consecutive scales with an unchanged center count:
    /// (count, lifetime, index of the first step of the run).
    pub fn lifetimes(&self) -> Vec<(usize, usize, usize)> {
        let mut runs = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            let count = step.centers.len();
            match runs.last_mut() {
                Some((c, life, _)) if *c == count => *life += 1,
                _ => runs.push((count, 1usize, i)),
            }
        }
        runs
    }
}

const EXP_CUTOFF: f64 = 34.0; // exp(-34) ~ 1.7e-15: negligible weight

/// One synchronous weighted-shift convergence at a fixed scale: every
/// center moves toward the coherence^alpha weighted Gaussian mean of the
/// points until the minimum squared displacement across centers falls
/// below `t_conv`.
pub fn assf_iterate(
    points: &[WeightedPoint],
    centers: &[Center],
    sigma: f64,
    alpha: f64,
    t_conv: f64,
) -> Result<Vec<Center>, ClusterError> {
    if points.is_empty() || !points.iter().any(|p| p.c > 0.0) {
        return Err(ClusterError::EmptyPoints);
    }
    let attn: Vec<f64> = points.iter().map(|p| p.c.powf(alpha)).collect();
    let inv_2s2 = 1.0 / (2.0 * sigma * sigma);
    let cutoff = EXP_CUTOFF / inv_2s2;
    let mut cur = centers.to_vec();
    // Hard cap keeps pathological near-threshold oscillation from hanging.
    for _ in 0..500 {
        let mut next = Vec::with_capacity(cur.len());
        let mut min_disp = f64::INFINITY;
        for c in &cur {
            let (mut sw, mut swt, mut swv) = (0.0, 0.0, 0.0);
            for (p, &a) in points.iter().zip(&attn) {
                let dt = c.t - p.t;
                let dv = c.v - p.v;
                let d2 = dt * dt + dv * dv;
                if d2 > cutoff {
                    continue;
                }
                let w = a * (-d2 * inv_2s2).exp();
                sw += w;
                swt += w * p.t;
                swv += w * p.v;
            }
            if sw <= 0.0 {
                return Err(ClusterError::ZeroTotalWeight);
            }
            let nt = swt / sw;
            let nv = swv / sw;
            let disp = (nt - c.t).powi(2) + (nv - c.v).powi(2);
            if disp < min_disp {
                min_disp = disp;
            }
            next.push(Center {
                t: nt,
                v: nv,
                mass: c.mass,
            });
        }
        cur = next;
        if min_disp <= t_conv {
            break;
        }
    }
    Ok(cur)
}

/// Repeatedly merge the closest pair of centers below `t_merge` into their
/// mass-weighted midpoint, until no pair qualifies. Closest-pair-first
/// makes the result independent of input order.
pub fn merge_centers(centers: &[Center], t_merge: f64) -> Vec<Center> {
    let mut cs = centers.to_vec();
    let t2 = t_merge * t_merge;
    loop {
        if cs.len() < 2 {
            return cs;
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..cs.len() {
            for j in (i + 1)..cs.len() {
                let d2 = (cs[i].t - cs[j].t).powi(2) + (cs[i].v - cs[j].v).powi(2);
                if d2 < t2 && best.map_or(true, |(_, _, bd)| d2 < bd) {
                    best = Some((i, j, d2));
                }
            }
        }
        let Some((i, j, _)) = best else {
            return cs;
        };
        let (a, b) = (cs[i], cs[j]);
        let mass = a.mass + b.mass;
        let merged = if mass > 0.0 {
            Center {
                t: (a.t * a.mass + b.t * b.mass) / mass,
                v: (a.v * a.mass + b.v * b.mass) / mass,
                mass,
            }
        } else {
            Center {
                t: 0.5 * (a.t + b.t),
                v: 0.5 * (a.v + b.v),
                mass: 0.0,
            }
        };
        cs.remove(j);
        cs[i] = merged;
    }
}

/// Full scale scan: centers start at every point; at each scale they are
/// converged then merged; the scan stops once the count drops to `k_min`
/// and the center set whose count had the longest lifetime is returned
/// (ties prefer the larger count; within a run, the earliest scale).
pub fn assf_cluster(
    points: &[WeightedPoint],
    cfg: &AssfConfig,
) -> Result<(Vec<WeightedPoint>, ScaleTrace), ClusterError> {
    if points.is_empty() || !points.iter().any(|p| p.c > 0.0) {
        return Err(ClusterError::EmptyPoints);
    }
    let mut centers: Vec<Center> = points
        .iter()
        .map(|p| Center {
            t: p.t,
            v: p.v,
            mass: p.c,
        })
        .collect();
    let mut trace = ScaleTrace::default();
    if centers.len() <= cfg.k_min {
        let out = centers.iter().map(|c| c.to_point()).collect();
        trace.steps.push(ScaleStep {
            sigma: cfg.sigma0,
            centers,
        });
        return Ok((out, trace));
    }
    let mut sigma = cfg.sigma0;
    while centers.len() > cfg.k_min && sigma <= cfg.sigma_max {
        centers = assf_iterate(points, &centers, sigma, cfg.alpha, cfg.t_conv)?;
        centers = merge_centers(&centers, cfg.t_merge);
        trace.steps.push(ScaleStep {
            sigma,
            centers: centers.clone(),
        });
        sigma *= cfg.growth;
    }
    // Max lifetime among recorded counts >= k_min; ties prefer the larger
    // count; return the first set of the winning run (least scale drift).
    let mut best: Option<(usize, usize, usize)> = None; // (lifetime, count, idx)
    for (count, life, idx) in trace.lifetimes() {
        if count < cfg.k_min {
            continue;
        }
        let better = match best {
            None => true,
            Some((bl, bc, _)) => life > bl || (life == bl && count > bc),
        };
        if better {
            best = Some((life, count, idx));
        }
    }
    let idx = best.map(|(_, _, i)| i).unwrap_or(trace.steps.len() - 1);
    let out = trace.steps[idx]
        .centers
        .iter()
        .map(|c| c.to_point())
        .collect();
    Ok((out, trace))
}

/// Lloyd K-means on (t, v) with deterministic farthest-point seeding.
pub fn kmeans_pick(
    points: &[WeightedPoint],
    k: usize,
    seed: u64,
) -> Result<Vec<WeightedPoint>, ClusterError> {
    if k == 0 || k > points.len() {
        return Err(ClusterError::BadK);
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..points.len());
    let mut centers: Vec<(f64, f64)> = vec![(points[first].t, points[first].v)];
    while centers.len() < k {
        // farthest point from the current center set
        let (mut best_i, mut best_d) = (0, -1.0);
        for (i, p) in points.iter().enumerate() {
            let d = centers
                .iter()
                .map(|&(t, v)| (p.t - t).powi(2) + (p.v - v).powi(2))
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best_i = i;
            }
        }
        centers.push((points[best_i].t, points[best_i].v));
    }
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (mut bj, mut bd) = (0, f64::INFINITY);
            for (j, &(t, v)) in centers.iter().enumerate() {
                let d = (p.t - t).powi(2) + (p.v - v).powi(2);
                if d < bd {
                    bd = d;
                    bj = j;
                }
            }
            if assign[i] != bj {
                assign[i] = bj;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, p) in points.iter().enumerate() {
            let s = &mut sums[assign[i]];
            s.0 += p.t;
            s.1 += p.v;
            s.2 += 1;
        }
        for (j, &(st, sv, cnt)) in sums.iter().enumerate() {
            if cnt > 0 {
                centers[j] = (st / cnt as f64, sv / cnt as f64);
            }
        }
    }
    let mut out: Vec<WeightedPoint> = centers
        .iter()
        .enumerate()
        .map(|(j, &(t, v))| {
            let (mut cs, mut cnt) = (0.0, 0usize);
            for (i, p) in points.iter().enumerate() {
                if assign[i] == j {
                    cs += p.c;
                    cnt += 1;
                }
            }
            let c = if cnt > 0 { cs / cnt as f64 } else { 0.0 };
            WeightedPoint::new(t, v, c)
        })
        .collect();
    out.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap().then(a.v.partial_cmp(&b.v).unwrap()));
    Ok(out)
}

/// Density clustering on (t, v); returns the coherence-weighted centroid of
/// each cluster; noise points are discarded.
pub fn dbscan_pick(
    points: &[WeightedPoint],
    eps: f64,
    min_samples: usize,
) -> Result<Vec<WeightedPoint>, ClusterError> {
    if !(eps > 0.0) || min_samples < 1 {
        return Err(ClusterError::BadDbscanParams);
    }
    let n = points.len();
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| {
                (points[i].t - points[j].t).powi(2) + (points[i].v - points[j].v).powi(2) <= eps2
            })
            .collect()
    };
    const UNVISITED: i64 = -2;
    const NOISE: i64 = -1;
    let mut label = vec![UNVISITED; n];
    let mut cluster = 0i64;
    for i in 0..n {
        if label[i] != UNVISITED {
            continue;
        }
        let nbrs = neighbors(i);
        if nbrs.len() < min_samples {
            label[i] = NOISE;
            continue;
        }
        label[i] = cluster;
        let mut queue: Vec<usize> = nbrs;
        let mut qi = 0;
        while qi < queue.len() {
            let j = queue[qi];
            qi += 1;
            if label[j] == NOISE {
                label[j] = cluster;
            }
            if label[j] != UNVISITED {
                continue;
            }
            label[j] = cluster;
            let jn = neighbors(j);
            if jn.len() >= min_samples {
                queue.extend(jn);
            }
        }
        cluster += 1;
    }
    let mut out = Vec::new();
    for c in 0..cluster {
        let members: Vec<&WeightedPoint> = points
            .iter()
            .zip(&label)
            .filter(|(_, &l)| l == c)
            .map(|(p, _)| p)
            .collect();
        let mass: f64 = members.iter().map(|p| p.c).sum();
        let (t, v) = if mass > 0.0 {
            (
                members.iter().map(|p| p.t * p.c).sum::<f64>() / mass,
                members.iter().map(|p| p.v * p.c).sum::<f64>() / mass,
            )
        } else {
            let k = members.len() as f64;
            (
                members.iter().map(|p| p.t).sum::<f64>() / k,
                members.iter().map(|p| p.v).sum::<f64>() / k,
            )
        };
        out.push(WeightedPoint::new(t, v, mass / members.len() as f64));
    }
    out.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap().then(a.v.partial_cmp(&b.v).unwrap()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn center(t: f64, v: f64) -> Center {
        Center { t, v, mass: 1.0 }
    }

    #[test]
    fn identical_points_converge_in_one_step() {
        let pts = vec![WeightedPoint::new(100.0, 2000.0, 0.5); 5];
        let cs = assf_iterate(&pts, &[center(500.0, 2400.0)], 1000.0, 1.0, 1e-9).unwrap();
        assert_relative_eq!(cs[0].t, 100.0, max_relative = 1e-12);
        assert_relative_eq!(cs[0].v, 2000.0, max_relative = 1e-12);
    }

    /// Independent plain-SSF update (alpha absent entirely).
    fn ssf_step(points: &[WeightedPoint], c: (f64, f64), sigma: f64) -> (f64, f64) {
        let inv = 1.0 / (2.0 * sigma * sigma);
        let (mut sw, mut st, mut sv) = (0.0, 0.0, 0.0);
        for p in points {
            let d2 = (c.0 - p.t).powi(2) + (c.1 - p.v).powi(2);
            let w = (-d2 * inv).exp();
            sw += w;
            st += w * p.t;
            sv += w * p.v;
        }
        (st / sw, sv / sw)
    }

    #[test]
    fn alpha_zero_reduces_to_ssf() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<WeightedPoint> = (0..40)
            .map(|_| {
                WeightedPoint::new(
                    rng.gen_range(0.0..3000.0),
                    rng.gen_range(1500.0..4500.0),
                    rng.gen_range(0.1..1.0),
                )
            })
            .collect();
        let c0 = center(1500.0, 3000.0);
        let sigma = 400.0;
        // one synchronous step: huge t_conv makes assf_iterate stop after it
        let got = assf_iterate(&pts, &[c0], sigma, 0.0, f64::INFINITY).unwrap();
        let want = ssf_step(&pts, (c0.t, c0.v), sigma);
        assert_relative_eq!(got[0].t, want.0, max_relative = 1e-9);
        assert_relative_eq!(got[0].v, want.1, max_relative = 1e-9);
    }

    #[test]
    fn large_sigma_fixed_point_is_weighted_mean() {
        // Eq. 11 in the large-sigma limit: kernels equal, so the fixed point
        // is the coherence-weighted mean x = 10*3/(1+3) = 7.5.
        let pts = vec![
            WeightedPoint::new(0.0, 0.0, 1.0),
            WeightedPoint::new(10.0, 0.0, 3.0),
        ];
        let cs = assf_iterate(&pts, &[center(5.0, 0.0)], 1e6, 1.0, 1e-12).unwrap();
        assert_relative_eq!(cs[0].t, 7.5, max_relative = 1e-6);
        assert_relative_eq!(cs[0].v, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_total_weight_detected() {
        let pts = vec![
            WeightedPoint::new(0.0, 0.0, 1.0),
            WeightedPoint::new(1.0, 0.0, 1.0),
        ];
        // center astronomically far away with a tiny sigma
        let err = assf_iterate(&pts, &[center(1e9, 1e9)], 1.0, 1.0, 1e-9).unwrap_err();
        assert_eq!(err, ClusterError::ZeroTotalWeight);
    }

    fn blob(rng: &mut ChaCha8Rng, t: f64, v: f64, std: f64, n: usize) -> Vec<WeightedPoint> {
        use rand_distr::{Distribution, Normal};
        let d = Normal::new(0.0, std).unwrap();
        (0..n)
            .map(|_| WeightedPoint::new(t + d.sample(rng), v + d.sample(rng), 1.0))
            .collect()
    }

    #[test]
    fn two_separated_blobs_yield_two_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = blob(&mut rng, 1000.0, 2000.0, 30.0, 20);
        pts.extend(blob(&mut rng, 1000.0, 4000.0, 30.0, 20));
        let cfg = AssfConfig {
            k_min: 2,
            ..AssfConfig::default()
        };
        let (centers, _) = assf_cluster(&pts, &cfg).unwrap();
        assert_eq!(centers.len(), 2);
        for target_v in [2000.0, 4000.0] {
            let centroid_t: f64 = pts
                .iter()
                .filter(|p| (p.v - target_v).abs() < 1000.0)
                .map(|p| p.t * p.c)
                .sum::<f64>()
                / pts
                    .iter()
                    .filter(|p| (p.v - target_v).abs() < 1000.0)
                    .map(|p| p.c)
                    .sum::<f64>();
            let centroid_v: f64 = pts
                .iter()
                .filter(|p| (p.v - target_v).abs() < 1000.0)
                .map(|p| p.v * p.c)
                .sum::<f64>()
                / pts
                    .iter()
                    .filter(|p| (p.v - target_v).abs() < 1000.0)
                    .map(|p| p.c)
                    .sum::<f64>();
            let nearest = centers
                .iter()
                .map(|c| ((c.t - centroid_t).powi(2) + (c.v - centroid_v).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 50.0, "center {nearest} from centroid");
        }
    }

    #[test]
    fn single_blob_yields_single_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = blob(&mut rng, 1500.0, 3000.0, 25.0, 30);
        let cfg = AssfConfig {
            k_min: 1,
            ..AssfConfig::default()
        };
        let (centers, _) = assf_cluster(&pts, &cfg).unwrap();
        assert_eq!(centers.len(), 1);
        let mt = pts.iter().map(|p| p.t).sum::<f64>() / pts.len() as f64;
        let mv = pts.iter().map(|p| p.v).sum::<f64>() / pts.len() as f64;
        let d = ((centers[0].t - mt).powi(2) + (centers[0].v - mv).powi(2)).sqrt();
        assert!(d < 30.0_f64.sqrt() + 10.0, "center off centroid by {d}");
    }

    #[test]
    fn selected_count_stable_under_sigma0_perturbation() {
        // equal-coherence ring: the lifetime-selected count should not
        // depend on a small change of the initial scale
        let pts: Vec<WeightedPoint> = (0..24)
            .map(|i| {
                let a = i as f64 / 24.0 * std::f64::consts::TAU;
                WeightedPoint::new(1000.0 + 600.0 * a.cos(), 3000.0 + 600.0 * a.sin(), 1.0)
            })
            .collect();
        let base = AssfConfig {
            k_min: 1,
            ..AssfConfig::default()
        };
        let (c1, _) = assf_cluster(&pts, &base).unwrap();
        let perturbed = AssfConfig {
            sigma0: base.sigma0 * 1.02,
            ..base
        };
        let (c2, _) = assf_cluster(&pts, &perturbed).unwrap();
        assert_eq!(c1.len(), c2.len());
    }

    #[test]
    fn merge_is_idempotent_and_order_free() {
        let cs = vec![
            center(0.0, 0.0),
            center(10.0, 0.0),
            center(1000.0, 0.0),
            center(1008.0, 0.0),
        ];
        let once = merge_centers(&cs, 50.0);
        let twice = merge_centers(&once, 50.0);
        assert_eq!(once, twice);
        assert_eq!(once.len(), 2);
        let mut rev = cs.clone();
        rev.reverse();
        let merged_rev = merge_centers(&rev, 50.0);
        let mut a: Vec<f64> = once.iter().map(|c| c.t).collect();
        let mut b: Vec<f64> = merged_rev.iter().map(|c| c.t).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_degenerate_cases() {
        let pts: Vec<WeightedPoint> = (0..5)
            .map(|i| WeightedPoint::new(i as f64 * 500.0, 2000.0 + i as f64 * 300.0, 1.0))
            .collect();
        let all = kmeans_pick(&pts, 5, 1).unwrap();
        assert_eq!(all.len(), 5);
        for p in &pts {
            assert!(all.iter().any(|c| c.t == p.t && c.v == p.v));
        }
        let one = kmeans_pick(&pts, 1, 1).unwrap();
        assert_relative_eq!(one[0].t, 1000.0, max_relative = 1e-12);
        assert_relative_eq!(one[0].v, 2600.0, max_relative = 1e-12);
    }

    #[test]
    fn kmeans_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = blob(&mut rng, 500.0, 2000.0, 20.0, 25);
        pts.extend(blob(&mut rng, 2500.0, 4000.0, 20.0, 25));
        let cs = kmeans_pick(&pts, 2, 42).unwrap();
        assert_eq!(cs.len(), 2);
        for (bt, bv) in [(500.0, 2000.0), (2500.0, 4000.0)] {
            let near = cs
                .iter()
                .map(|c| ((c.t - bt).powi(2) + (c.v - bv).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(near < 25.0);
        }
    }

    #[test]
    fn dbscan_all_noise_and_chain() {
        let sparse: Vec<WeightedPoint> = (0..4)
            .map(|i| WeightedPoint::new(i as f64 * 1000.0, 2000.0, 1.0))
            .collect();
        assert!(dbscan_pick(&sparse, 50.0, 2).unwrap().is_empty());
        let chain: Vec<WeightedPoint> = (0..10)
            .map(|i| WeightedPoint::new(i as f64 * 30.0, 2000.0, 1.0))
            .collect();
        assert_eq!(dbscan_pick(&chain, 50.0, 3).unwrap().len(), 1);
    }

    #[test]
    fn dbscan_two_blob_centroids() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = blob(&mut rng, 500.0, 2000.0, 10.0, 20);
        pts.extend(blob(&mut rng, 2500.0, 4000.0, 10.0, 20));
        let cs = dbscan_pick(&pts, 50.0, 3).unwrap();
        assert_eq!(cs.len(), 2);
        for (lo, hi, bt) in [(1500.0, 2500.0, 500.0), (3500.0, 4500.0, 2500.0)] {
            let members: Vec<&WeightedPoint> =
                pts.iter().filter(|p| p.v > lo && p.v < hi).collect();
            let mass: f64 = members.iter().map(|p| p.c).sum();
            let ct = members.iter().map(|p| p.t * p.c).sum::<f64>() / mass;
            let cv = members.iter().map(|p| p.v * p.c).sum::<f64>() / mass;
            let near = cs
                .iter()
                .map(|c| ((c.t - ct).powi(2) + (c.v - cv).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(near < 1e-6, "centroid mismatch {near} for blob at t={bt}");
        }
    }
}

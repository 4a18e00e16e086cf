//! Semblance velocity spectra, local-normalization gain, average-blur
//! low-pass filtering, near-spectrum stacking, and threshold extraction.

use thiserror::Error;

use crate::model::{CmpGather, SpectrumGrid, VelocityAxis, WeightedPoint};

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("semblance half-window must satisfy 1 <= M and 2M+1 <= n")]
    BadSemblanceWindow,
    #[error("gain half-window must satisfy 1 <= L and 2L+1 <= n")]
    BadGainWindow,
    #[error("blur kernel width must be odd and >= 3")]
    BadBlurWidth,
    #[error("stack requires at least one spectrum")]
    EmptyStack,
    #[error("spectra in a stack must share time and velocity axes")]
    AxisMismatch,
}

#[derive(Debug, Clone, Copy)]
pub struct SemblanceConfig {
    /// Half-window in output rows; the summation window is 2M+1 long.
    pub m_half: usize,
    pub velocities: VelocityAxis,
    /// Output rows sit every `row_stride` gather samples, so the spectrum
    /// grid can be coarser than a finely sampled gather.
    pub row_stride: usize,
}

impl SemblanceConfig {
    pub fn new(m_half: usize, velocities: VelocityAxis, row_stride: usize) -> Self {
        Self {
            m_half,
            velocities,
            row_stride,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GainConfig {
    /// Half-window in time samples (mean range).
    pub l_half: usize,
    /// Divide the gained matrix by its global maximum.
    pub rescale: bool,
    /// Lower bound on the local mean, as a fraction of the input's global
    /// maximum. Near-empty columns otherwise amplify their residue without
    /// bound and drown the genuine ridges after rescaling.
    pub mean_floor: f64,
}

impl GainConfig {
    pub fn new(l_half: usize, rescale: bool, mean_floor: f64) -> Self {
        Self {
            l_half,
            rescale,
            mean_floor,
        }
    }
}

/// Semblance over a scan-velocity grid. For each trial velocity the gather
/// is NMO-corrected at that constant velocity (linear interpolation along
/// traces, zero outside the time range) and the normalized output/input
/// energy ratio is evaluated per time sample; the window truncates at the
/// array edges. 0/0 is defined as 0.
pub fn semblance_spectrum(
    g: &CmpGather,
    cfg: &SemblanceConfig,
) -> Result<SpectrumGrid, SpectrumError> {
    let stride = cfg.row_stride.max(1);
    let n = (g.taxis.n - 1) / stride + 1;
    let m_half = cfg.m_half;
    if m_half < 1 || 2 * m_half + 1 > n {
        return Err(SpectrumError::BadSemblanceWindow);
    }
    let row_taxis = crate::model::TimeAxis::new(
        g.taxis.t0,
        g.taxis.dt * stride as f64,
        n,
    )
    .expect("stride-decimated axis is valid");
    let ntr = g.n_traces();
    let mut out = SpectrumGrid::zeros(row_taxis, cfg.velocities, g.location);

    // Per trial velocity: row sums and row sums of squares of the NMO gather.
    let mut row_sum = vec![0.0f64; n];
    let mut row_sq = vec![0.0f64; n];
    for (j, v) in cfg.velocities.velocities().enumerate() {
        for i in 0..n {
            let t0 = row_taxis.time(i);
            let mut s = 0.0;
            let mut sq = 0.0;
            for k in 0..ntr {
                let dx = g.offsets[k] * 1000.0 / v; // moveout term in ms
                let src = (t0 * t0 + dx * dx).sqrt();
                let a = g.sample(k, src);
                s += a;
                sq += a * a;
            }
            row_sum[i] = s;
            row_sq[i] = sq;
        }
        for i in 0..n {
            let lo = i.saturating_sub(m_half);
            let hi = (i + m_half).min(n - 1);
            let mut num = 0.0;
            let mut den = 0.0;
            for w in lo..=hi {
                num += row_sum[w] * row_sum[w];
                den += row_sq[w];
            }
            den *= ntr as f64;
            let s = if den > 0.0 { (num / den).min(1.0) } else { 0.0 };
            out.set(i, j, s);
        }
    }
    Ok(out)
}

/// Local-normalization gain: each value is divided by its column-local
/// temporal mean, with shortened windows at the top and bottom edges.
/// 0/0 is defined as 0. With `rescale` the whole matrix is divided by its
/// global maximum so values land in [0, 1].
pub fn ln_gain(s: &SpectrumGrid, cfg: &GainConfig) -> Result<SpectrumGrid, SpectrumError> {
    let n = s.taxis.n;
    let m = s.vaxis.m;
    let l = cfg.l_half;
    if l < 1 || 2 * l + 1 > n {
        return Err(SpectrumError::BadGainWindow);
    }
    let mut out = SpectrumGrid::zeros(s.taxis, s.vaxis, s.location);
    let floor = cfg.mean_floor * s.max_value();
    // Prefix sums per column make the three window branches one subtraction.
    let mut prefix = vec![0.0f64; n + 1];
    for j in 0..m {
        for i in 0..n {
            prefix[i + 1] = prefix[i] + s.at(i, j);
        }
        for i in 0..n {
            // Window [lo, hi] in 0-based samples; matches the three-branch
            // split at i <= L-1, interior, and i >= n-L (1-based i <= L etc).
            let lo = i.saturating_sub(l);
            let hi = (i + l).min(n - 1);
            let sum = prefix[hi + 1] - prefix[lo];
            let count = (hi - lo + 1) as f64;
            let mean = (sum / count).max(floor);
            let val = if mean > 0.0 { s.at(i, j) / mean } else { 0.0 };
            out.set(i, j, val);
        }
    }
    if cfg.rescale {
        let max = out.max_value();
        if max > 0.0 {
            for v in out.values_mut() {
                *v /= max;
            }
        }
    }
    Ok(out)
}

/// 2-D mean filter with a w x w kernel and edge-replication padding.
pub fn average_blur(s: &SpectrumGrid, w: usize) -> Result<SpectrumGrid, SpectrumError> {
    if w < 3 || w % 2 == 0 {
        return Err(SpectrumError::BadBlurWidth);
    }
    let n = s.taxis.n as isize;
    let m = s.vaxis.m as isize;
    let half = (w / 2) as isize;
    let norm = 1.0 / (w * w) as f64;
    let mut out = SpectrumGrid::zeros(s.taxis, s.vaxis, s.location);
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for di in -half..=half {
                let ii = (i + di).clamp(0, n - 1) as usize;
                for dj in -half..=half {
                    let jj = (j + dj).clamp(0, m - 1) as usize;
                    acc += s.at(ii, jj);
                }
            }
            out.set(i as usize, j as usize, acc * norm);
        }
    }
    Ok(out)
}

/// Elementwise mean of spectra sharing the same axes.
pub fn stack_maps(maps: &[SpectrumGrid]) -> Result<SpectrumGrid, SpectrumError> {
    let first = maps.first().ok_or(SpectrumError::EmptyStack)?;
    if maps.iter().any(|g| !g.same_axes(first)) {
        return Err(SpectrumError::AxisMismatch);
    }
    let mut out = first.clone();
    let k = maps.len() as f64;
    for g in &maps[1..] {
        for (o, v) in out.values_mut().iter_mut().zip(g.values()) {
            *o += v;
        }
    }
    for v in out.values_mut() {
        *v /= k;
    }
    Ok(out)
}

/// Every grid cell with value strictly above `tau`, in physical units,
/// sorted by (t, v).
pub fn threshold_points(s: &SpectrumGrid, tau: f64) -> Vec<WeightedPoint> {
    let mut pts = Vec::new();
    for i in 0..s.taxis.n {
        let t = s.taxis.time(i);
        for j in 0..s.vaxis.m {
            let c = s.at(i, j);
            if c > tau {
                pts.push(WeightedPoint::new(t, s.vaxis.velocity(j), c));
            }
        }
    }
    // Row-major scan already yields (t, v) order on a uniform grid.
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SurveyIndex, TimeAxis};
    use approx::assert_relative_eq;

    fn loc() -> SurveyIndex {
        SurveyIndex::new(0, 0)
    }

    fn grid_from(taxis: TimeAxis, vaxis: VelocityAxis, vals: Vec<f64>) -> SpectrumGrid {
        SpectrumGrid::new(taxis, vaxis, vals, loc()).unwrap()
    }

    /// Direct-sum semblance oracle: builds the NMO gather explicitly and
    /// evaluates the energy-ratio definition with no shared code path.
    fn semblance_oracle(g: &CmpGather, cfg: &SemblanceConfig) -> Vec<Vec<f64>> {
        let n = g.taxis.n;
        let ntr = g.n_traces();
        let mut out = vec![vec![0.0; cfg.velocities.m]; n];
        for (j, v) in cfg.velocities.velocities().enumerate() {
            let mut nmo = vec![vec![0.0; ntr]; n];
            for i in 0..n {
                let t0 = g.taxis.time(i);
                for k in 0..ntr {
                    let dx = g.offsets[k] * 1000.0 / v;
                    nmo[i][k] = g.sample(k, (t0 * t0 + dx * dx).sqrt());
                }
            }
            for i in 0..n {
                let lo = i.saturating_sub(cfg.m_half);
                let hi = (i + cfg.m_half).min(n - 1);
                let mut num = 0.0;
                let mut den = 0.0;
                for w in lo..=hi {
                    let row: f64 = nmo[w].iter().sum();
                    num += row * row;
                    den += nmo[w].iter().map(|a| a * a).sum::<f64>();
                }
                out[i][j] = if den > 0.0 {
                    num / (ntr as f64 * den)
                } else {
                    0.0
                };
            }
        }
        out
    }

    #[test]
    fn constant_traces_are_fully_coherent() {
        let taxis = TimeAxis::new(0.0, 10.0, 21).unwrap();
        let offsets = vec![0.0, 1.0, 2.0]; // near-zero offsets: no moveout
        let traces = vec![3.0; 21 * 3];
        let g = CmpGather::new(taxis, offsets, traces, loc()).unwrap();
        let cfg = SemblanceConfig {
            m_half: 1,
            velocities: VelocityAxis::new(100000.0, 100000.0, 3).unwrap(),
            row_stride: 1,
        };
        let s = semblance_spectrum(&g, &cfg).unwrap();
        // skip the last two rows: the nonzero-offset hyperbola leaves the
        // sampled range there by an epsilon, so those samples read as zero
        for i in 1..19 {
            for j in 0..3 {
                assert_relative_eq!(s.at(i, j), 1.0, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn zero_gather_gives_zero_spectrum() {
        let taxis = TimeAxis::new(0.0, 10.0, 11).unwrap();
        let g = CmpGather::zeros(taxis, vec![0.0, 100.0], loc());
        let cfg = SemblanceConfig {
            m_half: 1,
            velocities: VelocityAxis::new(1500.0, 100.0, 5).unwrap(),
            row_stride: 1,
        };
        let s = semblance_spectrum(&g, &cfg).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spike_gather_peaks_at_event_velocity_and_matches_oracle() {
        // Two traces carrying a spike aligned on the v = 2000 m/s hyperbola
        // with apex at t0 = 1000 ms.
        let taxis = TimeAxis::new(0.0, 20.0, 101).unwrap();
        let offsets = vec![0.0, 1200.0];
        let mut g = CmpGather::zeros(taxis, offsets.clone(), loc());
        let t0 = 1000.0;
        let v_true = 2000.0;
        for (k, x) in offsets.iter().enumerate() {
            let te = (t0 * t0 + (x * 1000.0 / v_true).powi(2)).sqrt();
            // place the spike exactly on a sample to avoid interp smearing
            let i = (taxis.index_of(te)).round() as usize;
            *g.amp_mut(i, k) = 1.0;
        }
        let cfg = SemblanceConfig {
            m_half: 1,
            velocities: VelocityAxis::new(1500.0, 50.0, 31).unwrap(),
            row_stride: 1,
        };
        let s = semblance_spectrum(&g, &cfg).unwrap();
        let oracle = semblance_oracle(&g, &cfg);
        for i in 0..taxis.n {
            for j in 0..cfg.velocities.m {
                assert_relative_eq!(s.at(i, j), oracle[i][j], max_relative = 1e-9, epsilon = 1e-12);
            }
        }
        // argmax within one grid cell of (t0, v_true)
        let mut best = (0usize, 0usize, -1.0f64);
        for i in 0..taxis.n {
            for j in 0..cfg.velocities.m {
                if s.at(i, j) > best.2 {
                    best = (i, j, s.at(i, j));
                }
            }
        }
        let bt = taxis.time(best.0);
        let bv = cfg.velocities.velocity(best.1);
        assert!((bt - t0).abs() <= taxis.dt, "time argmax {bt}");
        assert!((bv - v_true).abs() <= cfg.velocities.dv, "vel argmax {bv}");
    }

    #[test]
    fn gain_of_constant_column_is_one() {
        let taxis = TimeAxis::new(0.0, 10.0, 9).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 2).unwrap();
        let s = grid_from(taxis, vaxis, vec![0.7; 18]);
        let g = ln_gain(&s, &GainConfig::new(2, false, 0.0)).unwrap();
        for &v in g.values() {
            assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn gain_hand_vector_all_three_branches() {
        let taxis = TimeAxis::new(0.0, 10.0, 5).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 2).unwrap();
        // column 0 = [1,2,3,4,5]; column 1 = zeros
        let vals = vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0, 5.0, 0.0];
        let s = grid_from(taxis, vaxis, vals);
        let g = ln_gain(&s, &GainConfig::new(1, false, 0.0)).unwrap();
        let expect = [2.0 / 3.0, 1.0, 1.0, 1.0, 10.0 / 9.0];
        for (i, e) in expect.iter().enumerate() {
            assert_relative_eq!(g.at(i, 0), e, max_relative = 1e-12);
            assert_eq!(g.at(i, 1), 0.0);
        }
    }

    #[test]
    fn gain_rescale_maps_to_unit_interval() {
        let taxis = TimeAxis::new(0.0, 10.0, 5).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 2).unwrap();
        let vals = vec![1.0, 9.0, 2.0, 0.0, 3.0, 4.0, 4.0, 0.0, 5.0, 1.0];
        let s = grid_from(taxis, vaxis, vals);
        let g = ln_gain(&s, &GainConfig::new(1, true, 0.0)).unwrap();
        let max = g.max_value();
        assert_relative_eq!(max, 1.0, max_relative = 1e-12);
        assert!(g.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn blur_preserves_constants() {
        let taxis = TimeAxis::new(0.0, 10.0, 6).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 4).unwrap();
        let s = grid_from(taxis, vaxis, vec![0.42; 24]);
        let b = average_blur(&s, 3).unwrap();
        for &v in b.values() {
            assert_relative_eq!(v, 0.42, max_relative = 1e-12);
        }
    }

    #[test]
    fn blur_spreads_center_spike() {
        let taxis = TimeAxis::new(0.0, 10.0, 5).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 5).unwrap();
        let mut vals = vec![0.0; 25];
        vals[2 * 5 + 2] = 9.0;
        let s = grid_from(taxis, vaxis, vals);
        let b = average_blur(&s, 3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let inside = (1..=3).contains(&i) && (1..=3).contains(&j);
                let expect = if inside { 1.0 } else { 0.0 };
                assert_relative_eq!(b.at(i, j), expect, max_relative = 1e-12);
            }
        }
        assert_eq!(b.taxis.n, s.taxis.n);
        assert_eq!(b.vaxis.m, s.vaxis.m);
    }

    #[test]
    fn stack_means_cellwise() {
        let taxis = TimeAxis::new(0.0, 10.0, 2).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 2).unwrap();
        let a = grid_from(taxis, vaxis, vec![0.2; 4]);
        let b = grid_from(taxis, vaxis, vec![0.6; 4]);
        let s = stack_maps(&[a.clone(), b]).unwrap();
        for &v in s.values() {
            assert_relative_eq!(v, 0.4, max_relative = 1e-12);
        }
        let id = stack_maps(&[a.clone()]).unwrap();
        assert_eq!(id, a);
    }

    #[test]
    fn stack_rejects_axis_mismatch() {
        let taxis = TimeAxis::new(0.0, 10.0, 2).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 2).unwrap();
        let vaxis2 = VelocityAxis::new(1600.0, 100.0, 2).unwrap();
        let a = grid_from(taxis, vaxis, vec![0.2; 4]);
        let b = grid_from(taxis, vaxis2, vec![0.2; 4]);
        assert_eq!(stack_maps(&[a, b]).unwrap_err(), SpectrumError::AxisMismatch);
    }

    #[test]
    fn threshold_enumerates_cells() {
        let taxis = TimeAxis::new(0.0, 10.0, 2).unwrap();
        let vaxis = VelocityAxis::new(1500.0, 100.0, 2).unwrap();
        let s = grid_from(taxis, vaxis, vec![0.1, 0.5, 0.9, 0.2]);
        let pts = threshold_points(&s, 0.4);
        assert_eq!(pts.len(), 2);
        let cs: Vec<f64> = pts.iter().map(|p| p.c).collect();
        assert!(cs.contains(&0.5) && cs.contains(&0.9));
        assert!(threshold_points(&s, 0.9).is_empty());
        assert_eq!(threshold_points(&s, 0.0).len(), 4);
    }
}

//! Quality control: curve error metrics, picking rate and mean deviation
//! against known velocity points, NMO correction, and stack sections.

use thiserror::Error;

use crate::model::{CmpGather, TimeAxis, VelocityFunction};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("recognized point set is empty")]
    EmptyRecognizedSet,
    #[error("gathers in a section must share the time axis")]
    AxisMismatch,
}

/// Gate (m/s) below which a real velocity point counts as recognized.
pub const PR_GATE: f64 = 200.0;

/// Aggregated metric report over a set of locations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub vmae: f64,
    pub vmre: f64,
    pub pr: Option<f64>,
    pub md: Option<f64>,
    pub n_locations: usize,
}

/// Mean absolute velocity error between two curves sampled on `taxis`.
pub fn vmae(auto: &VelocityFunction, reference: &VelocityFunction, taxis: &TimeAxis) -> f64 {
    taxis
        .times()
        .map(|t| (reference.eval(t) - auto.eval(t)).abs())
        .sum::<f64>()
        / taxis.n as f64
}

/// Mean relative velocity error (normalized by the reference curve).
pub fn vmre(auto: &VelocityFunction, reference: &VelocityFunction, taxis: &TimeAxis) -> f64 {
    taxis
        .times()
        .map(|t| {
            let vm = reference.eval(t);
            (vm - auto.eval(t)).abs() / vm
        })
        .sum::<f64>()
        / taxis.n as f64
}

/// Picking rate: fraction of real points whose curve value lies within the
/// 200 m/s gate; also returns the recognized sublist for MD.
pub fn picking_rate(
    auto: &VelocityFunction,
    real_points: &[(f64, f64)],
) -> (f64, Vec<(f64, f64)>) {
    let recognized: Vec<(f64, f64)> = real_points
        .iter()
        .copied()
        .filter(|&(t, v)| (auto.eval(t) - v).abs() < PR_GATE)
        .collect();
    let pr = recognized.len() as f64 / real_points.len() as f64;
    (pr, recognized)
}

/// Mean absolute deviation over the recognized points.
pub fn mean_deviation(
    auto: &VelocityFunction,
    recognized: &[(f64, f64)],
) -> Result<f64, EvalError> {
    if recognized.is_empty() {
        return Err(EvalError::EmptyRecognizedSet);
    }
    Ok(recognized
        .iter()
        .map(|&(t, v)| (auto.eval(t) - v).abs())
        .sum::<f64>()
        / recognized.len() as f64)
}

/// NMO-corrected gather plus the per-sample stretch-mute mask.
#[derive(Debug, Clone)]
pub struct NmoGather {
    pub gather: CmpGather,
    /// Row-major (time x trace) flags; false where the stretch mute fired.
    live: Vec<bool>,
}

impl NmoGather {
    #[inline]
    pub fn is_live(&self, i: usize, k: usize) -> bool {
        self.live[i * self.gather.n_traces() + k]
    }
}

/// NMO correction with a picked velocity function: output sample `t0` on a
/// trace at offset `x` reads the input at sqrt(t0^2 + (x*1000/v(t0))^2) by
/// linear interpolation; samples stretched beyond `stretch_limit` are muted.
pub fn nmo_correct(g: &CmpGather, v: &VelocityFunction, stretch_limit: f64) -> NmoGather {
    let n = g.taxis.n;
    let ntr = g.n_traces();
    let mut out = CmpGather::zeros(g.taxis, g.offsets.clone(), g.location);
    let mut live = vec![true; n * ntr];
    for i in 0..n {
        let t0 = g.taxis.time(i);
        let vel = v.eval(t0);
        for (k, &x) in g.offsets.iter().enumerate() {
            let dx = x * 1000.0 / vel;
            let src = (t0 * t0 + dx * dx).sqrt();
            let stretch = if t0 > 0.0 {
                src / t0 - 1.0
            } else if x == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            if stretch > stretch_limit {
                live[i * ntr + k] = false;
                continue;
            }
            *out.amp_mut(i, k) = g.sample(k, src);
        }
    }
    NmoGather { gather: out, live }
}

/// Stack section: one column per gather, each the mean over live traces.
/// Returned row-major (time x location).
pub fn stack_section(gathers: &[NmoGather]) -> Result<Vec<Vec<f64>>, EvalError> {
    let Some(first) = gathers.first() else {
        return Ok(Vec::new());
    };
    let taxis = first.gather.taxis;
    if gathers.iter().any(|g| g.gather.taxis != taxis) {
        return Err(EvalError::AxisMismatch);
    }
    let n = taxis.n;
    let mut section = vec![vec![0.0; gathers.len()]; n];
    for (col, g) in gathers.iter().enumerate() {
        for i in 0..n {
            let mut sum = 0.0;
            let mut count = 0usize;
            for k in 0..g.gather.n_traces() {
                if g.is_live(i, k) {
                    sum += g.gather.amp(i, k);
                    count += 1;
                }
            }
            section[i][col] = if count > 0 { sum / count as f64 } else { 0.0 };
        }
    }
    Ok(section)
}

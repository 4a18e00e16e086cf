//! Shared domain types: axis grids, spectra, gathers, velocity functions,
//! and the Dix interval-velocity transform.
//!
//! Units are milliseconds for time and m/s for velocity throughout.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("time axis requires dt > 0 and n >= 2 (got dt={dt}, n={n})")]
    BadTimeAxis { dt: f64, n: usize },
    #[error("velocity axis requires v0 > 0, dv > 0 and m >= 2 (got v0={v0}, dv={dv}, m={m})")]
    BadVelocityAxis { v0: f64, dv: f64, m: usize },
    #[error("matrix dimensions {rows}x{cols} do not match axes {n}x{m}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        n: usize,
        m: usize,
    },
    #[error("spectrum values must be finite and >= 0")]
    BadSpectrumValue,
    #[error("gather requires >= 2 strictly increasing nonnegative offsets")]
    BadOffsets,
    #[error("gather amplitudes must be finite")]
    BadAmplitude,
    #[error("velocity function requires >= 1 pick, strictly increasing t, v > 0")]
    BadVelocityFunction,
    #[error("Dix radicand is nonpositive for picks ({v_prev}, {t_prev}) -> ({v}, {t})")]
    NonPositiveRadicand {
        v_prev: f64,
        t_prev: f64,
        v: f64,
        t: f64,
    },
    #[error("Dix interval is degenerate: t={t} must exceed t_prev={t_prev}")]
    DegenerateInterval { t_prev: f64, t: f64 },
}

/// Uniform time sampling: sample `i` sits at `t0 + i * dt` (ms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAxis {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeAxis {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self, ModelError> {
        if !(dt > 0.0) || n < 2 {
            return Err(ModelError::BadTimeAxis { dt, n });
        }
        Ok(Self { t0, dt, n })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.n - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.time(i))
    }

    /// Fractional sample index of time `t`; may fall outside `[0, n-1]`.
    pub fn index_of(&self, t: f64) -> f64 {
        (t - self.t0) / self.dt
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t_max()
    }
}

/// Uniform scan-velocity sampling: sample `j` sits at `v0 + j * dv` (m/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityAxis {
    pub v0: f64,
    pub dv: f64,
    pub m: usize,
}

impl VelocityAxis {
    pub fn new(v0: f64, dv: f64, m: usize) -> Result<Self, ModelError> {
        if !(v0 > 0.0) || !(dv > 0.0) || m < 2 {
            return Err(ModelError::BadVelocityAxis { v0, dv, m });
        }
        Ok(Self { v0, dv, m })
    }

    pub fn velocity(&self, j: usize) -> f64 {
        self.v0 + j as f64 * self.dv
    }

    pub fn v_max(&self) -> f64 {
        self.velocity(self.m - 1)
    }

    pub fn velocities(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(|j| self.velocity(j))
    }
}

/// Grid address of one spectrum / gather within a survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SurveyIndex {
    pub line: i64,
    pub cdp: i64,
}

impl SurveyIndex {
    pub fn new(line: i64, cdp: i64) -> Self {
        Self { line, cdp }
    }
}

impl std::fmt::Display for SurveyIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(line {}, cdp {})", self.line, self.cdp)
    }
}

/// 2-D coherence matrix over a (time, velocity) grid, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub taxis: TimeAxis,
    pub vaxis: VelocityAxis,
    values: Vec<f64>,
    pub location: SurveyIndex,
}

impl SpectrumGrid {
    pub fn new(
        taxis: TimeAxis,
        vaxis: VelocityAxis,
        values: Vec<f64>,
        location: SurveyIndex,
    ) -> Result<Self, ModelError> {
        if values.len() != taxis.n * vaxis.m {
            return Err(ModelError::DimensionMismatch {
                rows: values.len() / vaxis.m.max(1),
                cols: vaxis.m,
                n: taxis.n,
                m: vaxis.m,
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::BadSpectrumValue);
        }
        Ok(Self {
            taxis,
            vaxis,
            values,
            location,
        })
    }

    pub fn zeros(taxis: TimeAxis, vaxis: VelocityAxis, location: SurveyIndex) -> Self {
        Self {
            taxis,
            vaxis,
            values: vec![0.0; taxis.n * vaxis.m],
            location,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.vaxis.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.vaxis.m + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn same_axes(&self, other: &SpectrumGrid) -> bool {
        self.taxis == other.taxis && self.vaxis == other.vaxis
    }
}

/// Offset-indexed trace matrix sharing one time axis, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct CmpGather {
    pub taxis: TimeAxis,
    pub offsets: Vec<f64>,
    traces: Vec<f64>,
    pub location: SurveyIndex,
}

impl CmpGather {
    pub fn new(
        taxis: TimeAxis,
        offsets: Vec<f64>,
        traces: Vec<f64>,
        location: SurveyIndex,
    ) -> Result<Self, ModelError> {
        if offsets.len() < 2
            || offsets[0] < 0.0
            || offsets.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(ModelError::BadOffsets);
        }
        if traces.len() != taxis.n * offsets.len() {
            return Err(ModelError::DimensionMismatch {
                rows: traces.len() / offsets.len().max(1),
                cols: offsets.len(),
                n: taxis.n,
                m: offsets.len(),
            });
        }
        if traces.iter().any(|a| !a.is_finite()) {
            return Err(ModelError::BadAmplitude);
        }
        Ok(Self {
            taxis,
            offsets,
            traces,
            location,
        })
    }

    pub fn zeros(taxis: TimeAxis, offsets: Vec<f64>, location: SurveyIndex) -> Self {
        let traces = vec![0.0; taxis.n * offsets.len()];
        Self {
            taxis,
            offsets,
            traces,
            location,
        }
    }

    pub fn n_traces(&self) -> usize {
        self.offsets.len()
    }

    #[inline]
    pub fn amp(&self, i: usize, k: usize) -> f64 {
        self.traces[i * self.offsets.len() + k]
    }

    #[inline]
    pub fn amp_mut(&mut self, i: usize, k: usize) -> &mut f64 {
        &mut self.traces[i * self.offsets.len() + k]
    }

    pub fn traces(&self) -> &[f64] {
        &self.traces
    }

    /// Linearly interpolated amplitude of trace `k` at time `t` (ms);
    /// zero outside the sampled range.
    pub fn sample(&self, k: usize, t: f64) -> f64 {
        let x = self.taxis.index_of(t);
        if x < 0.0 || x > (self.taxis.n - 1) as f64 {
            return 0.0;
        }
        let i0 = x.floor() as usize;
        if i0 + 1 >= self.taxis.n {
            return self.amp(self.taxis.n - 1, k);
        }
        let f = x - i0 as f64;
        self.amp(i0, k) * (1.0 - f) + self.amp(i0 + 1, k) * f
    }
}

/// (time, velocity, coherence) sample; the unit the regression and
/// clustering stages operate on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub t: f64,
    pub v: f64,
    pub c: f64,
}

impl WeightedPoint {
    pub fn new(t: f64, v: f64, c: f64) -> Self {
        Self { t, v, c }
    }
}

/// Ordered (t, v) pick list; evaluated by piecewise-linear interpolation
/// with constant extrapolation outside the pick range.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFunction {
    picks: Vec<(f64, f64)>,
}

impl VelocityFunction {
    pub fn new(picks: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if picks.is_empty()
            || picks.iter().any(|&(t, v)| !t.is_finite() || !(v > 0.0))
            || picks.windows(2).any(|w| w[1].0 <= w[0].0)
        {
            return Err(ModelError::BadVelocityFunction);
        }
        Ok(Self { picks })
    }

    pub fn picks(&self) -> &[(f64, f64)] {
        &self.picks
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_velocity(self, t)
    }
}

/// Piecewise-linear interpolation between picks; constant extrapolation
/// outside the pick range.
pub fn eval_velocity(f: &VelocityFunction, t: f64) -> f64 {
    let picks = &f.picks;
    if t <= picks[0].0 {
        return picks[0].1;
    }
    let last = picks[picks.len() - 1];
    if t >= last.0 {
        return last.1;
    }
    // partition_point: first pick with t_pick > t
    let hi = picks.partition_point(|&(tp, _)| tp <= t);
    let (t0, v0) = picks[hi - 1];
    let (t1, v1) = picks[hi];
    let f = (t - t0) / (t1 - t0);
    v0 * (1.0 - f) + v1 * f
}

/// Dix interval velocity between two adjacent stack-velocity picks.
pub fn dix_interval(vn_prev: f64, tn_prev: f64, vn: f64, tn: f64) -> Result<f64, ModelError> {
    if tn <= tn_prev {
        return Err(ModelError::DegenerateInterval {
            t_prev: tn_prev,
            t: tn,
        });
    }
    let radicand = (vn * vn * tn - vn_prev * vn_prev * tn_prev) / (tn - tn_prev);
    if radicand <= 0.0 {
        return Err(ModelError::NonPositiveRadicand {
            v_prev: vn_prev,
            t_prev: tn_prev,
            v: vn,
            t: tn,
        });
    }
    Ok(radicand.sqrt())
}

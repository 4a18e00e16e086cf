//! Locally weighted linear regression and its attention variant, used to
//! estimate the near-reference velocity curve from a weighted point set.

use thiserror::Error;

use crate::model::{VelocityFunction, WeightedPoint};

#[derive(Debug, Error, PartialEq)]
pub enum RegressError {
    #[error("need >= 2 points with distinct t and at least one c > 0")]
    BadInput,
    #[error("normal matrix is singular at t = {t}: all weight on one abscissa")]
    SingularNormalMatrix { t: f64 },
    #[error("eval_times must be nonempty and strictly increasing")]
    BadEvalTimes,
}

#[derive(Debug, Clone)]
pub struct AlwlrConfig {
    /// 2h is twice a variance (ms^2) in the Gaussian kernel exponent.
    pub h: f64,
    /// Coherence attention exponent; 0 reduces to plain LWLR.
    pub lambda: f64,
    /// Prediction times (ms), strictly increasing.
    pub eval_times: Vec<f64>,
    /// On a singular normal matrix, fall back to the local weighted mean
    /// instead of erroring. Disabled only to surface exact singularity.
    pub ridge: bool,
}

impl AlwlrConfig {
    pub fn new(h: f64, lambda: f64, eval_times: Vec<f64>) -> Self {
        Self {
            h,
            lambda,
            eval_times,
            ridge: true,
        }
    }
}

const WEIGHT_FLOOR: f64 = 1e-12;

/// Weighted least squares of a local line at each prediction time, with
/// Gaussian time weights scaled by coherence^lambda. The predicted curve
/// is returned sampled at the configured eval times.
pub fn alwlr_predict(
    points: &[WeightedPoint],
    cfg: &AlwlrConfig,
) -> Result<VelocityFunction, RegressError> {
    if points.len() < 2
        || !points.iter().any(|p| p.c > 0.0)
        || points.iter().all(|p| p.t == points[0].t)
    {
        return Err(RegressError::BadInput);
    }
    if cfg.eval_times.is_empty() || cfg.eval_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RegressError::BadEvalTimes);
    }

    let mut picks = Vec::with_capacity(cfg.eval_times.len());
    let inv_2h = 1.0 / (2.0 * cfg.h);
    for &t_star in &cfg.eval_times {
        // First pass: raw weights and their max for the floor cutoff.
        let mut weights = Vec::with_capacity(points.len());
        let mut w_max = 0.0f64;
        for p in points {
            let d = p.t - t_star;
            let w = p.c.powf(cfg.lambda) * (-d * d * inv_2h).exp();
            if w > w_max {
                w_max = w;
            }
            weights.push(w);
        }
        // Normal equations on times recentered at t_star, so the
        // prediction is just the intercept.
        let floor = w_max * WEIGHT_FLOOR;
        let (mut s_w, mut s_wt, mut s_wtt, mut s_wv, mut s_wtv) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, &w) in points.iter().zip(&weights) {
            if w < floor || w == 0.0 {
                continue;
            }
            let t = p.t - t_star;
            s_w += w;
            s_wt += w * t;
            s_wtt += w * t * t;
            s_wv += w * p.v;
            s_wtv += w * t * p.v;
        }
        let a11 = s_wtt;
        let a22 = s_w;
        let det = a11 * a22 - s_wt * s_wt;
        let scale = (a11 * a22).abs().max(f64::MIN_POSITIVE);
        let v_star = if det.abs() <= 1e-13 * scale {
            if !cfg.ridge {
                return Err(RegressError::SingularNormalMatrix { t: t_star });
            }
            // All surviving weight on one abscissa: fall back to the
            // weighted mean velocity there.
            if s_w > 0.0 {
                s_wv / s_w
            } else {
                return Err(RegressError::SingularNormalMatrix { t: t_star });
            }
        } else {
            // slope = (a22*s_wtv - s_wt*s_wv)/det; intercept below:
            (a11 * s_wv - s_wt * s_wtv) / det
        };
        picks.push((t_star, v_star.max(1.0)));
    }
    VelocityFunction::new(picks).map_err(|_| RegressError::BadInput)
}

/// Plain LWLR: the same solve with the coherence exponent forced to zero.
pub fn lwlr_predict(
    points: &[WeightedPoint],
    cfg: &AlwlrConfig,
) -> Result<VelocityFunction, RegressError> {
    let cfg = AlwlrConfig {
        lambda: 0.0,
        ..cfg.clone()
    };
    alwlr_predict(points, &cfg)
}

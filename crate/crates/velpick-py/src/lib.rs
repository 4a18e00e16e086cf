//! Python bindings: synthetic survey construction, velocity picking, and
//! evaluation, mirroring the Rust pipeline API.

use std::collections::BTreeMap;
use std::collections::HashMap;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use velpick_core::cli::parse_snr;
use velpick_core::ensemble::PipelineConfig;
use velpick_core::model::{SurveyIndex, VelocityFunction};
use velpick_core::pipeline::{
    compute_spectra, evaluate_survey, pick_survey, seeds_from_truth, PickMethod,
};
use velpick_core::spectrum::SemblanceConfig;
use velpick_core::synth::{build_survey, default_config, SyntheticSurvey, SyntheticSurveyConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Piecewise-linear stacking-velocity function over (t ms, v m/s) picks.
#[pyclass(name = "VelocityCurve")]
#[derive(Clone)]
struct PyVelocityCurve {
    inner: VelocityFunction,
}

#[pymethods]
impl PyVelocityCurve {
    #[new]
    fn new(picks: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: VelocityFunction::new(picks).map_err(value_err)?,
        })
    }

    /// Velocity at time `t` (constant extrapolation outside the picks).
    fn eval(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    fn picks(&self) -> Vec<(f64, f64)> {
        self.inner.picks().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.picks().len()
    }

    fn __repr__(&self) -> String {
        format!("VelocityCurve({} picks)", self.inner.picks().len())
    }
}

/// Dix interval velocity between two stacking-velocity picks.
#[pyfunction]
fn dix_interval(t1: f64, v1: f64, t2: f64, v2: f64) -> PyResult<f64> {
    velpick_core::model::dix_interval(v1, t1, v2, t2).map_err(value_err)
}

/// A synthetic ground-truthed survey plus the picking pipeline over it.
#[pyclass(name = "Survey")]
struct PySurvey {
    cfg: SyntheticSurveyConfig,
    survey: SyntheticSurvey,
}

#[pymethods]
impl PySurvey {
    /// Synthesize a survey. `snr` is real/noise point count ratio as a
    /// string ("10", "2/3", "inf" for noiseless).
    #[staticmethod]
    #[pyo3(signature = (lines, cdps, snr="10", seed=42))]
    fn synth(lines: usize, cdps: usize, snr: &str, seed: u64) -> PyResult<Self> {
        let snr = parse_snr(snr).map_err(value_err)?;
        let cfg = default_config(lines, cdps, snr, seed);
        let survey = build_survey(&cfg).map_err(value_err)?;
        Ok(Self { cfg, survey })
    }

    fn locations(&self) -> Vec<(i64, i64)> {
        self.survey.gathers.keys().map(|l| (l.line, l.cdp)).collect()
    }

    fn truth(&self, line: i64, cdp: i64) -> PyResult<PyVelocityCurve> {
        self.survey
            .truth
            .get(&SurveyIndex::new(line, cdp))
            .map(|f| PyVelocityCurve { inner: f.clone() })
            .ok_or_else(|| PyKeyError::new_err(format!("no location ({line}, {cdp})")))
    }

    /// Pick every location; returns {(line, cdp): VelocityCurve}.
    #[pyo3(signature = (method="uel", workers=1, seed_stride=10))]
    fn pick(
        &self,
        method: &str,
        workers: usize,
        seed_stride: usize,
    ) -> PyResult<HashMap<(i64, i64), PyVelocityCurve>> {
        let method = match method {
            "uel" => PickMethod::Uel,
            "kmeans" => PickMethod::KMeans { k: 15 },
            "dbscan" => PickMethod::Dbscan {
                eps: 50.0,
                min_samples: 3,
            },
            other => return Err(PyValueError::new_err(format!("unknown method {other}"))),
        };
        let sem = SemblanceConfig {
            m_half: 1,
            velocities: self.cfg.vaxis,
            row_stride: 5,
        };
        let spectra = compute_spectra(&self.survey.gathers, &sem, workers);
        let seeds = seeds_from_truth(&self.survey.truth, seed_stride);
        let picks = pick_survey(
            &spectra,
            &seeds,
            method,
            &PipelineConfig::default(),
            workers,
            self.cfg.rng_seed,
        );
        Ok(picks
            .picks
            .into_iter()
            .map(|(loc, p)| ((loc.line, loc.cdp), PyVelocityCurve { inner: p.curve }))
            .collect())
    }

    /// Metrics of a pick set against this survey's truth, excluding seed
    /// locations: {"vmae", "vmre", "pr", "md", "n_locations"}.
    #[pyo3(signature = (picks, seed_stride=10))]
    fn evaluate(
        &self,
        picks: HashMap<(i64, i64), PyVelocityCurve>,
        seed_stride: usize,
    ) -> HashMap<String, f64> {
        let picks: BTreeMap<SurveyIndex, velpick_core::ensemble::PickResult> = picks
            .into_iter()
            .map(|((l, c), p)| {
                (
                    SurveyIndex::new(l, c),
                    velpick_core::ensemble::PickResult {
                        curve: p.inner,
                        low_confidence: false,
                    },
                )
            })
            .collect();
        let seeds = seeds_from_truth(&self.survey.truth, seed_stride);
        let r = evaluate_survey(&picks, &self.survey.truth, &self.cfg.taxis, &seeds);
        let mut out = HashMap::new();
        out.insert("vmae".to_string(), r.vmae);
        out.insert("vmre".to_string(), r.vmre);
        out.insert("pr".to_string(), r.pr.unwrap_or(f64::NAN));
        out.insert("md".to_string(), r.md.unwrap_or(f64::NAN));
        out.insert("n_locations".to_string(), r.n_locations as f64);
        out
    }
}

#[pymodule]
fn velpick(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVelocityCurve>()?;
    m.add_class::<PySurvey>()?;
    m.add_function(wrap_pyfunction!(dix_interval, m)?)?;
    Ok(())
}

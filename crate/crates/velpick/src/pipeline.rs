//! Survey-level orchestration: spectra for every location, seed sampling,
//! per-location picking with a worker pool, and metric aggregation.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::ensemble::{uel_pick, PickResult, PipelineConfig, SeedSet};
use crate::evalqc::{picking_rate, vmae, vmre, MetricReport};
use crate::model::{CmpGather, SpectrumGrid, SurveyIndex, VelocityFunction};
use crate::spectrum::{ln_gain, semblance_spectrum, threshold_points, SemblanceConfig};
use crate::{cluster, ensemble};

/// Picking method selector; baselines share the threshold-then-cluster
/// front end but skip the ensemble stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PickMethod {
    Uel,
    KMeans { k: usize },
    Dbscan { eps: f64, min_samples: usize },
}

#[derive(Debug, Clone, Default)]
pub struct SurveyPicks {
    pub picks: BTreeMap<SurveyIndex, PickResult>,
    /// Per-location soft failures; never fatal for the survey.
    pub failures: BTreeMap<SurveyIndex, String>,
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(f)
}

/// Semblance spectrum for every gather; locations are independent.
pub fn compute_spectra(
    gathers: &BTreeMap<SurveyIndex, CmpGather>,
    cfg: &SemblanceConfig,
    workers: usize,
) -> BTreeMap<SurveyIndex, SpectrumGrid> {
    with_pool(workers, || {
        gathers
            .par_iter()
            .map(|(loc, g)| (*loc, semblance_spectrum(g, cfg).expect("valid semblance config")))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    })
}

/// Seeds emulate sparse manual picks: the truth functions subsampled at
/// `stride` grid steps in both directions.
pub fn seeds_from_truth(
    truth: &BTreeMap<SurveyIndex, VelocityFunction>,
    stride: usize,
) -> SeedSet {
    let stride = stride.max(1) as i64;
    let map = truth
        .iter()
        .filter(|(loc, _)| loc.line % stride == 0 && loc.cdp % stride == 0)
        .map(|(loc, f)| (*loc, f.clone()))
        .collect();
    SeedSet::new(map)
}

fn baseline_pick(
    spectrum: &SpectrumGrid,
    method: PickMethod,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PickResult, String> {
    let gained = ln_gain(spectrum, &cfg.gain).map_err(|e| e.to_string())?;
    let points = threshold_points(&gained, cfg.tau);
    if points.is_empty() {
        return Err("no points above threshold".into());
    }
    let centers = match method {
        PickMethod::KMeans { k } => {
            cluster::kmeans_pick(&points, k.min(points.len()), seed).map_err(|e| e.to_string())?
        }
        PickMethod::Dbscan { eps, min_samples } => {
            cluster::dbscan_pick(&points, eps, min_samples).map_err(|e| e.to_string())?
        }
        PickMethod::Uel => unreachable!("uel handled separately"),
    };
    let mut sorted = centers;
    sorted.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .unwrap()
            .then(b.c.partial_cmp(&a.c).unwrap())
    });
    sorted.dedup_by(|b, a| b.t == a.t);
    let picks: Vec<(f64, f64)> = sorted.iter().map(|p| (p.t, p.v)).collect();
    match VelocityFunction::new(picks) {
        Ok(curve) => Ok(PickResult {
            curve,
            low_confidence: false,
        }),
        Err(_) => Err("clustering produced no usable picks".into()),
    }
}

/// Pick every location of a survey. Neighbor spectra are looked up from the
/// precomputed spectrum map; output is identical for any worker count.
pub fn pick_survey(
    spectra: &BTreeMap<SurveyIndex, SpectrumGrid>,
    seeds: &SeedSet,
    method: PickMethod,
    cfg: &PipelineConfig,
    workers: usize,
    seed: u64,
) -> SurveyPicks {
    let locs: Vec<SurveyIndex> = spectra.keys().copied().collect();
    let results: Vec<(SurveyIndex, Result<PickResult, String>)> = with_pool(workers, || {
        locs.par_iter()
            .map(|loc| {
                let res = match method {
                    PickMethod::Uel => {
                        let near_locs = ensemble::select_near(
                            *loc,
                            &locs,
                            cfg.ensemble.neighbor_radius,
                        );
                        let near: Vec<SpectrumGrid> = near_locs
                            .iter()
                            .filter_map(|l| spectra.get(l).cloned())
                            .collect();
                        uel_pick(&spectra[loc], &near, seeds, cfg).map_err(|e| e.to_string())
                    }
                    m => baseline_pick(&spectra[loc], m, cfg, seed),
                };
                (*loc, res)
            })
            .collect()
    });
    let mut out = SurveyPicks::default();
    for (loc, res) in results {
        match res {
            Ok(p) => {
                out.picks.insert(loc, p);
            }
            Err(e) => {
                out.failures.insert(loc, e);
            }
        }
    }
    out
}

/// Metrics aggregated over all non-seed locations: curve errors on the
/// spectrum time grid, plus pooled picking rate and mean deviation against
/// the true velocity points.
pub fn evaluate_survey(
    picks: &BTreeMap<SurveyIndex, PickResult>,
    truth: &BTreeMap<SurveyIndex, VelocityFunction>,
    taxis: &crate::model::TimeAxis,
    seeds: &SeedSet,
) -> MetricReport {
    let mut sum_vmae = 0.0;
    let mut sum_vmre = 0.0;
    let mut n_locs = 0usize;
    let mut n_real = 0usize;
    let mut recognized: Vec<f64> = Vec::new();
    for (loc, result) in picks {
        if seeds.contains(loc) {
            continue;
        }
        let Some(true_curve) = truth.get(loc) else {
            continue;
        };
        sum_vmae += vmae(&result.curve, true_curve, taxis);
        sum_vmre += vmre(&result.curve, true_curve, taxis);
        n_locs += 1;
        let real_points = true_curve.picks();
        n_real += real_points.len();
        let (_, rec) = picking_rate(&result.curve, real_points);
        for &(t, v) in &rec {
            recognized.push((result.curve.eval(t) - v).abs());
        }
    }
    let pr = if n_real > 0 {
        Some(recognized.len() as f64 / n_real as f64)
    } else {
        None
    };
    let md = if recognized.is_empty() {
        None
    } else {
        Some(recognized.iter().sum::<f64>() / recognized.len() as f64)
    };
    MetricReport {
        vmae: if n_locs > 0 { sum_vmae / n_locs as f64 } else { 0.0 },
        vmre: if n_locs > 0 { sum_vmre / n_locs as f64 } else { 0.0 },
        pr,
        md,
        n_locations: n_locs,
    }
}

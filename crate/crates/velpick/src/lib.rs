//! Automatic stacking-velocity picking from semblance spectra.
//!
//! The library synthesizes ground-truthed CMP surveys, computes semblance
//! velocity spectra, and picks stacking-velocity functions with an
//! unsupervised ensemble: local-normalization gain, adaptive scale-space
//! clustering, two reference curves (neighbor stack and seed lookup), a
//! confidence-area filter, and an interval-velocity constraint. Evaluation
//! utilities compare automatic picks with ground truth and render QC images.

pub mod cli;
pub mod cluster;
pub mod ensemble;
pub mod evalqc;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod regress;
pub mod spectrum;
pub mod synth;

pub use cluster::{assf_cluster, dbscan_pick, kmeans_pick, AssfConfig, Center};
pub use ensemble::{uel_pick, PickResult, PipelineConfig, SeedSet};
pub use evalqc::{mean_deviation, nmo_correct, picking_rate, stack_section, vmae, vmre, MetricReport};
pub use model::{
    dix_interval, eval_velocity, CmpGather, SpectrumGrid, SurveyIndex, TimeAxis, VelocityAxis,
    VelocityFunction, WeightedPoint,
};
pub use pipeline::{compute_spectra, evaluate_survey, pick_survey, seeds_from_truth, PickMethod};
pub use regress::{alwlr_predict, lwlr_predict, AlwlrConfig};
pub use spectrum::{
    average_blur, ln_gain, semblance_spectrum, stack_maps, threshold_points, GainConfig,
    SemblanceConfig,
};
pub use synth::{build_survey, default_config, SyntheticSurvey, SyntheticSurveyConfig};

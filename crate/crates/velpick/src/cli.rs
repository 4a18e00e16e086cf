//! Command implementations behind the binary: dataset synthesis, picking,
//! evaluation, and QC imaging, all driven by one flat key=value config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cluster::AssfConfig;
use crate::ensemble::{EnsembleConfig, PipelineConfig, UelOptions};
use crate::evalqc::{nmo_correct, stack_section, NmoGather};
use crate::io::{self, IoError};
use crate::model::{CmpGather, SurveyIndex, TimeAxis, VelocityAxis, VelocityFunction};
use crate::pipeline::{
    compute_spectra, evaluate_survey, pick_survey, seeds_from_truth, PickMethod,
};
use crate::spectrum::{GainConfig, SemblanceConfig};
use crate::synth::{build_survey, default_config, SyntheticSurveyConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: unknown key `{0}`")]
    UnknownKey(String),
    #[error("config: bad value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("io: {0}")]
    Fs(#[from] std::io::Error),
    #[error("synth: {0}")]
    Synth(#[from] crate::synth::SynthError),
    #[error("{path}: bad manifest: {reason}")]
    Manifest { path: String, reason: String },
}

/// Every tunable of the pipeline plus dataset/run bookkeeping, with the
/// defaults used throughout. A config file overrides fields by key; command
/// line flags override the file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub method: String,
    pub snr: Option<f64>,
    pub lines: usize,
    pub cdps: usize,
    pub n_real_points: usize,
    pub noise_sigma: f64,
    pub wavelet_freq: f64,
    pub lateral_drift: f64,
    pub taxis: TimeAxis,
    pub vaxis: VelocityAxis,
    pub offset_max: f64,
    pub offset_step: f64,
    pub m_half: usize,
    pub row_stride: usize,
    pub gain_l: usize,
    pub gain_rescale: bool,
    pub gain_floor: f64,
    pub tau: f64,
    pub tau_near: f64,
    pub blur_w: usize,
    pub alwlr_h: f64,
    pub alwlr_lambda: f64,
    pub assf: AssfConfig,
    pub neighbor_radius: i64,
    pub w_conf: f64,
    pub t_min_gap: f64,
    pub int_v_min: f64,
    pub int_v_max: f64,
    pub seed_stride: usize,
    pub use_gain: bool,
    pub use_near: bool,
    pub use_seed: bool,
    pub use_interval: bool,
    pub kmeans_k: usize,
    pub dbscan_eps: f64,
    pub dbscan_min_samples: usize,
    pub stretch_limit: f64,
    pub emit_images: bool,
    pub qc_line: i64,
    pub qc_cdp: i64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let base = default_config(10, 10, Some(10.0), 42);
        let pipe = PipelineConfig::default();
        Self {
            dataset: PathBuf::from("dataset"),
            out: PathBuf::from("out"),
            seed: 42,
            workers: 1,
            method: "uel".into(),
            snr: Some(10.0),
            lines: 10,
            cdps: 10,
            n_real_points: base.n_real_points,
            noise_sigma: base.noise_sigma,
            wavelet_freq: base.wavelet_freq,
            lateral_drift: base.lateral_drift,
            taxis: base.taxis,
            vaxis: base.vaxis,
            offset_max: *base.offsets.last().unwrap(),
            offset_step: base.offsets[1] - base.offsets[0],
            m_half: 1,
            row_stride: 5,
            gain_l: pipe.gain.l_half,
            gain_rescale: pipe.gain.rescale,
            gain_floor: pipe.gain.mean_floor,
            tau: pipe.tau,
            tau_near: pipe.tau_near,
            blur_w: pipe.blur_w,
            alwlr_h: pipe.alwlr_h,
            alwlr_lambda: pipe.alwlr_lambda,
            assf: pipe.assf,
            neighbor_radius: pipe.ensemble.neighbor_radius,
            w_conf: pipe.ensemble.w_conf,
            t_min_gap: pipe.ensemble.t_min_gap,
            int_v_min: pipe.ensemble.int_v_range.0,
            int_v_max: pipe.ensemble.int_v_range.1,
            seed_stride: pipe.ensemble.seed_stride,
            use_gain: true,
            use_near: true,
            use_seed: true,
            use_interval: true,
            kmeans_k: 15,
            dbscan_eps: 50.0,
            dbscan_min_samples: 3,
            stretch_limit: 0.5,
            emit_images: false,
            qc_line: 0,
            qc_cdp: 0,
        }
    }
}

/// Parse an SNR spec: a plain number, a fraction like `2/3`, or `inf` for
/// the noiseless case.
pub fn parse_snr(s: &str) -> Result<Option<f64>, CliError> {
    let bad = || CliError::BadValue {
        key: "snr".into(),
        value: s.into(),
    };
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let v = if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        if b == 0.0 {
            return Err(bad());
        }
        a / b
    } else {
        s.parse().map_err(|_| bad())?
    };
    if !(v.is_finite() && v > 0.0) {
        return Err(bad());
    }
    Ok(Some(v))
}

pub fn format_snr(snr: Option<f64>) -> String {
    match snr {
        None => "inf".into(),
        Some(v) => format!("{v}"),
    }
}

impl RunConfig {
    /// Apply one `key value-or-=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = || CliError::BadValue {
            key: key.into(),
            value: value.into(),
        };
        macro_rules! num {
            () => {
                value.trim().parse().map_err(|_| bad())?
            };
        }
        fn flag(value: &str) -> Option<bool> {
            match value.trim() {
                "true" | "1" | "on" => Some(true),
                "false" | "0" | "off" => Some(false),
                _ => None,
            }
        }
        match key {
            "dataset" => self.dataset = PathBuf::from(value.trim()),
            "out" => self.out = PathBuf::from(value.trim()),
            "seed" => self.seed = num!(),
            "workers" => self.workers = num!(),
            "method" => self.method = value.trim().to_string(),
            "snr" => self.snr = parse_snr(value)?,
            "lines" => self.lines = num!(),
            "cdps" => self.cdps = num!(),
            "n_real_points" => self.n_real_points = num!(),
            "noise_sigma" => self.noise_sigma = num!(),
            "wavelet_freq" => self.wavelet_freq = num!(),
            "lateral_drift" => self.lateral_drift = num!(),
            "taxis_t0" => self.taxis = TimeAxis::new(num!(), self.taxis.dt, self.taxis.n).map_err(|_| bad())?,
            "taxis_dt" => self.taxis = TimeAxis::new(self.taxis.t0, num!(), self.taxis.n).map_err(|_| bad())?,
            "taxis_n" => self.taxis = TimeAxis::new(self.taxis.t0, self.taxis.dt, num!()).map_err(|_| bad())?,
            "vaxis_v0" => self.vaxis = VelocityAxis::new(num!(), self.vaxis.dv, self.vaxis.m).map_err(|_| bad())?,
            "vaxis_dv" => self.vaxis = VelocityAxis::new(self.vaxis.v0, num!(), self.vaxis.m).map_err(|_| bad())?,
            "vaxis_m" => self.vaxis = VelocityAxis::new(self.vaxis.v0, self.vaxis.dv, num!()).map_err(|_| bad())?,
            "offset_max" => self.offset_max = num!(),
            "offset_step" => self.offset_step = num!(),
            "m_half" => self.m_half = num!(),
            "row_stride" => self.row_stride = num!(),
            "gain_l" => self.gain_l = num!(),
            "gain_rescale" => self.gain_rescale = flag(value).ok_or_else(bad)?,
            "gain_floor" => self.gain_floor = num!(),
            "tau" => self.tau = num!(),
            "tau_near" => self.tau_near = num!(),
            "blur_w" => self.blur_w = num!(),
            "alwlr_h" => self.alwlr_h = num!(),
            "alwlr_lambda" => self.alwlr_lambda = num!(),
            "assf_sigma0" => self.assf.sigma0 = num!(),
            "assf_growth" => self.assf.growth = num!(),
            "assf_sigma_max" => self.assf.sigma_max = num!(),
            "assf_alpha" => self.assf.alpha = num!(),
            "assf_k_min" => self.assf.k_min = num!(),
            "assf_t_merge" => self.assf.t_merge = num!(),
            "assf_t_conv" => self.assf.t_conv = num!(),
            "neighbor_radius" => self.neighbor_radius = num!(),
            "w_conf" => self.w_conf = num!(),
            "t_min_gap" => self.t_min_gap = num!(),
            "int_v_min" => self.int_v_min = num!(),
            "int_v_max" => self.int_v_max = num!(),
            "seed_stride" => self.seed_stride = num!(),
            "use_gain" => self.use_gain = flag(value).ok_or_else(bad)?,
            "use_near" => self.use_near = flag(value).ok_or_else(bad)?,
            "use_seed" => self.use_seed = flag(value).ok_or_else(bad)?,
            "use_interval" => self.use_interval = flag(value).ok_or_else(bad)?,
            "kmeans_k" => self.kmeans_k = num!(),
            "dbscan_eps" => self.dbscan_eps = num!(),
            "dbscan_min_samples" => self.dbscan_min_samples = num!(),
            "stretch_limit" => self.stretch_limit = num!(),
            "emit_images" => self.emit_images = flag(value).ok_or_else(bad)?,
            "qc_line" => self.qc_line = num!(),
            "qc_cdp" => self.qc_cdp = num!(),
            _ => return Err(CliError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parse a config file: one `key = value` (or `key value`) per line,
    /// `#` comments. Unknown keys are hard errors.
    pub fn apply_file(&mut self, text: &str) -> Result<(), CliError> {
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => line
                    .split_once(char::is_whitespace)
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| CliError::Invalid(format!("bad config line: {line}")))?,
            };
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SyntheticSurveyConfig {
        let mut cfg = default_config(self.lines, self.cdps, self.snr, self.seed);
        cfg.taxis = self.taxis;
        cfg.vaxis = self.vaxis;
        cfg.n_real_points = self.n_real_points;
        cfg.noise_sigma = self.noise_sigma;
        cfg.wavelet_freq = self.wavelet_freq;
        cfg.lateral_drift = self.lateral_drift;
        let steps = (self.offset_max / self.offset_step).round() as usize;
        cfg.offsets = (0..=steps).map(|i| i as f64 * self.offset_step).collect();
        cfg
    }

    pub fn semblance_config(&self, vaxis: VelocityAxis) -> SemblanceConfig {
        SemblanceConfig {
            m_half: self.m_half,
            velocities: vaxis,
            row_stride: self.row_stride,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            gain: GainConfig::new(self.gain_l, self.gain_rescale, self.gain_floor),
            tau: self.tau,
            tau_near: self.tau_near,
            blur_w: self.blur_w,
            alwlr_h: self.alwlr_h,
            alwlr_lambda: self.alwlr_lambda,
            assf: self.assf.clone(),
            ensemble: EnsembleConfig {
                neighbor_radius: self.neighbor_radius,
                w_conf: self.w_conf,
                t_min_gap: self.t_min_gap,
                int_v_range: (self.int_v_min, self.int_v_max),
                seed_stride: self.seed_stride,
            },
            options: UelOptions {
                use_gain: self.use_gain,
                use_near: self.use_near,
                use_seed: self.use_seed,
                use_interval: self.use_interval,
            },
        }
    }

    pub fn pick_method(&self) -> Result<PickMethod, CliError> {
        match self.method.as_str() {
            "uel" => Ok(PickMethod::Uel),
            "kmeans" => Ok(PickMethod::KMeans { k: self.kmeans_k }),
            "dbscan" => Ok(PickMethod::Dbscan {
                eps: self.dbscan_eps,
                min_samples: self.dbscan_min_samples,
            }),
            other => Err(CliError::BadValue {
                key: "method".into(),
                value: other.into(),
            }),
        }
    }
}

/// Dataset manifest: enough to rebuild the axes and document the noise mix.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub lines: usize,
    pub cdps: usize,
    pub snr: Option<f64>,
    pub seed: u64,
    pub taxis: TimeAxis,
    pub vaxis: VelocityAxis,
    pub noise_counts: BTreeMap<SurveyIndex, usize>,
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<(), CliError> {
    let mut s = String::from("velpick-manifest 1\n");
    let _ = writeln!(s, "lines {}", m.lines);
    let _ = writeln!(s, "cdps {}", m.cdps);
    let _ = writeln!(s, "snr {}", format_snr(m.snr));
    let _ = writeln!(s, "seed {}", m.seed);
    let _ = writeln!(s, "taxis {} {} {}", m.taxis.t0, m.taxis.dt, m.taxis.n);
    let _ = writeln!(s, "vaxis {} {} {}", m.vaxis.v0, m.vaxis.dv, m.vaxis.m);
    for (loc, n) in &m.noise_counts {
        let _ = writeln!(s, "noise_count {} {} {}", loc.line, loc.cdp, n);
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let err = |reason: &str| CliError::Manifest {
        path: path.display().to_string(),
        reason: reason.into(),
    };
    let text = fs::read_to_string(path)?;
    let mut lines_it = text.lines();
    if lines_it.next() != Some("velpick-manifest 1") {
        return Err(err("missing magic"));
    }
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    let mut noise_counts = BTreeMap::new();
    for line in lines_it {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once(' ').ok_or_else(|| err("bad line"))?;
        if k == "noise_count" {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err("bad noise_count"));
            }
            let l: i64 = parts[0].parse().map_err(|_| err("bad noise_count"))?;
            let c: i64 = parts[1].parse().map_err(|_| err("bad noise_count"))?;
            let n: usize = parts[2].parse().map_err(|_| err("bad noise_count"))?;
            noise_counts.insert(SurveyIndex::new(l, c), n);
        } else {
            fields.insert(k, v);
        }
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| err("missing field"));
    let axis3 = |s: &str| -> Result<(f64, f64, usize), CliError> {
        let p: Vec<&str> = s.split_whitespace().collect();
        if p.len() != 3 {
            return Err(err("bad axis"));
        }
        Ok((
            p[0].parse().map_err(|_| err("bad axis"))?,
            p[1].parse().map_err(|_| err("bad axis"))?,
            p[2].parse().map_err(|_| err("bad axis"))?,
        ))
    };
    let (t0, dt, n) = axis3(get("taxis")?)?;
    let (v0, dv, mv) = axis3(get("vaxis")?)?;
    Ok(Manifest {
        lines: get("lines")?.parse().map_err(|_| err("bad lines"))?,
        cdps: get("cdps")?.parse().map_err(|_| err("bad cdps"))?,
        snr: parse_snr(get("snr")?)?,
        seed: get("seed")?.parse().map_err(|_| err("bad seed"))?,
        taxis: TimeAxis::new(t0, dt, n).map_err(|_| err("bad taxis"))?,
        vaxis: VelocityAxis::new(v0, dv, mv).map_err(|_| err("bad vaxis"))?,
        noise_counts,
    })
}

fn gather_path(dir: &Path, loc: SurveyIndex) -> PathBuf {
    dir.join(format!("gather_{}_{}.bin", loc.line, loc.cdp))
}

/// Generate a synthetic survey and write it as a dataset directory:
/// manifest, per-location gather files, truth curves and noise points.
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let scfg = cfg.synth_config();
    let survey = build_survey(&scfg)?;
    let dir = &cfg.out;
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        lines: cfg.lines,
        cdps: cfg.cdps,
        snr: cfg.snr,
        seed: cfg.seed,
        taxis: scfg.taxis,
        vaxis: scfg.vaxis,
        noise_counts: survey
            .noise_points
            .iter()
            .map(|(loc, pts)| (*loc, pts.len()))
            .collect(),
    };
    write_manifest(&dir.join("manifest.txt"), &manifest)?;
    for (loc, g) in &survey.gathers {
        io::write_gather(&gather_path(dir, *loc), g)?;
    }
    io::write_picks(
        &dir.join("truth.txt"),
        survey.truth.iter().map(|(loc, f)| (loc, f, false)),
    )?;
    io::write_point_blocks(&dir.join("noise.txt"), &survey.noise_points)?;
    Ok(())
}

/// Read back the parts of a dataset the picker needs.
pub fn load_dataset(
    dir: &Path,
) -> Result<(Manifest, BTreeMap<SurveyIndex, CmpGather>, BTreeMap<SurveyIndex, VelocityFunction>), CliError> {
    let manifest = read_manifest(&dir.join("manifest.txt"))?;
    let truth: BTreeMap<SurveyIndex, VelocityFunction> = io::read_picks(&dir.join("truth.txt"))?
        .into_iter()
        .map(|(loc, p)| (loc, p.curve))
        .collect();
    let mut gathers = BTreeMap::new();
    for loc in truth.keys() {
        gathers.insert(*loc, io::read_gather(&gather_path(dir, *loc))?);
    }
    Ok((manifest, gathers, truth))
}

pub fn picks_path(out: &Path, method: &str) -> PathBuf {
    out.join(format!("picks_{method}.txt"))
}

/// Pick every location of a dataset and write the picks file. Per-location
/// failures are recorded as comments in the picks file, not fatal errors.
pub fn cmd_pick(cfg: &RunConfig) -> Result<(), CliError> {
    let (manifest, gathers, truth) = load_dataset(&cfg.dataset)?;
    let spectra = compute_spectra(
        &gathers,
        &cfg.semblance_config(manifest.vaxis),
        cfg.workers,
    );
    let seeds = seeds_from_truth(&truth, cfg.seed_stride);
    let method = cfg.pick_method()?;
    let picks = pick_survey(
        &spectra,
        &seeds,
        method,
        &cfg.pipeline_config(),
        cfg.workers,
        cfg.seed,
    );
    fs::create_dir_all(&cfg.out)?;
    let path = picks_path(&cfg.out, &cfg.method);
    io::write_pick_results(&path, &picks.picks)?;
    if !picks.failures.is_empty() {
        let mut tail = String::new();
        for (loc, msg) in &picks.failures {
            let _ = writeln!(tail, "# failed {} {}: {msg}", loc.line, loc.cdp);
        }
        let mut body = fs::read_to_string(&path)?;
        body.push_str(&tail);
        fs::write(&path, body)?;
    }
    if cfg.emit_images {
        let loc = SurveyIndex::new(cfg.qc_line, cfg.qc_cdp);
        if let Some(s) = spectra.get(&loc) {
            let rows: Vec<Vec<f64>> = (0..s.taxis.n)
                .map(|i| (0..s.vaxis.m).map(|j| s.at(i, j)).collect())
                .collect();
            io::write_pgm(
                &cfg.out.join(format!("spectrum_{}_{}.pgm", loc.line, loc.cdp)),
                &rows,
            )?;
        }
    }
    Ok(())
}

fn report_row(label: &str, r: &crate::evalqc::MetricReport) -> String {
    let pr = r.pr.map_or("-".to_string(), |p| format!("{:.1}", p * 100.0));
    let md = r.md.map_or("-".to_string(), |m| format!("{m:.1}"));
    format!(
        "{label:>8}  {:>9.2}  {:>7.3}  {pr:>6}  {md:>8}\n",
        r.vmae,
        r.vmre * 100.0
    )
}

/// Evaluate a picks file against dataset truth, excluding seed locations;
/// writes a human table and a key=value report.
pub fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let (manifest, _, truth) = {
        let manifest = read_manifest(&cfg.dataset.join("manifest.txt"))?;
        let truth: BTreeMap<SurveyIndex, VelocityFunction> =
            io::read_picks(&cfg.dataset.join("truth.txt"))?
                .into_iter()
                .map(|(loc, p)| (loc, p.curve))
                .collect();
        (manifest, (), truth)
    };
    let picks = io::read_picks(&picks_path(&cfg.out, &cfg.method))?;
    let seeds = seeds_from_truth(&truth, cfg.seed_stride);
    let report = evaluate_survey(&picks, &truth, &manifest.taxis, &seeds);
    fs::create_dir_all(&cfg.out)?;
    let mut table = String::from("     snr       vmae    vmre%     pr%        md\n");
    table.push_str(&report_row(&format_snr(manifest.snr), &report));
    fs::write(cfg.out.join("table.txt"), &table)?;
    let mut kv = String::new();
    let _ = writeln!(kv, "snr={}", format_snr(manifest.snr));
    let _ = writeln!(kv, "method={}", cfg.method);
    let _ = writeln!(kv, "n_locations={}", report.n_locations);
    let _ = writeln!(kv, "vmae={}", report.vmae);
    let _ = writeln!(kv, "vmre={}", report.vmre);
    let _ = writeln!(kv, "pr={}", report.pr.map_or("-".into(), |p| p.to_string()));
    let _ = writeln!(kv, "md={}", report.md.map_or("-".into(), |m| m.to_string()));
    fs::write(cfg.out.join("report.txt"), &kv)?;
    print!("{table}");
    Ok(())
}

fn nmo_rows(g: &NmoGather) -> Vec<Vec<f64>> {
    (0..g.gather.taxis.n)
        .map(|i| {
            (0..g.gather.n_traces())
                .map(|k| if g.is_live(i, k) { g.gather.amp(i, k) } else { 0.0 })
                .collect()
        })
        .collect()
}

/// QC images: NMO-corrected gathers for one location and stack sections for
/// one line, each for both the automatic picks and the reference curves.
pub fn cmd_qc(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, gathers, truth) = load_dataset(&cfg.dataset)?;
    let picks = io::read_picks(&picks_path(&cfg.out, &cfg.method))?;
    fs::create_dir_all(&cfg.out)?;
    let loc = SurveyIndex::new(cfg.qc_line, cfg.qc_cdp);
    if let Some(g) = gathers.get(&loc) {
        if let Some(p) = picks.get(&loc) {
            let n = nmo_correct(g, &p.curve, cfg.stretch_limit);
            io::write_pgm(
                &cfg.out.join(format!("nmo_auto_{}_{}.pgm", loc.line, loc.cdp)),
                &nmo_rows(&n),
            )?;
        }
        if let Some(f) = truth.get(&loc) {
            let n = nmo_correct(g, f, cfg.stretch_limit);
            io::write_pgm(
                &cfg.out.join(format!("nmo_ref_{}_{}.pgm", loc.line, loc.cdp)),
                &nmo_rows(&n),
            )?;
        }
    }
    let line_locs: Vec<SurveyIndex> = gathers
        .keys()
        .filter(|l| l.line == cfg.qc_line)
        .copied()
        .collect();
    let stack_for = |curves: &dyn Fn(&SurveyIndex) -> Option<VelocityFunction>|
        -> Option<Vec<Vec<f64>>> {
        let mut corrected = Vec::new();
        for l in &line_locs {
            let f = curves(l)?;
            corrected.push(nmo_correct(&gathers[l], &f, cfg.stretch_limit));
        }
        stack_section(&corrected).ok()
    };
    if let Some(rows) = stack_for(&|l| picks.get(l).map(|p| p.curve.clone())) {
        io::write_pgm(&cfg.out.join(format!("stack_auto_line{}.pgm", cfg.qc_line)), &rows)?;
    }
    if let Some(rows) = stack_for(&|l| truth.get(l).cloned()) {
        io::write_pgm(&cfg.out.join(format!("stack_ref_line{}.pgm", cfg.qc_line)), &rows)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn snr_parsing() {
        assert_eq!(parse_snr("10").unwrap(), Some(10.0));
        assert_eq!(parse_snr("2/3").unwrap(), Some(2.0 / 3.0));
        assert_eq!(parse_snr("inf").unwrap(), None);
        assert!(parse_snr("0").is_err());
        assert!(parse_snr("-1").is_err());
        assert!(parse_snr("abc").is_err());
        assert!(parse_snr("1/0").is_err());
    }

    #[test]
    fn unknown_config_key_is_fatal() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_file("taus = 0.4").unwrap_err();
        assert!(matches!(err, CliError::UnknownKey(k) if k == "taus"));
    }

    #[test]
    fn config_file_overrides_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_file(
            "# comment\n\ntau = 0.25\nsnr = 2/5\nworkers 4\nuse_near = off\nqc_line = -3\n",
        )
        .unwrap();
        assert_eq!(cfg.tau, 0.25);
        assert_eq!(cfg.snr, Some(0.4));
        assert_eq!(cfg.workers, 4);
        assert!(!cfg.use_near);
        assert_eq!(cfg.qc_line, -3);
        // untouched keys keep defaults
        assert_eq!(cfg.tau_near, RunConfig::default().tau_near);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let mut noise = BTreeMap::new();
        noise.insert(SurveyIndex::new(0, 0), 3);
        noise.insert(SurveyIndex::new(1, 2), 0);
        let m = Manifest {
            lines: 2,
            cdps: 3,
            snr: Some(2.0 / 3.0),
            seed: 7,
            taxis: TimeAxis::new(0.0, 20.0, 201).unwrap(),
            vaxis: VelocityAxis::new(1500.0, 25.0, 121).unwrap(),
            noise_counts: noise,
        };
        write_manifest(&path, &m).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
    }

    #[test]
    fn synth_dataset_round_trips_and_counts_noise() {
        let dir = tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.lines = 2;
        cfg.cdps = 2;
        cfg.snr = Some(2.0);
        cfg.out = dir.path().to_path_buf();
        cfg.dataset = dir.path().to_path_buf();
        cmd_synth(&cfg).unwrap();
        let (manifest, gathers, truth) = load_dataset(dir.path()).unwrap();
        assert_eq!(gathers.len(), 4);
        assert_eq!(truth.len(), 4);
        // snr 2 with 10 real points => 5 noise points everywhere
        assert!(manifest.noise_counts.values().all(|&n| n == 5));
        let noise = io::read_point_blocks(&dir.path().join("noise.txt")).unwrap();
        assert!(noise.values().all(|pts| pts.len() == 5));
    }
}

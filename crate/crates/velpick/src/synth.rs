//! Ground-truthed synthetic surveys: layered stack-velocity fields, SNR
//! controlled spurious velocity points, and CMP gathers with hyperbolic
//! Ricker events.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::model::{CmpGather, SurveyIndex, TimeAxis, VelocityAxis, VelocityFunction};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("snr must be > 0")]
    BadSnr,
    #[error("n_real_points must be >= 2")]
    TooFewRealPoints,
    #[error("offsets must be strictly increasing and nonnegative")]
    BadOffsets,
    #[error("event apex at t = {t} ms lies outside the time axis")]
    EventOutOfRange { t: f64 },
}

#[derive(Debug, Clone)]
pub struct SyntheticSurveyConfig {
    pub n_lines: usize,
    pub n_cdps: usize,
    pub taxis: TimeAxis,
    pub vaxis: VelocityAxis,
    /// True velocity picks per location.
    pub n_real_points: usize,
    /// Real-to-noise point count ratio; `None` disables noise entirely.
    pub snr: Option<f64>,
    /// Std of the Gaussian velocity perturbation of noise points (m/s).
    pub noise_sigma: f64,
    pub offsets: Vec<f64>,
    pub wavelet_freq: f64,
    pub rng_seed: u64,
    /// Max change of any pick velocity between adjacent grid locations (m/s).
    pub lateral_drift: f64,
}

impl SyntheticSurveyConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if let Some(snr) = self.snr {
            if !(snr > 0.0) {
                return Err(SynthError::BadSnr);
            }
        }
        if self.n_real_points < 2 {
            return Err(SynthError::TooFewRealPoints);
        }
        if self.offsets.len() < 2
            || self.offsets[0] < 0.0
            || self.offsets.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(SynthError::BadOffsets);
        }
        Ok(())
    }

    pub fn locations(&self) -> Vec<SurveyIndex> {
        let mut locs = Vec::with_capacity(self.n_lines * self.n_cdps);
        for line in 0..self.n_lines {
            for cdp in 0..self.n_cdps {
                locs.push(SurveyIndex::new(line as i64, cdp as i64));
            }
        }
        locs
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSurvey {
    pub gathers: BTreeMap<SurveyIndex, CmpGather>,
    pub truth: BTreeMap<SurveyIndex, VelocityFunction>,
    pub noise_points: BTreeMap<SurveyIndex, Vec<(f64, f64)>>,
}

fn mix_seed(seed: u64, tag: u64, line: i64, cdp: i64) -> u64 {
    // splitmix64-style mixing keeps per-location streams independent of
    // generation order.
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((line as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add((cdp as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Layered stack-velocity field. A base profile of increasing interval
/// velocities is drawn once from the survey seed, converted to stack
/// velocities, and then shifted laterally by a smooth offset field whose
/// per-step change never exceeds `lateral_drift`.
pub fn make_velocity_field(
    cfg: &SyntheticSurveyConfig,
) -> Result<BTreeMap<SurveyIndex, VelocityFunction>, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, 1, 0, 0));
    let n = cfg.n_real_points;
    let t_lo = cfg.taxis.t0 + 0.08 * (cfg.taxis.t_max() - cfg.taxis.t0);
    let t_hi = cfg.taxis.t0 + 0.96 * (cfg.taxis.t_max() - cfg.taxis.t0);
    let spacing = (t_hi - t_lo) / n as f64;
    // Pick times shared by all locations, jittered but keeping gaps wide.
    let times: Vec<f64> = (0..n)
        .map(|k| t_lo + (k as f64 + 0.5) * spacing + rng.gen_range(-0.15..0.15) * spacing)
        .collect();

    // Margin keeps picks inside the velocity axis after drift and noise
    // clipping headroom.
    let max_drift = cfg.lateral_drift * (cfg.n_lines + cfg.n_cdps) as f64 * 0.5;
    let v_lo = cfg.vaxis.v0 + 150.0 + max_drift;
    let v_hi = cfg.vaxis.v_max() - 150.0 - max_drift;

    // Increasing interval-velocity profile; stack velocities follow from
    // the forward Dix relation, which keeps every pick pair physically
    // consistent.
    let vint_lo = v_lo + 50.0;
    let vint_hi = (v_hi * 1.25).min(6200.0);
    let mut vints = Vec::with_capacity(n);
    let mut vint = vint_lo * rng.gen_range(1.0..1.08);
    let step = (vint_hi - vint_lo) / n as f64;
    for _ in 0..n {
        vints.push(vint);
        vint += step * rng.gen_range(0.5..1.4);
    }
    let mut base = Vec::with_capacity(n);
    let mut sum_v2t = 0.0;
    let mut t_prev = cfg.taxis.t0.max(0.0);
    // lead-in layer from t = t0 to the first pick
    for (k, &t) in times.iter().enumerate() {
        sum_v2t += vints[k] * vints[k] * (t - t_prev);
        t_prev = t;
        let t_total = t - cfg.taxis.t0.max(0.0);
        let vstack = if t_total > 0.0 {
            (sum_v2t / t_total).sqrt()
        } else {
            vints[k]
        };
        base.push((t, vstack.clamp(v_lo, v_hi)));
    }
    // enforce nondecreasing stack velocity after clamping
    for k in 1..n {
        if base[k].1 < base[k - 1].1 {
            base[k].1 = base[k - 1].1;
        }
    }

    let mut out = BTreeMap::new();
    for loc in cfg.locations() {
        let off = lateral_offset(cfg.lateral_drift, loc.line as f64, loc.cdp as f64);
        let picks: Vec<(f64, f64)> = base.iter().map(|&(t, v)| (t, v + off)).collect();
        out.insert(loc, VelocityFunction::new(picks).expect("generated picks valid"));
    }
    Ok(out)
}

/// Smooth lateral shift; the change between adjacent grid steps is bounded
/// by the configured drift.
fn lateral_offset(drift: f64, line: f64, cdp: f64) -> f64 {
    drift * (0.35 * (line + cdp) + 0.4 * (0.6 * line).sin() + 0.4 * (0.8 * cdp).sin())
}

/// Spurious velocity points per location: `round(n_real / snr)` points with
/// uniform t over the time range and v perturbed from the nearest true pick
/// by Gaussian noise, clipped to the velocity axis.
pub fn add_noise_points(
    truth: &BTreeMap<SurveyIndex, VelocityFunction>,
    snr: Option<f64>,
    taxis: &TimeAxis,
    vaxis: &VelocityAxis,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<BTreeMap<SurveyIndex, Vec<(f64, f64)>>, SynthError> {
    let count = |n_real: usize| -> usize {
        match snr {
            None => 0,
            Some(s) if s > 0.0 => (n_real as f64 / s).round() as usize,
            _ => 0,
        }
    };
    if let Some(s) = snr {
        if !(s > 0.0) {
            return Err(SynthError::BadSnr);
        }
    }
    let normal = Normal::new(0.0, noise_sigma).map_err(|_| SynthError::BadSnr)?;
    let mut out = BTreeMap::new();
    for (loc, f) in truth {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, 2, loc.line, loc.cdp));
        let n_noise = count(f.picks().len());
        let mut pts = Vec::with_capacity(n_noise);
        for _ in 0..n_noise {
            let t = rng.gen_range(taxis.t0..taxis.t_max());
            // velocity of the pick nearest in time
            let v_near = f
                .picks()
                .iter()
                .min_by(|a, b| {
                    (a.0 - t).abs().partial_cmp(&(b.0 - t).abs()).unwrap()
                })
                .map(|&(_, v)| v)
                .unwrap();
            let v = (v_near + normal.sample(&mut rng)).clamp(vaxis.v0, vaxis.v_max());
            pts.push((t, v));
        }
        out.insert(*loc, pts);
    }
    Ok(out)
}

/// Ricker wavelet of peak frequency `f` Hz at lag `tau` ms.
pub fn ricker(tau_ms: f64, freq_hz: f64) -> f64 {
    let tau_s = tau_ms * 1e-3;
    let a = std::f64::consts::PI * freq_hz * tau_s;
    let a2 = a * a;
    (1.0 - 2.0 * a2) * (-a2).exp()
}

/// Half-width of the wavelet support in ms (envelope below ~1e-7 outside).
fn ricker_support_ms(freq_hz: f64) -> f64 {
    4.0 / (std::f64::consts::PI * freq_hz) * 1e3
}

/// CMP gather synthesis: each real pick contributes a unit-amplitude Ricker
/// event along its moveout hyperbola; noise points contribute the same at
/// half amplitude.
pub fn synthesize_gather(
    truth: &VelocityFunction,
    noise: &[(f64, f64)],
    offsets: &[f64],
    taxis: &TimeAxis,
    wavelet_freq: f64,
    location: SurveyIndex,
) -> Result<CmpGather, SynthError> {
    let events: Vec<(f64, f64, f64)> = truth
        .picks()
        .iter()
        .map(|&(t, v)| (t, v, 1.0))
        .chain(noise.iter().map(|&(t, v)| (t, v, 0.5)))
        .collect();
    for &(t0, _, _) in &events {
        if !taxis.contains(t0) {
            return Err(SynthError::EventOutOfRange { t: t0 });
        }
    }
    let mut g = CmpGather::zeros(*taxis, offsets.to_vec(), location);
    let support = ricker_support_ms(wavelet_freq);
    for &(t0, v, amp) in &events {
        for (k, &x) in offsets.iter().enumerate() {
            let dx = x * 1000.0 / v;
            let te = (t0 * t0 + dx * dx).sqrt();
            let i_lo = (taxis.index_of(te - support).ceil().max(0.0)) as usize;
            let i_hi = (taxis.index_of(te + support).floor()).min((taxis.n - 1) as f64);
            if i_hi < 0.0 {
                continue;
            }
            for i in i_lo..=(i_hi as usize) {
                *g.amp_mut(i, k) += amp * ricker(taxis.time(i) - te, wavelet_freq);
            }
        }
    }
    Ok(g)
}

/// Full survey: truth field, noise points, and gathers per location,
/// deterministic in the config (including the seed).
pub fn build_survey(cfg: &SyntheticSurveyConfig) -> Result<SyntheticSurvey, SynthError> {
    cfg.validate()?;
    let truth = make_velocity_field(cfg)?;
    let noise_points = add_noise_points(
        &truth,
        cfg.snr,
        &cfg.taxis,
        &cfg.vaxis,
        cfg.noise_sigma,
        cfg.rng_seed,
    )?;
    let mut gathers = BTreeMap::new();
    for (loc, f) in &truth {
        let g = synthesize_gather(
            f,
            &noise_points[loc],
            &cfg.offsets,
            &cfg.taxis,
            cfg.wavelet_freq,
            *loc,
        )?;
        gathers.insert(*loc, g);
    }
    Ok(SyntheticSurvey {
        gathers,
        truth,
        noise_points,
    })
}

/// Default survey geometry used by the CLI and tests: 4 s record at 20 ms,
/// 1500-4500 m/s scan at 25 m/s, offsets 0-3000 m at 100 m.
pub fn default_config(n_lines: usize, n_cdps: usize, snr: Option<f64>, seed: u64) -> SyntheticSurveyConfig {
    SyntheticSurveyConfig {
        n_lines,
        n_cdps,
        // 4 ms sampling keeps a 30 Hz wavelet well above Nyquist; semblance
        // rows are usually decimated back to 20 ms (see SemblanceConfig).
        taxis: TimeAxis::new(0.0, 4.0, 1001).unwrap(),
        vaxis: VelocityAxis::new(1500.0, 25.0, 121).unwrap(),
        n_real_points: 10,
        snr,
        noise_sigma: 400.0,
        offsets: (0..=30).map(|i| i as f64 * 100.0).collect(),
        wavelet_freq: 30.0,
        rng_seed: seed,
        lateral_drift: 8.0,
    }
}

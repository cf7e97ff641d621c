//! Seeded Monte Carlo experiments, CSV output and run manifests.
//!
//! Every random draw comes from a ChaCha8 stream addressed by
//! `(seed, trial, sensor, purpose)`, so results do not depend on how trials
//! are scheduled across threads, and adding a detector to an experiment does
//! not change the numbers of the others.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::transmit;
use crate::design::{design, DesignError, Optimizer};
use crate::detector::{
    build_tables, mismatched_asymptotics, ClairvoyantModel, DetectorError, DetectorTables, MismatchMoments,
    QuantizedModel, ThresholdCalibration,
};
use crate::numerics::{gaussian_ccdf, gaussian_ccdf_inv, NumericsError, Probability};
use crate::quantizer::{codeword_of, index_of, QuantizerError, QuantizerKind, QuantizerSpec};
use crate::signal::{
    generate_measurement_vectors, sample_gaussian_approx, sample_on_support, sample_support, signal_var_for_snr,
    GenerationMode, SignalError, SystemConfig,
};

pub const CSV_HEADER: [&str; 8] = ["sweep", "detector", "pfa_theory", "pd_theory", "pfa_mc", "pd_mc", "ci", "trials"];

/// Two-sided 99% normal quantile used for binomial intervals.
pub const Z99: f64 = 2.576;

pub const CLAIRVOYANT: &str = "clairvoyant";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("detector '{0}' is degenerate (zero Fisher information)")]
    Degenerate(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// True for errors caused by the user's input rather than the run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Parse(_)
                | HarnessError::Invalid(_)
                | HarnessError::Signal(_)
                | HarnessError::Quantizer(_)
                | HarnessError::Numerics(_)
                | HarnessError::Design(_)
        ) || matches!(self, HarnessError::Detector(e) if !matches!(e, DetectorError::Degenerate))
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, HarnessError::Degenerate(_) | HarnessError::Detector(DetectorError::Degenerate))
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Invalid(msg.into())
}

/// `system` block of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "M")]
    pub num_sensors: usize,
    #[serde(rename = "N")]
    pub signal_dim: usize,
    pub p: f64,
    pub sigma0_sq: f64,
    #[serde(default = "one")]
    pub sigma_w_sq: f64,
    /// Length 1 (shared) or `M`. In mismatch runs this is the true channel.
    #[serde(default = "zero_list")]
    pub pe: Vec<f64>,
    #[serde(default = "one_list")]
    pub h_norm_sq: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn zero_list() -> Vec<f64> {
    vec![0.0]
}

fn one_list() -> Vec<f64> {
    vec![1.0]
}

fn broadcast(name: &str, v: &[f64], m: usize) -> Result<Vec<f64>, HarnessError> {
    match v.len() {
        1 => Ok(vec![v[0]; m]),
        n if n == m => Ok(v.to_vec()),
        n => Err(invalid(format!("system.{name} has {n} entries; expected 1 or {m}"))),
    }
}

impl SystemSection {
    /// Scenario with `num_sensors` sensors and signal variance `signal_var`.
    pub fn scenario(&self, num_sensors: usize, signal_var: f64) -> Result<SystemConfig, HarnessError> {
        let cfg = SystemConfig {
            num_sensors,
            signal_dim: self.signal_dim,
            sparsity: self.p,
            signal_var,
            noise_var: self.sigma_w_sq,
            h_norm_sq: broadcast("h_norm_sq", &self.h_norm_sq, num_sensors)?,
            pe: broadcast("pe", &self.pe, num_sensors)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn base(&self) -> Result<SystemConfig, HarnessError> {
        self.scenario(self.num_sensors, self.sigma0_sq)
    }
}

/// Thresholds to be designed instead of given. A missing `pe` means the
/// channel the detector assumes: the system's, or the swept value in
/// mismatch runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Optimizer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerEntry {
    pub label: String,
    pub kind: QuantizerKind,
    pub q: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignRequest>,
}

impl QuantizerEntry {
    fn validate(&self) -> Result<(), HarnessError> {
        match (&self.thresholds, &self.design) {
            (Some(t), None) => {
                QuantizerSpec::new(self.kind, self.q, t.clone())?;
            }
            (None, Some(d)) => {
                if let Some(pe) = d.pe {
                    if !(0.0..1.0).contains(&pe) {
                        return Err(invalid(format!("quantizer '{}': design pe {pe} is outside [0, 1)", self.label)));
                    }
                }
                if let Some(Optimizer::Pso(params)) = &d.optimizer {
                    params.validate()?;
                }
                if self.q == 0 || self.q > u32::from(crate::quantizer::MAX_BITS) {
                    return Err(QuantizerError::BitDepth(self.q).into());
                }
            }
            _ => {
                return Err(invalid(format!(
                    "quantizer '{}' needs exactly one of 'thresholds' or 'design'",
                    self.label
                )))
            }
        }
        Ok(())
    }

    /// Concrete spec, designing thresholds at `assumed_pe` when needed.
    pub fn resolve(&self, sigma_w: f64, assumed_pe: f64) -> Result<QuantizerSpec, HarnessError> {
        match (&self.thresholds, &self.design) {
            (Some(t), _) => Ok(QuantizerSpec::new(self.kind, self.q, t.clone())?),
            (None, Some(d)) => {
                let pe = d.pe.unwrap_or(assumed_pe);
                let opt = d.optimizer.clone().unwrap_or_default();
                let r = design(self.kind, self.q, pe, sigma_w, &opt)?;
                if r.is_degenerate() {
                    return Err(HarnessError::Degenerate(self.label.clone()));
                }
                Ok(r.spec)
            }
            (None, None) => Err(invalid(format!("quantizer '{}' has no thresholds", self.label))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Pfa,
    Sensors,
    /// Per-sensor SNR in dB, realized through `sigma0_sq` at fixed `p`.
    Snr,
    Sigma0Sq,
    AssumedPe,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Pfa => "pfa",
            SweepAxis::Sensors => "sensors",
            SweepAxis::Snr => "snr",
            SweepAxis::Sigma0Sq => "sigma0-sq",
            SweepAxis::AssumedPe => "assumed-pe",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Sweep {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() {
            return Err(invalid("sweep.values is empty"));
        }
        for &v in &self.values {
            let ok = match self.axis {
                SweepAxis::Pfa => v > 0.0 && v < 1.0,
                SweepAxis::Sensors => v >= 1.0 && v.fract() == 0.0 && v <= 1e7,
                SweepAxis::Snr => v.is_finite(),
                SweepAxis::Sigma0Sq => v >= 0.0 && v.is_finite(),
                SweepAxis::AssumedPe => (0.0..1.0).contains(&v),
            };
            if !ok {
                return Err(invalid(format!("sweep value {v} is not valid for axis {}", self.axis)));
            }
        }
        Ok(())
    }
}

fn default_trials() -> usize {
    5000
}

fn default_pfa() -> f64 {
    0.1
}

/// Full experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub quantizers: Vec<QuantizerEntry>,
    /// Quantizer labels and/or `"clairvoyant"`. Empty means every quantizer.
    #[serde(default)]
    pub detectors: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: GenerationMode,
    pub sweep: Sweep,
    /// Nominal false-alarm rate for every sweep except `pfa`.
    #[serde(default = "default_pfa")]
    pub pfa: f64,
    /// Threshold calibration for mismatch runs.
    #[serde(default)]
    pub calibration: ThresholdCalibration,
}

impl std::str::FromStr for ExperimentConfig {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.system.base()?;
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(invalid(format!("pfa {} is outside (0, 1)", self.pfa)));
        }
        self.sweep.validate()?;
        let mut labels = std::collections::HashSet::new();
        for q in &self.quantizers {
            if q.label == CLAIRVOYANT || !labels.insert(q.label.as_str()) {
                return Err(invalid(format!("quantizer label '{}' is reserved or repeated", q.label)));
            }
            q.validate()?;
        }
        for d in &self.detectors {
            if d != CLAIRVOYANT && !labels.contains(d.as_str()) {
                return Err(invalid(format!("detector '{d}' names no quantizer")));
            }
        }
        if self.detector_labels().is_empty() {
            return Err(invalid("no detectors to run"));
        }
        Ok(())
    }

    pub fn detector_labels(&self) -> Vec<String> {
        if self.detectors.is_empty() {
            self.quantizers.iter().map(|q| q.label.clone()).collect()
        } else {
            self.detectors.clone()
        }
    }

    fn quantizer(&self, label: &str) -> Option<&QuantizerEntry> {
        self.quantizers.iter().find(|q| q.label == label)
    }

    fn expect_axis(&self, axes: &[SweepAxis], command: &str) -> Result<(), HarnessError> {
        if axes.contains(&self.sweep.axis) {
            Ok(())
        } else {
            Err(invalid(format!("{command} cannot sweep axis {}", self.sweep.axis)))
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep: f64,
    pub detector: String,
    pub pfa_theory: f64,
    pub pd_theory: f64,
    pub pfa_mc: f64,
    pub pd_mc: f64,
    pub ci: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    /// Detectors that were skipped as degenerate.
    pub degenerate: Vec<String>,
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.sweep.to_string(),
                r.detector.clone(),
                r.pfa_theory.to_string(),
                r.pd_theory.to_string(),
                r.pfa_mc.to_string(),
                r.pd_mc.to_string(),
                r.ci.to_string(),
                r.trials.to_string(),
            ])?;
        }
        w.flush().map_err(|source| HarnessError::Io { path: PathBuf::from("<csv>"), source })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, HarnessError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub fn row(&self, detector: &str, sweep: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.detector == detector && r.sweep == sweep)
    }
}

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub version: String,
    pub trials: Option<usize>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config_sha256: String, trials: Option<usize>, outputs: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config_sha256,
            version: env!("CARGO_PKG_VERSION").to_string(),
            trials,
            outputs,
        }
    }

    /// `dir/stem.manifest.json` for output `dir/stem.ext`.
    pub fn path_for(output: &Path) -> PathBuf {
        let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        output.with_file_name(format!("{stem}.manifest.json"))
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
    }
}

/// Execution knobs that must not change results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl RunOptions {
    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Half-width of the 99% normal-approximation binomial interval.
pub fn ci_half_width(p_hat: f64, trials: usize) -> f64 {
    Z99 * (p_hat * (1.0 - p_hat) / trials as f64).sqrt()
}

// Random stream addressing. A stream id is `(trial << 32) | lane`; lanes are
// `sensor * LANES + purpose`, and trial `GLOBAL` holds per-run draws such as
// measurement vectors.
const LANES: u64 = 8;
const H1_SIGNAL: u64 = 0;
const H0_NOISE: u64 = 1;
const H1_CHANNEL: u64 = 2;
const H0_CHANNEL: u64 = 3;
const MEASUREMENT: u64 = 4;
const SUPPORT_LANE: u64 = 0xFFFF_FFFF;
const GLOBAL: u64 = 0x7FFF_FFFF;

fn stream(base: &ChaCha8Rng, trial: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream((trial << 32) | lane);
    rng.set_word_pos(0);
    rng
}

fn lane(sensor: usize, purpose: u64) -> u64 {
    sensor as u64 * LANES + purpose
}

/// A detector ready to fuse: tables plus the quantizer that feeds them.
#[derive(Debug, Clone)]
pub enum Fusion {
    Quantized { spec: QuantizerSpec, tables: DetectorTables },
    Clairvoyant,
}

/// Null and alternative statistics of one detector over all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
}

impl Samples {
    fn rate(xs: &[f64], eta: f64) -> f64 {
        xs.iter().filter(|&&t| t > eta).count() as f64 / xs.len() as f64
    }

    /// `(pfa, pd)` at threshold `eta`.
    pub fn rates(&self, eta: f64) -> (f64, f64) {
        (Self::rate(&self.h0, eta), Self::rate(&self.h1, eta))
    }

    /// Smallest null sample `eta` with at most `pfa` of the null samples above it.
    pub fn null_quantile(&self, pfa: f64) -> f64 {
        let mut sorted = self.h0.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let allowed = (pfa * n as f64).floor() as usize;
        sorted[n - 1 - allowed.min(n - 1)]
    }
}

/// Monte Carlo engine for one scenario. `channel_pe` is the true crossover
/// probability per sensor.
pub fn simulate(
    sys: &SystemConfig,
    mode: GenerationMode,
    detectors: &[Fusion],
    trials: usize,
    seed: u64,
    opts: RunOptions,
) -> Result<Vec<Samples>, HarnessError> {
    sys.validate()?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let m = sys.num_sensors;
    // Each sensor's vector comes from its own stream so h_m does not depend on M.
    let h: Vec<Vec<f64>> = match mode {
        GenerationMode::Exact => (0..m)
            .map(|k| {
                let mut rng = stream(&base, GLOBAL, lane(k, MEASUREMENT));
                let scale = sys.h_norm_sq[k].sqrt();
                generate_measurement_vectors(1, sys.signal_dim, &mut rng)
                    .remove(0)
                    .into_iter()
                    .map(|x| x * scale)
                    .collect()
            })
            .collect(),
        GenerationMode::GaussianApprox => Vec::new(),
    };
    let sigma_w = sys.sigma_w();
    let sigma_1: Vec<f64> = (0..m).map(|k| sys.sigma_m(k, sys.sparsity)).collect();

    let one_trial = |trial: usize| -> Vec<(f64, f64)> {
        let t = trial as u64;
        let support = match mode {
            GenerationMode::Exact => {
                let mut rng = stream(&base, t, SUPPORT_LANE);
                sample_support(sys.signal_dim, sys.sparsity, &mut rng)
            }
            GenerationMode::GaussianApprox => Vec::new(),
        };
        let mut y1 = Vec::with_capacity(m);
        let mut y0 = Vec::with_capacity(m);
        for k in 0..m {
            let mut rng = stream(&base, t, lane(k, H1_SIGNAL));
            y1.push(match mode {
                GenerationMode::Exact => {
                    let s = sample_on_support(sys.signal_dim, &support, sys.signal_var, &mut rng);
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    s.dot(&h[k]) + sigma_w * noise
                }
                GenerationMode::GaussianApprox => sample_gaussian_approx(sigma_1[k], &mut rng),
            });
            let mut rng = stream(&base, t, lane(k, H0_NOISE));
            y0.push(sample_gaussian_approx(sigma_w, &mut rng));
        }
        detectors
            .iter()
            .map(|d| match d {
                Fusion::Clairvoyant => {
                    (crate::detector::clairvoyant_statistic(sys, &y0), crate::detector::clairvoyant_statistic(sys, &y1))
                }
                Fusion::Quantized { spec, tables } => {
                    let fuse = |ys: &[f64], purpose: u64| -> f64 {
                        ys.iter()
                            .enumerate()
                            .map(|(k, &y)| {
                                let mut rng = stream(&base, t, lane(k, purpose));
                                let sent = codeword_of(spec.quantize(y), spec.bits());
                                let received = index_of(transmit(sent, sys.pe[k], &mut rng));
                                tables.contribution(k, received)
                            })
                            .sum()
                    };
                    (fuse(&y0, H0_CHANNEL), fuse(&y1, H1_CHANNEL))
                }
            })
            .collect()
    };

    let per_trial: Vec<Vec<(f64, f64)>> = opts.install(|| (0..trials).into_par_iter().map(one_trial).collect())?;
    Ok((0..detectors.len())
        .map(|d| Samples {
            h0: per_trial.iter().map(|r| r[d].0).collect(),
            h1: per_trial.iter().map(|r| r[d].1).collect(),
        })
        .collect())
}

/// A labeled detector with its asymptotic Fisher information at `p = 0`.
struct Prepared {
    label: String,
    fusion: Fusion,
    fi0: f64,
}

/// Builds every configured detector for scenario `sys`, with tables from
/// `assumed_pe`. Degenerate detectors are reported and left out.
fn prepare(
    cfg: &ExperimentConfig,
    sys: &SystemConfig,
    assumed_pe: &[f64],
    degenerate: &mut Vec<String>,
) -> Result<Vec<Prepared>, HarnessError> {
    let mut out = Vec::new();
    let shared_pe = assumed_pe[0];
    for label in cfg.detector_labels() {
        if label == CLAIRVOYANT {
            let fi0 = ClairvoyantModel::new(sys)?.fisher_information(0.0)?;
            out.push(Prepared { label, fusion: Fusion::Clairvoyant, fi0 });
            continue;
        }
        let entry = cfg.quantizer(&label).ok_or_else(|| invalid(format!("unknown detector '{label}'")))?;
        let built = entry
            .resolve(sys.sigma_w(), shared_pe)
            .and_then(|spec| Ok((build_tables(sys, std::slice::from_ref(&spec), assumed_pe)?, spec)));
        match built {
            Ok((tables, spec)) => {
                let fi0 = tables.fi0;
                out.push(Prepared { label, fusion: Fusion::Quantized { spec, tables }, fi0 });
            }
            Err(e) if e.is_degenerate() => {
                log::warn!("skipping degenerate detector '{label}'");
                if !degenerate.contains(&label) {
                    degenerate.push(label);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Asymptotic `(pfa, pd)` of a matched detector; a silent signal gives
/// `pd = pfa`.
fn theory(fi0: f64, p: f64, pfa: f64) -> Result<(f64, f64), HarnessError> {
    let eta = gaussian_ccdf_inv(pfa)?;
    let pd = gaussian_ccdf(eta - p * fi0.max(0.0).sqrt());
    Ok((gaussian_ccdf(eta), pd))
}

fn row(sweep: f64, label: &str, theory: (f64, f64), mc: (f64, f64), trials: usize) -> ResultRow {
    ResultRow {
        sweep,
        detector: label.to_string(),
        pfa_theory: theory.0,
        pd_theory: theory.1,
        pfa_mc: mc.0,
        pd_mc: mc.1,
        ci: ci_half_width(mc.1, trials),
        trials,
    }
}

fn warning_rows(sweep: f64, degenerate: &[String], trials: usize, rows: &mut Vec<ResultRow>) {
    for label in degenerate {
        rows.push(row(sweep, label, (f64::NAN, f64::NAN), (f64::NAN, f64::NAN), trials));
        rows.last_mut().expect("just pushed").ci = f64::NAN;
    }
}

/// Sorts rows by sweep position then configured detector order.
fn order_rows(cfg: &ExperimentConfig, rows: &mut [ResultRow]) {
    let labels = cfg.detector_labels();
    let pos = |l: &str| labels.iter().position(|x| x == l).unwrap_or(usize::MAX);
    let sweep_pos = |v: f64| cfg.sweep.values.iter().position(|&x| x == v).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (sweep_pos(r.sweep), pos(&r.detector)));
}

fn base_pe(sys: &SystemConfig) -> Vec<f64> {
    sys.pe.clone()
}

/// ROC: theory and empirical `(pfa, pd)` over the `pfa` grid.
pub fn run_roc(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    cfg.expect_axis(&[SweepAxis::Pfa], "roc")?;
    let sys = cfg.system.base()?;
    let mut degenerate = Vec::new();
    let dets = prepare(cfg, &sys, &base_pe(&sys), &mut degenerate)?;
    let fusions: Vec<Fusion> = dets.iter().map(|d| d.fusion.clone()).collect();
    let samples = simulate(&sys, cfg.mode, &fusions, cfg.trials, cfg.seed, opts)?;
    let mut rows = Vec::new();
    for &pfa in &cfg.sweep.values {
        let eta = gaussian_ccdf_inv(pfa)?;
        for (d, s) in dets.iter().zip(&samples) {
            rows.push(row(pfa, &d.label, theory(d.fi0, sys.sparsity, pfa)?, s.rates(eta), cfg.trials));
        }
        warning_rows(pfa, &degenerate, cfg.trials, &mut rows);
    }
    order_rows(cfg, &mut rows);
    Ok(ExperimentResult { rows, degenerate })
}

/// One simulation per sweep point at the configured nominal `pfa`.
fn run_points(
    cfg: &ExperimentConfig,
    opts: RunOptions,
    scenario: impl Fn(f64) -> Result<SystemConfig, HarnessError>,
) -> Result<ExperimentResult, HarnessError> {
    let eta = gaussian_ccdf_inv(cfg.pfa)?;
    let mut rows = Vec::new();
    let mut degenerate = Vec::new();
    for &v in &cfg.sweep.values {
        let sys = scenario(v)?;
        let mut skipped = Vec::new();
        let dets = prepare(cfg, &sys, &base_pe(&sys), &mut skipped)?;
        let fusions: Vec<Fusion> = dets.iter().map(|d| d.fusion.clone()).collect();
        let samples = simulate(&sys, cfg.mode, &fusions, cfg.trials, cfg.seed, opts)?;
        for (d, s) in dets.iter().zip(&samples) {
            rows.push(row(v, &d.label, theory(d.fi0, sys.sparsity, cfg.pfa)?, s.rates(eta), cfg.trials));
        }
        warning_rows(v, &skipped, cfg.trials, &mut rows);
        for l in skipped {
            if !degenerate.contains(&l) {
                degenerate.push(l);
            }
        }
    }
    order_rows(cfg, &mut rows);
    Ok(ExperimentResult { rows, degenerate })
}

/// Detection probability versus the number of sensors.
pub fn run_pd_vs_sensors(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    cfg.expect_axis(&[SweepAxis::Sensors], "pd-vs-m")?;
    run_points(cfg, opts, |v| cfg.system.scenario(v as usize, cfg.system.sigma0_sq))
}

/// Detection probability versus SNR (or directly versus `sigma0_sq`).
pub fn run_pd_vs_snr(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    cfg.expect_axis(&[SweepAxis::Snr, SweepAxis::Sigma0Sq], "pd-vs-snr")?;
    let s = &cfg.system;
    run_points(cfg, opts, |v| {
        let signal_var = match cfg.sweep.axis {
            SweepAxis::Snr => {
                if !(s.p > 0.0) {
                    return Err(invalid("an SNR sweep needs p > 0"));
                }
                signal_var_for_snr(v, s.p, s.sigma_w_sq)
            }
            _ => v,
        };
        s.scenario(s.num_sensors, signal_var)
    })
}

/// Fusion center assumes each swept crossover probability while the channel
/// uses `system.pe`. Theory columns hold the mismatched prediction.
pub fn run_mismatch(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    cfg.expect_axis(&[SweepAxis::AssumedPe], "mismatch")?;
    let sys = cfg.system.base()?;
    let nominal = Probability::new(cfg.pfa)?;
    let eta_nominal = gaussian_ccdf_inv(cfg.pfa)?;
    let mut rows = Vec::new();
    let mut degenerate = Vec::new();
    for &assumed in &cfg.sweep.values {
        let assumed_pe = vec![assumed; sys.num_sensors];
        let mut skipped = Vec::new();
        let dets = prepare(cfg, &sys, &assumed_pe, &mut skipped)?;
        let fusions: Vec<Fusion> = dets.iter().map(|d| d.fusion.clone()).collect();
        let samples = simulate(&sys, cfg.mode, &fusions, cfg.trials, cfg.seed, opts)?;
        for (d, s) in dets.iter().zip(&samples) {
            let predicted = match &d.fusion {
                Fusion::Clairvoyant => theory(d.fi0, sys.sparsity, cfg.pfa)?,
                Fusion::Quantized { spec, .. } => {
                    let o = mismatched_asymptotics(
                        &sys,
                        std::slice::from_ref(spec),
                        &sys.pe,
                        &assumed_pe,
                        sys.sparsity,
                        nominal,
                        MismatchMoments::Exact,
                    )?;
                    let (pfa, pd) = o.rates(cfg.calibration, nominal);
                    (pfa.value(), pd.value())
                }
            };
            let eta = match cfg.calibration {
                ThresholdCalibration::Assumed => eta_nominal,
                ThresholdCalibration::TrueNull => s.null_quantile(cfg.pfa),
            };
            rows.push(row(assumed, &d.label, predicted, s.rates(eta), cfg.trials));
        }
        warning_rows(assumed, &skipped, cfg.trials, &mut rows);
        for l in skipped {
            if !degenerate.contains(&l) {
                degenerate.push(l);
            }
        }
    }
    order_rows(cfg, &mut rows);
    Ok(ExperimentResult { rows, degenerate })
}

pub const FISHER_CSV_HEADER: [&str; 4] = ["p", "detector", "fisher_information", "relative_to_clairvoyant"];

/// Fisher information of one detector at one sparsity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherRow {
    pub p: f64,
    pub detector: String,
    pub fisher_information: f64,
    pub relative_to_clairvoyant: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FisherTable {
    pub rows: Vec<FisherRow>,
    /// Detectors with zero information at `p = 0`.
    pub degenerate: Vec<String>,
}

impl FisherTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(FISHER_CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.p.to_string(),
                r.detector.clone(),
                r.fisher_information.to_string(),
                r.relative_to_clairvoyant.to_string(),
            ])?;
        }
        w.flush().map_err(|source| HarnessError::Io { path: PathBuf::from("<csv>"), source })?;
        Ok(())
    }
}

/// Whole-network Fisher information of every configured detector at each
/// `p` in `ps`, for the base scenario. Quantizers see the true channel.
pub fn fisher_table(cfg: &ExperimentConfig, ps: &[f64]) -> Result<FisherTable, HarnessError> {
    cfg.validate()?;
    if ps.is_empty() || ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("sparsity levels must be a nonempty list in [0, 1]"));
    }
    let sys = cfg.system.base()?;
    let clair = ClairvoyantModel::new(&sys)?;
    let mut table = FisherTable::default();
    let mut models = Vec::new();
    for label in cfg.detector_labels() {
        if label == CLAIRVOYANT {
            models.push((label, None));
            continue;
        }
        let entry = cfg.quantizer(&label).ok_or_else(|| invalid(format!("unknown detector '{label}'")))?;
        let spec = match entry.resolve(sys.sigma_w(), sys.pe[0]) {
            Ok(spec) => spec,
            Err(e) if e.is_degenerate() => {
                table.degenerate.push(label);
                continue;
            }
            Err(e) => return Err(e),
        };
        let model = QuantizedModel::new(&sys, &[spec], &sys.pe)?;
        if !(model.fisher_information(0.0)? > 0.0) {
            table.degenerate.push(label.clone());
        }
        models.push((label, Some(model)));
    }
    for &p in ps {
        let reference = clair.fisher_information(p)?;
        for (label, model) in &models {
            let fi = match model {
                Some(m) => m.fisher_information(p)?,
                None => reference,
            };
            table.rows.push(FisherRow {
                p,
                detector: label.clone(),
                fisher_information: fi,
                relative_to_clairvoyant: if reference > 0.0 { fi / reference } else { f64::NAN },
            });
        }
    }
    Ok(table)
}

/// Experiment kinds selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Roc,
    PdVsSensors,
    PdVsSnr,
    Mismatch,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Roc => "roc",
            Experiment::PdVsSensors => "pd-vs-m",
            Experiment::PdVsSnr => "pd-vs-snr",
            Experiment::Mismatch => "mismatch",
        }
    }

    pub fn run(self, cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult, HarnessError> {
        match self {
            Experiment::Roc => run_roc(cfg, opts),
            Experiment::PdVsSensors => run_pd_vs_sensors(cfg, opts),
            Experiment::PdVsSnr => run_pd_vs_snr(cfg, opts),
            Experiment::Mismatch => run_mismatch(cfg, opts),
        }
    }
}

//! LMPT fusion rules: quantized raw observations (RQ), quantized likelihood
//! ratios (LQ) and the unquantized clairvoyant benchmark.
//!
//! All statistics are fully normalized: the score at `p = 0` divided by the
//! square root of the Fisher information. Under `H0` they are
//! asymptotically `N(0, 1)` and under `H1` asymptotically `N(lambda, 1)` with
//! `lambda = p * sqrt(FI(0))`.
//!
//! Notation used below, per sensor `m`:
//!
//! * `Q_j(p)`: probability of quantization interval `j` (half of it for LQ,
//!   because LQ folds the two tails of `y` together);
//! * `F_j(p)`: `tau_{j-1} psi(tau_{j-1}/sigma) - tau_j psi(tau_j/sigma)`,
//!   proportional to `dQ_j/dp`;
//! * `G`: the channel transition matrix; `xi_i = sum_j G_ij Q_j`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelSpec, TransitionMatrix};
use crate::numerics::{gaussian_ccdf, gaussian_ccdf_inv, x_pdf, NumericsError, Probability};
use crate::quantizer::{CodeIndex, QuantizerKind, QuantizerSpec};
use crate::signal::{SignalError, SystemConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("quantizer is degenerate: Fisher information at p = 0 is zero")]
    Degenerate,
    #[error("expected {expected} per-sensor entries, got {got}")]
    SensorCount { expected: usize, got: usize },
    #[error("sensors mix quantizer kinds")]
    MixedKinds,
    #[error("code index {index} out of range for sensor {sensor}")]
    CodeIndex { sensor: usize, index: u32 },
    #[error("sparsity {0} gives a non-positive measurement variance")]
    Sparsity(f64),
    #[error("Fisher information must be positive, got {0}")]
    NonPositiveInformation(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// The three fusion rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    RqLmpt,
    LqLmpt,
    Clairvoyant,
}

impl DetectorKind {
    pub fn quantizer_kind(self) -> Option<QuantizerKind> {
        match self {
            DetectorKind::RqLmpt => Some(QuantizerKind::Rq),
            DetectorKind::LqLmpt => Some(QuantizerKind::Lq),
            DetectorKind::Clairvoyant => None,
        }
    }

    pub fn for_quantizer(kind: QuantizerKind) -> Self {
        match kind {
            QuantizerKind::Rq => DetectorKind::RqLmpt,
            QuantizerKind::Lq => DetectorKind::LqLmpt,
        }
    }
}

/// Probability mass of `[a, b)` under `N(0, 1)`, computed on whichever side
/// of zero avoids cancellation.
fn normal_mass(a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        gaussian_ccdf(-b) - gaussian_ccdf(-a)
    } else {
        gaussian_ccdf(a) - gaussian_ccdf(b)
    }
}

/// `tau * psi(tau / sigma)`, zero at infinite or zero `tau`.
fn boundary_term(tau: f64, sigma: f64) -> f64 {
    if tau.is_infinite() || tau == 0.0 {
        0.0
    } else {
        sigma * x_pdf(tau / sigma)
    }
}

/// `Q_j` for one-based interval `j`: `Phi(tau_{j-1}/sigma) - Phi(tau_j/sigma)`.
/// RQ masses sum to 1, LQ masses to 1/2.
pub fn interval_prob(spec: &QuantizerSpec, j: CodeIndex, sigma: f64) -> f64 {
    let k = j.offset();
    normal_mass(spec.endpoint(k) / sigma, spec.endpoint(k + 1) / sigma)
}

/// `F_j = tau_{j-1} psi(tau_{j-1}/sigma) - tau_j psi(tau_j/sigma)`.
pub fn f_term(spec: &QuantizerSpec, j: CodeIndex, sigma: f64) -> f64 {
    let k = j.offset();
    boundary_term(spec.endpoint(k), sigma) - boundary_term(spec.endpoint(k + 1), sigma)
}

/// `(Q_j, F_j)` for every interval.
pub(crate) fn interval_terms(spec: &QuantizerSpec, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let edges: Vec<f64> = (0..=spec.levels()).map(|k| spec.endpoint(k)).collect();
    edge_terms(&edges, sigma)
}

/// `(Q_j, F_j)` from the full nondecreasing endpoint list
/// `tau_0 <= ... <= tau_{2^q}`. Empty intervals give zeros.
pub(crate) fn edge_terms(edges: &[f64], sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let q = edges.windows(2).map(|e| normal_mass(e[0] / sigma, e[1] / sigma)).collect();
    let b: Vec<f64> = edges.iter().map(|&t| boundary_term(t, sigma)).collect();
    let f = b.windows(2).map(|w| w[0] - w[1]).collect();
    (q, f)
}

/// Ratio with the convention `0 / 0 = 0` (a received word that cannot
/// occur contributes nothing).
pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Factor between the `Q` used in the formulas and the actual interval
/// probability: 1 for RQ, 2 for LQ.
fn mass_factor(kind: QuantizerKind) -> f64 {
    match kind {
        QuantizerKind::Rq => 1.0,
        QuantizerKind::Lq => 2.0,
    }
}

/// Prefactor of `sigma_0^4 ||h||^4 / sigma^6` in the Fisher information.
fn fi_prefactor(kind: QuantizerKind) -> f64 {
    mass_factor(kind) / 4.0
}

/// Per-sensor precomputed fusion data at `p = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorTable {
    /// `w_i = sum_j G_ij F_j(0) / sum_j G_ij Q_j(0)`.
    pub weights: Vec<f64>,
    /// `xi_i = sum_j G_ij Q_j(0)`. For LQ the received-word probability is
    /// `2 xi_i`.
    pub codeword_mass: Vec<f64>,
    /// `||h||^2 / sigma_w^3`.
    pub scale: f64,
}

/// Immutable fusion tables for one quantized detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TablesRecord")]
pub struct DetectorTables {
    pub kind: QuantizerKind,
    pub sensors: Vec<SensorTable>,
    /// Fisher information at `p = 0`.
    pub fi0: f64,
    /// `fi0 / sigma_0^4`; the statistic only depends on this.
    pub fi0_shape: f64,
    /// Per-sensor additive contribution to the normalized statistic,
    /// `scale * w_i / (2 sqrt(fi0_shape))`.
    #[serde(skip)]
    contributions: Vec<Vec<f64>>,
}

impl DetectorTables {
    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// `P(d = z_i | H0)` for sensor `m`.
    pub fn h0_pmf(&self, m: usize) -> Vec<f64> {
        let f = mass_factor(self.kind);
        self.sensors[m].codeword_mass.iter().map(|x| f * x).collect()
    }

    /// Additive contribution of sensor `m` reporting interval `i` to the
    /// normalized statistic.
    pub fn contribution(&self, m: usize, i: CodeIndex) -> f64 {
        self.contributions[m][i.offset()]
    }

    pub fn contributions(&self, m: usize) -> &[f64] {
        &self.contributions[m]
    }

    fn with_contributions(mut self) -> Self {
        let norm = 1.0 / (2.0 * self.fi0_shape.sqrt());
        self.contributions = self
            .sensors
            .iter()
            .map(|s| s.weights.iter().map(|w| s.scale * w * norm).collect())
            .collect();
        self
    }

}

/// On-disk form of [`DetectorTables`], without the derived contributions.
#[derive(Deserialize)]
struct TablesRecord {
    kind: QuantizerKind,
    sensors: Vec<SensorTable>,
    fi0: f64,
    fi0_shape: f64,
}

impl From<TablesRecord> for DetectorTables {
    fn from(r: TablesRecord) -> Self {
        DetectorTables {
            kind: r.kind,
            sensors: r.sensors,
            fi0: r.fi0,
            fi0_shape: r.fi0_shape,
            contributions: Vec::new(),
        }
        .with_contributions()
    }
}

/// Broadcasts a length-1 list or checks a length-`m` list.
fn per_sensor<T>(items: &[T], m: usize) -> Result<Vec<&T>, DetectorError> {
    match items.len() {
        1 => Ok(vec![&items[0]; m]),
        n if n == m => Ok(items.iter().collect()),
        n => Err(DetectorError::SensorCount { expected: m, got: n }),
    }
}

/// Memoizes transition matrices by `(q, pe)`.
#[derive(Default)]
struct MatrixCache(HashMap<(u8, u64), Arc<TransitionMatrix>>);

impl MatrixCache {
    fn get(&mut self, bits: u8, pe: f64) -> Result<Arc<TransitionMatrix>, ChannelError> {
        if let Some(m) = self.0.get(&(bits, pe.to_bits())) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(TransitionMatrix::new(ChannelSpec::new(pe, u32::from(bits))?));
        self.0.insert((bits, pe.to_bits()), Arc::clone(&m));
        Ok(m)
    }
}

/// Quantized observation model: per-sensor quantizers and channels,
/// exposing the likelihood, score and Fisher information at any `p`.
#[derive(Debug, Clone)]
pub struct QuantizedModel {
    cfg: SystemConfig,
    kind: QuantizerKind,
    specs: Vec<QuantizerSpec>,
    channels: Vec<Arc<TransitionMatrix>>,
}

/// Received-word probabilities and their `p`-derivatives for one sensor.
struct SensorLaw {
    pmf: Vec<f64>,
    dpmf: Vec<f64>,
}

impl QuantizedModel {
    /// `specs` and `pe` hold one entry per sensor, or a single entry that
    /// applies to all of them.
    pub fn new(cfg: &SystemConfig, specs: &[QuantizerSpec], pe: &[f64]) -> Result<Self, DetectorError> {
        cfg.validate()?;
        let m = cfg.num_sensors;
        let specs: Vec<QuantizerSpec> = per_sensor(specs, m)?.into_iter().cloned().collect();
        let pe = per_sensor(pe, m)?;
        let kind = specs[0].kind();
        if specs.iter().any(|s| s.kind() != kind) {
            return Err(DetectorError::MixedKinds);
        }
        let mut cache = MatrixCache::default();
        let channels = specs
            .iter()
            .zip(pe)
            .map(|(s, &pe)| cache.get(s.bits(), pe))
            .collect::<Result<_, _>>()?;
        Ok(Self { cfg: cfg.clone(), kind, specs, channels })
    }

    pub fn kind(&self) -> QuantizerKind {
        self.kind
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn spec(&self, m: usize) -> &QuantizerSpec {
        &self.specs[m]
    }

    pub fn channel(&self, m: usize) -> &TransitionMatrix {
        &self.channels[m]
    }

    fn sigma(&self, m: usize, p: f64) -> Result<f64, DetectorError> {
        let var = p * self.cfg.signal_var * self.cfg.h_norm_sq[m] + self.cfg.noise_var;
        if var > 0.0 {
            Ok(var.sqrt())
        } else {
            Err(DetectorError::Sparsity(p))
        }
    }

    fn law(&self, m: usize, p: f64) -> Result<SensorLaw, DetectorError> {
        let sigma = self.sigma(m, p)?;
        let (q, f) = interval_terms(&self.specs[m], sigma);
        let k = mass_factor(self.kind);
        // dQ_j/dp = sigma_0^2 ||h||^2 / (2 sigma^3) * F_j
        let d = self.cfg.signal_var * self.cfg.h_norm_sq[m] / (2.0 * sigma.powi(3));
        let g = &self.channels[m];
        let pmf = g.apply(&q).into_iter().map(|x| k * x).collect();
        let dpmf = g.apply(&f).into_iter().map(|x| k * d * x).collect();
        Ok(SensorLaw { pmf, dpmf })
    }

    /// `P(d_m = z_i; p)` for every `i`, assuming the model's channel.
    pub fn received_pmf(&self, m: usize, p: f64) -> Result<Vec<f64>, DetectorError> {
        Ok(self.law(m, p)?.pmf)
    }

    fn check_received(&self, received: &[CodeIndex]) -> Result<(), DetectorError> {
        if received.len() != self.cfg.num_sensors {
            return Err(DetectorError::SensorCount { expected: self.cfg.num_sensors, got: received.len() });
        }
        for (m, i) in received.iter().enumerate() {
            if i.offset() >= self.specs[m].levels() {
                return Err(DetectorError::CodeIndex { sensor: m, index: i.get() });
            }
        }
        Ok(())
    }

    /// Log-likelihood of the received words at sparsity `p`. Defined for
    /// any `p` that keeps every measurement variance positive, so small
    /// negative `p` is allowed for central differences.
    pub fn log_likelihood(&self, received: &[CodeIndex], p: f64) -> Result<f64, DetectorError> {
        self.check_received(received)?;
        let mut total = 0.0;
        for (m, i) in received.iter().enumerate() {
            let sigma = self.sigma(m, p)?;
            let (q, _) = interval_terms(&self.specs[m], sigma);
            let row = self.channels[m].row(i.offset());
            let xi: f64 = row.iter().zip(&q).map(|(g, q)| g * q).sum();
            total += (mass_factor(self.kind) * xi).ln();
        }
        Ok(total)
    }

    /// Closed-form derivative of [`Self::log_likelihood`] in `p`.
    pub fn score(&self, received: &[CodeIndex], p: f64) -> Result<f64, DetectorError> {
        self.check_received(received)?;
        let mut total = 0.0;
        for (m, i) in received.iter().enumerate() {
            let law = self.law(m, p)?;
            total += ratio(law.dpmf[i.offset()], law.pmf[i.offset()]);
        }
        Ok(total)
    }

    /// `sum_m sum_i (dP_i/dp)^2 / P_i`, the closed forms for RQ and LQ.
    pub fn fisher_information(&self, p: f64) -> Result<f64, DetectorError> {
        let mut total = 0.0;
        for m in 0..self.cfg.num_sensors {
            let law = self.law(m, p)?;
            total += law.dpmf.iter().zip(&law.pmf).map(|(d, x)| ratio(d * d, *x)).sum::<f64>();
        }
        Ok(total)
    }

    /// Precomputes the fusion tables at `p = 0`.
    pub fn tables(&self) -> Result<DetectorTables, DetectorError> {
        let sigma_w = self.cfg.sigma_w();
        let mut sensors = Vec::with_capacity(self.cfg.num_sensors);
        let mut shape = 0.0;
        for m in 0..self.cfg.num_sensors {
            let (q, f) = interval_terms(&self.specs[m], sigma_w);
            let g = &self.channels[m];
            let num = g.apply(&f);
            let codeword_mass = g.apply(&q);
            let weights: Vec<f64> = num.iter().zip(&codeword_mass).map(|(n, x)| ratio(*n, *x)).collect();
            let scale = self.cfg.h_norm_sq[m] / sigma_w.powi(3);
            let bracket: f64 = num.iter().zip(&codeword_mass).map(|(n, x)| ratio(n * n, *x)).sum();
            shape += fi_prefactor(self.kind) * scale * scale * bracket;
            sensors.push(SensorTable { weights, codeword_mass, scale });
        }
        if !(shape > 0.0) {
            return Err(DetectorError::Degenerate);
        }
        let fi0 = self.cfg.signal_var.powi(2) * shape;
        Ok(DetectorTables { kind: self.kind, sensors, fi0, fi0_shape: shape, contributions: Vec::new() }
            .with_contributions())
    }
}

/// Builds fusion tables from a scenario, quantizer(s) and the crossover
/// probabilities the fusion center assumes.
pub fn build_tables(
    cfg: &SystemConfig,
    specs: &[QuantizerSpec],
    assumed_pe: &[f64],
) -> Result<DetectorTables, DetectorError> {
    QuantizedModel::new(cfg, specs, assumed_pe)?.tables()
}

/// Normalized quantized LMPT statistic for one set of received words.
pub fn lmpt_statistic(tables: &DetectorTables, received: &[CodeIndex]) -> Result<f64, DetectorError> {
    if !(tables.fi0_shape > 0.0) {
        return Err(DetectorError::Degenerate);
    }
    if received.len() != tables.num_sensors() {
        return Err(DetectorError::SensorCount { expected: tables.num_sensors(), got: received.len() });
    }
    let mut total = 0.0;
    for (m, i) in received.iter().enumerate() {
        let row = tables.contributions(m);
        let x = row.get(i.offset()).ok_or(DetectorError::CodeIndex { sensor: m, index: i.get() })?;
        total += x;
    }
    Ok(total)
}

/// Unquantized observation model over a perfect channel.
#[derive(Debug, Clone)]
pub struct ClairvoyantModel {
    cfg: SystemConfig,
}

impl ClairvoyantModel {
    pub fn new(cfg: &SystemConfig) -> Result<Self, DetectorError> {
        cfg.validate()?;
        Ok(Self { cfg: cfg.clone() })
    }

    fn var(&self, m: usize, p: f64) -> Result<f64, DetectorError> {
        let v = p * self.cfg.signal_var * self.cfg.h_norm_sq[m] + self.cfg.noise_var;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(DetectorError::Sparsity(p))
        }
    }

    fn check(&self, y: &[f64]) -> Result<(), DetectorError> {
        if y.len() != self.cfg.num_sensors {
            return Err(DetectorError::SensorCount { expected: self.cfg.num_sensors, got: y.len() });
        }
        Ok(())
    }

    pub fn log_likelihood(&self, y: &[f64], p: f64) -> Result<f64, DetectorError> {
        self.check(y)?;
        let mut total = 0.0;
        for (m, &ym) in y.iter().enumerate() {
            let v = self.var(m, p)?;
            total += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - ym * ym / (2.0 * v);
        }
        Ok(total)
    }

    pub fn score(&self, y: &[f64], p: f64) -> Result<f64, DetectorError> {
        self.check(y)?;
        let mut total = 0.0;
        for (m, &ym) in y.iter().enumerate() {
            let v = self.var(m, p)?;
            total += self.cfg.h_norm_sq[m] * (ym * ym - v) / (v * v);
        }
        Ok(0.5 * self.cfg.signal_var * total)
    }

    pub fn fisher_information(&self, p: f64) -> Result<f64, DetectorError> {
        let mut total = 0.0;
        for m in 0..self.cfg.num_sensors {
            let v = self.var(m, p)?;
            total += self.cfg.h_norm_sq[m].powi(2) / (v * v);
        }
        Ok(0.5 * self.cfg.signal_var.powi(2) * total)
    }

    pub fn statistic(&self, y: &[f64]) -> Result<f64, DetectorError> {
        self.check(y)?;
        Ok(clairvoyant_statistic(&self.cfg, y))
    }
}

/// `sum_m ||h_m||^2 (y_m^2 - sigma_w^2) / (sigma_w^2 sqrt(2 sum_m ||h_m||^4))`.
///
/// Panics if `y` is shorter than the sensor count.
pub fn clairvoyant_statistic(cfg: &SystemConfig, y: &[f64]) -> f64 {
    let nv = cfg.noise_var;
    let energy: f64 = cfg.h_norm_sq.iter().map(|h| h * h).sum();
    let num: f64 = cfg.h_norm_sq.iter().zip(y).map(|(h, ym)| h * (ym * ym - nv)).sum();
    num / (nv * (2.0 * energy).sqrt())
}

/// Fisher information of any of the three detectors at sparsity `p`.
/// Degenerate quantizers give 0.
pub fn fisher_information(
    kind: DetectorKind,
    cfg: &SystemConfig,
    spec: Option<&QuantizerSpec>,
    pe: &[f64],
    p: f64,
) -> Result<f64, DetectorError> {
    match (kind, spec) {
        (DetectorKind::Clairvoyant, _) => ClairvoyantModel::new(cfg)?.fisher_information(p),
        (_, Some(spec)) => QuantizedModel::new(cfg, std::slice::from_ref(spec), pe)?.fisher_information(p),
        (_, None) => Err(DetectorError::Degenerate),
    }
}

/// Asymptotic operating point of a normalized LMPT detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub eta: f64,
    pub pfa: Probability,
    pub pd: Probability,
    pub lambda: f64,
}

/// Threshold from the nominal false-alarm rate, then `Pd = Phi(eta - lambda)`
/// with `lambda = p sqrt(fi0)`.
pub fn operating_point(fi0: f64, p: f64, pfa: Probability) -> Result<OperatingPoint, DetectorError> {
    if !(fi0 > 0.0) {
        return Err(DetectorError::NonPositiveInformation(fi0));
    }
    let eta = gaussian_ccdf_inv(pfa.value())?;
    let lambda = p * fi0.sqrt();
    Ok(OperatingPoint {
        eta,
        pfa: Probability::saturating(gaussian_ccdf(eta)),
        pd: Probability::saturating(gaussian_ccdf(eta - lambda)),
        lambda,
    })
}

/// How the `H1` moments of a mismatched statistic are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MismatchMoments {
    /// Exact mean and variance under the Gaussian-approximate `H1` at `p`.
    #[default]
    Exact,
    /// First-order expansion around `p = 0` with the `H0` variance, the
    /// same local approximation behind [`operating_point`].
    Local,
}

/// Result of [`mismatched_asymptotics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchOutcome {
    /// Threshold of the assumed model, `Phi^-1(nominal_pfa)`.
    pub eta: f64,
    /// Actual false-alarm rate at `eta`.
    pub pfa: Probability,
    /// Actual detection rate at `eta`.
    pub pd: Probability,
    /// Threshold that holds the actual false-alarm rate at its nominal value.
    pub eta_true_null: f64,
    /// Detection rate at `eta_true_null`.
    pub pd_true_null: Probability,
    pub h0_mean: f64,
    pub h0_var: f64,
    pub h1_mean: f64,
    pub h1_var: f64,
}

impl MismatchOutcome {
    /// `(pfa, pd)` under the requested threshold calibration.
    pub fn rates(&self, calibration: ThresholdCalibration, nominal_pfa: Probability) -> (Probability, Probability) {
        match calibration {
            ThresholdCalibration::Assumed => (self.pfa, self.pd),
            ThresholdCalibration::TrueNull => (nominal_pfa, self.pd_true_null),
        }
    }
}

/// Where the detection threshold of a mismatched detector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdCalibration {
    /// `Phi^-1(pfa)` from the assumed model, the only information the
    /// fusion center has. The actual false-alarm rate drifts.
    #[default]
    Assumed,
    /// Set on the true `H0` distribution so the actual false-alarm rate is
    /// the nominal one and detection rates are comparable.
    TrueNull,
}

/// Predicts the actual false-alarm and detection rates when the fusion
/// center builds its tables from `pe_assumed` while the channel really
/// flips bits with `pe_true`.
///
/// Mean and variance of the statistic are computed exactly by enumerating
/// each sensor's received alphabet; the sum over sensors is then treated
/// as Gaussian.
pub fn mismatched_asymptotics(
    cfg: &SystemConfig,
    specs: &[QuantizerSpec],
    pe_true: &[f64],
    pe_assumed: &[f64],
    p: f64,
    nominal_pfa: Probability,
    moments: MismatchMoments,
) -> Result<MismatchOutcome, DetectorError> {
    let tables = build_tables(cfg, specs, pe_assumed)?;
    let truth = QuantizedModel::new(cfg, specs, pe_true)?;
    let eta = gaussian_ccdf_inv(nominal_pfa.value())?;

    let (mut h0_mean, mut h0_var, mut h1_mean, mut h1_var, mut slope) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for m in 0..cfg.num_sensors {
        let a = tables.contributions(m);
        let moments_of = |pmf: &[f64]| {
            let mean: f64 = pmf.iter().zip(a).map(|(p, a)| p * a).sum();
            let second: f64 = pmf.iter().zip(a).map(|(p, a)| p * a * a).sum();
            (mean, second - mean * mean)
        };
        let law0 = truth.law(m, 0.0)?;
        let (mu0, v0) = moments_of(&law0.pmf);
        h0_mean += mu0;
        h0_var += v0;
        slope += law0.dpmf.iter().zip(a).map(|(d, a)| d * a).sum::<f64>();
        if moments == MismatchMoments::Exact {
            let (mu1, v1) = moments_of(&truth.law(m, p)?.pmf);
            h1_mean += mu1;
            h1_var += v1;
        }
    }
    if moments == MismatchMoments::Local {
        h1_mean = h0_mean + p * slope;
        h1_var = h0_var;
    }
    let tail = |t: f64, mean: f64, var: f64| Probability::saturating(gaussian_ccdf((t - mean) / var.sqrt()));
    let eta_true_null = h0_mean + h0_var.sqrt() * eta;
    Ok(MismatchOutcome {
        eta,
        pfa: tail(eta, h0_mean, h0_var),
        pd: tail(eta, h1_mean, h1_var),
        eta_true_null,
        pd_true_null: tail(eta_true_null, h1_mean, h1_var),
        h0_mean,
        h0_var,
        h1_mean,
        h1_var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian_pdf;

    fn spec(kind: QuantizerKind, t: &[f64]) -> QuantizerSpec {
        let q = (t.len() + 1).trailing_zeros();
        QuantizerSpec::new(kind, q, t.to_vec()).unwrap()
    }

    fn unit_cfg(m: usize, signal_var: f64, pe: f64) -> SystemConfig {
        SystemConfig::homogeneous(m, 1000, 0.03, signal_var, 1.0, 1.0, pe).unwrap()
    }

    fn idx(i: u32, q: u8) -> CodeIndex {
        CodeIndex::new(i, q).unwrap()
    }

    #[test]
    fn interval_prob_examples() {
        let sign = spec(QuantizerKind::Rq, &[0.0]);
        assert_eq!(interval_prob(&sign, idx(1, 1), 1.0), 0.5);
        let l1 = spec(QuantizerKind::Lq, &[1.0]);
        assert!((interval_prob(&l1, idx(2, 1), 1.0) - 0.158_655).abs() < 1e-6);
        let r3 = spec(QuantizerKind::Rq, &[-2.0, -1.1, -0.3, 0.0, 0.4, 1.3, 2.2]);
        let l3 = spec(QuantizerKind::Lq, &[0.2, 0.5, 0.9, 1.3, 1.8, 2.4, 3.1]);
        for sigma in [0.7, 1.0, 1.9] {
            let total: f64 = (1..=8).map(|j| interval_prob(&r3, idx(j, 3), sigma)).sum();
            assert!((total - 1.0).abs() < 1e-14);
            let total: f64 = (1..=8).map(|j| interval_prob(&l3, idx(j, 3), sigma)).sum();
            assert!((total - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn f_term_examples() {
        let sign = spec(QuantizerKind::Rq, &[0.0]);
        assert_eq!(f_term(&sign, idx(1, 1), 1.0), 0.0);
        assert_eq!(f_term(&sign, idx(2, 1), 1.0), 0.0);
        let l1 = spec(QuantizerKind::Lq, &[1.0]);
        assert!((f_term(&l1, idx(1, 1), 1.0) + 0.241_971).abs() < 1e-6);
        assert!((f_term(&l1, idx(2, 1), 1.0) - 0.241_971).abs() < 1e-6);
        let r3 = spec(QuantizerKind::Rq, &[-2.0, -1.1, -0.3, 0.0, 0.4, 1.3, 2.2]);
        let total: f64 = (1..=8).map(|j| f_term(&r3, idx(j, 3), 1.3)).sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn f_term_is_scaled_derivative_of_interval_prob() {
        // dQ_j/dsigma = F_j / sigma^2 (independent finite-difference route).
        let l2 = spec(QuantizerKind::Lq, &[0.4, 1.1, 2.0]);
        let sigma = 1.2;
        let h = 1e-6;
        for j in 1..=4 {
            let fd = (interval_prob(&l2, idx(j, 2), sigma + h) - interval_prob(&l2, idx(j, 2), sigma - h)) / (2.0 * h);
            let analytic = f_term(&l2, idx(j, 2), sigma) / (sigma * sigma);
            assert!((fd - analytic).abs() < 1e-8, "j={j}");
        }
    }

    #[test]
    fn sign_quantizer_is_degenerate() {
        let cfg = unit_cfg(4, 4.0, 0.1);
        let sign = spec(QuantizerKind::Rq, &[0.0]);
        assert_eq!(build_tables(&cfg, std::slice::from_ref(&sign), &[0.1]), Err(DetectorError::Degenerate));
        assert_eq!(fisher_information(DetectorKind::RqLmpt, &cfg, Some(&sign), &[0.1], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn one_bit_lq_information() {
        // (1/2)(0.058550/0.341345 + 0.058550/0.158655) with sigma_0^2 = 1.
        let cfg = SystemConfig::homogeneous(1, 10, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let t = build_tables(&cfg, &[spec(QuantizerKind::Lq, &[1.0])], &[0.0]).unwrap();
        let psi1 = gaussian_pdf(1.0);
        let q2 = gaussian_ccdf(1.0);
        let oracle = 0.5 * (psi1 * psi1 / (0.5 - q2) + psi1 * psi1 / q2);
        assert!((t.fi0 - oracle).abs() < 1e-14);
        assert!((t.fi0 - 0.27028).abs() < 1e-4);
    }

    #[test]
    fn weights_have_zero_h0_mean() {
        let cfg = unit_cfg(3, 4.0, 0.0);
        for (s, pe) in [
            (spec(QuantizerKind::Rq, &[-1.2, 0.3, 1.5]), 0.05),
            (spec(QuantizerKind::Lq, &[0.2, 0.5, 0.9, 1.3, 1.8, 2.4, 3.1]), 0.2),
            (spec(QuantizerKind::Lq, &[1.0]), 0.0),
        ] {
            let t = build_tables(&cfg, &[s], &[pe]).unwrap();
            for m in 0..3 {
                let pmf = t.h0_pmf(m);
                assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let mean: f64 = pmf.iter().zip(&t.sensors[m].weights).map(|(p, w)| p * w).sum();
                assert!(mean.abs() < 1e-10);
                assert!(t.sensors[m].codeword_mass.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn statistic_ignores_signal_power() {
        let s = spec(QuantizerKind::Lq, &[0.3, 0.9, 1.7]);
        let received: Vec<CodeIndex> = (0..5).map(|m| idx(1 + (m % 4), 2)).collect();
        let base = build_tables(&unit_cfg(5, 4.0, 0.0), std::slice::from_ref(&s), &[0.1]).unwrap();
        let t0 = lmpt_statistic(&base, &received).unwrap();
        for factor in [0.01, 2.0, 37.5] {
            let t = build_tables(&unit_cfg(5, 4.0 * factor, 0.0), std::slice::from_ref(&s), &[0.1]).unwrap();
            assert_eq!(lmpt_statistic(&t, &received).unwrap(), t0);
        }
    }

    #[test]
    fn statistic_is_score_over_root_information() {
        let cfg = unit_cfg(4, 8.0, 0.0);
        let s = spec(QuantizerKind::Rq, &[-1.0, 0.2, 1.4]);
        let model = QuantizedModel::new(&cfg, &[s], &[0.1]).unwrap();
        let t = model.tables().unwrap();
        let received = [idx(1, 2), idx(4, 2), idx(2, 2), idx(3, 2)];
        let score = model.score(&received, 0.0).unwrap();
        let stat = lmpt_statistic(&t, &received).unwrap();
        assert!((score - t.fi0.sqrt() * stat).abs() < 1e-12 * score.abs().max(1.0));
        assert!((model.fisher_information(0.0).unwrap() / t.fi0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn statistic_rejects_bad_input() {
        let cfg = unit_cfg(2, 4.0, 0.0);
        let t = build_tables(&cfg, &[spec(QuantizerKind::Lq, &[1.0])], &[0.0]).unwrap();
        assert!(matches!(lmpt_statistic(&t, &[idx(1, 1)]), Err(DetectorError::SensorCount { .. })));
        assert!(matches!(
            lmpt_statistic(&t, &[idx(1, 1), idx(3, 2)]),
            Err(DetectorError::CodeIndex { sensor: 1, index: 3 })
        ));
    }

    #[test]
    fn clairvoyant_examples() {
        let one = SystemConfig::homogeneous(1, 10, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!((clairvoyant_statistic(&one, &[3f64.sqrt()]) - 2f64.sqrt()).abs() < 1e-15);
        let cfg = unit_cfg(3, 4.0, 0.0);
        assert_eq!(clairvoyant_statistic(&cfg, &[1.0, -1.0, 1.0]), 0.0);
        let m = ClairvoyantModel::new(&unit_cfg(300, 8.0, 0.0)).unwrap();
        let fi = m.fisher_information(0.0).unwrap();
        assert!((fi - 9600.0).abs() < 1e-9);
        assert!((0.03 * fi.sqrt() - 2.9394).abs() < 1e-4);
    }

    #[test]
    fn clairvoyant_invariant_to_common_norm_scaling() {
        let mut cfg = unit_cfg(3, 4.0, 0.0);
        cfg.h_norm_sq = vec![0.5, 1.0, 2.0];
        let y = [0.3, -1.7, 2.2];
        let a = clairvoyant_statistic(&cfg, &y);
        cfg.h_norm_sq.iter_mut().for_each(|h| *h *= 3.7);
        assert!((clairvoyant_statistic(&cfg, &y) - a).abs() < 1e-14);
    }

    #[test]
    fn operating_point_examples() {
        let pfa = Probability::new(0.1).unwrap();
        let null = operating_point(123.0, 0.0, pfa).unwrap();
        assert!((null.pd.value() - 0.1).abs() < 1e-12);
        let op = operating_point(9600.0, 0.03, pfa).unwrap();
        assert!((op.eta - 1.2816).abs() < 1e-4);
        assert!((op.pd.value() - 0.9513).abs() < 1e-3);
        let mut last = 0.0;
        for lambda_scale in [0.0, 1.0, 10.0, 100.0, 1e4] {
            let pd = operating_point(lambda_scale + 1e-9, 0.1, pfa).unwrap().pd.value();
            assert!(pd >= last);
            last = pd;
        }
        assert!(last > 1.0 - 1e-12);
        assert!(operating_point(0.0, 0.1, pfa).is_err());
    }

    #[test]
    fn matched_mismatch_reduces_to_nominal() {
        let cfg = unit_cfg(300, 8.0, 0.0);
        let s = spec(QuantizerKind::Lq, &[0.6, 1.0, 1.35, 1.7, 2.0, 2.4, 3.0]);
        let pfa = Probability::new(0.1).unwrap();
        let exact = mismatched_asymptotics(&cfg, std::slice::from_ref(&s), &[0.2], &[0.2], 0.03, pfa, MismatchMoments::Exact)
            .unwrap();
        assert!((exact.pfa.value() - 0.1).abs() < 1e-10);
        let local = mismatched_asymptotics(&cfg, std::slice::from_ref(&s), &[0.2], &[0.2], 0.03, pfa, MismatchMoments::Local)
            .unwrap();
        let fi0 = build_tables(&cfg, &[s], &[0.2]).unwrap().fi0;
        let op = operating_point(fi0, 0.03, pfa).unwrap();
        assert!((local.pfa.value() - 0.1).abs() < 1e-10);
        assert!((local.pd.value() - op.pd.value()).abs() < 1e-10);
        assert!((local.pd_true_null.value() - op.pd.value()).abs() < 1e-10);
        assert!((exact.pd.value() - exact.pd_true_null.value()).abs() < 1e-10);
    }

    #[test]
    fn underestimated_pe_inflates_false_alarms() {
        let cfg = unit_cfg(300, 8.0, 0.2);
        let s = spec(QuantizerKind::Lq, &[0.6, 1.0, 1.35, 1.7, 2.0, 2.4, 3.0]);
        let pfa = Probability::new(0.1).unwrap();
        let run = |assumed: f64| {
            mismatched_asymptotics(&cfg, std::slice::from_ref(&s), &[0.2], &[assumed], 0.03, pfa, MismatchMoments::Exact)
                .unwrap()
        };
        let outcomes: Vec<_> = [0.0, 0.01, 0.1, 0.2].into_iter().map(run).collect();
        for pair in outcomes.windows(2) {
            // Underestimating pe inflates the false-alarm rate at the assumed threshold.
            assert!(pair[0].pfa.value() >= pair[1].pfa.value());
        }
    }

    #[test]
    fn tables_serialize_for_inspection() {
        let cfg = unit_cfg(2, 4.0, 0.0);
        let t = build_tables(&cfg, &[spec(QuantizerKind::Lq, &[1.0])], &[0.1]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"weights\"") && json.contains("\"fi0\""));
        let back: DetectorTables = serde_json::from_str::<DetectorTables>(&json).unwrap();
        assert_eq!(back, t);
    }
}

//! Threshold design: maximize the per-sensor Fisher information at `p = 0`.
//!
//! The objective is the normalized Fisher information, i.e. the Fisher
//! information of one quantized sensor divided by that of the unquantized
//! one. It lies in `[0, 1]` and its reciprocal is the asymptotic relative
//! efficiency (ARE): how many times more sensors the quantized detector needs
//! to match the clairvoyant one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelSpec, TransitionMatrix};
use crate::detector::{edge_terms, ratio};
use crate::quantizer::{QuantizerError, QuantizerKind, QuantizerSpec, MAX_BITS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("grid is empty or malformed: {0}")]
    Grid(&'static str),
    #[error("invalid PSO parameters: {0}")]
    Params(&'static str),
    #[error("sigma_w must be positive and finite, got {0}")]
    SigmaW(f64),
    #[error("1-D grid search needs q = 1, got {0}")]
    GridBits(u32),
    #[error("no range factor in the scanned interval gives ARE {0}")]
    Calibration(f64),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Particle swarm settings. `bounds` of `None` means the kind's default
/// search box, scaled by `sigma_w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoParams {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub bounds: Option<(f64, f64)>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            swarm_size: 50,
            iterations: 200,
            inertia: 0.7298,
            cognitive: 1.49445,
            social: 1.49445,
            bounds: None,
            restarts: 5,
            seed: 0,
        }
    }
}

impl PsoParams {
    pub fn validate(&self) -> Result<(), DesignError> {
        if self.swarm_size == 0 || self.iterations == 0 || self.restarts == 0 {
            return Err(DesignError::Params("swarm size, iterations and restarts must be at least 1"));
        }
        for c in [self.inertia, self.cognitive, self.social] {
            if !c.is_finite() || c < 0.0 {
                return Err(DesignError::Params("coefficients must be finite and nonnegative"));
            }
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(DesignError::Params("bounds must satisfy low < high"));
            }
        }
        Ok(())
    }

    /// Effective search box for `kind`.
    pub fn search_box(&self, kind: QuantizerKind, sigma_w: f64) -> (f64, f64) {
        self.bounds.unwrap_or(match kind {
            QuantizerKind::Rq => (-6.0 * sigma_w, 6.0 * sigma_w),
            QuantizerKind::Lq => (1e-9 * sigma_w, 6.0 * sigma_w),
        })
    }
}

/// How thresholds are chosen before computing the ARE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Optimizer {
    Pso(PsoParams),
    /// Exhaustive 1-bit search with step `step * sigma_w`.
    Grid { step: f64 },
    /// Uniform LQ grid spanning `range_factor * sigma_w`.
    Lqu { range_factor: f64 },
    Fixed { thresholds: Vec<f64> },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Pso(PsoParams::default())
    }
}

/// Designed quantizer with its efficiency figures. A degenerate quantizer
/// has `normalized_fi = 0` and an infinite ARE (written as `null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub spec: QuantizerSpec,
    pub objective: f64,
    pub normalized_fi: f64,
    #[serde(serialize_with = "ser_are", deserialize_with = "de_are")]
    pub are: f64,
}

fn ser_are<S: Serializer>(are: &f64, s: S) -> Result<S::Ok, S::Error> {
    if are.is_finite() {
        s.serialize_some(are)
    } else {
        s.serialize_none()
    }
}

fn de_are<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl DesignResult {
    fn from_spec(spec: QuantizerSpec, objective: f64) -> Self {
        let are = if objective > 0.0 { 1.0 / objective } else { f64::INFINITY };
        Self { spec, objective, normalized_fi: objective, are }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.normalized_fi > 0.0)
    }
}

fn check_sigma(sigma_w: f64) -> Result<(), DesignError> {
    if sigma_w > 0.0 && sigma_w.is_finite() {
        Ok(())
    } else {
        Err(DesignError::SigmaW(sigma_w))
    }
}

/// Objective on a raw nondecreasing threshold vector (ties allowed, as PSO
/// particles may collide).
struct Objective {
    kind: QuantizerKind,
    channel: TransitionMatrix,
    sigma_w: f64,
}

impl Objective {
    fn new(kind: QuantizerKind, q: u32, pe: f64, sigma_w: f64) -> Result<Self, DesignError> {
        check_sigma(sigma_w)?;
        let channel = TransitionMatrix::new(ChannelSpec::new(pe, q)?);
        Ok(Self { kind, channel, sigma_w })
    }

    fn eval(&self, thresholds: &[f64]) -> f64 {
        let mut edges = Vec::with_capacity(thresholds.len() + 2);
        edges.push(self.kind.lower_endpoint());
        edges.extend_from_slice(thresholds);
        edges.push(f64::INFINITY);
        let (q, f) = edge_terms(&edges, self.sigma_w);
        let fbar: Vec<f64> = f.iter().map(|x| x / self.sigma_w).collect();
        let num = self.channel.apply(&fbar);
        let den = self.channel.apply(&q);
        let sum: f64 = num.iter().zip(&den).map(|(n, d)| ratio(n * n, *d)).sum();
        match self.kind {
            QuantizerKind::Rq => 0.5 * sum,
            QuantizerKind::Lq => sum,
        }
    }
}

/// Normalized per-sensor Fisher information of thresholds at `p = 0`:
/// `(1/2) sum_i (sum_j G_ij Fbar_j)^2 / sum_j G_ij Q_j` for RQ and the same
/// without the `1/2` for LQ, with `Fbar = F / sigma_w`.
pub fn fi_objective(kind: QuantizerKind, q: u32, thresholds: &[f64], pe: f64, sigma_w: f64) -> Result<f64, DesignError> {
    QuantizerSpec::new(kind, q, thresholds.to_vec())?;
    Ok(Objective::new(kind, q, pe, sigma_w)?.eval(thresholds))
}

/// [`fi_objective`] for a validated spec.
pub fn normalized_fi(spec: &QuantizerSpec, pe: f64, sigma_w: f64) -> Result<f64, DesignError> {
    Ok(Objective::new(spec.kind(), u32::from(spec.bits()), pe, sigma_w)?.eval(spec.thresholds()))
}

/// Inclusive grid `start, start + step, ... <= stop`, in units of `sigma_w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridRange {
    pub fn points(&self) -> Result<Vec<f64>, DesignError> {
        if !(self.step > 0.0 && self.start.is_finite() && self.stop.is_finite()) {
            return Err(DesignError::Grid("step must be positive and ends finite"));
        }
        if self.stop < self.start {
            return Err(DesignError::Grid("stop is below start"));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.start + k as f64 * self.step).collect())
    }

    /// Default 1-bit grid for `kind` with the given step.
    pub fn for_kind(kind: QuantizerKind, step: f64) -> Self {
        match kind {
            QuantizerKind::Rq => GridRange { start: -6.0, stop: 6.0, step },
            QuantizerKind::Lq => GridRange { start: step, stop: 6.0, step },
        }
    }
}

/// `(tau / sigma_w, normalized FI)` along a 1-bit threshold grid.
pub fn threshold_sweep(
    kind: QuantizerKind,
    pe: f64,
    sigma_w: f64,
    grid: GridRange,
) -> Result<Vec<(f64, f64)>, DesignError> {
    let obj = Objective::new(kind, 1, pe, sigma_w)?;
    let pts = grid.points()?;
    let usable: Vec<f64> = pts.into_iter().filter(|&x| kind == QuantizerKind::Rq || x > 0.0).collect();
    if usable.is_empty() {
        return Err(DesignError::Grid("no admissible threshold on the grid"));
    }
    Ok(usable.into_iter().map(|x| (x, obj.eval(&[x * sigma_w]))).collect())
}

/// Exhaustive 1-bit design. Ties keep the smallest threshold.
pub fn grid_search_1d(kind: QuantizerKind, pe: f64, sigma_w: f64, grid: GridRange) -> Result<DesignResult, DesignError> {
    let sweep = threshold_sweep(kind, pe, sigma_w, grid)?;
    let (x, best) = sweep.into_iter().fold((f64::NAN, f64::NEG_INFINITY), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc });
    let spec = QuantizerSpec::new(kind, 1, vec![x * sigma_w])?;
    Ok(DesignResult::from_spec(spec, best))
}

/// Sorts positions and carries velocities along so particles keep their
/// momentum per threshold rank.
fn sort_repair(x: &mut [f64], v: &mut [f64]) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let vs: Vec<f64> = order.iter().map(|&i| v[i]).collect();
    x.copy_from_slice(&xs);
    v.copy_from_slice(&vs);
}

/// One swarm run; returns `(best position, best value)`.
fn pso_run(obj: &Objective, dim: usize, params: &PsoParams, (lo, hi): (f64, f64), stream: u64) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let vmax = hi - lo;
    let n = params.swarm_size;
    let mut pos: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut vel: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
        let mut v: Vec<f64> = (0..dim).map(|_| 0.1 * rng.random_range(-vmax..vmax)).collect();
        sort_repair(&mut x, &mut v);
        pos.push(x);
        vel.push(v);
    }
    let mut best_pos = pos.clone();
    let mut best_val: Vec<f64> = pos.iter().map(|x| obj.eval(x)).collect();
    let mut g = argmax(&best_val);
    for _ in 0..params.iterations {
        for k in 0..n {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = params.inertia * vel[k][d]
                    + params.cognitive * r1 * (best_pos[k][d] - pos[k][d])
                    + params.social * r2 * (best_pos[g][d] - pos[k][d]);
                vel[k][d] = v.clamp(-vmax, vmax);
                pos[k][d] = (pos[k][d] + vel[k][d]).clamp(lo, hi);
            }
            sort_repair(&mut pos[k], &mut vel[k]);
            let val = obj.eval(&pos[k]);
            if val > best_val[k] {
                best_val[k] = val;
                best_pos[k].clone_from(&pos[k]);
            }
        }
        g = argmax(&best_val);
    }
    (best_pos[g].clone(), best_val[g])
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Pulls tied or out-of-range thresholds apart so the result is a valid
/// spec; the shift is far below any resolution that matters.
fn separate(mut t: Vec<f64>, kind: QuantizerKind, sigma_w: f64) -> Vec<f64> {
    let gap = 1e-9 * sigma_w;
    if kind == QuantizerKind::Lq && t[0] <= 0.0 {
        t[0] = gap;
    }
    for k in 1..t.len() {
        if t[k] <= t[k - 1] {
            t[k] = t[k - 1] + gap;
        }
    }
    t
}

/// Particle swarm maximization of [`fi_objective`] over `2^q - 1`
/// thresholds. Restarts use independent streams of `params.seed` and run in
/// parallel; the best restart wins, ties going to the lower restart index.
pub fn pso_optimize(
    kind: QuantizerKind,
    q: u32,
    pe: f64,
    sigma_w: f64,
    params: &PsoParams,
) -> Result<DesignResult, DesignError> {
    params.validate()?;
    if q == 0 || q > u32::from(MAX_BITS) {
        return Err(QuantizerError::BitDepth(q).into());
    }
    let obj = Objective::new(kind, q, pe, sigma_w)?;
    let dim = (1usize << q) - 1;
    let bounds = params.search_box(kind, sigma_w);
    let runs: Vec<(Vec<f64>, f64)> =
        (0..params.restarts as u64).into_par_iter().map(|r| pso_run(&obj, dim, params, bounds, r)).collect();
    let vals: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let best = argmax(&vals);
    let thresholds = separate(runs[best].0.clone(), kind, sigma_w);
    let objective = obj.eval(&thresholds);
    log::debug!("pso {kind} q={q} pe={pe}: restart {best} objective {objective}");
    Ok(DesignResult::from_spec(QuantizerSpec::new(kind, q, thresholds)?, objective))
}

/// Designs (or takes) thresholds with `optimizer` and reports the ARE at
/// `sigma_w = 1`. The ARE does not depend on `sigma_w` once thresholds are
/// expressed in units of it.
pub fn are(kind: QuantizerKind, q: u32, pe: f64, optimizer: &Optimizer) -> Result<DesignResult, DesignError> {
    design(kind, q, pe, 1.0, optimizer)
}

/// Like [`are`] for an arbitrary `sigma_w`.
pub fn design(
    kind: QuantizerKind,
    q: u32,
    pe: f64,
    sigma_w: f64,
    optimizer: &Optimizer,
) -> Result<DesignResult, DesignError> {
    match optimizer {
        Optimizer::Pso(params) => pso_optimize(kind, q, pe, sigma_w, params),
        Optimizer::Grid { step } => {
            if q != 1 {
                return Err(DesignError::GridBits(q));
            }
            grid_search_1d(kind, pe, sigma_w, GridRange::for_kind(kind, *step))
        }
        Optimizer::Lqu { range_factor } => {
            let spec = QuantizerSpec::uniform_lq(q, sigma_w, *range_factor)?;
            let v = normalized_fi(&spec, pe, sigma_w)?;
            Ok(DesignResult::from_spec(spec, v))
        }
        Optimizer::Fixed { thresholds } => {
            let spec = QuantizerSpec::new(kind, q, thresholds.clone())?;
            let v = normalized_fi(&spec, pe, sigma_w)?;
            Ok(DesignResult::from_spec(spec, v))
        }
    }
}

/// Table columns: optimized RQ, optimized LQ or the uniform LQ grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Rq,
    Lq,
    Lqu,
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DesignKind::Rq => "rq",
            DesignKind::Lq => "lq",
            DesignKind::Lqu => "lqu",
        })
    }
}

impl std::str::FromStr for DesignKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rq" => Ok(DesignKind::Rq),
            "lq" => Ok(DesignKind::Lq),
            "lqu" => Ok(DesignKind::Lqu),
            other => Err(format!("unknown design kind '{other}' (expected rq, lq or lqu)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub kind: DesignKind,
    pub q: u32,
    pub pe: f64,
    pub result: DesignResult,
}

/// One row per `(kind, q, pe)`, in that nesting order. LQU uses
/// `range_factor`; the others use PSO with `params`.
pub fn run_design_table(
    qs: &[u32],
    pes: &[f64],
    kinds: &[DesignKind],
    params: &PsoParams,
    range_factor: f64,
) -> Result<Vec<DesignRow>, DesignError> {
    let mut rows = Vec::new();
    for &kind in kinds {
        for &q in qs {
            for &pe in pes {
                let result = match kind {
                    DesignKind::Rq => pso_optimize(QuantizerKind::Rq, q, pe, 1.0, params)?,
                    DesignKind::Lq => pso_optimize(QuantizerKind::Lq, q, pe, 1.0, params)?,
                    DesignKind::Lqu => are(QuantizerKind::Lq, q, pe, &Optimizer::Lqu { range_factor })?,
                };
                rows.push(DesignRow { kind, q, pe, result });
            }
        }
    }
    Ok(rows)
}

/// Range factors in `[lo, hi]` at which the uniform LQ grid reaches
/// `target_are`, located by scanning and bisection. Usually there are two:
/// one span too narrow, one too wide.
pub fn lqu_calibration(q: u32, pe: f64, target_are: f64, (lo, hi): (f64, f64)) -> Result<Vec<f64>, DesignError> {
    let gap = |r: f64| -> Result<f64, DesignError> {
        Ok(are(QuantizerKind::Lq, q, pe, &Optimizer::Lqu { range_factor: r })?.are - target_are)
    };
    let steps = 2000;
    let h = (hi - lo) / steps as f64;
    let mut roots = Vec::new();
    let mut a = lo;
    let mut ga = gap(a)?;
    for k in 1..=steps {
        let b = lo + k as f64 * h;
        let gb = gap(b)?;
        if ga == 0.0 {
            roots.push(a);
        } else if ga.signum() != gb.signum() && ga.is_finite() && gb.is_finite() {
            let (mut x0, mut x1, mut g0) = (a, b, ga);
            for _ in 0..100 {
                let mid = 0.5 * (x0 + x1);
                let gm = gap(mid)?;
                if gm.signum() == g0.signum() {
                    x0 = mid;
                    g0 = gm;
                } else {
                    x1 = mid;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        a = b;
        ga = gb;
    }
    if roots.is_empty() {
        return Err(DesignError::Calibration(target_are));
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_ccdf, gaussian_pdf};
    use proptest::prelude::*;
    use rand::Rng;

    fn fine(kind: QuantizerKind) -> GridRange {
        GridRange::for_kind(kind, 0.0005)
    }

    fn quick() -> PsoParams {
        PsoParams { swarm_size: 30, iterations: 120, restarts: 3, seed: 1, ..PsoParams::default() }
    }

    #[test]
    fn objective_examples() {
        assert_eq!(fi_objective(QuantizerKind::Rq, 1, &[0.0], 0.1, 1.0).unwrap(), 0.0);
        let v = fi_objective(QuantizerKind::Lq, 1, &[1.0], 0.0, 1.0).unwrap();
        let psi = gaussian_pdf(1.0);
        let oracle = psi * psi / (0.5 - gaussian_ccdf(1.0)) + psi * psi / gaussian_ccdf(1.0);
        assert!((v - oracle).abs() < 1e-14);
        assert!((v - 0.54057).abs() < 1e-4);
        for (kind, t) in [
            (QuantizerKind::Lq, vec![0.3, 1.0, 2.0]),
            (QuantizerKind::Rq, vec![-1.0, 0.5, 1.7]),
        ] {
            assert!(fi_objective(kind, 2, &t, 0.5, 1.0).unwrap().abs() < 1e-15);
        }
        assert!(fi_objective(QuantizerKind::Lq, 2, &[1.0, 0.5, 2.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn objective_is_scale_free() {
        let t = [0.4, 0.9, 1.6];
        let a = fi_objective(QuantizerKind::Lq, 2, &t, 0.1, 1.0).unwrap();
        let scaled: Vec<f64> = t.iter().map(|x| x * 2.5).collect();
        let b = fi_objective(QuantizerKind::Lq, 2, &scaled, 0.1, 2.5).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn grid_one_bit_lq() {
        let r = grid_search_1d(QuantizerKind::Lq, 0.0, 1.0, fine(QuantizerKind::Lq)).unwrap();
        assert!((r.normalized_fi - 0.6536).abs() < 0.003);
        assert!((r.are - 1.53).abs() < 0.01);
        assert!((r.are * r.normalized_fi - 1.0).abs() < 1e-10);
    }

    #[test]
    fn grid_one_bit_rq() {
        let r = grid_search_1d(QuantizerKind::Rq, 0.0, 1.0, fine(QuantizerKind::Rq)).unwrap();
        assert!((r.are - 3.29).abs() < 0.02);
        // The objective is even in the threshold; the smaller (negative) one is kept.
        assert!(r.spec.thresholds()[0] < 0.0);
    }

    #[test]
    fn optimal_one_bit_threshold_decreases_with_pe() {
        let taus: Vec<f64> = [0.0, 0.1, 0.2, 0.3]
            .iter()
            .map(|&pe| grid_search_1d(QuantizerKind::Lq, pe, 1.0, fine(QuantizerKind::Lq)).unwrap().spec.thresholds()[0])
            .collect();
        for w in taus.windows(2) {
            assert!(w[1] < w[0], "{taus:?}");
        }
    }

    #[test]
    fn grid_rejects_bad_ranges() {
        let bad = GridRange { start: 1.0, stop: 0.0, step: 0.1 };
        assert!(grid_search_1d(QuantizerKind::Lq, 0.0, 1.0, bad).is_err());
        let zero = GridRange { start: 0.0, stop: 1.0, step: 0.0 };
        assert!(grid_search_1d(QuantizerKind::Lq, 0.0, 1.0, zero).is_err());
        let nonpositive = GridRange { start: -1.0, stop: 0.0, step: 0.5 };
        assert!(grid_search_1d(QuantizerKind::Lq, 0.0, 1.0, nonpositive).is_err());
    }

    #[test]
    fn pso_matches_grid_for_one_bit() {
        for kind in [QuantizerKind::Lq, QuantizerKind::Rq] {
            for pe in [0.0, 0.1] {
                let g = grid_search_1d(kind, pe, 1.0, fine(kind)).unwrap();
                let p = pso_optimize(kind, 1, pe, 1.0, &quick()).unwrap();
                assert!((p.objective - g.objective).abs() <= 1e-3 * g.objective, "{kind} {pe}");
            }
        }
    }

    #[test]
    fn pso_beats_random_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (kind, q, pe) in [(QuantizerKind::Lq, 2, 0.1), (QuantizerKind::Rq, 2, 0.0), (QuantizerKind::Lq, 3, 0.2)] {
            let obj = Objective::new(kind, q, pe, 1.0).unwrap();
            let (lo, hi) = PsoParams::default().search_box(kind, 1.0);
            let dim = (1usize << q) - 1;
            let best_random = (0..1000)
                .map(|_| {
                    let mut t: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
                    t.sort_by(f64::total_cmp);
                    obj.eval(&t)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let r = pso_optimize(kind, q, pe, 1.0, &quick()).unwrap();
            assert!(r.objective >= best_random, "{kind} q={q}: {} < {best_random}", r.objective);
        }
    }

    #[test]
    fn pso_is_deterministic() {
        let a = pso_optimize(QuantizerKind::Rq, 2, 0.1, 1.0, &quick()).unwrap();
        let b = pso_optimize(QuantizerKind::Rq, 2, 0.1, 1.0, &quick()).unwrap();
        assert_eq!(a, b);
        let other = PsoParams { seed: 2, ..quick() };
        let c = pso_optimize(QuantizerKind::Rq, 2, 0.1, 1.0, &other).unwrap();
        assert!((a.objective - c.objective).abs() < 1e-4);
    }

    #[test]
    fn pso_rejects_bad_params() {
        let bad = PsoParams { swarm_size: 0, ..PsoParams::default() };
        assert!(pso_optimize(QuantizerKind::Lq, 1, 0.0, 1.0, &bad).is_err());
        let bad = PsoParams { bounds: Some((2.0, 1.0)), ..PsoParams::default() };
        assert!(pso_optimize(QuantizerKind::Lq, 1, 0.0, 1.0, &bad).is_err());
    }

    #[test]
    fn two_bit_lq_are() {
        let r = are(QuantizerKind::Lq, 2, 0.0, &Optimizer::Pso(quick())).unwrap();
        assert!((r.are - 1.12).abs() < 0.02);
        let r = are(QuantizerKind::Lq, 2, 0.1, &Optimizer::Pso(quick())).unwrap();
        assert!((r.are - 1.91).abs() < 0.04);
    }

    #[test]
    fn lqu_is_dominated() {
        for q in 1..=2 {
            for pe in [0.0, 0.1] {
                let lq = are(QuantizerKind::Lq, q, pe, &Optimizer::Pso(quick())).unwrap();
                let lqu = are(QuantizerKind::Lq, q, pe, &Optimizer::Lqu { range_factor: 3.0 }).unwrap();
                assert!(lq.are <= lqu.are + 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_are_is_infinite() {
        let r = are(QuantizerKind::Rq, 1, 0.0, &Optimizer::Fixed { thresholds: vec![0.0] }).unwrap();
        assert!(r.is_degenerate());
        assert!(r.are.is_infinite());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"are\":null"));
        let back: DesignResult = serde_json::from_str(&json).unwrap();
        assert!(back.are.is_infinite());
    }

    #[test]
    fn design_result_roundtrip() {
        let r = are(QuantizerKind::Lq, 1, 0.0, &Optimizer::Fixed { thresholds: vec![1.0] }).unwrap();
        let back: DesignResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn lqu_calibration_finds_roots() {
        let roots = lqu_calibration(1, 0.0, 3.19, (0.1, 20.0)).unwrap();
        assert!(!roots.is_empty());
        for r in roots {
            let a = are(QuantizerKind::Lq, 1, 0.0, &Optimizer::Lqu { range_factor: r }).unwrap().are;
            assert!((a - 3.19).abs() < 1e-6);
        }
        assert!(lqu_calibration(1, 0.0, 1.0, (0.1, 20.0)).is_err());
    }

    #[test]
    fn design_table_shape() {
        let rows = run_design_table(&[1], &[0.0, 0.2], &[DesignKind::Lq, DesignKind::Lqu], &quick(), 3.0).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.result.normalized_fi <= 1.0));
    }

    proptest! {
        #[test]
        fn objective_bounded_by_one(
            kind in prop_oneof![Just(QuantizerKind::Rq), Just(QuantizerKind::Lq)],
            mut raw in proptest::collection::vec(0.01f64..5.0, 3),
            pe in 0.0f64..0.5,
        ) {
            raw.sort_by(f64::total_cmp);
            raw.dedup();
            prop_assume!(raw.len() == 3 && raw[1] - raw[0] > 1e-6 && raw[2] - raw[1] > 1e-6);
            if kind == QuantizerKind::Rq {
                raw[0] = -raw[0];
            }
            let v = fi_objective(kind, 2, &raw, pe, 1.0).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn objective_decreases_with_pe(t in 0.2f64..3.0, pe in 0.0f64..0.45) {
            let a = fi_objective(QuantizerKind::Lq, 1, &[t], pe, 1.0).unwrap();
            let b = fi_objective(QuantizerKind::Lq, 1, &[t], pe + 0.05, 1.0).unwrap();
            prop_assert!(b <= a + 1e-15);
        }
    }
}

//! Scenario configuration and sampling of the sparse-signal observation
//! model.
//!
//! Under `H0` sensor `m` observes pure noise `w_m ~ N(0, sigma_w^2)`.
//! Under `H1` it observes `h_m^T s_m + w_m`, where the entries of `s_m` are
//! Bernoulli-Gaussian: active with probability `p` (the sparsity degree) and
//! then `N(0, sigma_0^2)`. The activity pattern is shared by all sensors in
//! a trial.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("{0} must be at least 1")]
    Count(&'static str),
    #[error("sparsity {0} is outside [0, 1]")]
    Sparsity(f64),
    #[error("{name} must be positive and finite, got {value}")]
    Variance { name: &'static str, value: f64 },
    #[error("{name} has {got} entries, expected {expected}")]
    Length { name: &'static str, expected: usize, got: usize },
    #[error("h_norm_sq[{index}] = {value} must be positive and finite")]
    NormSq { index: usize, value: f64 },
    #[error("pe[{index}] = {value} is outside [0, 1)")]
    Crossover { index: usize, value: f64 },
    #[error("negative or non-finite argument: {0}")]
    Domain(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    H0,
    H1,
}

/// How `H1` measurements are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    /// Bernoulli-Gaussian signal, projected through the measurement vector.
    #[default]
    Exact,
    /// `y ~ N(0, p sigma_0^2 ||h||^2 + sigma_w^2)` directly.
    GaussianApprox,
}

/// Global scenario record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_sensors: usize,
    pub signal_dim: usize,
    pub sparsity: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub h_norm_sq: Vec<f64>,
    pub pe: Vec<f64>,
}

impl SystemConfig {
    /// Every sensor with the same `||h||^2` and crossover probability.
    pub fn homogeneous(
        num_sensors: usize,
        signal_dim: usize,
        sparsity: f64,
        signal_var: f64,
        noise_var: f64,
        h_norm_sq: f64,
        pe: f64,
    ) -> Result<Self, SignalError> {
        let cfg = Self {
            num_sensors,
            signal_dim,
            sparsity,
            signal_var,
            noise_var,
            h_norm_sq: vec![h_norm_sq; num_sensors],
            pe: vec![pe; num_sensors],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if self.num_sensors == 0 {
            return Err(SignalError::Count("num_sensors"));
        }
        if self.signal_dim == 0 {
            return Err(SignalError::Count("signal_dim"));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(SignalError::Sparsity(self.sparsity));
        }
        // A silent signal is a valid (null) scenario; the noise must not be.
        if !(self.signal_var >= 0.0 && self.signal_var.is_finite()) {
            return Err(SignalError::Variance { name: "signal_var", value: self.signal_var });
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(SignalError::Variance { name: "noise_var", value: self.noise_var });
        }
        for (name, len) in [("h_norm_sq", self.h_norm_sq.len()), ("pe", self.pe.len())] {
            if len != self.num_sensors {
                return Err(SignalError::Length { name, expected: self.num_sensors, got: len });
            }
        }
        for (index, &value) in self.h_norm_sq.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SignalError::NormSq { index, value });
            }
        }
        for (index, &value) in self.pe.iter().enumerate() {
            if !(0.0..1.0).contains(&value) {
                return Err(SignalError::Crossover { index, value });
            }
        }
        Ok(())
    }

    pub fn sigma_w(&self) -> f64 {
        self.noise_var.sqrt()
    }

    /// Standard deviation of sensor `m`'s measurement at sparsity `p`.
    pub fn sigma_m(&self, m: usize, p: f64) -> f64 {
        (p * self.signal_var * self.h_norm_sq[m] + self.noise_var).sqrt()
    }

    pub fn snr_db(&self) -> f64 {
        snr_db(self.sparsity, self.signal_var, self.noise_var)
    }
}

/// `sqrt(p sigma_0^2 ||h||^2 + sigma_w^2)`.
pub fn effective_sigma(p: f64, signal_var: f64, h_norm_sq: f64, noise_var: f64) -> Result<f64, SignalError> {
    if !(p >= 0.0 && signal_var >= 0.0 && h_norm_sq >= 0.0) || !(p * signal_var * h_norm_sq).is_finite() {
        return Err(SignalError::Domain("p, sigma_0^2 and ||h||^2 must be nonnegative"));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(SignalError::Domain("noise variance must be positive"));
    }
    Ok((p * signal_var * h_norm_sq + noise_var).sqrt())
}

/// Per-sensor SNR `p sigma_0^2 / sigma_w^2` in decibels; `-inf` when the
/// signal power is zero.
pub fn snr_db(p: f64, signal_var: f64, noise_var: f64) -> f64 {
    let ratio = p * signal_var / noise_var;
    if ratio == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * ratio.log10()
    }
}

/// Signal variance that realizes `snr_db` at sparsity `p`.
pub fn signal_var_for_snr(snr_db: f64, p: f64, noise_var: f64) -> f64 {
    10f64.powf(snr_db / 10.0) * noise_var / p
}

/// Sparse vector stored as parallel `(support, values)` arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSignal {
    pub dim: usize,
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSignal {
    pub fn zero(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (&i, &x) in self.support.iter().zip(&self.values) {
            v[i] = x;
        }
        v
    }

    /// `h^T s` using only the support.
    pub fn dot(&self, h: &[f64]) -> f64 {
        self.support.iter().zip(&self.values).map(|(&i, &x)| h[i] * x).sum()
    }
}

/// Bernoulli(p) activity pattern over `0..dim`.
pub fn sample_support<R: Rng + ?Sized>(dim: usize, p: f64, rng: &mut R) -> Vec<usize> {
    if p <= 0.0 {
        return Vec::new();
    }
    if p >= 1.0 {
        return (0..dim).collect();
    }
    (0..dim).filter(|_| rng.random::<f64>() < p).collect()
}

/// Gaussian values on a given support (used to share one pattern across
/// sensors).
pub fn sample_on_support<R: Rng + ?Sized>(
    dim: usize,
    support: &[usize],
    signal_var: f64,
    rng: &mut R,
) -> SparseSignal {
    let sd = signal_var.sqrt();
    let values = support.iter().map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    SparseSignal { dim, support: support.to_vec(), values }
}

pub fn sample_sparse_signal<R: Rng + ?Sized>(dim: usize, p: f64, signal_var: f64, rng: &mut R) -> SparseSignal {
    let support = sample_support(dim, p, rng);
    sample_on_support(dim, &support, signal_var, rng)
}

pub fn sample_measurement<R: Rng + ?Sized>(
    h: &[f64],
    s: &SparseSignal,
    noise_var: f64,
    hypothesis: Hypothesis,
    rng: &mut R,
) -> f64 {
    let noise = noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    match hypothesis {
        Hypothesis::H0 => noise,
        Hypothesis::H1 => s.dot(h) + noise,
    }
}

/// `y ~ N(0, sigma^2)`, the Gaussian-approximate `H1` draw.
pub fn sample_gaussian_approx<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    sigma * Distribution::<f64>::sample(&StandardNormal, rng)
}

/// One i.i.d. standard normal vector of length `n`, normalized to unit norm.
pub fn unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn generate_measurement_vectors<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..m).map(|_| unit_vector(n, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn effective_sigma_examples() {
        assert_eq!(effective_sigma(0.0, 4.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((effective_sigma(0.03, 4.0, 1.0, 1.0).unwrap() - 1.12f64.sqrt()).abs() < 1e-15);
        assert!((effective_sigma(0.03, 4.0, 1.0, 1.0).unwrap() - 1.05830).abs() < 1e-5);
        assert_eq!(effective_sigma(1.0, 7.0, 0.0, 2.0).unwrap(), 2f64.sqrt());
        assert!(effective_sigma(-0.1, 4.0, 1.0, 1.0).is_err());
        assert!(effective_sigma(0.1, 4.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn snr_examples() {
        assert!((snr_db(0.03, 4.0, 1.0) + 9.2).abs() < 0.05);
        assert!((snr_db(0.03, 8.0, 1.0) + 6.2).abs() < 0.05);
        assert_eq!(snr_db(0.5, 2.0, 1.0), 0.0);
        assert_eq!(snr_db(0.0, 2.0, 1.0), f64::NEG_INFINITY);
        let s0 = signal_var_for_snr(-3.0, 0.03, 1.0);
        assert!((snr_db(0.03, s0, 1.0) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let good = SystemConfig::homogeneous(3, 10, 0.1, 4.0, 1.0, 1.0, 0.1).unwrap();
        assert_eq!(good.h_norm_sq.len(), 3);
        assert!(SystemConfig::homogeneous(0, 10, 0.1, 4.0, 1.0, 1.0, 0.1).is_err());
        assert!(SystemConfig::homogeneous(3, 10, 1.1, 4.0, 1.0, 1.0, 0.1).is_err());
        assert!(SystemConfig::homogeneous(3, 10, 0.1, -1.0, 1.0, 1.0, 0.1).is_err());
        assert!(SystemConfig::homogeneous(3, 10, 0.1, 0.0, 1.0, 1.0, 0.1).is_ok());
        assert!(SystemConfig::homogeneous(3, 10, 0.1, 1.0, 0.0, 1.0, 0.1).is_err());
        assert!(SystemConfig::homogeneous(3, 10, 0.1, 4.0, 1.0, 1.0, 1.0).is_err());
        let mut bad = good.clone();
        bad.pe.pop();
        assert!(matches!(bad.validate(), Err(SignalError::Length { name: "pe", .. })));
        let mut bad = good;
        bad.h_norm_sq[1] = -1.0;
        assert!(matches!(bad.validate(), Err(SignalError::NormSq { index: 1, .. })));
    }

    #[test]
    fn support_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert!(sample_sparse_signal(50, 0.0, 4.0, &mut rng).support.is_empty());
            assert_eq!(sample_sparse_signal(50, 1.0, 4.0, &mut rng).support.len(), 50);
        }
    }

    #[test]
    fn sparse_signal_law_of_large_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let s = sample_sparse_signal(n, 0.03, 4.0, &mut rng);
        let frac = s.support.len() as f64 / n as f64;
        assert!((frac - 0.03).abs() < 0.002, "fraction {frac}");
        let var = s.values.iter().map(|x| x * x).sum::<f64>() / s.values.len() as f64;
        assert!((var / 4.0 - 1.0).abs() < 0.05, "variance {var}");
        let dense = s.to_dense();
        let zeros = dense.iter().filter(|&&x| x == 0.0).count();
        assert_eq!(zeros, n - s.support.len());
    }

    #[test]
    fn h0_measurements_are_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = unit_vector(100, &mut rng);
        let s = SparseSignal::zero(100);
        let ys: Vec<f64> = (0..100_000).map(|_| sample_measurement(&h, &s, 1.0, Hypothesis::H0, &mut rng)).collect();
        let (mean, var) = mean_var(&ys);
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn h1_with_zero_signal_matches_h0() {
        let h = vec![0.6, 0.8];
        let s = SparseSignal::zero(2);
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(
                sample_measurement(&h, &s, 1.0, Hypothesis::H0, &mut a),
                sample_measurement(&h, &s, 1.0, Hypothesis::H1, &mut b)
            );
        }
    }

    #[test]
    fn h1_variance_matches_effective_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 1000;
        let h = unit_vector(n, &mut rng);
        let ys: Vec<f64> = (0..100_000)
            .map(|_| {
                let s = sample_sparse_signal(n, 0.03, 4.0, &mut rng);
                sample_measurement(&h, &s, 1.0, Hypothesis::H1, &mut rng)
            })
            .collect();
        let (_, var) = mean_var(&ys);
        let expected = effective_sigma(0.03, 4.0, 1.0, 1.0).unwrap().powi(2);
        assert!((var - 1.12).abs() < 0.03, "variance {var}");
        assert!((var / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn measurement_vectors_are_unit_and_reproducible() {
        let a = generate_measurement_vectors(2, 3, &mut ChaCha8Rng::seed_from_u64(42));
        let b = generate_measurement_vectors(2, 3, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for v in generate_measurement_vectors(20, 500, &mut rng).iter().chain(&a) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn measurement_vectors_are_nearly_orthogonal() {
        let n = 1000;
        let bound = 5.0 / (n as f64).sqrt();
        let mut total = 0;
        let mut within = 0;
        for seed in 0..5 {
            let hs = generate_measurement_vectors(20, n, &mut ChaCha8Rng::seed_from_u64(seed));
            for i in 0..hs.len() {
                for j in i + 1..hs.len() {
                    let ip: f64 = hs[i].iter().zip(&hs[j]).map(|(a, b)| a * b).sum();
                    total += 1;
                    within += usize::from(ip.abs() < bound);
                }
            }
        }
        assert!(within as f64 >= 0.99 * total as f64);
    }
}

//! Scalar Gaussian functions.
//!
//! Everything here works on the upper tail: [`gaussian_ccdf`] is
//! `P(Z > beta)` for a standard normal `Z`. Infinite arguments are accepted
//! and map to their limits so that the open-ended outer quantization
//! intervals need no special casing.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `1 / sqrt(2 pi)`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum NumericsError {
    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("value {0} is not a probability")]
    NotAProbability(f64),
}

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self, NumericsError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(NumericsError::NotAProbability(value))
        }
    }

    /// Clamps tiny floating-point excursions back into `[0, 1]`.
    pub(crate) fn saturating(value: f64) -> Self {
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Self(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = NumericsError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Upper-tail probability of the standard normal, `P(Z > beta)`.
///
/// Evaluated through `erfc`, which keeps relative accuracy deep into the
/// right tail (no cancellation against 1).
pub fn gaussian_ccdf(beta: f64) -> f64 {
    0.5 * libm::erfc(beta * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn gaussian_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `-x * pdf(x)`, the derivative of the density. Zero at both infinities.
pub fn omega(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    -x * gaussian_pdf(x)
}

/// `x * pdf(x)` with the limit 0 at infinite `x`.
///
/// This is the boundary term that appears in every score and Fisher
/// information expression.
pub fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    x * gaussian_pdf(x)
}

/// Upper tail of `N(lambda, 1)` at `beta`.
pub fn noncentral_ccdf(beta: f64, lambda: f64) -> f64 {
    gaussian_ccdf(beta - lambda)
}

/// Inverse of [`gaussian_ccdf`]: returns `beta` with `P(Z > beta) = p`.
pub fn gaussian_ccdf_inv(p: f64) -> Result<f64, NumericsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NumericsError::ProbabilityOutOfRange(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Lower-tail quantile of 1 - p is the upper-tail quantile of p.
    let mut x = -acklam_lower_quantile(p);
    for _ in 0..2 {
        let err = gaussian_ccdf(x) - p;
        let density = gaussian_pdf(x);
        if density == 0.0 {
            break;
        }
        let u = err / density;
        x += u / (1.0 - 0.5 * x * u);
    }
    Ok(x)
}

/// Acklam's rational approximation to the lower-tail normal quantile
/// (relative error about 1.15e-9 before refinement).
fn acklam_lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

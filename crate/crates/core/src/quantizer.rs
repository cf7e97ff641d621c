//! q-bit scalar quantizers and their binary codewords.
//!
//! A raw quantizer (RQ) partitions the real line with `2^q - 1` thresholds;
//! a likelihood-ratio quantizer (LQ) partitions `|y|` on `[0, inf)`, which
//! is equivalent to thresholding the local likelihood ratio because that
//! ratio is increasing in `|y|`. Intervals are half-open, `[tau_{i-1},
//! tau_i)`, so a sample sitting exactly on a threshold goes up.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported bit depth. Transition matrices are `2^q x 2^q`.
pub const MAX_BITS: u8 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantizerError {
    #[error("bit depth {0} is outside 1..={max}", max = MAX_BITS)]
    BitDepth(u32),
    #[error("expected {expected} thresholds for q = {q}, got {got}")]
    ThresholdCount { q: u8, expected: usize, got: usize },
    #[error("threshold {index} ({value}) is not finite")]
    NonFinite { index: usize, value: f64 },
    #[error("threshold {index} ({value}) does not exceed threshold {prev}")]
    NotIncreasing { index: usize, prev: usize, value: f64 },
    #[error("LQ threshold {index} ({value}) must be positive")]
    NonPositive { index: usize, value: f64 },
    #[error("invalid uniform-grid parameter: {0}")]
    UniformGrid(&'static str),
    #[error("code index {index} is outside 1..={max}")]
    IndexRange { index: u32, max: u32 },
    #[error("codeword {0:?} is not a 1..=8 digit binary string")]
    BadCodeword(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizerKind {
    /// Raw quantization of the measurement itself.
    Rq,
    /// Likelihood-ratio quantization, i.e. quantization of `|y|`.
    Lq,
}

impl QuantizerKind {
    /// Lower endpoint of the first interval.
    pub fn lower_endpoint(self) -> f64 {
        match self {
            QuantizerKind::Rq => f64::NEG_INFINITY,
            QuantizerKind::Lq => 0.0,
        }
    }
}

impl fmt::Display for QuantizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantizerKind::Rq => "RQ",
            QuantizerKind::Lq => "LQ",
        })
    }
}

impl FromStr for QuantizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rq" => Ok(QuantizerKind::Rq),
            "lq" => Ok(QuantizerKind::Lq),
            other => Err(format!("unknown quantizer kind {other:?} (expected rq or lq)")),
        }
    }
}

/// One-based interval index `i` in `1..=2^q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeIndex(u16);

impl CodeIndex {
    pub fn new(index: u32, bits: u8) -> Result<Self, QuantizerError> {
        let max = 1u32 << bits;
        if index == 0 || index > max {
            return Err(QuantizerError::IndexRange { index, max });
        }
        Ok(Self(index as u16))
    }

    pub(crate) fn from_offset(offset: usize) -> Self {
        Self(offset as u16 + 1)
    }

    pub fn get(self) -> u32 {
        u32::from(self.0)
    }

    /// Zero-based position, for table lookups.
    pub fn offset(self) -> usize {
        usize::from(self.0) - 1
    }
}

impl fmt::Display for CodeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A q-bit binary word, most significant bit (`z_q`) first when printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Codeword {
    bits: u8,
    len: u8,
}

impl Codeword {
    pub fn new(bits: u8, len: u8) -> Result<Self, QuantizerError> {
        if len == 0 || len > MAX_BITS {
            return Err(QuantizerError::BitDepth(u32::from(len)));
        }
        let mask = ((1u16 << len) - 1) as u8;
        Ok(Self { bits: bits & mask, len })
    }

    /// Packed bits, `z_1` in the least significant position.
    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn len(self) -> u8 {
        self.len
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    /// Bit `z_k` for `k` in `1..=len`.
    pub fn bit(self, k: u8) -> bool {
        debug_assert!(k >= 1 && k <= self.len);
        (self.bits >> (k - 1)) & 1 == 1
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in (1..=self.len).rev() {
            f.write_str(if self.bit(k) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Codeword {
    type Err = QuantizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.len() > usize::from(MAX_BITS) {
            return Err(QuantizerError::BadCodeword(s.to_owned()));
        }
        let mut bits = 0u8;
        for c in s.bytes() {
            bits = match c {
                b'0' => bits << 1,
                b'1' => (bits << 1) | 1,
                _ => return Err(QuantizerError::BadCodeword(s.to_owned())),
            };
        }
        Codeword::new(bits, s.len() as u8)
    }
}

/// Natural binary labeling: interval `i` carries the bits of `i - 1`.
pub fn codeword_of(index: CodeIndex, bits: u8) -> Codeword {
    Codeword { bits: (index.get() - 1) as u8, len: bits }
}

/// Inverse of [`codeword_of`].
pub fn index_of(word: Codeword) -> CodeIndex {
    CodeIndex(u16::from(word.bits) + 1)
}

/// A validated quantizer: kind, bit depth and strictly increasing thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuantizerRecord", into = "QuantizerRecord")]
pub struct QuantizerSpec {
    kind: QuantizerKind,
    bits: u8,
    thresholds: Vec<f64>,
}

/// Plain text record `{kind, q, thresholds[]}` as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerRecord {
    pub kind: QuantizerKind,
    pub q: u32,
    pub thresholds: Vec<f64>,
}

impl TryFrom<QuantizerRecord> for QuantizerSpec {
    type Error = QuantizerError;

    fn try_from(r: QuantizerRecord) -> Result<Self, Self::Error> {
        QuantizerSpec::new(r.kind, r.q, r.thresholds)
    }
}

impl From<QuantizerSpec> for QuantizerRecord {
    fn from(s: QuantizerSpec) -> Self {
        QuantizerRecord { kind: s.kind, q: u32::from(s.bits), thresholds: s.thresholds }
    }
}

impl QuantizerSpec {
    /// Validates and builds a quantizer. Errors name the offending threshold
    /// by its one-based position.
    pub fn new(kind: QuantizerKind, q: u32, thresholds: Vec<f64>) -> Result<Self, QuantizerError> {
        if q == 0 || q > u32::from(MAX_BITS) {
            return Err(QuantizerError::BitDepth(q));
        }
        let bits = q as u8;
        let expected = (1usize << q) - 1;
        if thresholds.len() != expected {
            return Err(QuantizerError::ThresholdCount { q: bits, expected, got: thresholds.len() });
        }
        for (k, &t) in thresholds.iter().enumerate() {
            let index = k + 1;
            if !t.is_finite() {
                return Err(QuantizerError::NonFinite { index, value: t });
            }
            if kind == QuantizerKind::Lq && t <= 0.0 {
                return Err(QuantizerError::NonPositive { index, value: t });
            }
            if k > 0 && t <= thresholds[k - 1] {
                return Err(QuantizerError::NotIncreasing { index, prev: k, value: t });
            }
        }
        Ok(Self { kind, bits, thresholds })
    }

    /// LQ quantizer with equally spaced thresholds `k * span / 2^q`, where
    /// `span = range_factor * sigma_w`.
    pub fn uniform_lq(q: u32, sigma_w: f64, range_factor: f64) -> Result<Self, QuantizerError> {
        if !(sigma_w > 0.0 && sigma_w.is_finite()) {
            return Err(QuantizerError::UniformGrid("sigma_w must be positive"));
        }
        if !(range_factor > 0.0 && range_factor.is_finite()) {
            return Err(QuantizerError::UniformGrid("range factor must be positive"));
        }
        if q == 0 || q > u32::from(MAX_BITS) {
            return Err(QuantizerError::BitDepth(q));
        }
        let levels = 1u32 << q;
        let step = range_factor * sigma_w / f64::from(levels);
        let thresholds = (1..levels).map(|k| f64::from(k) * step).collect();
        Self::new(QuantizerKind::Lq, q, thresholds)
    }

    pub fn kind(&self) -> QuantizerKind {
        self.kind
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Number of intervals, `2^q`.
    pub fn levels(&self) -> usize {
        1usize << self.bits
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Threshold `tau_k` for `k` in `0..=2^q`, including the implicit
    /// endpoints.
    pub fn endpoint(&self, k: usize) -> f64 {
        if k == 0 {
            self.kind.lower_endpoint()
        } else if k == self.levels() {
            f64::INFINITY
        } else {
            self.thresholds[k - 1]
        }
    }

    /// Maps a measurement to its interval.
    pub fn quantize(&self, y: f64) -> CodeIndex {
        let v = match self.kind {
            QuantizerKind::Rq => y,
            QuantizerKind::Lq => y.abs(),
        };
        // Number of thresholds <= v; ties land in the upper interval.
        let below = self.thresholds.partition_point(|&t| t <= v);
        CodeIndex::from_offset(below)
    }

    /// Same spec with every threshold multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self, QuantizerError> {
        Self::new(
            self.kind,
            u32::from(self.bits),
            self.thresholds.iter().map(|t| t * factor).collect(),
        )
    }
}

impl FromStr for QuantizerSpec {
    type Err = serde_json::Error;

    /// Parses the JSON record form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_str(s)
    }
}

//! Binary symmetric reporting channel.
//!
//! Each of the `q` bits of a sensor's codeword is flipped independently
//! with crossover probability `pe`, so the probability of receiving word
//! `i` when word `j` was sent depends only on their Hamming distance `D`:
//! `G(q, pe, D) = pe^D (1 - pe)^(q - D)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantizer::{codeword_of, CodeIndex, Codeword, MAX_BITS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("crossover probability {0} is outside [0, 1)")]
    Crossover(f64),
    #[error("bit depth {0} is outside 1..={max}", max = MAX_BITS)]
    BitDepth(u32),
    #[error("codeword lengths differ ({0} vs {1})")]
    LengthMismatch(u8, u8),
    #[error("Hamming distance {d} is outside 0..={q}")]
    Distance { q: u8, d: u32 },
}

/// A detector-usable channel: `0 <= pe < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pe: f64,
    bits: u8,
}

impl ChannelSpec {
    pub fn new(pe: f64, bits: u32) -> Result<Self, ChannelError> {
        if !(0.0..1.0).contains(&pe) {
            return Err(ChannelError::Crossover(pe));
        }
        if bits == 0 || bits > u32::from(MAX_BITS) {
            return Err(ChannelError::BitDepth(bits));
        }
        Ok(Self { pe, bits: bits as u8 })
    }

    pub fn pe(&self) -> f64 {
        self.pe
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }
}

pub fn hamming(a: Codeword, b: Codeword) -> Result<u32, ChannelError> {
    if a.len() != b.len() {
        return Err(ChannelError::LengthMismatch(a.len(), b.len()));
    }
    Ok((a.bits() ^ b.bits()).count_ones())
}

/// `G(q, pe, d)`: probability that a specific word at distance `d` is
/// received.
pub fn transition_prob(q: u8, pe: f64, d: u32) -> Result<f64, ChannelError> {
    if d > u32::from(q) {
        return Err(ChannelError::Distance { q, d });
    }
    Ok(g(q, pe, d))
}

fn g(q: u8, pe: f64, d: u32) -> f64 {
    // powi(0) is exactly 1, so pe = 0 yields an exact identity matrix.
    pe.powi(d as i32) * (1.0 - pe).powi(i32::from(q) - d as i32)
}

/// Column-stochastic `2^q x 2^q` matrix; entry `(i, j)` is the probability
/// that index `i` is received when `j` was sent.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    spec: ChannelSpec,
    size: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(spec: ChannelSpec) -> Self {
        let q = spec.bits;
        let size = 1usize << q;
        // Distances only take q + 1 values.
        let by_distance: Vec<f64> = (0..=u32::from(q)).map(|d| g(q, spec.pe, d)).collect();
        let mut entries = Vec::with_capacity(size * size);
        for i in 0..size {
            let wi = codeword_of(CodeIndex::from_offset(i), q);
            for j in 0..size {
                let wj = codeword_of(CodeIndex::from_offset(j), q);
                let d = (wi.bits() ^ wj.bits()).count_ones();
                entries.push(by_distance[d as usize]);
            }
        }
        Self { spec, size, entries }
    }

    pub fn spec(&self) -> ChannelSpec {
        self.spec
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `P(received = i | sent = j)`.
    pub fn get(&self, received: CodeIndex, sent: CodeIndex) -> f64 {
        self.entries[received.offset() * self.size + sent.offset()]
    }

    /// Row `i` as a slice over sent indices `j`.
    pub fn row(&self, received: usize) -> &[f64] {
        &self.entries[received * self.size..(received + 1) * self.size]
    }

    /// `sum_j P(i | j) v_j` for every received `i`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.size);
        (0..self.size)
            .map(|i| self.row(i).iter().zip(v).map(|(g, x)| g * x).sum())
            .collect()
    }
}

pub fn transition_matrix(q: u32, pe: f64) -> Result<TransitionMatrix, ChannelError> {
    Ok(TransitionMatrix::new(ChannelSpec::new(pe, q)?))
}

/// Sends `word` through the channel. `pe = 1` is accepted here (the output
/// is then the exact complement) even though detectors reject it.
pub fn transmit<R: Rng + ?Sized>(word: Codeword, pe: f64, rng: &mut R) -> Codeword {
    let mut flips = 0u8;
    if pe > 0.0 {
        for k in 0..word.len() {
            if rng.random::<f64>() < pe {
                flips |= 1 << k;
            }
        }
    }
    Codeword::new(word.bits() ^ flips, word.len()).expect("length unchanged")
}

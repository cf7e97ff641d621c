//! Locally most powerful fusion of multi-bit quantized sensor reports for
//! sparse signal detection over binary symmetric channels.
//!
//! Modules, bottom-up:
//!
//! * [`numerics`]: Gaussian tail function, its inverse and related terms;
//! * [`signal`]: the Bernoulli-Gaussian sparse signal and sensor model;
//! * [`quantizer`]: RQ/LQ threshold sets and binary codewords;
//! * [`channel`]: binary symmetric channel between sensors and fusion center;
//! * [`detector`]: LMPT statistics, Fisher information and operating points;
//! * [`design`]: threshold optimization and efficiency metrics;
//! * [`harness`]: seeded Monte Carlo experiments, CSV and run manifests.

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod design;
pub mod detector;
pub mod harness;
pub mod numerics;
pub mod quantizer;
pub mod signal;

pub use channel::{ChannelError, ChannelSpec, TransitionMatrix};
pub use design::{DesignError, DesignResult, Optimizer, PsoParams};
pub use detector::{DetectorError, DetectorKind, DetectorTables, OperatingPoint};
pub use harness::{ExperimentConfig, ExperimentResult, HarnessError};
pub use numerics::{NumericsError, Probability};
pub use quantizer::{CodeIndex, Codeword, QuantizerError, QuantizerKind, QuantizerSpec};
pub use signal::{GenerationMode, Hypothesis, SignalError, SystemConfig};

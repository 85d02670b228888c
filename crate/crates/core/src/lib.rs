//! Massive-MIMO symbol detection built around the penalized-sharing ADMM
//! detector and two unfolded variants: a network that learns the penalty
//! parameters end-to-end, and a cheaper network that replaces the
//! matrix-inversion update with a small per-layer MLP.
//!
//! The crate is organised as:
//!
//! * [`linalg`] — dense real matrices, Cholesky solves.
//! * [`rng`] — seeded, splittable random streams.
//! * [`model`] — complex-to-real system transform, channel/symbol/noise
//!   generation, quantization and SER accounting.
//! * [`psadmm`] — the classical detector with fixed penalties plus ZF/MMSE
//!   baselines.
//! * [`psnet`] — the unfolded detector with trainable penalty parameters.
//! * [`hnet`] — the MLP-based detector, its layer-wise trainer, and the
//!   inference cost model.
//! * [`bench`] — Monte-Carlo SER sweeps, layer sweeps and runtime benchmarks.
//! * [`export`] — CSV/SVG result export.

pub mod bench;
pub mod error;
pub mod export;
pub mod hnet;
pub mod linalg;
pub mod model;
pub mod psadmm;
pub mod psnet;
pub mod rng;

pub use error::{Error, Result};

//! Desk-scale simulator for communication-efficient distributed SGD.
//!
//! The crate implements the CSER algorithm family (error reset with partial
//! synchronization, plus its momentum variant and special cases) next to the
//! classic baselines it is measured against: QSparse-local-SGD, EF-SGD,
//! local SGD and fully synchronous SGD. Workers are simulated in-process on
//! a deterministic synchronization fabric that accounts every transmitted
//! bit, so algorithmic claims (model-bifurcation identities, error-reset
//! bounds, compression-ratio algebra) can be checked directly.
//!
//! Entry points:
//! - [`problems`] builds objective families with known smoothness constants
//!   and seeded stochastic gradient oracles.
//! - [`compressors`] provides the sparsifying compressors and their
//!   encoded-size accounting.
//! - [`optimizers`] holds per-round state transitions for every algorithm
//!   variant plus the analytical helpers (compression-ratio and error-bound
//!   factor algebra, step-size policies).
//! - [`syncfabric`] is the barrier-synchronized averaging layer with the
//!   communication ledger.
//! - [`harness`] runs seeded experiments, sweeps, and the verification
//!   suites; the `cser` binary is a thin CLI over it.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod compressors;
pub mod harness;
pub mod numerics;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod syncfabric;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid partition: d = {d}, blocks = {blocks} (need 1 <= blocks <= d)")]
    InvalidPartition { d: usize, blocks: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("worker index {worker} out of range for {n} workers")]
    WorkerOutOfRange { worker: usize, n: usize },

    #[error("label collision: series {0:?} emitted twice")]
    LabelCollision(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

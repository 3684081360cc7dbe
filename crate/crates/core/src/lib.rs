//! Quantum-circuit sequence encoders on a dense statevector simulator.
//!
//! The crate is layered bottom-up:
//!
//! - [`sim`]: statevector, gate kernels, QFT, depolarizing trajectories.
//! - [`circuit`]: a parameterized gate list with tags, text dumps and depth
//!   analysis.
//! - [`qnet`]: the QNet circuit (token encoding, per-dimension mixture
//!   layers, per-token feedforward layers).
//! - [`autodiff`]: adjoint, parameter-shift and finite-difference gradients
//!   plus a gradient checker.
//! - [`model`]: embeddings, QNet/ResQNet encoders, task heads and losses.
//! - [`train`]: Adam with a cosine schedule and the training loop.
//! - [`data`]: tokenization, vocabularies, loaders and synthetic corpora.
//! - [`cli`]: the `qnet` command-line tool.
//!
//! Qubit 0 is the least significant bit of a basis index everywhere.

pub mod autodiff;
pub mod circuit;
pub mod cli;
pub mod data;
pub mod error;
pub mod linalg;
pub mod model;
pub mod qnet;
pub mod sim;
pub mod train;

pub use error::{Error, Result};

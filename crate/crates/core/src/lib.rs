//! Truncated Euler–Maruyama (TEM) simulation of hybrid stochastic functional
//! differential equations with infinite fading-memory delay and Markovian
//! regime switching.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: fading-memory probability measures on `(-inf, 0]`
//!   (exponential-kernel mixtures plus point masses) and their exact
//!   quadrature weights against piecewise-linear histories.
//! - [`markov`]: generator matrices, `exp(dt Q)`, stationary distribution,
//!   skeleton sampling and the spectral quantity `eta_{q,y}`.
//! - [`phase`]: the bounded-memory history ring buffer and its
//!   piecewise-linear interpolant.
//! - [`model`]: per-regime drift/diffusion functionals, growth calibration
//!   and stability-parameter arithmetic.
//! - [`scheme`]: the stepping engine, depth rule and reproducible random
//!   streams.
//! - [`harness`]: convergence / stability experiments, spectral report and
//!   JSON configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod markov;
pub mod measures;
pub mod model;
pub mod phase;
pub mod scheme;

pub use error::{Error, Result};
pub use harness::config::ExperimentConfig;
pub use harness::{ConvergenceResult, DepthPolicy, SpectralReport, StabilityResult};
pub use markov::MarkovChain;
pub use measures::{CellWeights, FadingMeasure};
pub use model::{GrowthSpec, GrowthVariant, ModelSpec, StabilityParams, Term};
pub use phase::{HistoryBuffer, InitialData};
pub use scheme::{RngStream, SchemeConfig, SchemeVariant, StreamPurpose, Trajectory};

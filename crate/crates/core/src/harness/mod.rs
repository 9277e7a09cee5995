//! Experiment orchestration: coupled convergence study, mean-square
//! stability study, spectral certificate and configuration loading.

pub mod config;
pub mod convergence;
pub mod fit;
pub mod parallel;
pub mod spectral;
pub mod stability;

pub use convergence::{convergence_experiment, ConvergenceResult, ConvergenceSetup, DepthPolicy};
pub use fit::{fit_slope, LineFit};
pub use parallel::{pairwise_mean, pairwise_sum, run_paths};
pub use spectral::{spectral_report, ConditionFlags, SpectralReport};
pub use stability::{stability_experiment, StabilityResult, StabilitySetup};

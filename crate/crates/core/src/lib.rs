//! Conditional Gaussian nonlinear systems (CGNS): simulation, closed-form
//! filtering and smoothing, forward and backward posterior trajectory
//! sampling, and skill diagnostics.
//!
//! ```text
//! dx = (Λˣ(t,x) y + fˣ(t,x)) dt + Σ₁ˣ dW₁ + Σ₂ˣ dW₂
//! dy = (Λʸ(t,x) y + fʸ(t,x)) dt + Σ₁ʸ dW₁ + Σ₂ʸ dW₂
//! ```
//!
//! Given an observed path of `x`, the hidden `y` is conditionally Gaussian.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod io;
mod linalg;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod smoother;
pub mod triad;

pub use config::RunConfig;
pub use error::{CgnsError, Result};
pub use filter::{run_filter, GaussianState, PosteriorSeries, SeriesKind};
pub use model::{CgnsModel, CoefficientSnapshot, Dims, FnModel, LinearModel};
pub use sampler::{run_backward_sampler, run_forward_sampler, Direction, SamplerPlan, TrajectoryEnsemble};
pub use simulate::{simulate_path, TimeGrid, Trajectory};
pub use smoother::run_smoother;
pub use triad::{default_params, triad_model, TriadParams};

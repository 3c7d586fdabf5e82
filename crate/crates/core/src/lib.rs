//! Simulation of a reaction-diffusion process
//!
//! ```text
//! y_t - D Δy = f(y) + Σ_j g_j κ_j(t)          in Ω × (0, T), ∂y/∂n = 0
//! β_j κ_j' + κ_j = Σ_k α_jk w_k(∫ h_k (y - y*))
//! ```
//!
//! under closed-loop thermostat control, discretized with P1 finite elements
//! on a structured triangulation of `(-1, 1)^2`, implicit Euler in time and a
//! fixed number of Picard sweeps per step.

pub mod error;
pub mod convergence;
pub mod experiments;
pub mod fem;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod sparse;
pub mod stability;
pub mod stepper;

pub use error::{Error, Result};
pub use experiments::{make_experiment, preset, simulate, ExperimentConfig, FieldSpec, LayoutSpec};
pub use fem::NodalField;
pub use mesh::{build_mesh, Mesh};
pub use metrics::ErrorSeries;
pub use sparse::{cg_solve, CgOptions, CsrMatrix};
pub use stepper::{run, AssembledProblem, Observer, RunOptions, RunOutput, SchemeParams, SimState};

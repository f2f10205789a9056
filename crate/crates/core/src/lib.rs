//! Sturm attractors of axisymmetric parabolic equations
//!
//! ```text
//! u_t = a(θ, u, u_θ) (u_θθ + cot θ · u_θ) + f(θ, u, u_θ),   θ ∈ (0, π)
//! ```
//!
//! The equilibria are intersections of the shooting curves issuing from the
//! two singular poles. Their order at the poles gives the Sturm permutation,
//! from which the Morse indices, zero numbers and heteroclinic connection
//! graph of the global attractor follow. The [`pde`] module provides a
//! finite-volume solver to check connections by direct simulation.

pub mod expr;
pub mod model;
pub mod ode;
pub mod shooting;
pub mod equilibria;
pub mod grid;
pub mod permutation;
pub mod connections;
pub mod pde;
pub mod checks;
pub mod pipeline;

pub use checks::CheckResult;
pub use connections::{heteroclinic_edges, wolfrum_check, ConnectionError, ConnectionGraph};
pub use equilibria::{find_equilibria, EquilibriumError, EquilibriumOptions, EquilibriumRecord, EquilibriumSet};
pub use grid::GridFunction;
pub use model::{CoefficientField, CoefficientModel, ModelError, Numerics, ProblemConfig, ProblemSpec};
pub use pde::{simulate, verify_heteroclinic, PdeError, Scheme, Trajectory};
pub use permutation::{build_permutation, zero_number, PermutationError, SturmPermutation, ZeroNumberTable};
pub use pipeline::{analyze, scan, verify, Analysis, PipelineError, RunReport, Status, Suite};
pub use shooting::{SampledCurve, ShootingError};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shooting(#[from] ShootingError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Permutation(#[from] PermutationError),
    #[error(transparent)]
    Connection(#[from] ConnectionError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

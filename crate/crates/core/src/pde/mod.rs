//! Finite-difference discretization of the system on a Dirichlet box, a
//! Nehari-retracted gradient flow with optional symmetry projection, and
//! decay diagnostics (tail energies and fitted exponential rates).

mod decay;
mod discrete;
mod solver;
mod state;
mod system;

use thiserror::Error;

pub use decay::{
    annulus_envelope, fit_decay, fit_profile_decay, sliding_window_rates, tail_norms, ComponentDecay,
    DecayFit, DecayOptions, TailSeries,
};
pub use discrete::{energy, gradient, residual, Discretization, DiscreteTerms};
pub use solver::{
    orbit_seeds, seed_bumps, sign_diagnostics, solve_system, Bump, LogRow, SignClass, SignDiagnostic,
    SolveError, SolveOutcome, SolverConfig,
};
pub use state::SystemState;
pub use system::{Potential, SystemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("invalid system: {0}")]
    InvalidSpec(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("block {} leaves the admissible cone (condition N fails)", .block + 1)]
    ConditionNFails { block: usize },
    #[error("radius {radius} lies outside the box of half-width {half_width}")]
    RadiiOutOfBox { radius: f64, half_width: f64 },
    #[error("component {} falls below the noise floor at r = {radius}", .component + 1)]
    WindowBelowNoise { component: usize, radius: f64 },
    #[error("only {annuli} annuli in the fit window (need at least 4)")]
    DegenerateFit { annuli: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Symmetry(#[from] crate::symmetry::SymmetryError),
}

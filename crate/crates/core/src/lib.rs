//! Nonmonotone proximal gradient method for composite problems
//! `min psi(x) = f(x) + phi(x)`, where `f` is continuously differentiable
//! with a locally Lipschitz gradient and `phi` is lower semicontinuous,
//! possibly nonconvex and extended-valued.
//!
//! The crate provides the solver ([`solver`]), proximal maps for common
//! regularizers ([`prox`]), reproducible test instances ([`problems`]) and
//! trace diagnostics ([`diagnostics`]) that audit descent invariants and fit
//! convergence rates.

pub mod diagnostics;
pub mod error;
pub mod ext_real;
pub mod model;
pub mod params;
pub mod problems;
pub mod prox;
pub mod solver;
pub mod trace;
pub mod vector;

pub use error::{DiagnosticError, ParamError, ProblemError, SolveError};
pub use ext_real::ExtReal;
pub use model::{
    psi_eval, CompositeProblem, KlHypothesis, LipschitzClass, NonsmoothTerm, Optimum, SmoothModel,
};
pub use params::{GammaInitPolicy, ReferencePolicy, SolverParams};
pub use problems::{ProblemKind, ProblemSpec};
pub use solver::{solve, solve_recording};
pub use trace::{IterationRecord, RunResult, RunStatus};

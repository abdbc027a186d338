//! Evaluation interfaces for `psi = f + phi` and the problem container.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ProblemError;
use crate::ext_real::ExtReal;

/// Global Lipschitz constant of `f'`, if one is known.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LipschitzClass {
    GlobalL(f64),
    /// `f'` is only locally Lipschitz (quartics, exponentials, ...).
    LocalOnly,
}

/// The continuously differentiable part `f`.
///
/// Implementations must be pure: the same input gives bitwise the same
/// output. Non-finite values are allowed to escape; the solver turns them
/// into `RunStatus::NumericalFailure`.
pub trait SmoothModel: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    fn lipschitz_class(&self) -> LipschitzClass;
}

/// The lower semicontinuous, possibly nonconvex and extended-valued part `phi`.
pub trait NonsmoothTerm: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> ExtReal;

    /// One element of `argmin_z phi(z) + |z - v|^2 / (2 gamma)`, selected
    /// deterministically by the term's declared tie-break.
    fn prox(&self, gamma: f64, v: &[f64]) -> Vec<f64>;

    /// A point with `eval` finite.
    fn domain_witness(&self) -> Vec<f64>;

    fn name(&self) -> &'static str;

    /// One-dimensional restriction `t -> phi_i(t)` for terms that are a
    /// sum of per-coordinate functions. Used by the brute-force prox oracle.
    fn component(&self, _i: usize, _t: f64) -> Option<ExtReal> {
        None
    }

    /// `true` when the term is convex (the prox is then single-valued and
    /// nonexpansive).
    fn is_convex(&self) -> bool;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub psi_star: f64,
    pub x_star: Option<Vec<f64>>,
}

/// Declared Kurdyka-Lojasiewicz exponent of `psi` at the limit point.
/// It is a hypothesis attached to the instance, never computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlHypothesis {
    pub kappa: f64,
    pub note: String,
}

impl KlHypothesis {
    pub fn new(kappa: f64, note: impl Into<String>) -> Self {
        assert!(kappa > 0.0 && kappa < 1.0, "KL exponent must lie in (0, 1)");
        KlHypothesis {
            kappa,
            note: note.into(),
        }
    }

    /// `kappa >= 1/2`: linear regime.
    pub fn is_linear_regime(&self) -> bool {
        self.kappa >= 0.5
    }

    /// Predicted log-log slope of `R_k - psi*`, sublinear regime only.
    pub fn value_slope(&self) -> Option<f64> {
        (!self.is_linear_regime()).then(|| -1.0 / (1.0 - 2.0 * self.kappa))
    }

    /// Predicted log-log slope of `|x^k - x*|`, sublinear regime only.
    pub fn iterate_slope(&self) -> Option<f64> {
        (!self.is_linear_regime()).then(|| -self.kappa / (1.0 - 2.0 * self.kappa))
    }
}

#[derive(Clone, Debug)]
pub struct CompositeProblem {
    pub name: String,
    pub f: Arc<dyn SmoothModel>,
    pub phi: Arc<dyn NonsmoothTerm>,
    pub optimum: Option<Optimum>,
    pub kl_hypothesis: Option<KlHypothesis>,
}

impl CompositeProblem {
    pub fn new(
        name: impl Into<String>,
        f: Arc<dyn SmoothModel>,
        phi: Arc<dyn NonsmoothTerm>,
    ) -> Result<Self, ProblemError> {
        if f.dim() != phi.dim() {
            return Err(ProblemError::DimensionMismatch {
                what: "phi",
                expected: f.dim(),
                got: phi.dim(),
            });
        }
        Ok(CompositeProblem {
            name: name.into(),
            f,
            phi,
            optimum: None,
            kl_hypothesis: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// Attaches a known optimum. When `x_star` is given, `psi(x_star)` must
    /// agree with `psi_star` to `1e-10 * (1 + |psi_star|)`.
    pub fn with_optimum(mut self, optimum: Optimum) -> Result<Self, ProblemError> {
        if let Some(x_star) = &optimum.x_star {
            if x_star.len() != self.dim() {
                return Err(ProblemError::DimensionMismatch {
                    what: "x_star",
                    expected: self.dim(),
                    got: x_star.len(),
                });
            }
            let evaluated = self.psi(x_star).to_f64();
            let gap = (evaluated - optimum.psi_star).abs();
            if gap.is_nan() || gap > 1e-10 * (1.0 + optimum.psi_star.abs()) {
                return Err(ProblemError::InconsistentOptimum {
                    evaluated,
                    recorded: optimum.psi_star,
                });
            }
        }
        self.optimum = Some(optimum);
        Ok(self)
    }

    pub fn with_kl(mut self, hypothesis: KlHypothesis) -> Self {
        self.kl_hypothesis = Some(hypothesis);
        self
    }

    /// `psi(x) = f(x) + phi(x)`. Panics on a dimension mismatch.
    ///
    /// A non-finite `f(x)` is reported as `+inf` here; the solver checks `f`
    /// separately so that overflow is not mistaken for infeasibility.
    pub fn psi(&self, x: &[f64]) -> ExtReal {
        psi_eval(self, x)
    }
}

pub fn psi_eval(problem: &CompositeProblem, x: &[f64]) -> ExtReal {
    assert_eq!(
        x.len(),
        problem.dim(),
        "psi_eval: point has wrong dimension"
    );
    let phi = problem.phi.eval(x);
    if !phi.is_finite() {
        return ExtReal::PosInf;
    }
    match ExtReal::finite(problem.f.eval(x)) {
        Some(f) => f + phi,
        None => ExtReal::PosInf,
    }
}

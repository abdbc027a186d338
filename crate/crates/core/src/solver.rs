//! Nonmonotone proximal gradient method with a mean-type reference value.
//!
//! Each outer iteration picks a trial stepsize, computes a proximal
//! gradient step, and shrinks the stepsize until
//!
//! ```text
//! psi(x^{k+1}) <= R_k - (1 - alpha_k) / (2 gamma_k) * |x^{k+1} - x^k|^2
//! ```
//!
//! holds. The reference is then updated as the convex combination
//! `R_{k+1} = (1 - p) R_k + p psi(x^{k+1})` (mean rule) or as the maximum of
//! the last `W` objective values (max rule). `p = 1` and `W = 1` both give
//! the monotone method.

use std::collections::{HashMap, VecDeque};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use crate::error::SolveError;
use crate::model::{CompositeProblem, Optimum};
use crate::params::{GammaInitPolicy, ReferencePolicy, SolverParams};
use crate::trace::{IterationRecord, RunResult, RunStatus};
use crate::vector;

/// Why an inner backtracking loop gave up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepFailure {
    BacktrackCapExceeded,
    NumericalFailure,
}

impl From<StepFailure> for RunStatus {
    fn from(f: StepFailure) -> Self {
        match f {
            StepFailure::BacktrackCapExceeded => RunStatus::BacktrackCapExceeded,
            StepFailure::NumericalFailure => RunStatus::NumericalFailure,
        }
    }
}

/// The accepted step of one outer iteration.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub x_next: Vec<f64>,
    pub grad_next: Vec<f64>,
    pub gamma_used: f64,
    pub backtracks: usize,
    pub psi_next: f64,
    pub step_norm: f64,
    pub residual: f64,
}

/// Iteration state at `x^k`.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub psi_x: f64,
    pub reference: f64,
    pub grad_x: Vec<f64>,
    pub k: usize,
    /// Last accepted stepsize, `None` before the first step.
    pub gamma_prev: Option<f64>,
    /// `(x^k - x^{k-1}, f'(x^k) - f'(x^{k-1}))`, for spectral trial steps.
    pub last_difference: Option<(Vec<f64>, Vec<f64>)>,
    /// Recent objective values, only kept for the max rule.
    pub max_window: VecDeque<f64>,
}

impl SolverState {
    fn new(x: Vec<f64>, psi_x: f64, grad_x: Vec<f64>, params: &SolverParams) -> Self {
        let mut max_window = VecDeque::new();
        if let ReferencePolicy::Max { .. } = params.reference_policy {
            max_window.push_back(psi_x);
        }
        SolverState {
            x,
            psi_x,
            reference: psi_x,
            grad_x,
            k: 0,
            gamma_prev: None,
            last_difference: None,
            max_window,
        }
    }
}

/// `Prox_{gamma phi}(x - gamma f'(x))`. Returns `None` if the gradient or
/// the result is not finite.
pub fn subproblem_step(
    problem: &CompositeProblem,
    x: &[f64],
    grad_x: &[f64],
    gamma: f64,
) -> Option<Vec<f64>> {
    debug_assert!(gamma > 0.0);
    if !vector::all_finite(grad_x) {
        return None;
    }
    let forward = vector::axpy_neg(x, gamma, grad_x);
    let x_next = problem.phi.prox(gamma, &forward);
    vector::all_finite(&x_next).then_some(x_next)
}

/// Nonmonotone acceptance test:
/// `psi_next <= reference - (1 - alpha) / (2 gamma) * step_norm_sq`.
///
/// Evaluated as `psi_next - reference <= -margin`: the difference of two
/// nearby doubles is exact, while `reference - margin` rounds back to
/// `reference` once the margin drops below half an ulp.
pub fn accept_step(
    psi_next: f64,
    reference: f64,
    alpha: f64,
    gamma: f64,
    step_norm_sq: f64,
) -> bool {
    psi_next - reference <= -((1.0 - alpha) / (2.0 * gamma) * step_norm_sq)
}

/// `|(x_next - x) / gamma - f'(x_next) + f'(x)|`, which bounds the distance
/// of zero to the limiting subdifferential of `psi` at `x_next`.
pub fn residual(x_next: &[f64], x: &[f64], gamma: f64, grad_next: &[f64], grad_x: &[f64]) -> f64 {
    debug_assert!(gamma > 0.0);
    x_next
        .iter()
        .zip(x)
        .zip(grad_next.iter().zip(grad_x))
        .map(|((xn, xo), (gn, go))| {
            let c = (xn - xo) / gamma - gn + go;
            c * c
        })
        .sum::<f64>()
        .sqrt()
}

/// Mean-rule update `(1 - p) R + p psi_next`.
pub fn update_reference(reference: f64, p_next: f64, psi_next: f64) -> f64 {
    (1.0 - p_next) * reference + p_next * psi_next
}

/// Max-rule reference: the largest stored objective value.
pub fn max_rule_reference(window: &VecDeque<f64>) -> f64 {
    assert!(!window.is_empty(), "max-rule window is empty");
    window.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest `l >= 1` with `(1 - sqrt(1 - p_min)) sqrt(l) >= 1 + sqrt(1 - p_min)`.
pub fn compute_m(p_min: f64) -> usize {
    assert!(p_min > 0.0 && p_min <= 1.0, "p_min must lie in (0, 1]");
    let r = (1.0 - p_min).sqrt();
    let mut l = 1usize;
    while (1.0 - r) * (l as f64).sqrt() < 1.0 + r {
        l += 1;
    }
    l
}

fn initial_gamma(state: &SolverState, params: &SolverParams) -> f64 {
    let clip = |g: f64| g.clamp(params.gamma_min, params.gamma_max);
    match params.gamma_init_policy {
        GammaInitPolicy::Constant(g) => clip(g),
        GammaInitPolicy::PreviousAccepted => clip(state.gamma_prev.unwrap_or(params.gamma_max)),
        GammaInitPolicy::BarzilaiBorweinSafeguarded => match &state.last_difference {
            Some((dx, dg)) => {
                let sy = vector::dot(dx, dg);
                let yy = vector::norm_sq(dg);
                if sy > 0.0 && yy > 0.0 {
                    clip(sy / yy)
                } else {
                    params.gamma_max
                }
            }
            None => params.gamma_max,
        },
    }
}

/// Inner loop: shrink the trial stepsize by `beta` until the nonmonotone
/// acceptance test holds. At most `params.max_backtracks` trial stepsizes
/// are examined.
pub fn backtrack(
    problem: &CompositeProblem,
    state: &SolverState,
    params: &SolverParams,
) -> Result<StepOutcome, StepFailure> {
    let alpha = params.alpha();
    let beta = params.beta();
    let mut gamma = initial_gamma(state, params);
    for backtracks in 0..params.max_backtracks {
        let x_next = subproblem_step(problem, &state.x, &state.grad_x, gamma)
            .ok_or(StepFailure::NumericalFailure)?;
        let f_next = problem.f.eval(&x_next);
        if !f_next.is_finite() {
            return Err(StepFailure::NumericalFailure);
        }
        // The prox lands in dom(phi), so this is finite unless the term is broken.
        let psi_next = match problem.phi.eval(&x_next).as_finite() {
            Some(phi) => f_next + phi,
            None => f64::INFINITY,
        };
        let step_norm = vector::dist(&x_next, &state.x);
        if accept_step(
            psi_next,
            state.reference,
            alpha,
            gamma,
            step_norm * step_norm,
        ) {
            let grad_next = problem.f.grad(&x_next);
            if !vector::all_finite(&grad_next) {
                return Err(StepFailure::NumericalFailure);
            }
            let residual = residual(&x_next, &state.x, gamma, &grad_next, &state.grad_x);
            return Ok(StepOutcome {
                x_next,
                grad_next,
                gamma_used: gamma,
                backtracks,
                psi_next,
                step_norm,
                residual,
            });
        }
        gamma *= beta;
    }
    Err(StepFailure::BacktrackCapExceeded)
}

/// Runs the method from `x0` and returns the final point with its trace.
///
/// Contract violations (invalid parameters, wrong dimension, `x0` outside
/// `dom(phi)`) are errors; runtime failures are reported through
/// [`RunResult::status`] with the partial trace.
pub fn solve(
    problem: &CompositeProblem,
    params: &SolverParams,
    x0: &[f64],
) -> Result<RunResult, SolveError> {
    run(problem, params, x0, false)
}

/// As [`solve`], also storing every iterate in [`RunResult::iterates`].
pub fn solve_recording(
    problem: &CompositeProblem,
    params: &SolverParams,
    x0: &[f64],
) -> Result<RunResult, SolveError> {
    run(problem, params, x0, true)
}

fn run(
    problem: &CompositeProblem,
    params: &SolverParams,
    x0: &[f64],
    record_iterates: bool,
) -> Result<RunResult, SolveError> {
    params.validate()?;
    if x0.len() != problem.dim() {
        return Err(SolveError::DimensionMismatch {
            expected: problem.dim(),
            got: x0.len(),
        });
    }
    let phi0 = problem
        .phi
        .eval(x0)
        .as_finite()
        .ok_or(SolveError::InfeasibleStart)?;

    let started = Instant::now();
    let mut iterates = record_iterates.then(|| vec![x0.to_vec()]);
    let mut trace = Vec::new();
    let finish = |status, x_final: Vec<f64>, trace, iterates| RunResult {
        status,
        x_final,
        trace,
        iterates,
        wall_time: started.elapsed().as_secs_f64(),
    };

    let f0 = problem.f.eval(x0);
    let grad0 = problem.f.grad(x0);
    if !f0.is_finite() || !vector::all_finite(&grad0) {
        return Ok(finish(
            RunStatus::NumericalFailure,
            x0.to_vec(),
            trace,
            iterates,
        ));
    }
    let mut state = SolverState::new(x0.to_vec(), f0 + phi0, grad0, params);
    let mut xi = 0.0;

    while state.k < params.max_outer_iters {
        let step = match backtrack(problem, &state, params) {
            Ok(step) => step,
            Err(failure) => {
                return Ok(finish(failure.into(), state.x, trace, iterates));
            }
        };
        trace.push(IterationRecord {
            k: state.k,
            psi: state.psi_x,
            reference: state.reference,
            gamma: step.gamma_used,
            backtracks: step.backtracks,
            step_norm: step.step_norm,
            residual: step.residual,
            xi,
        });
        if let Some(it) = iterates.as_mut() {
            it.push(step.x_next.clone());
        }
        if step.residual <= params.epsilon {
            return Ok(finish(
                RunStatus::ConvergedResidual,
                step.x_next,
                trace,
                iterates,
            ));
        }

        let reference_next = match params.reference_policy {
            ReferencePolicy::Mean => update_reference(state.reference, params.p_min, step.psi_next),
            ReferencePolicy::Max { window } => {
                state.max_window.push_back(step.psi_next);
                while state.max_window.len() > window {
                    state.max_window.pop_front();
                }
                max_rule_reference(&state.max_window)
            }
        };
        xi = (state.reference - reference_next).max(0.0).sqrt();

        let dx = vector::sub(&step.x_next, &state.x);
        let dg = vector::sub(&step.grad_next, &state.grad_x);
        state.last_difference = Some((dx, dg));
        state.x = step.x_next;
        state.grad_x = step.grad_next;
        state.psi_x = step.psi_next;
        state.reference = reference_next;
        state.gamma_prev = Some(step.gamma_used);
        state.k += 1;
    }
    Ok(finish(RunStatus::MaxIters, state.x, trace, iterates))
}

/// Iteration cap of the high-accuracy reference solve.
pub const REFERENCE_MAX_ITERS: usize = 1_000_000;
/// Residual tolerance of the high-accuracy reference solve.
pub const REFERENCE_EPSILON: f64 = 1e-12;

fn reference_cache() -> &'static Mutex<HashMap<String, Optimum>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Optimum>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Problem name plus `f`, its gradient and `phi` evaluated at two probe
/// points, so instances that share a name but not their data do not collide.
fn cache_key(problem: &CompositeProblem) -> String {
    let n = problem.dim();
    let witness = problem.phi.domain_witness();
    let probe: Vec<f64> = (0..n)
        .map(|i| 0.5 + 0.25 * ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    let mut key = format!("{}|{}", problem.name, n);
    for x in [&witness, &probe] {
        key.push_str(&format!("|{:016x}", problem.f.eval(x).to_bits()));
        key.push_str(&format!("|{:?}", problem.phi.eval(x)));
        for g in problem.f.grad(x) {
            key.push_str(&format!(":{:016x}", g.to_bits()));
        }
    }
    key
}

/// High-accuracy optimum from a long monotone run (`p = 1`,
/// `epsilon = 1e-12`) started at `phi`'s domain witness. Results are cached
/// per problem instance.
///
/// Only meaningful for problems with a unique minimizer.
pub fn reference_optimum(problem: &CompositeProblem) -> Result<Optimum, SolveError> {
    let key = cache_key(problem);
    if let Some(opt) = reference_cache().lock().unwrap().get(&key) {
        return Ok(opt.clone());
    }
    let params = SolverParams {
        p_min: 1.0,
        epsilon: REFERENCE_EPSILON,
        max_outer_iters: REFERENCE_MAX_ITERS,
        ..SolverParams::default()
    };
    let run = solve(problem, &params, &problem.phi.domain_witness())?;
    let psi_star = problem.psi(&run.x_final).to_f64();
    let opt = Optimum {
        psi_star,
        x_star: Some(run.x_final),
    };
    reference_cache().lock().unwrap().insert(key, opt.clone());
    Ok(opt)
}

/// Attaches [`reference_optimum`] unless an optimum is already known.
pub fn with_reference_optimum(problem: CompositeProblem) -> Result<CompositeProblem, SolveError> {
    if problem.optimum.is_some() {
        return Ok(problem);
    }
    let opt = reference_optimum(&problem)?;
    Ok(CompositeProblem {
        optimum: Some(opt),
        ..problem
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_lasso_identity, make_quartic_scalar};
    use crate::prox::ZeroTerm;
    use std::sync::Arc;

    #[derive(Debug)]
    struct HalfSquare;
    impl crate::SmoothModel for HalfSquare {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &[f64]) -> f64 {
            0.5 * x[0] * x[0]
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0]]
        }
        fn lipschitz_class(&self) -> crate::LipschitzClass {
            crate::LipschitzClass::GlobalL(1.0)
        }
    }

    fn half_square() -> CompositeProblem {
        CompositeProblem::new(
            "half_square",
            Arc::new(HalfSquare),
            Arc::new(ZeroTerm { dim: 1 }),
        )
        .unwrap()
    }

    #[test]
    fn accept_step_examples() {
        assert!(accept_step(4.9, 5.0, 0.5, 1.0, 0.1));
        assert!(!accept_step(5.0, 5.0, 0.5, 1.0, 0.1));
        assert!(accept_step(5.0, 5.0, 0.5, 1.0, 0.0));
        assert!(!accept_step(5.0 + 1e-12, 5.0, 0.5, 1.0, 0.0));
        // The margin is far below an ulp of the reference: no decrease, no acceptance.
        assert!(!accept_step(2.1, 2.1, 0.9, 1.0, 1e-18));
        assert!(accept_step(2.1 - f64::EPSILON * 2.1, 2.1, 0.9, 1.0, 1e-18));
    }

    #[test]
    fn update_reference_examples() {
        assert_eq!(update_reference(10.0, 0.5, 6.0), 8.0);
        assert_eq!(update_reference(10.0, 1.0, 6.0), 6.0);
        assert_eq!(update_reference(3.25, 0.3, 3.25), 3.25);
    }

    #[test]
    fn max_rule_examples() {
        assert_eq!(
            max_rule_reference(&VecDeque::from(vec![3.0, 5.0, 4.0])),
            5.0
        );
        assert_eq!(max_rule_reference(&VecDeque::from(vec![2.5])), 2.5);
    }

    #[test]
    fn residual_examples() {
        let g = [0.3, -1.0];
        let r = residual(&[1.0, 2.0], &[0.0, 0.0], 1.0, &g, &g);
        assert!((r - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            residual(&[1.0, 2.0], &[1.0, 2.0], 0.7, &[4.0, 1.0], &[4.0, 1.0]),
            0.0
        );
    }

    #[test]
    fn compute_m_examples() {
        assert_eq!(compute_m(1.0), 1);
        assert_eq!(compute_m(0.75), 9);
        assert_eq!(compute_m(0.96), 3);
    }

    #[test]
    fn subproblem_reduces_to_gradient_step() {
        let p = half_square();
        assert_eq!(subproblem_step(&p, &[2.0], &[2.0], 0.25), Some(vec![1.5]));
        assert_eq!(subproblem_step(&p, &[2.0], &[f64::NAN], 0.25), None);
    }

    #[test]
    fn subproblem_lasso_identity() {
        let p = make_lasso_identity(vec![2.0, 0.5], 1.0).unwrap();
        // At x = b the gradient vanishes, so the step is soft(b, lambda).
        let x = [2.0, 0.5];
        let g = p.f.grad(&x);
        assert_eq!(subproblem_step(&p, &x, &g, 1.0), Some(vec![1.0, 0.0]));
        // x_star is a fixed point.
        let xs = [1.0, 0.0];
        let g = p.f.grad(&xs);
        assert_eq!(subproblem_step(&p, &xs, &g, 1.0), Some(vec![1.0, 0.0]));
    }

    #[test]
    fn backtrack_accepts_exact_step() {
        let p = half_square();
        let params = SolverParams {
            alpha_min: 0.5,
            alpha_max: 0.5,
            ..Default::default()
        };
        let state = SolverState::new(vec![1.0], 0.5, vec![1.0], &params);
        let out = backtrack(&p, &state, &params).unwrap();
        assert_eq!(out.x_next, vec![0.0]);
        assert_eq!(out.backtracks, 0);
        assert_eq!(out.psi_next, 0.0);
    }

    #[test]
    fn backtrack_shrinks_on_quartic() {
        let p = make_quartic_scalar();
        let params = SolverParams::default();
        let x = vec![10.0];
        let state = SolverState::new(x.clone(), p.f.eval(&x), p.f.grad(&x), &params);
        let out = backtrack(&p, &state, &params).unwrap();
        assert!(out.backtracks >= 1);
        assert!(out.gamma_used < params.gamma_max);
        assert!(accept_step(
            out.psi_next,
            state.reference,
            params.alpha(),
            out.gamma_used,
            out.step_norm * out.step_norm
        ));
    }

    #[test]
    fn backtrack_at_stationary_point() {
        let p = make_lasso_identity(vec![2.0, 0.5], 1.0).unwrap();
        let params = SolverParams::default();
        let x = vec![1.0, 0.0];
        let state = SolverState::new(x.clone(), p.psi(&x).to_f64(), p.f.grad(&x), &params);
        let out = backtrack(&p, &state, &params).unwrap();
        assert_eq!(out.step_norm, 0.0);
        assert_eq!(out.backtracks, 0);
        assert_eq!(out.residual, 0.0);
    }

    #[test]
    fn backtrack_cap() {
        let p = make_quartic_scalar();
        let params = SolverParams {
            max_backtracks: 1,
            ..Default::default()
        };
        let x = vec![10.0];
        let state = SolverState::new(x.clone(), p.f.eval(&x), p.f.grad(&x), &params);
        assert_eq!(
            backtrack(&p, &state, &params).unwrap_err(),
            StepFailure::BacktrackCapExceeded
        );
    }

    #[test]
    fn solve_lasso_identity() {
        let p = make_lasso_identity(vec![2.0, 0.5], 1.0).unwrap();
        let params = SolverParams {
            epsilon: 1e-10,
            ..Default::default()
        };
        let run = solve(&p, &params, &[0.0, 0.0]).unwrap();
        assert_eq!(run.status, RunStatus::ConvergedResidual);
        assert!(vector::dist(&run.x_final, &[1.0, 0.0]) <= 1e-6);
        assert!(run.final_residual().unwrap() <= 1e-10);
    }

    #[test]
    fn solve_from_stationary_point() {
        let p = make_lasso_identity(vec![2.0, 0.5], 1.0).unwrap();
        let run = solve(&p, &SolverParams::default(), &[1.0, 0.0]).unwrap();
        assert_eq!(run.status, RunStatus::ConvergedResidual);
        assert_eq!(run.iterations(), 1);
        assert_eq!(run.trace[0].residual, 0.0);

        let eps0 = SolverParams {
            epsilon: 0.0,
            ..Default::default()
        };
        let run = solve(&p, &eps0, &[1.0, 0.0]).unwrap();
        assert_eq!(run.status, RunStatus::ConvergedResidual);
    }

    #[test]
    fn solve_rejects_bad_input() {
        let p = crate::problems::make_sparsity_projected_quadratic(
            ndarray::Array2::eye(2),
            vec![3.0, -1.0],
            1,
        )
        .unwrap();
        assert_eq!(
            solve(&p, &SolverParams::default(), &[1.0, 1.0]).unwrap_err(),
            SolveError::InfeasibleStart
        );
        assert!(matches!(
            solve(&p, &SolverParams::default(), &[1.0]).unwrap_err(),
            SolveError::DimensionMismatch { .. }
        ));
        let bad = SolverParams {
            beta_min: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            solve(&p, &bad, &[0.0, 0.0]).unwrap_err(),
            SolveError::Params(_)
        ));
    }

    #[test]
    fn zero_backtracks_fails_immediately() {
        let p = make_lasso_identity(vec![2.0, 0.5], 1.0).unwrap();
        let params = SolverParams {
            max_backtracks: 0,
            ..Default::default()
        };
        let run = solve(&p, &params, &[0.0, 0.0]).unwrap();
        assert_eq!(run.status, RunStatus::BacktrackCapExceeded);
        assert!(run.trace.is_empty());
    }

    #[test]
    fn overflow_is_numerical_failure() {
        let a = ndarray::Array2::from_elem((1, 1), 1.0);
        let p = crate::problems::make_exp_fit_l1(a, vec![1.0], 0.1).unwrap();
        let run = solve(&p, &SolverParams::default(), &[800.0]).unwrap();
        assert_eq!(run.status, RunStatus::NumericalFailure);
    }

    #[test]
    fn iterates_are_recorded() {
        let p = make_quartic_scalar();
        let params = SolverParams {
            epsilon: 0.0,
            max_outer_iters: 25,
            ..Default::default()
        };
        let run = solve_recording(&p, &params, &[1.0]).unwrap();
        let it = run.iterates.unwrap();
        assert_eq!(it.len(), 26);
        assert_eq!(it.last().unwrap(), &run.x_final);
        assert_eq!(run.status, RunStatus::MaxIters);
    }
}

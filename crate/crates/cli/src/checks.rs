//! Property checks behind `nmprox check`.

use std::time::Instant;

use nmprox::diagnostics::{self, audit_trace, DEFAULT_TAIL_FRACTION};
use nmprox::prox;
use nmprox::solver::{self, compute_m, solve, solve_recording};
use nmprox::{
    vector, ExtReal, ProblemKind, ProblemSpec, ReferencePolicy, RunResult, RunStatus, SolverParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::X0Policy;
use crate::experiment::SLOPE_TOLERANCE;
use crate::output;

pub type SeparableKernel = fn(&[f64], f64) -> Vec<f64>;
pub type BoxKernel = fn(&[f64], &[f64], &[f64]) -> Vec<f64>;
pub type SparsityKernel = fn(&[f64], usize) -> Vec<f64>;

/// The closed-form proximal maps under test. Swappable so that the suite
/// itself can be tested against deliberately broken kernels.
#[derive(Clone, Copy)]
pub struct ProxKernels {
    pub l1: SeparableKernel,
    pub l0: SeparableKernel,
    pub lhalf: SeparableKernel,
    pub box_clamp: BoxKernel,
    pub sparsity: SparsityKernel,
}

impl Default for ProxKernels {
    fn default() -> Self {
        ProxKernels {
            l1: prox::prox_l1,
            l0: prox::prox_l0,
            lhalf: prox::prox_lhalf,
            box_clamp: prox::prox_box,
            sparsity: prox::prox_sparsity,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

pub const CHECK_NAMES: [&str; 15] = [
    "prox_l1_oracle",
    "prox_l0_oracle",
    "prox_lhalf_oracle",
    "prox_box_oracle",
    "prox_sparsity_enumeration",
    "gradient_oracle",
    "suite_audit",
    "suite_stationarity",
    "suite_monotone_psi",
    "max_window_one_identity",
    "compute_m_table",
    "rate_q_linear",
    "rate_sublinear",
    "lasso_identity_optimality",
    "sparsity_example",
];

/// Largest allowed prox-objective gap to the grid oracle.
pub const PROX_GAP_TOL: f64 = 1e-8;
pub const GRADIENT_TOL: f64 = 1e-6;

/// One solver run of the policy x problem x start grid.
pub struct SuiteRun {
    pub kind: ProblemKind,
    pub policy: &'static str,
    pub start: X0Policy,
    pub params: SolverParams,
    pub result: RunResult,
}

impl SuiteRun {
    pub fn label(&self) -> String {
        format!("{:?}/{}/{:?}", self.kind, self.policy, self.start)
    }
}

pub fn suite_policies() -> Vec<(&'static str, SolverParams)> {
    vec![
        ("monotone", SolverParams::monotone()),
        ("mean", SolverParams::default()),
        (
            "max",
            SolverParams {
                reference_policy: ReferencePolicy::Max { window: 10 },
                ..Default::default()
            },
        ),
    ]
}

pub const SUITE_STARTS: [X0Policy; 3] = [X0Policy::Zeros, X0Policy::Seeded(1), X0Policy::Seeded(2)];

/// Every problem kind (seed 0) under every suite policy from every suite start.
pub fn suite_runs() -> Vec<SuiteRun> {
    use rayon::prelude::*;
    let mut jobs = Vec::new();
    for kind in ProblemKind::ALL {
        for (policy, params) in suite_policies() {
            for start in SUITE_STARTS {
                jobs.push((kind, policy, start, params.clone()));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(kind, policy, start, params)| {
            let problem = ProblemSpec::new(kind, 0)
                .build()
                .expect("default instance builds");
            let x0 = start.initial_point(&problem, 0);
            let result = solve(&problem, &params, &x0).expect("suite inputs are valid");
            SuiteRun {
                kind,
                policy,
                start,
                params,
                result,
            }
        })
        .collect()
}

fn outcome(name: &'static str, started: Instant, pass: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name,
        pass,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

pub fn suite_audit(runs: &[SuiteRun]) -> CheckOutcome {
    let started = Instant::now();
    let mut failures = Vec::new();
    for run in runs {
        if run.result.status.is_error() {
            failures.push(format!("{}: {:?}", run.label(), run.result.status));
        }
        let report = audit_trace(&run.result.trace, &run.params);
        for c in report.failures() {
            failures.push(format!(
                "{}: {} worst {:.3e}",
                run.label(),
                c.name,
                c.worst_violation
            ));
        }
    }
    let detail = if failures.is_empty() {
        format!("{} runs, all checks within slack", runs.len())
    } else {
        failures.join("; ")
    };
    outcome("suite_audit", started, failures.is_empty(), detail)
}

pub fn suite_stationarity(runs: &[SuiteRun]) -> CheckOutcome {
    let started = Instant::now();
    let converged: Vec<_> = runs
        .iter()
        .filter(|r| r.result.status == RunStatus::ConvergedResidual)
        .collect();
    let bad: Vec<String> = converged
        .iter()
        .filter(|r| {
            r.result
                .final_residual()
                .is_none_or(|res| res.is_nan() || res > r.params.epsilon)
        })
        .map(|r| r.label())
        .collect();
    let detail = format!(
        "{} of {} runs converged; residual above epsilon: {:?}",
        converged.len(),
        runs.len(),
        bad
    );
    outcome("suite_stationarity", started, bad.is_empty(), detail)
}

pub fn suite_monotone_psi(runs: &[SuiteRun]) -> CheckOutcome {
    let started = Instant::now();
    let mut bad = Vec::new();
    let mut checked = 0;
    for run in runs
        .iter()
        .filter(|r| r.params.p_min == 1.0 && r.params.reference_policy == ReferencePolicy::Mean)
    {
        checked += 1;
        if let Some(w) = run.result.trace.windows(2).find(|w| w[1].psi > w[0].psi) {
            bad.push(format!("{} at k={}", run.label(), w[1].k));
        }
    }
    let detail = format!("{checked} monotone runs; increases: {bad:?}");
    outcome(
        "suite_monotone_psi",
        started,
        bad.is_empty() && checked > 0,
        detail,
    )
}

/// Prox-objective gaps of a separable kernel against the grid oracle.
/// Returns the worst gap and the worst argmin mismatch over `ties`, cases
/// where both `0` and `v` minimize and the kernel must return `0`.
fn separable_gaps(
    kernel: SeparableKernel,
    phi: impl Fn(f64) -> ExtReal + Copy,
    cases: &[(f64, f64)],
    ties: &[(f64, f64)],
    lambda: f64,
) -> (f64, f64) {
    let objective = |t: f64, v: f64, gamma: f64| match phi(t) {
        ExtReal::Finite(p) => lambda * p + (t - v) * (t - v) / (2.0 * gamma),
        ExtReal::PosInf => f64::INFINITY,
    };
    let oracle = |v: f64, gamma: f64| {
        let span = v.abs() + 1.0;
        let scaled = |t: f64| match phi(t) {
            ExtReal::Finite(p) => ExtReal::Finite(lambda * p),
            inf => inf,
        };
        diagnostics::brute_force_prox_1d(scaled, gamma, v, -span, span, 1e-4)
    };
    let mut worst_gap = f64::NEG_INFINITY;
    for &(v, gamma) in cases.iter().chain(ties) {
        let z = kernel(&[v], gamma * lambda)[0];
        let t = oracle(v, gamma);
        let gap = objective(z, v, gamma) - objective(t, v, gamma);
        worst_gap = worst_gap.max(gap);
    }
    let mut worst_tie = 0.0f64;
    for &(v, gamma) in ties {
        let z = kernel(&[v], gamma * lambda)[0];
        worst_tie = worst_tie.max((z - oracle(v, gamma)).abs());
    }
    (worst_gap, worst_tie)
}

pub struct CheckSuite {
    pub kernels: ProxKernels,
    /// Randomized cases per oracle check.
    pub cases: usize,
    pub seed: u64,
}

impl Default for CheckSuite {
    fn default() -> Self {
        CheckSuite {
            kernels: ProxKernels::default(),
            cases: 100,
            seed: 2024,
        }
    }
}

impl CheckSuite {
    fn random_cases(&self, salt: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
        (0..self.cases)
            .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(0.05..3.0)))
            .collect()
    }

    fn separable_check(
        &self,
        name: &'static str,
        kernel: SeparableKernel,
        phi: impl Fn(f64) -> ExtReal + Copy,
        lambda: f64,
        ties: &[(f64, f64)],
        salt: u64,
    ) -> CheckOutcome {
        let started = Instant::now();
        let (gap, tie) = separable_gaps(kernel, phi, &self.random_cases(salt), ties, lambda);
        let pass = gap <= PROX_GAP_TOL && tie <= 1e-9;
        let detail = format!(
            "{} cases, worst objective gap {gap:.3e}, worst tie mismatch {tie:.3e}",
            self.cases + ties.len()
        );
        outcome(name, started, pass, detail)
    }

    pub fn prox_l1_oracle(&self) -> CheckOutcome {
        self.separable_check(
            "prox_l1_oracle",
            self.kernels.l1,
            |t| ExtReal::Finite(t.abs()),
            0.7,
            &[],
            1,
        )
    }

    /// Includes exact ties `v^2 / (2 gamma) = lambda = 1`, where the kernel
    /// must return `0` like the oracle.
    pub fn prox_l0_oracle(&self) -> CheckOutcome {
        let ties = [(2.0, 2.0), (-1.0, 0.5), (3.0, 4.5), (-0.5, 0.125)];
        let phi = |t: f64| ExtReal::Finite(if t == 0.0 { 0.0 } else { 1.0 });
        self.separable_check("prox_l0_oracle", self.kernels.l0, phi, 1.0, &ties, 2)
    }

    pub fn prox_lhalf_oracle(&self) -> CheckOutcome {
        let phi = |t: f64| ExtReal::Finite(t.abs().sqrt());
        self.separable_check("prox_lhalf_oracle", self.kernels.lhalf, phi, 0.7, &[], 3)
    }

    pub fn prox_box_oracle(&self) -> CheckOutcome {
        let started = Instant::now();
        let (lo, hi) = (-1.0, 2.0);
        let phi = |t: f64| {
            if (lo..=hi).contains(&t) {
                ExtReal::ZERO
            } else {
                ExtReal::PosInf
            }
        };
        let mut worst = f64::NEG_INFINITY;
        for (v, gamma) in self.random_cases(4) {
            let z = (self.kernels.box_clamp)(&[v], &[lo], &[hi])[0];
            let t = diagnostics::brute_force_prox_1d(phi, gamma, v, lo - 1.0, hi + 1.0, 1e-4);
            let obj = |x: f64| (phi(x) + (x - v) * (x - v) / (2.0 * gamma)).to_f64();
            worst = worst.max(obj(z) - obj(t));
        }
        let detail = format!("{} cases, worst objective gap {worst:.3e}", self.cases);
        outcome("prox_box_oracle", started, worst <= PROX_GAP_TOL, detail)
    }

    /// Exact agreement with support enumeration for `n <= 12`, `s <= 4`,
    /// with repeated magnitudes to exercise tie-breaking.
    pub fn prox_sparsity_enumeration(&self) -> CheckOutcome {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 5);
        let mut mismatches = 0;
        for _ in 0..self.cases {
            let n = rng.random_range(1..=12);
            let s = rng.random_range(1..=n.min(4));
            let v: Vec<f64> = (0..n)
                .map(|_| match rng.random_range(0..4) {
                    0 => 1.0,
                    1 => -1.0,
                    _ => rng.random_range(-3.0..3.0),
                })
                .collect();
            if (self.kernels.sparsity)(&v, s) != diagnostics::enumerate_sparsity_projection(&v, s) {
                mismatches += 1;
            }
        }
        let detail = format!("{} cases, {mismatches} mismatches", self.cases);
        outcome(
            "prox_sparsity_enumeration",
            started,
            mismatches == 0,
            detail,
        )
    }

    pub fn gradient_oracle(&self) -> CheckOutcome {
        let started = Instant::now();
        let mut worst = 0.0f64;
        let mut worst_kind = None;
        for kind in ProblemKind::ALL {
            let problem = ProblemSpec::new(kind, 0)
                .build()
                .expect("default instance builds");
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 6);
            for _ in 0..20 {
                let x: Vec<f64> = (0..problem.dim())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                let err = diagnostics::gradient_relative_error(problem.f.as_ref(), &x);
                if err > worst {
                    worst = err;
                    worst_kind = Some(kind);
                }
            }
        }
        let detail =
            format!("6 models x 20 points, worst relative error {worst:.3e} ({worst_kind:?})");
        outcome("gradient_oracle", started, worst <= GRADIENT_TOL, detail)
    }

    pub fn max_window_one_identity(&self) -> CheckOutcome {
        let started = Instant::now();
        let problem = ProblemSpec::new(ProblemKind::LassoGeneral, 0)
            .build()
            .expect("builds");
        let x0 = X0Policy::Seeded(1).initial_point(&problem, 0);
        let max1 = SolverParams {
            reference_policy: ReferencePolicy::Max { window: 1 },
            ..Default::default()
        };
        let a = solve(&problem, &SolverParams::monotone(), &x0).expect("valid");
        let b = solve(&problem, &max1, &x0).expect("valid");
        let pass = a.trace == b.trace && a.x_final == b.x_final;
        let detail = format!(
            "{} vs {} records, identical: {pass}",
            a.trace.len(),
            b.trace.len()
        );
        outcome("max_window_one_identity", started, pass, detail)
    }

    pub fn compute_m_table(&self) -> CheckOutcome {
        let started = Instant::now();
        let mut rows = Vec::new();
        let mut pass = true;
        for i in 1..=20 {
            let p = i as f64 * 0.05;
            let (m, oracle) = (compute_m(p), diagnostics::brute_force_m(p));
            pass &= m == oracle;
            rows.push(format!("{p:.2}:{m}"));
        }
        let spots = [(1.0, 1), (0.75, 9), (0.96, 3)];
        for (p, expected) in spots {
            pass &= compute_m(p) == expected;
        }
        outcome("compute_m_table", started, pass, rows.join(" "))
    }

    pub fn rate_q_linear(&self) -> CheckOutcome {
        let started = Instant::now();
        let problem = ProblemSpec::new(ProblemKind::LassoGeneral, 0)
            .build()
            .expect("builds");
        let problem = solver::with_reference_optimum(problem).expect("reference solve");
        let psi_star = problem.optimum.as_ref().expect("attached").psi_star;
        let x0 = vec![0.0; problem.dim()];
        let mut pass = true;
        let mut parts = Vec::new();
        for (label, params) in [
            ("monotone", SolverParams::monotone()),
            ("mean", SolverParams::default()),
        ] {
            let run = solve(&problem, &params, &x0).expect("valid");
            let refs = run.references();
            let n = diagnostics::usable_prefix(&refs, psi_star);
            match diagnostics::estimate_q_factor(&refs[..n], psi_star, DEFAULT_TAIL_FRACTION) {
                Ok(r) => {
                    pass &= r.pass;
                    parts.push(format!(
                        "{label}: Q {:.4} over {:?}",
                        r.fitted, r.tail_window
                    ));
                }
                Err(e) => {
                    pass = false;
                    parts.push(format!("{label}: {e}"));
                }
            }
        }
        outcome("rate_q_linear", started, pass, parts.join(", "))
    }

    pub fn rate_sublinear(&self) -> CheckOutcome {
        let started = Instant::now();
        let problem = ProblemSpec::new(ProblemKind::QuarticScalar, 0)
            .build()
            .expect("builds");
        let kl = problem.kl_hypothesis.clone().expect("declared");
        let params = SolverParams {
            epsilon: 0.0,
            max_outer_iters: 100_000,
            ..Default::default()
        };
        let run = solve_recording(&problem, &params, &[1.0]).expect("valid");
        let refs = run.references();
        let n = diagnostics::usable_prefix(&refs, 0.0);
        let values = diagnostics::fit_loglog_slope(&refs[..n], 0.0, DEFAULT_TAIL_FRACTION)
            .map(|r| r.with_prediction(kl.value_slope().expect("sublinear"), SLOPE_TOLERANCE));
        let iterates = &run.iterates.as_ref().expect("recorded")[..run.trace.len()];
        let dist = diagnostics::iterate_distance_series(iterates, &[0.0]);
        let dist = diagnostics::fit_loglog_slope(&dist, 0.0, DEFAULT_TAIL_FRACTION)
            .map(|r| r.with_prediction(kl.iterate_slope().expect("sublinear"), SLOPE_TOLERANCE));
        let (pass, detail) = match (values, dist) {
            (Ok(v), Ok(d)) => (
                v.pass && d.pass && run.iterations() == 100_000,
                format!(
                    "{} iterations, value slope {:.4} (predicted {}), iterate slope {:.4} (predicted {})",
                    run.iterations(),
                    v.fitted,
                    v.predicted.unwrap_or(f64::NAN),
                    d.fitted,
                    d.predicted.unwrap_or(f64::NAN)
                ),
            ),
            (v, d) => (false, format!("fit failed: {:?} / {:?}", v.err(), d.err())),
        };
        outcome("rate_sublinear", started, pass, detail)
    }

    pub fn lasso_identity_optimality(&self) -> CheckOutcome {
        let started = Instant::now();
        let lambda = 0.5;
        let problem = ProblemSpec::new(ProblemKind::LassoIdentity, 0)
            .with_lambda(lambda)
            .build()
            .expect("builds");
        let x_star = problem
            .optimum
            .as_ref()
            .and_then(|o| o.x_star.clone())
            .expect("closed form");
        let b: Vec<f64> = problem
            .f
            .grad(&vec![0.0; problem.dim()])
            .iter()
            .map(|g| -g)
            .collect();
        let params = SolverParams::default();
        let tol = params.epsilon + 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 7);
        let (mut worst_dist, mut worst_kkt) = (0.0f64, f64::NEG_INFINITY);
        let mut all_converged = true;
        for _ in 0..10 {
            let x0: Vec<f64> = (0..problem.dim())
                .map(|_| rng.random_range(-5.0..5.0))
                .collect();
            let run = solve(&problem, &params, &x0).expect("valid");
            all_converged &= run.status == RunStatus::ConvergedResidual;
            worst_dist = worst_dist.max(vector::norm_inf(&vector::sub(&run.x_final, &x_star)));
            for (x, bi) in run.x_final.iter().zip(&b) {
                let g = x - bi;
                // Excess over the optimality conditions of 0.5 |x - b|^2 + lambda |x|_1.
                let excess = if *x == 0.0 {
                    g.abs() - lambda
                } else {
                    (g + lambda * x.signum()).abs()
                };
                worst_kkt = worst_kkt.max(excess);
            }
        }
        let pass = all_converged && worst_dist <= 1e-6 && worst_kkt <= tol;
        let detail = format!(
            "10 starts, worst |x - x*|_inf {worst_dist:.3e}, worst optimality excess {worst_kkt:.3e}"
        );
        outcome("lasso_identity_optimality", started, pass, detail)
    }

    pub fn sparsity_example(&self) -> CheckOutcome {
        let started = Instant::now();
        let problem = ProblemSpec::new(ProblemKind::SparsityProjectedQuadratic, 0)
            .with_data(Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), vec![3.0, -1.0])
            .with_sparsity(1)
            .build()
            .expect("builds");
        let run = solve_recording(&problem, &SolverParams::default(), &[0.0, 0.0]).expect("valid");
        let err = vector::norm_inf(&vector::sub(&run.x_final, &[3.0, 0.0]));
        let iterates = run.iterates.as_ref().expect("recorded");
        let max_nnz = iterates[1..]
            .iter()
            .map(|x| x.iter().filter(|v| **v != 0.0).count())
            .max()
            .unwrap_or(0);
        let pass = run.status == RunStatus::ConvergedResidual && err <= 1e-10 && max_nnz <= 1;
        let detail = format!(
            "x_final {:?} after {} iterations, error {err:.3e}, max nonzeros {max_nnz}",
            run.x_final,
            run.iterations()
        );
        outcome("sparsity_example", started, pass, detail)
    }

    /// Runs the checks whose name contains `filter` (all when `None`).
    pub fn run(&self, filter: Option<&str>) -> Vec<CheckOutcome> {
        let selected: Vec<&'static str> = CHECK_NAMES
            .into_iter()
            .filter(|n| filter.is_none_or(|f| n.contains(f)))
            .collect();
        let needs_suite = selected.iter().any(|n| n.starts_with("suite_"));
        let started = Instant::now();
        let runs = if needs_suite {
            suite_runs()
        } else {
            Vec::new()
        };
        let suite_seconds = started.elapsed().as_secs_f64();
        selected
            .into_iter()
            .map(|name| match name {
                "prox_l1_oracle" => self.prox_l1_oracle(),
                "prox_l0_oracle" => self.prox_l0_oracle(),
                "prox_lhalf_oracle" => self.prox_lhalf_oracle(),
                "prox_box_oracle" => self.prox_box_oracle(),
                "prox_sparsity_enumeration" => self.prox_sparsity_enumeration(),
                "gradient_oracle" => self.gradient_oracle(),
                "suite_audit" => {
                    let mut o = suite_audit(&runs);
                    o.seconds += suite_seconds;
                    o
                }
                "suite_stationarity" => suite_stationarity(&runs),
                "suite_monotone_psi" => suite_monotone_psi(&runs),
                "max_window_one_identity" => self.max_window_one_identity(),
                "compute_m_table" => self.compute_m_table(),
                "rate_q_linear" => self.rate_q_linear(),
                "rate_sublinear" => self.rate_sublinear(),
                "lasso_identity_optimality" => self.lasso_identity_optimality(),
                "sparsity_example" => self.sparsity_example(),
                other => unreachable!("unknown check {other}"),
            })
            .collect()
    }
}

/// Bytes of the trace file for one solve, used to compare repeated runs.
pub fn trace_bytes(spec: &ProblemSpec, params: &SolverParams, start: X0Policy) -> Vec<u8> {
    let problem = spec.build().expect("builds");
    let x0 = start.initial_point(&problem, 0);
    let run = solve(&problem, params, &x0).expect("valid");
    output::trace_csv_bytes(&run.trace)
}

pub fn format_table(outcomes: &[CheckOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(&format!(
            "{:<4} {:<26} {:>8.3}s  {}\n",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        ));
    }
    out
}

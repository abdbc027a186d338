use nmprox::diagnostics::{self, audit_trace, check_names};
use nmprox::solver;
use nmprox::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn policies() -> Vec<(&'static str, SolverParams)> {
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

fn start(problem: &CompositeProblem, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..problem.dim())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    if problem.phi.eval(&v).is_finite() {
        v
    } else {
        problem.phi.prox(1.0, &v)
    }
}

#[test]
fn every_kind_policy_and_start_passes_the_audit() {
    for kind in ProblemKind::ALL {
        let problem = ProblemSpec::new(kind, 0).build().unwrap();
        for (name, params) in policies() {
            for seed in 0..3 {
                let x0 = start(&problem, seed);
                let run = solve(&problem, &params, &x0).unwrap();
                assert!(
                    !run.status.is_error(),
                    "{kind:?}/{name}/{seed}: {:?}",
                    run.status
                );
                let report = audit_trace(&run.trace, &params);
                let failures: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
                assert!(report.passed(), "{kind:?}/{name}/{seed}: {failures:?}");
                if run.status == RunStatus::ConvergedResidual {
                    assert!(run.final_residual().unwrap() <= params.epsilon);
                }
            }
        }
    }
}

#[test]
fn monotone_runs_never_increase_psi() {
    let params = SolverParams::monotone();
    for kind in ProblemKind::ALL {
        let problem = ProblemSpec::new(kind, 3).build().unwrap();
        let run = solve(&problem, &params, &start(&problem, 7)).unwrap();
        for w in run.trace.windows(2) {
            assert!(w[1].psi <= w[0].psi, "{kind:?} at k={}", w[1].k);
        }
    }
}

#[test]
fn max_rule_with_unit_window_is_the_monotone_method() {
    let monotone = SolverParams::monotone();
    let max1 = SolverParams {
        reference_policy: ReferencePolicy::Max { window: 1 },
        ..Default::default()
    };
    for kind in [ProblemKind::LassoGeneral, ProblemKind::QuarticRegressionL0] {
        let problem = ProblemSpec::new(kind, 0).build().unwrap();
        let x0 = start(&problem, 1);
        let a = solve(&problem, &monotone, &x0).unwrap();
        let b = solve(&problem, &max1, &x0).unwrap();
        assert_eq!(a.trace, b.trace, "{kind:?}");
        assert_eq!(a.x_final, b.x_final);
    }
}

#[test]
fn mean_rule_with_unit_weight_is_the_monotone_method() {
    let problem = ProblemSpec::new(ProblemKind::ExpFitL1, 2).build().unwrap();
    let mean1 = SolverParams {
        p_min: 1.0,
        ..Default::default()
    };
    let x0 = start(&problem, 4);
    let a = solve(&problem, &SolverParams::monotone(), &x0).unwrap();
    let b = solve(&problem, &mean1, &x0).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn nonmonotone_rule_backtracks_no_more_than_monotone() {
    let problem = ProblemSpec::new(ProblemKind::LassoGeneral, 0)
        .build()
        .unwrap();
    let x0 = vec![0.0; problem.dim()];
    let mono = solve(&problem, &SolverParams::monotone(), &x0).unwrap();
    let mean = solve(&problem, &SolverParams::default(), &x0).unwrap();
    assert_eq!(mono.status, RunStatus::ConvergedResidual);
    assert_eq!(mean.status, RunStatus::ConvergedResidual);
    assert!(mean.total_backtracks() <= mono.total_backtracks());
}

#[test]
fn lasso_identity_reaches_soft_threshold_from_random_starts() {
    let problem = ProblemSpec::new(ProblemKind::LassoIdentity, 11)
        .build()
        .unwrap();
    let x_star = problem.optimum.as_ref().unwrap().x_star.clone().unwrap();
    let lambda = ProblemKind::LassoIdentity.default_lambda();
    let b: Vec<f64> = problem
        .f
        .grad(&vec![0.0; problem.dim()])
        .iter()
        .map(|g| -g)
        .collect();
    let params = SolverParams::default();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x0: Vec<f64> = (0..problem.dim())
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        let run = solve(&problem, &params, &x0).unwrap();
        assert_eq!(run.status, RunStatus::ConvergedResidual);
        assert!(vector::norm_inf(&vector::sub(&run.x_final, &x_star)) <= 1e-6);
        // 0 in x - b + lambda * sign(x), componentwise
        let tol = params.epsilon + 1e-12;
        for (x, bi) in run.x_final.iter().zip(&b) {
            let g = x - bi;
            if *x == 0.0 {
                assert!(g.abs() <= lambda + tol);
            } else {
                assert!((g + lambda * x.signum()).abs() <= tol);
            }
        }
    }
}

#[test]
fn sparsity_projection_example_converges_to_dominant_coordinate() {
    let problem = ProblemSpec::new(ProblemKind::SparsityProjectedQuadratic, 0)
        .with_data(Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), vec![3.0, -1.0])
        .with_sparsity(1)
        .build()
        .unwrap();
    let run = solve_recording(&problem, &SolverParams::default(), &[0.0, 0.0]).unwrap();
    assert_eq!(run.status, RunStatus::ConvergedResidual);
    assert!((run.x_final[0] - 3.0).abs() <= 1e-10);
    assert!(run.x_final[1].abs() <= 1e-10);
    for x in &run.iterates.unwrap()[1..] {
        assert!(x.iter().filter(|v| **v != 0.0).count() <= 1);
    }
}

#[test]
fn nonconvex_problems_terminate() {
    for kind in [ProblemKind::QuarticRegressionL0, ProblemKind::ExpFitL1] {
        for seed in 0..3 {
            let problem = ProblemSpec::new(kind, seed).build().unwrap();
            let run = solve(&problem, &SolverParams::default(), &start(&problem, seed)).unwrap();
            assert_eq!(
                run.status,
                RunStatus::ConvergedResidual,
                "{kind:?} seed {seed}"
            );
        }
    }
}

#[test]
fn quartic_rates_match_the_exponent_quarter_predictions() {
    let problem = ProblemSpec::new(ProblemKind::QuarticScalar, 0)
        .build()
        .unwrap();
    let kl = problem.kl_hypothesis.clone().unwrap();
    let params = SolverParams {
        epsilon: 0.0,
        max_outer_iters: 100_000,
        ..SolverParams::monotone()
    };
    let run = solve_recording(&problem, &params, &[1.0]).unwrap();
    assert_eq!(run.status, RunStatus::MaxIters);
    let refs = run.references();
    let n = diagnostics::usable_prefix(&refs, 0.0);
    let values = diagnostics::fit_loglog_slope(&refs[..n], 0.0, 0.5)
        .unwrap()
        .with_prediction(kl.value_slope().unwrap(), 0.15);
    assert!(values.pass, "{values:?}");
    let iterates = &run.iterates.as_ref().unwrap()[..run.trace.len()];
    let dist = diagnostics::iterate_distance_series(iterates, &[0.0]);
    let iterate = diagnostics::fit_loglog_slope(&dist, 0.0, 0.5)
        .unwrap()
        .with_prediction(kl.iterate_slope().unwrap(), 0.15);
    assert!(iterate.pass, "{iterate:?}");
}

#[test]
fn lasso_general_converges_q_linearly_with_both_rules() {
    let problem = solver::with_reference_optimum(
        ProblemSpec::new(ProblemKind::LassoGeneral, 0)
            .build()
            .unwrap(),
    )
    .unwrap();
    let psi_star = problem.optimum.as_ref().unwrap().psi_star;
    for params in [SolverParams::monotone(), SolverParams::default()] {
        let run = solve(&problem, &params, &vec![0.0; problem.dim()]).unwrap();
        let refs = run.references();
        let n = diagnostics::usable_prefix(&refs, psi_star);
        let report = diagnostics::estimate_q_factor(&refs[..n], psi_star, 0.5).unwrap();
        assert!(report.pass, "{report:?}");
    }
}

#[test]
fn xi_series_matches_recorded_column() {
    let problem = ProblemSpec::new(ProblemKind::LassoGeneral, 1)
        .build()
        .unwrap();
    let run = solve(&problem, &SolverParams::default(), &start(&problem, 0)).unwrap();
    let xi = diagnostics::xi_series(&run.trace).unwrap();
    assert_eq!(xi.len(), run.trace.len() - 1);
    for (computed, record) in xi.iter().zip(&run.trace[1..]) {
        assert!((computed - record.xi).abs() <= 1e-12);
    }
}

#[test]
fn lasso_identity_iterates_approach_closed_form() {
    let problem = ProblemSpec::new(ProblemKind::LassoIdentity, 5)
        .build()
        .unwrap();
    let x_star = problem.optimum.as_ref().unwrap().x_star.clone().unwrap();
    let params = SolverParams {
        gamma_init_policy: GammaInitPolicy::Constant(0.3),
        ..Default::default()
    };
    let run = solve_recording(&problem, &params, &start(&problem, 2)).unwrap();
    let dist = diagnostics::iterate_distance_series(run.iterates.as_ref().unwrap(), &x_star);
    assert!(*dist.last().unwrap() <= 1e-6);
    assert!(dist.first().unwrap() > dist.last().unwrap());
}

fn valid_trace() -> (Vec<IterationRecord>, SolverParams) {
    let params = SolverParams::default();
    let problem = ProblemSpec::new(ProblemKind::LassoGeneral, 0)
        .build()
        .unwrap();
    let run = solve(&problem, &params, &start(&problem, 1)).unwrap();
    assert!(run.trace.len() > 8);
    assert!(audit_trace(&run.trace, &params).passed());
    (run.trace, params)
}

#[test]
fn audit_catches_reference_increase() {
    let (mut trace, params) = valid_trace();
    trace[5].reference = trace[4].reference + 1.0;
    let report = audit_trace(&trace, &params);
    let check = report.check(check_names::REFERENCE_NONINCREASING).unwrap();
    assert!(!check.pass, "{report:?}");
    assert!(check.worst_violation > 0.0);
}

#[test]
fn audit_catches_reference_below_psi() {
    let (mut trace, params) = valid_trace();
    trace[4].psi = trace[4].reference + 1e-3;
    let report = audit_trace(&trace, &params);
    assert!(!report.check(check_names::REFERENCE_DOMINATES).unwrap().pass);
}

#[test]
fn audit_catches_insufficient_decrease() {
    let (mut trace, params) = valid_trace();
    // A long step with an unchanged reference cannot satisfy the per-step decrease.
    trace[3].step_norm = 10.0;
    let report = audit_trace(&trace, &params);
    assert!(!report.check(check_names::SUFFICIENT_DECREASE).unwrap().pass);
    assert!(!report.check(check_names::XI_STEP_BOUND).unwrap().pass);
}

#[test]
fn single_record_audit_passes() {
    let (trace, params) = valid_trace();
    assert!(audit_trace(&trace[..1], &params).passed());
}

#[test]
fn reference_optimum_cache_separates_instances() {
    let spec = ProblemSpec::new(ProblemKind::LassoGeneral, 0).with_dim(8);
    let a = spec.build().unwrap();
    let b = spec.clone().with_lambda(0.5).build().unwrap();
    let c = spec.with_data(None, vec![1.0; 8]).build().unwrap();
    let psi = |p: &CompositeProblem| solver::reference_optimum(p).unwrap().psi_star;
    let (pa, pb, pc) = (psi(&a), psi(&b), psi(&c));
    assert_ne!(pa, pb);
    assert_ne!(pa, pc);
    assert_eq!(pa, psi(&a));
    for (p, v) in [(&a, pa), (&b, pb), (&c, pc)] {
        let opt = solver::reference_optimum(p).unwrap();
        assert!((p.psi(opt.x_star.as_ref().unwrap()).to_f64() - v).abs() == 0.0);
    }
}

use nmprox_cli::checks::{CheckSuite, ProxKernels, CHECK_NAMES};

/// Hard threshold that keeps `v` on the tie `v^2 / 2 = tau` instead of `0`.
fn prox_l0_flipped(v: &[f64], tau: f64) -> Vec<f64> {
    v.iter()
        .map(|&x| if 0.5 * x * x >= tau { x } else { 0.0 })
        .collect()
}

fn prox_l1_shrinks_too_little(v: &[f64], tau: f64) -> Vec<f64> {
    nmprox::prox::prox_l1(v, 0.9 * tau)
}

fn prox_sparsity_prefers_high_index(v: &[f64], s: usize) -> Vec<f64> {
    let rev: Vec<f64> = v.iter().rev().copied().collect();
    let mut z = nmprox::prox::prox_sparsity(&rev, s);
    z.reverse();
    z
}

fn suite_with(kernels: ProxKernels) -> CheckSuite {
    CheckSuite {
        kernels,
        ..Default::default()
    }
}

#[test]
fn pristine_kernels_pass_the_oracles() {
    for o in CheckSuite::default().run(Some("prox_")) {
        assert!(o.pass, "{}: {}", o.name, o.detail);
    }
}

#[test]
fn flipped_l0_tie_break_fails_the_oracle() {
    let suite = suite_with(ProxKernels {
        l0: prox_l0_flipped,
        ..Default::default()
    });
    let o = suite.prox_l0_oracle();
    assert!(!o.pass, "{}", o.detail);
    assert!(suite.prox_l1_oracle().pass);
}

#[test]
fn wrong_threshold_fails_the_oracle() {
    let suite = suite_with(ProxKernels {
        l1: prox_l1_shrinks_too_little,
        ..Default::default()
    });
    assert!(!suite.prox_l1_oracle().pass);
}

#[test]
fn wrong_sparsity_tie_break_fails_enumeration() {
    let suite = suite_with(ProxKernels {
        sparsity: prox_sparsity_prefers_high_index,
        ..Default::default()
    });
    assert!(!suite.prox_sparsity_enumeration().pass);
}

#[test]
fn filter_selects_by_substring() {
    let names: Vec<_> = CheckSuite::default()
        .run(Some("rate_"))
        .into_iter()
        .map(|o| o.name)
        .collect();
    assert_eq!(names, vec!["rate_q_linear", "rate_sublinear"]);
    assert!(CheckSuite::default().run(Some("nothing")).is_empty());
    assert_eq!(CHECK_NAMES.len(), 15);
}

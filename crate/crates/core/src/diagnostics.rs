//! Post-hoc analysis of solver traces and brute-force oracles.
//!
//! Audits check the descent invariants every run must satisfy: the
//! reference dominates the objective, the reference never increases, and
//! each step pays for itself through the reference decrease
//! `R_{k+1} - R_k <= -p_min * a * |x^{k+1} - x^k|^2` with
//! `a = (1 - alpha_max) / (2 gamma_max)`. Rate fits compare a trace
//! against the behavior predicted by a declared KL exponent.

use serde::{Deserialize, Serialize};

use crate::error::DiagnosticError;
use crate::ext_real::ExtReal;
use crate::model::SmoothModel;
use crate::params::{ReferencePolicy, SolverParams};
use crate::trace::IterationRecord;
use crate::vector;

const REL_SLACK: f64 = 1e-12;
const ABS_SLACK: f64 = 1e-10;

/// Minimum number of points in a rate-fit window (when available).
pub const MIN_TAIL_POINTS: usize = 50;
/// Default fraction of the trace used for rate fits.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;
/// A Q-factor estimate must not exceed this to count as linear.
pub const Q_FACTOR_PASS: f64 = 0.999;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub pass: bool,
    /// Largest observed violation, in the same units as `slack`.
    pub worst_violation: f64,
    pub slack: f64,
    /// `false` when the check does not apply to this run.
    pub applicable: bool,
}

impl AuditCheck {
    fn new(name: &str, worst_violation: f64, slack: f64) -> Self {
        AuditCheck {
            name: name.to_string(),
            pass: worst_violation <= slack,
            worst_violation,
            slack,
            applicable: true,
        }
    }

    fn not_applicable(name: &str) -> Self {
        AuditCheck {
            name: name.to_string(),
            pass: true,
            worst_violation: 0.0,
            slack: 0.0,
            applicable: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

pub mod check_names {
    pub const REFERENCE_DOMINATES: &str = "reference_dominates_psi";
    pub const REFERENCE_NONINCREASING: &str = "reference_nonincreasing";
    pub const SUFFICIENT_DECREASE: &str = "sufficient_decrease";
    pub const XI_CONSISTENCY: &str = "xi_consistency";
    pub const XI_STEP_BOUND: &str = "xi_step_bound";
    pub const STEP_NORM_DECAY: &str = "step_norm_decay";
}

/// Largest violation, or `0` when there is nothing to compare.
fn worst_of(it: impl Iterator<Item = f64>) -> f64 {
    it.reduce(f64::max).unwrap_or(0.0)
}

/// Evaluates every trace invariant and reports the worst violation of each.
///
/// The per-step decrease checks (`sufficient_decrease`, `xi_step_bound`)
/// follow from the mean-rule update only; for the max rule they are
/// reported as not applicable.
pub fn audit_trace(trace: &[IterationRecord], params: &SolverParams) -> AuditReport {
    use check_names::*;
    let mut checks = Vec::with_capacity(6);

    let worst = worst_of(
        trace
            .iter()
            .map(|r| (r.psi - r.reference) / (1.0 + r.psi.abs())),
    );
    checks.push(AuditCheck::new(REFERENCE_DOMINATES, worst, REL_SLACK));

    let worst = worst_of(
        trace
            .windows(2)
            .map(|w| (w[1].reference - w[0].reference) / (1.0 + w[0].reference.abs())),
    );
    checks.push(AuditCheck::new(REFERENCE_NONINCREASING, worst, REL_SLACK));

    let mean_rule = params.reference_policy == ReferencePolicy::Mean;
    let a = params.decrease_constant();
    if mean_rule {
        let worst = worst_of(trace.windows(2).map(|w| {
            w[1].reference - w[0].reference + params.p_min * a * w[0].step_norm * w[0].step_norm
        }));
        checks.push(AuditCheck::new(SUFFICIENT_DECREASE, worst, ABS_SLACK));
    } else {
        checks.push(AuditCheck::not_applicable(SUFFICIENT_DECREASE));
    }

    let first = trace.first().map_or(0.0, |r| r.xi.abs());
    let worst = worst_of(
        trace
            .windows(2)
            .map(|w| (w[1].xi * w[1].xi - (w[0].reference - w[1].reference)).abs()),
    )
    .max(first);
    checks.push(AuditCheck::new(XI_CONSISTENCY, worst, REL_SLACK));

    if mean_rule {
        let scale = (a * params.p_min).sqrt();
        let worst = worst_of(trace.windows(2).map(|w| scale * w[0].step_norm - w[1].xi));
        checks.push(AuditCheck::new(XI_STEP_BOUND, worst, ABS_SLACK));
    } else {
        checks.push(AuditCheck::not_applicable(XI_STEP_BOUND));
    }

    let n = trace.len();
    if n >= 10 {
        let block = n.div_ceil(10);
        let mean =
            |rs: &[IterationRecord]| rs.iter().map(|r| r.step_norm).sum::<f64>() / rs.len() as f64;
        let head = mean(&trace[..block]);
        let tail = mean(&trace[n - block..]);
        checks.push(AuditCheck::new(STEP_NORM_DECAY, tail - head, 0.0));
    } else {
        checks.push(AuditCheck::not_applicable(STEP_NORM_DECAY));
    }

    AuditReport { checks }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    QLinear,
    SublinearPower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub mode: RateMode,
    /// Q-factor estimate or log-log slope.
    pub fitted: f64,
    /// Predicted slope; `None` for the linear regime, where only the
    /// existence of a factor below one is predicted.
    pub predicted: Option<f64>,
    pub tolerance: Option<f64>,
    /// Half-open index range `[start, end)` of the fitted window.
    pub tail_window: (usize, usize),
    pub pass: bool,
}

impl RateReport {
    /// Grades a slope fit against a prediction.
    pub fn with_prediction(mut self, predicted: f64, tolerance: f64) -> Self {
        self.predicted = Some(predicted);
        self.tolerance = Some(tolerance);
        if self.mode == RateMode::SublinearPower {
            self.pass = (self.fitted - predicted).abs() <= tolerance;
        }
        self
    }
}

/// Length of the prefix of `values` whose gap to `psi_star` is still above
/// the float floor `10 * eps * |psi_star|`. Use it to cut traces that
/// reached float exactness before fitting a rate.
pub fn usable_prefix(values: &[f64], psi_star: f64) -> usize {
    let floor = 10.0 * f64::EPSILON * psi_star.abs();
    values
        .iter()
        .rposition(|v| v - psi_star > floor)
        .map_or(0, |i| i + 1)
}

fn tail_window(n: usize, tail_fraction: f64) -> Result<(usize, usize), DiagnosticError> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(DiagnosticError::BadTailFraction(tail_fraction));
    }
    let len = ((tail_fraction * n as f64).ceil() as usize)
        .max(MIN_TAIL_POINTS.min(n))
        .min(n);
    if len < 2 {
        return Err(DiagnosticError::InsufficientData {
            needed: 2,
            got: len,
        });
    }
    Ok((n - len, n))
}

fn tail_gaps(
    values: &[f64],
    psi_star: f64,
    tail_fraction: f64,
) -> Result<((usize, usize), Vec<f64>), DiagnosticError> {
    let window = tail_window(values.len(), tail_fraction)?;
    let gaps: Vec<f64> = values[window.0..window.1]
        .iter()
        .map(|v| v - psi_star)
        .collect();
    if let Some((i, &g)) = gaps
        .iter()
        .enumerate()
        .find(|(_, g)| g.is_nan() || **g <= 0.0)
    {
        return Err(DiagnosticError::NonpositiveTail {
            index: window.0 + i,
            value: g,
        });
    }
    Ok((window, gaps))
}

/// Geometric mean of consecutive gap ratios `s_{k+1} / s_k` over the tail.
pub fn estimate_q_factor(
    values: &[f64],
    psi_star: f64,
    tail_fraction: f64,
) -> Result<RateReport, DiagnosticError> {
    let (window, gaps) = tail_gaps(values, psi_star, tail_fraction)?;
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    let mean_log = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
    let fitted = mean_log.exp();
    let pass = fitted <= Q_FACTOR_PASS && ratios.iter().all(|&r| r <= 1.0 + 1e-10);
    Ok(RateReport {
        mode: RateMode::QLinear,
        fitted,
        predicted: None,
        tolerance: None,
        tail_window: window,
        pass,
    })
}

/// Least-squares slope of `ln s_k` against `ln k` over the tail window,
/// where `k` is the position in `values`. `k = 0` is skipped.
///
/// The returned report has `pass = false` until graded with
/// [`RateReport::with_prediction`].
pub fn fit_loglog_slope(
    values: &[f64],
    psi_star: f64,
    tail_fraction: f64,
) -> Result<RateReport, DiagnosticError> {
    let (window, gaps) = tail_gaps(values, psi_star, tail_fraction)?;
    let points: Vec<(f64, f64)> = gaps
        .iter()
        .enumerate()
        .map(|(i, g)| (window.0 + i, g))
        .filter(|(k, _)| *k > 0)
        .map(|(k, g)| ((k as f64).ln(), g.ln()))
        .collect();
    if points.len() < 2 {
        return Err(DiagnosticError::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(RateReport {
        mode: RateMode::SublinearPower,
        fitted: sxy / sxx,
        predicted: None,
        tolerance: None,
        tail_window: window,
        pass: false,
    })
}

/// `|x^k - x_star|` for every stored iterate.
pub fn iterate_distance_series(iterates: &[Vec<f64>], x_star: &[f64]) -> Vec<f64> {
    iterates.iter().map(|x| vector::dist(x, x_star)).collect()
}

/// `Xi_k = sqrt(R_k - R_{k+1})` for consecutive records.
///
/// Fails with `NegativeGap` if the reference rises by more than the audit
/// slack; smaller float-level rises are clamped to zero.
pub fn xi_series(trace: &[IterationRecord]) -> Result<Vec<f64>, DiagnosticError> {
    if trace.len() < 2 {
        return Err(DiagnosticError::InsufficientData {
            needed: 2,
            got: trace.len(),
        });
    }
    trace
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let gap = w[0].reference - w[1].reference;
            if gap < -REL_SLACK * (1.0 + w[0].reference.abs()) {
                Err(DiagnosticError::NegativeGap {
                    index: i,
                    amount: -gap,
                })
            } else {
                Ok(gap.max(0.0).sqrt())
            }
        })
        .collect()
}

/// Splits the series into four consecutive blocks and checks that block
/// sums do not grow, the finite-length signature of a convergent sequence.
pub fn tail_blocks_nonincreasing(series: &[f64]) -> bool {
    if series.len() < 4 {
        return true;
    }
    let q = series.len() / 4;
    let sums: Vec<f64> = (0..4)
        .map(|b| {
            let end = if b == 3 { series.len() } else { (b + 1) * q };
            series[b * q..end].iter().sum()
        })
        .collect();
    // The last block may hold up to three extra entries.
    sums.windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300)
}

/// Grid minimizer of `t -> phi(t) + (t - v)^2 / (2 gamma)` over `[lo, hi]`
/// followed by ternary-search refinement inside the winning cell. The
/// point `t = 0` is always a candidate, since nonconvex terms jump there.
pub fn brute_force_prox_1d(
    phi: impl Fn(f64) -> ExtReal,
    gamma: f64,
    v: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> f64 {
    assert!(lo < hi && step > 0.0 && gamma > 0.0);
    let objective = |t: f64| phi(t) + (t - v) * (t - v) / (2.0 * gamma);

    let cells = ((hi - lo) / step).ceil() as usize;
    let mut best_t = lo;
    let mut best = objective(lo);
    for i in 1..=cells {
        let t = (lo + i as f64 * step).min(hi);
        let val = objective(t);
        if val < best {
            best = val;
            best_t = t;
        }
    }

    let (mut a, mut b) = ((best_t - step).max(lo), (best_t + step).min(hi));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if objective(m1) < objective(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let refined = 0.5 * (a + b);
    let mut candidates = vec![refined];
    if lo <= 0.0 && 0.0 <= hi {
        candidates.push(0.0);
    }
    for t in candidates {
        let val = objective(t);
        if val < best || (val == best && t == 0.0) {
            best = val;
            best_t = t;
        }
    }
    best_t
}

/// Brute-force projection onto `{|x|_0 <= s}`: enumerates every support of
/// size `s` and keeps the one closest to `v`. Among equally close supports
/// the lexicographically smallest index set wins.
pub fn enumerate_sparsity_projection(v: &[f64], s: usize) -> Vec<f64> {
    let n = v.len();
    assert!(n <= 20, "enumeration oracle is for small dimensions");
    let s = s.min(n);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut support: Vec<usize> = (0..s).collect();
    loop {
        // Sorted so that equal multisets of dropped entries sum identically.
        let mut dropped: Vec<f64> = (0..n)
            .filter(|i| !support.contains(i))
            .map(|i| v[i] * v[i])
            .collect();
        dropped.sort_by(f64::total_cmp);
        let dropped: f64 = dropped.iter().sum();
        if best.as_ref().is_none_or(|(d, _)| dropped < *d) {
            best = Some((dropped, support.clone()));
        }
        // Next combination in lexicographic order.
        let mut i = s;
        loop {
            if i == 0 {
                let (_, keep) = best.expect("at least one support");
                let mut z = vec![0.0; n];
                for k in keep {
                    z[k] = v[k];
                }
                return z;
            }
            i -= 1;
            if support[i] < n - s + i {
                support[i] += 1;
                for j in i + 1..s {
                    support[j] = support[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Central differences with step `h_i = max(1e-6, 1e-6 |x_i|)`.
pub fn finite_diff_gradient(f: &dyn SmoothModel, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = (1e-6 * x[i].abs()).max(1e-6);
            probe[i] = x[i] + h;
            let up = f.eval(&probe);
            probe[i] = x[i] - h;
            let down = f.eval(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|g_fd - g|_inf / max(1, |g|_inf)` at `x`.
pub fn gradient_relative_error(f: &dyn SmoothModel, x: &[f64]) -> f64 {
    let analytic = f.grad(x);
    let numeric = finite_diff_gradient(f, x);
    let diff = vector::norm_inf(&vector::sub(&analytic, &numeric));
    diff / vector::norm_inf(&analytic).max(1.0)
}

/// Smallest `l >= 1` with `(1 - sqrt(1 - p_min)) sqrt(l) >= 1 + sqrt(1 - p_min)`,
/// enumerated on the squared form `l (1 - r)^2 >= (1 + r)^2` so that it
/// shares no arithmetic with the solver's scan.
pub fn brute_force_m(p_min: f64) -> usize {
    let r = (1.0 - p_min).sqrt();
    let lhs = (1.0 - r) * (1.0 - r);
    let rhs = (1.0 + r) * (1.0 + r);
    (1..).find(|&l| l as f64 * lhs >= rhs).unwrap()
}

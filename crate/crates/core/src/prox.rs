//! Proximal maps and the regularizers built on them.
//!
//! Every prox here is exact up to float rounding, except the `l_{1/2}`
//! kernel which solves a scalar stationarity equation by bisection.
//! Set-valued cases resolve ties toward zero (separable terms) or toward
//! the lower index (sparsity projection).

use serde::{Deserialize, Serialize};

use crate::ext_real::ExtReal;
use crate::model::NonsmoothTerm;

/// Soft threshold, the prox of `tau * |.|_1`.
pub fn prox_l1(v: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau > 0.0);
    v.iter()
        .map(|&vi| vi.signum() * (vi.abs() - tau).max(0.0))
        .map(|z| if z == 0.0 { 0.0 } else { z })
        .collect()
}

/// Hard threshold, the prox of `tau * |.|_0`. A component survives only if
/// keeping it is strictly cheaper than zeroing it: `v_i^2 / 2 > tau`.
pub fn prox_l0(v: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau > 0.0);
    v.iter()
        .map(|&vi| if 0.5 * vi * vi > tau { vi } else { 0.0 })
        .collect()
}

fn lhalf_objective(t: f64, v: f64, tau: f64) -> f64 {
    tau * t.abs().sqrt() + 0.5 * (t - v) * (t - v)
}

/// Scalar prox of `tau * |t|^{1/2}` for `v`.
fn prox_lhalf_scalar(v: f64, tau: f64) -> f64 {
    let a = v.abs();
    if a == 0.0 {
        return 0.0;
    }
    // On t > 0 the stationarity map g(t) = t - a + tau / (2 sqrt t) is
    // convex with minimum at t_m = (tau/4)^{2/3}. The local minimizer of the
    // prox objective is the larger root of g, bracketed by [t_m, a].
    let g = |t: f64| t - a + tau / (2.0 * t.sqrt());
    let t_m = (0.25 * tau).powf(2.0 / 3.0);
    let mut best = 0.0;
    if t_m < a && g(t_m) < 0.0 {
        let (mut lo, mut hi) = (t_m, a);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        if lhalf_objective(root, a, tau) < lhalf_objective(0.0, a, tau) {
            best = root;
        }
    }
    if best == 0.0 {
        0.0
    } else {
        v.signum() * best
    }
}

/// Prox of `tau * sum_i |v_i|^{1/2}`.
pub fn prox_lhalf(v: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau > 0.0);
    v.iter().map(|&vi| prox_lhalf_scalar(vi, tau)).collect()
}

/// Projection onto `[lo, hi]`.
pub fn prox_box(v: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    debug_assert!(v.len() == lo.len() && v.len() == hi.len());
    v.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&vi, (&l, &h))| vi.max(l).min(h))
        .collect()
}

/// Projection onto `{x : |x|_0 <= s}`: keep the `s` largest magnitudes.
/// Equal magnitudes are ranked by lower index first.
pub fn prox_sparsity(v: &[f64], s: usize) -> Vec<f64> {
    debug_assert!(s >= 1 && s <= v.len());
    if s >= v.len() {
        return v.to_vec();
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then_with(|| i.cmp(&j)));
    let mut z = vec![0.0; v.len()];
    for &i in &order[..s] {
        z[i] = v[i];
    }
    z
}

fn count_nonzeros(x: &[f64]) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

/// `lambda * |x|_1`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Term {
    pub dim: usize,
    pub lambda: f64,
}

impl NonsmoothTerm for L1Term {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> ExtReal {
        ExtReal::Finite(self.lambda * x.iter().map(|v| v.abs()).sum::<f64>())
    }
    fn prox(&self, gamma: f64, v: &[f64]) -> Vec<f64> {
        prox_l1(v, gamma * self.lambda)
    }
    fn domain_witness(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn name(&self) -> &'static str {
        "l1"
    }
    fn component(&self, _i: usize, t: f64) -> Option<ExtReal> {
        Some(ExtReal::Finite(self.lambda * t.abs()))
    }
    fn is_convex(&self) -> bool {
        true
    }
}

/// `lambda * |x|_0`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L0Term {
    pub dim: usize,
    pub lambda: f64,
}

impl NonsmoothTerm for L0Term {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> ExtReal {
        ExtReal::Finite(self.lambda * count_nonzeros(x) as f64)
    }
    fn prox(&self, gamma: f64, v: &[f64]) -> Vec<f64> {
        prox_l0(v, gamma * self.lambda)
    }
    fn domain_witness(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn name(&self) -> &'static str {
        "l0"
    }
    fn component(&self, _i: usize, t: f64) -> Option<ExtReal> {
        Some(ExtReal::Finite(if t != 0.0 { self.lambda } else { 0.0 }))
    }
    fn is_convex(&self) -> bool {
        false
    }
}

/// `lambda * sum_i |x_i|^{1/2}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LHalfTerm {
    pub dim: usize,
    pub lambda: f64,
}

impl NonsmoothTerm for LHalfTerm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> ExtReal {
        ExtReal::Finite(self.lambda * x.iter().map(|v| v.abs().sqrt()).sum::<f64>())
    }
    fn prox(&self, gamma: f64, v: &[f64]) -> Vec<f64> {
        prox_lhalf(v, gamma * self.lambda)
    }
    fn domain_witness(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn name(&self) -> &'static str {
        "lhalf"
    }
    fn component(&self, _i: usize, t: f64) -> Option<ExtReal> {
        Some(ExtReal::Finite(self.lambda * t.abs().sqrt()))
    }
    fn is_convex(&self) -> bool {
        false
    }
}

/// Indicator of the box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxIndicator {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxIndicator {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Option<Self> {
        (lo.len() == hi.len() && lo.iter().zip(&hi).all(|(l, h)| l <= h))
            .then_some(BoxIndicator { lo, hi })
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }
}

impl NonsmoothTerm for BoxIndicator {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn eval(&self, x: &[f64]) -> ExtReal {
        let inside = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| l <= v && v <= h);
        if inside {
            ExtReal::ZERO
        } else {
            ExtReal::PosInf
        }
    }
    fn prox(&self, _gamma: f64, v: &[f64]) -> Vec<f64> {
        prox_box(v, &self.lo, &self.hi)
    }
    fn domain_witness(&self) -> Vec<f64> {
        prox_box(&vec![0.0; self.dim()], &self.lo, &self.hi)
    }
    fn name(&self) -> &'static str {
        "box"
    }
    fn component(&self, i: usize, t: f64) -> Option<ExtReal> {
        Some(if self.lo[i] <= t && t <= self.hi[i] {
            ExtReal::ZERO
        } else {
            ExtReal::PosInf
        })
    }
    fn is_convex(&self) -> bool {
        true
    }
}

/// Indicator of `{x : |x|_0 <= s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsitySetIndicator {
    pub dim: usize,
    pub s: usize,
}

impl NonsmoothTerm for SparsitySetIndicator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> ExtReal {
        if count_nonzeros(x) <= self.s {
            ExtReal::ZERO
        } else {
            ExtReal::PosInf
        }
    }
    fn prox(&self, _gamma: f64, v: &[f64]) -> Vec<f64> {
        prox_sparsity(v, self.s)
    }
    fn domain_witness(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn name(&self) -> &'static str {
        "sparsity"
    }
    fn is_convex(&self) -> bool {
        false
    }
}

/// `phi = 0`; the method reduces to gradient descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroTerm {
    pub dim: usize,
}

impl NonsmoothTerm for ZeroTerm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64]) -> ExtReal {
        ExtReal::ZERO
    }
    fn prox(&self, _gamma: f64, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
    fn domain_witness(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn name(&self) -> &'static str {
        "zero"
    }
    fn component(&self, _i: usize, _t: f64) -> Option<ExtReal> {
        Some(ExtReal::ZERO)
    }
    fn is_convex(&self) -> bool {
        true
    }
}

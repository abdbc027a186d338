//! Problem factories.
//!
//! Instances cover the globally Lipschitz regime (least squares) and the
//! locally-Lipschitz-only regime (quartic and exponential losses), with
//! convex, nonconvex and set-constrained regularizers. Random data comes
//! from a seeded ChaCha generator so that every instance is reproducible
//! from its [`ProblemSpec`].

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ProblemError;
use crate::model::{CompositeProblem, KlHypothesis, LipschitzClass, Optimum, SmoothModel};
use crate::prox::{prox_l1, L0Term, L1Term, SparsitySetIndicator, ZeroTerm};

fn matvec(a: &Array2<f64>, x: &[f64]) -> Array1<f64> {
    a.dot(&ArrayView1::from(x))
}

fn matvec_t(a: &Array2<f64>, r: &Array1<f64>) -> Vec<f64> {
    a.t().dot(r).to_vec()
}

/// Largest eigenvalue of `A^T A` by power iteration.
fn spectral_norm_sq(a: &Array2<f64>) -> f64 {
    let n = a.ncols();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = a.t().dot(&a.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-14 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

fn check_rows(a: &Array2<f64>, b: &[f64]) -> Result<(), ProblemError> {
    if a.nrows() != b.len() {
        return Err(ProblemError::DimensionMismatch {
            what: "b",
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if a.ncols() == 0 {
        return Err(ProblemError::InvalidData("matrix has no columns".into()));
    }
    Ok(())
}

/// `f(x) = 1/2 |Ax - b|^2`; `a = None` means `A = I`.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    a: Option<Array2<f64>>,
    b: Vec<f64>,
    lipschitz: f64,
}

impl LeastSquares {
    pub fn identity(b: Vec<f64>) -> Self {
        LeastSquares {
            a: None,
            b,
            lipschitz: 1.0,
        }
    }

    pub fn new(a: Array2<f64>, b: Vec<f64>) -> Result<Self, ProblemError> {
        check_rows(&a, &b)?;
        let lipschitz = spectral_norm_sq(&a);
        Ok(LeastSquares {
            a: Some(a),
            b,
            lipschitz,
        })
    }

    fn residual(&self, x: &[f64]) -> Array1<f64> {
        let ax = match &self.a {
            Some(a) => matvec(a, x),
            None => Array1::from(x.to_vec()),
        };
        ax - ArrayView1::from(&self.b[..])
    }
}

impl SmoothModel for LeastSquares {
    fn dim(&self) -> usize {
        self.a.as_ref().map_or(self.b.len(), |a| a.ncols())
    }
    fn eval(&self, x: &[f64]) -> f64 {
        let r = self.residual(x);
        0.5 * r.dot(&r)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let r = self.residual(x);
        match &self.a {
            Some(a) => matvec_t(a, &r),
            None => r.to_vec(),
        }
    }
    fn lipschitz_class(&self) -> LipschitzClass {
        LipschitzClass::GlobalL(self.lipschitz)
    }
}

/// `f(x) = x^4 / 4` on the real line.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuarticScalar;

impl SmoothModel for QuarticScalar {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> f64 {
        0.25 * x[0].powi(4)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0].powi(3)]
    }
    fn lipschitz_class(&self) -> LipschitzClass {
        LipschitzClass::LocalOnly
    }
}

/// `f(x) = 1/4 sum_i (<a_i, x> - b_i)^4`
#[derive(Clone, Debug)]
pub struct QuarticRegression {
    a: Array2<f64>,
    b: Vec<f64>,
}

impl QuarticRegression {
    pub fn new(a: Array2<f64>, b: Vec<f64>) -> Result<Self, ProblemError> {
        check_rows(&a, &b)?;
        Ok(QuarticRegression { a, b })
    }

    fn residual(&self, x: &[f64]) -> Array1<f64> {
        matvec(&self.a, x) - ArrayView1::from(&self.b[..])
    }
}

impl SmoothModel for QuarticRegression {
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        0.25 * self.residual(x).iter().map(|r| r.powi(4)).sum::<f64>()
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let cubed = self.residual(x).mapv(|r| r.powi(3));
        matvec_t(&self.a, &cubed)
    }
    fn lipschitz_class(&self) -> LipschitzClass {
        LipschitzClass::LocalOnly
    }
}

/// `f(x) = sum_i (exp(<a_i, x>) - b_i)^2`
#[derive(Clone, Debug)]
pub struct ExpFit {
    a: Array2<f64>,
    b: Vec<f64>,
}

impl ExpFit {
    pub fn new(a: Array2<f64>, b: Vec<f64>) -> Result<Self, ProblemError> {
        check_rows(&a, &b)?;
        Ok(ExpFit { a, b })
    }
}

impl SmoothModel for ExpFit {
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        matvec(&self.a, x)
            .iter()
            .zip(&self.b)
            .map(|(z, b)| (z.exp() - b).powi(2))
            .sum()
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let weights: Array1<f64> = matvec(&self.a, x)
            .iter()
            .zip(&self.b)
            .map(|(z, b)| {
                let e = z.exp();
                2.0 * (e - b) * e
            })
            .collect();
        matvec_t(&self.a, &weights)
    }
    fn lipschitz_class(&self) -> LipschitzClass {
        LipschitzClass::LocalOnly
    }
}

/// `f(x) = 1/2 |x - b|^2`, `phi = lambda |x|_1`. The minimizer is the soft
/// threshold of `b`, recorded as the optimum.
pub fn make_lasso_identity(b: Vec<f64>, lambda: f64) -> Result<CompositeProblem, ProblemError> {
    positive("lambda", lambda)?;
    let n = b.len();
    if n == 0 {
        return Err(ProblemError::InvalidData("empty data vector".into()));
    }
    let x_star = prox_l1(&b, lambda);
    let psi_star = 0.5 * crate::vector::dist(&x_star, &b).powi(2)
        + lambda * x_star.iter().map(|v| v.abs()).sum::<f64>();
    CompositeProblem::new(
        format!("lasso_identity(n={n})"),
        Arc::new(LeastSquares::identity(b)),
        Arc::new(L1Term { dim: n, lambda }),
    )?
    .with_optimum(Optimum {
        psi_star,
        x_star: Some(x_star),
    })
    .map(|p| p.with_kl(KlHypothesis::new(0.5, "strongly convex lasso")))
}

/// `f(x) = 1/2 |Ax - b|^2`, `phi = lambda |x|_1`. An optimum is attached
/// only for `b = 0`; otherwise see [`crate::solver::reference_optimum`].
pub fn make_lasso_general(
    a: Array2<f64>,
    b: Vec<f64>,
    lambda: f64,
) -> Result<CompositeProblem, ProblemError> {
    positive("lambda", lambda)?;
    let (m, n) = a.dim();
    let zero_data = b.iter().all(|v| *v == 0.0);
    let f = LeastSquares::new(a, b)?;
    let problem = CompositeProblem::new(
        format!("lasso_general(m={m},n={n})"),
        Arc::new(f),
        Arc::new(L1Term { dim: n, lambda }),
    )?
    .with_kl(KlHypothesis::new(0.5, "lasso with full column rank A"));
    if zero_data {
        return problem.with_optimum(Optimum {
            psi_star: 0.0,
            x_star: Some(vec![0.0; n]),
        });
    }
    Ok(problem)
}

pub fn make_quartic_scalar() -> CompositeProblem {
    CompositeProblem::new(
        "quartic_scalar",
        Arc::new(QuarticScalar),
        Arc::new(ZeroTerm { dim: 1 }),
    )
    .and_then(|p| {
        p.with_optimum(Optimum {
            psi_star: 0.0,
            x_star: Some(vec![0.0]),
        })
    })
    .expect("quartic scalar is consistent")
    .with_kl(KlHypothesis::new(0.25, "x^4/4 at its degenerate minimizer"))
}

/// `f(x) = 1/4 sum (<a_i,x> - b_i)^4`, `phi = lambda |x|_0`.
pub fn make_quartic_regression_l0(
    a: Array2<f64>,
    b: Vec<f64>,
    lambda: f64,
) -> Result<CompositeProblem, ProblemError> {
    positive("lambda", lambda)?;
    let (m, n) = a.dim();
    CompositeProblem::new(
        format!("quartic_regression_l0(m={m},n={n})"),
        Arc::new(QuarticRegression::new(a, b)?),
        Arc::new(L0Term { dim: n, lambda }),
    )
}

/// `min 1/2 |Ax - b|^2` subject to `|x|_0 <= s`.
pub fn make_sparsity_projected_quadratic(
    a: Array2<f64>,
    b: Vec<f64>,
    s: usize,
) -> Result<CompositeProblem, ProblemError> {
    let (m, n) = a.dim();
    if s == 0 || s > n {
        return Err(ProblemError::InvalidData(format!(
            "sparsity level {s} outside [1, {n}]"
        )));
    }
    let zero_data = b.iter().all(|v| *v == 0.0);
    let problem = CompositeProblem::new(
        format!("sparsity_projected_quadratic(m={m},n={n},s={s})"),
        Arc::new(LeastSquares::new(a, b)?),
        Arc::new(SparsitySetIndicator { dim: n, s }),
    )?;
    if zero_data {
        return problem.with_optimum(Optimum {
            psi_star: 0.0,
            x_star: Some(vec![0.0; n]),
        });
    }
    Ok(problem)
}

/// `f(x) = sum (exp(<a_i,x>) - b_i)^2`, `phi = lambda |x|_1`.
pub fn make_exp_fit_l1(
    a: Array2<f64>,
    b: Vec<f64>,
    lambda: f64,
) -> Result<CompositeProblem, ProblemError> {
    positive("lambda", lambda)?;
    let (m, n) = a.dim();
    CompositeProblem::new(
        format!("exp_fit_l1(m={m},n={n})"),
        Arc::new(ExpFit::new(a, b)?),
        Arc::new(L1Term { dim: n, lambda }),
    )
}

fn positive(name: &str, v: f64) -> Result<(), ProblemError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ProblemError::InvalidData(format!(
            "{name} = {v} is not a positive real"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    LassoIdentity,
    LassoGeneral,
    QuarticScalar,
    QuarticRegressionL0,
    SparsityProjectedQuadratic,
    ExpFitL1,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 6] = [
        ProblemKind::LassoIdentity,
        ProblemKind::LassoGeneral,
        ProblemKind::QuarticScalar,
        ProblemKind::QuarticRegressionL0,
        ProblemKind::SparsityProjectedQuadratic,
        ProblemKind::ExpFitL1,
    ];

    /// Convex instances, on which every start reaches the same minimizer.
    pub fn is_convex(self) -> bool {
        matches!(
            self,
            ProblemKind::LassoIdentity
                | ProblemKind::LassoGeneral
                | ProblemKind::QuarticScalar
                | ProblemKind::ExpFitL1
        )
    }

    pub fn default_dim(self) -> usize {
        match self {
            ProblemKind::QuarticScalar => 1,
            ProblemKind::LassoGeneral => 50,
            _ => 20,
        }
    }

    fn default_rows(self, n: usize) -> usize {
        match self {
            ProblemKind::LassoIdentity | ProblemKind::LassoGeneral | ProblemKind::QuarticScalar => {
                n
            }
            _ => 2 * n,
        }
    }

    pub fn default_lambda(self) -> f64 {
        match self {
            ProblemKind::LassoIdentity => 0.5,
            ProblemKind::LassoGeneral => 0.1,
            ProblemKind::QuarticRegressionL0 => 0.01,
            ProblemKind::ExpFitL1 => 0.01,
            _ => 0.0,
        }
    }
}

/// A reproducible problem description: kind, shape and seed. Explicit
/// `a` (row-major) and `b` override the seeded data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, seed: u64) -> Self {
        ProblemSpec {
            kind,
            dim: None,
            rows: None,
            seed,
            lambda: None,
            s: None,
            a: None,
            b: None,
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    pub fn with_data(mut self, a: Option<Vec<Vec<f64>>>, b: Vec<f64>) -> Self {
        self.a = a;
        self.b = Some(b);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_sparsity(mut self, s: usize) -> Self {
        self.s = Some(s);
        self
    }

    fn explicit_matrix(&self) -> Result<Option<Array2<f64>>, ProblemError> {
        let Some(rows) = &self.a else { return Ok(None) };
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(ProblemError::InvalidData(
                "matrix rows must be nonempty and equal length".into(),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(Some(
            Array2::from_shape_vec((m, n), flat).expect("shape checked"),
        ))
    }

    pub fn build(&self) -> Result<CompositeProblem, ProblemError> {
        let kind = self.kind;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let explicit = self.explicit_matrix()?;
        let n = explicit
            .as_ref()
            .map(|a| a.ncols())
            .or(self.dim)
            .or(self
                .b
                .as_ref()
                .filter(|_| kind == ProblemKind::LassoIdentity)
                .map(Vec::len))
            .unwrap_or(kind.default_dim());
        let m = explicit
            .as_ref()
            .map(|a| a.nrows())
            .or(self.rows)
            .unwrap_or(kind.default_rows(n));
        let lambda = self.lambda.unwrap_or(kind.default_lambda());
        let tag = format!("seed={}", self.seed);

        let problem = match kind {
            ProblemKind::LassoIdentity => {
                let b = match &self.b {
                    Some(b) => b.clone(),
                    None => normal_vec(&mut rng, n, 2.0),
                };
                make_lasso_identity(b, lambda)?
            }
            ProblemKind::QuarticScalar => make_quartic_scalar(),
            ProblemKind::LassoGeneral => {
                let a = explicit.unwrap_or_else(|| diag_dominant(&mut rng, n));
                let b = match &self.b {
                    Some(b) => b.clone(),
                    None => normal_vec(&mut rng, a.nrows(), 1.0),
                };
                make_lasso_general(a, b, lambda)?
            }
            ProblemKind::QuarticRegressionL0 => {
                let (a, b) = self.regression_data(explicit, &mut rng, m, n);
                make_quartic_regression_l0(a, b, lambda)?
            }
            ProblemKind::SparsityProjectedQuadratic => {
                let s = self.s.unwrap_or((n / 10).max(1));
                let (a, b) = self.regression_data(explicit, &mut rng, m, n);
                make_sparsity_projected_quadratic(a, b, s)?
            }
            ProblemKind::ExpFitL1 => {
                let (a, b) = match explicit {
                    Some(a) => {
                        let b = self.b.clone().unwrap_or_else(|| vec![1.0; a.nrows()]);
                        (a, b)
                    }
                    None => {
                        // Rows scaled so that |<a_i, x>| <= 3 on the unit box.
                        let a = uniform_matrix(&mut rng, m, n, 3.0 / n as f64);
                        let x_true = sparse_truth(&mut rng, n);
                        let b = matvec(&a, &x_true)
                            .iter()
                            .map(|z| z.exp() * (1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal)))
                            .collect();
                        (a, b)
                    }
                };
                make_exp_fit_l1(a, b, lambda)?
            }
        };
        Ok(CompositeProblem {
            name: format!("{}[{tag}]", problem.name),
            ..problem
        })
    }

    /// `A` Gaussian with roughly unit-norm columns, `b = A x_true + noise`.
    fn regression_data(
        &self,
        explicit: Option<Array2<f64>>,
        rng: &mut ChaCha8Rng,
        m: usize,
        n: usize,
    ) -> (Array2<f64>, Vec<f64>) {
        let a = explicit.unwrap_or_else(|| {
            let scale = 1.0 / (m as f64).sqrt();
            Array2::from_shape_fn((m, n), |_| scale * rng.sample::<f64, _>(StandardNormal))
        });
        let b = match &self.b {
            Some(b) => b.clone(),
            None => {
                let x_true = sparse_truth(rng, a.ncols());
                matvec(&a, &x_true)
                    .iter()
                    .map(|z| z + 0.1 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        };
        (a, b)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn uniform_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((m, n), |_| scale * rng.random_range(-1.0..1.0))
}

/// Diagonal in `[1, 2]`, off-diagonal row sums below `1/2`.
fn diag_dominant(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let off = 0.5 / n as f64;
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            rng.random_range(1.0..2.0)
        } else {
            off * rng.random_range(-1.0..1.0)
        }
    })
}

/// Roughly a fifth of the entries nonzero, magnitudes in `[0.5, 1]`.
fn sparse_truth(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let k = (n / 5).max(1);
    let mut x = vec![0.0; n];
    for i in rand::seq::index::sample(rng, n, k) {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        x[i] = sign * rng.random_range(0.5..1.0);
    }
    x
}

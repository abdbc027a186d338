use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// How the first trial stepsize of each outer iteration is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaInitPolicy {
    Constant(f64),
    PreviousAccepted,
    /// `<dx, dg> / |dg|^2` from the previous accepted step, clipped to
    /// `[gamma_min, gamma_max]`. Falls back to `gamma_max` on the first
    /// iteration and whenever `<dx, dg> <= 0`.
    BarzilaiBorweinSafeguarded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePolicy {
    /// `R_{k+1} = (1 - p) R_k + p psi(x^{k+1})` with `p = p_min`.
    Mean,
    /// `R_k = max` of the last `window` objective values.
    Max { window: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub p_min: f64,
    /// Residual tolerance of the termination test. `0` disables the test.
    pub epsilon: f64,
    pub max_outer_iters: usize,
    /// Number of trial stepsizes examined per outer iteration.
    pub max_backtracks: usize,
    pub gamma_init_policy: GammaInitPolicy,
    pub reference_policy: ReferencePolicy,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            gamma_min: 1e-10,
            gamma_max: 1.0,
            alpha_min: 0.1,
            alpha_max: 0.1,
            beta_min: 0.5,
            beta_max: 0.5,
            p_min: 0.1,
            epsilon: 1e-8,
            max_outer_iters: 100_000,
            max_backtracks: 100,
            gamma_init_policy: GammaInitPolicy::BarzilaiBorweinSafeguarded,
            reference_policy: ReferencePolicy::Mean,
        }
    }
}

fn bad(field: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError {
        field,
        reason: reason.into(),
    }
}

fn open_unit(field: &'static str, v: f64) -> Result<(), ParamError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(bad(field, format!("{v} is not in (0, 1)")))
    }
}

impl SolverParams {
    /// The monotone method: `p_k = 1`, so `R_k = psi(x^k)`.
    pub fn monotone() -> Self {
        SolverParams {
            p_min: 1.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.gamma_min > 0.0 && self.gamma_min.is_finite()) {
            return Err(bad(
                "gamma_min",
                format!("{} is not a positive real", self.gamma_min),
            ));
        }
        if !self.gamma_max.is_finite() {
            return Err(bad("gamma_max", "must be finite"));
        }
        if self.gamma_min > self.gamma_max {
            return Err(bad(
                "gamma_min",
                format!(
                    "gamma_min = {} exceeds gamma_max = {}",
                    self.gamma_min, self.gamma_max
                ),
            ));
        }
        open_unit("alpha_min", self.alpha_min)?;
        open_unit("alpha_max", self.alpha_max)?;
        if self.alpha_min > self.alpha_max {
            return Err(bad("alpha_min", "alpha_min exceeds alpha_max"));
        }
        open_unit("beta_min", self.beta_min)?;
        open_unit("beta_max", self.beta_max)?;
        if self.beta_min > self.beta_max {
            return Err(bad("beta_min", "beta_min exceeds beta_max"));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(bad("p_min", format!("{} is not in (0, 1]", self.p_min)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(bad(
                "epsilon",
                format!("{} is not a nonnegative real", self.epsilon),
            ));
        }
        if self.max_outer_iters == 0 {
            return Err(bad("max_outer_iters", "must be positive"));
        }
        if let GammaInitPolicy::Constant(g) = self.gamma_init_policy {
            if !(g > 0.0 && g.is_finite()) {
                return Err(bad(
                    "gamma_init_policy",
                    format!("constant {g} is not positive"),
                ));
            }
        }
        if let ReferencePolicy::Max { window } = self.reference_policy {
            if window == 0 {
                return Err(bad("reference_policy", "max-rule window must be positive"));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        0.5 * (self.alpha_min + self.alpha_max)
    }

    pub fn beta(&self) -> f64 {
        0.5 * (self.beta_min + self.beta_max)
    }

    /// `a = (1 - alpha_max) / (2 gamma_max)`.
    pub fn decrease_constant(&self) -> f64 {
        (1.0 - self.alpha_max) / (2.0 * self.gamma_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SolverParams::default().validate().unwrap();
        SolverParams::monotone().validate().unwrap();
    }

    #[test]
    fn names_offending_field() {
        let p = SolverParams {
            gamma_min: 2.0,
            gamma_max: 1.0,
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().field, "gamma_min");

        let p = SolverParams {
            alpha_max: 1.0,
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().field, "alpha_max");

        let p = SolverParams {
            p_min: 0.0,
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().field, "p_min");

        let p = SolverParams {
            reference_policy: ReferencePolicy::Max { window: 0 },
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().field, "reference_policy");
    }

    #[test]
    fn zero_epsilon_and_zero_backtracks_are_accepted() {
        let p = SolverParams {
            epsilon: 0.0,
            max_backtracks: 0,
            ..Default::default()
        };
        p.validate().unwrap();
    }

    #[test]
    fn decrease_constant_matches_defaults() {
        let p = SolverParams::default();
        assert!((p.decrease_constant() - 0.45).abs() < 1e-15);
    }
}

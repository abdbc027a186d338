use std::fs;
use std::path::{Path, PathBuf};

use nmprox::{CompositeProblem, ProblemSpec, SolverParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

/// Starting point of each run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Policy {
    Zeros,
    DomainWitness,
    /// Uniform on `[-1, 1]^n` from `seed + repeat`, projected onto
    /// `dom(phi)` by a unit prox step when it falls outside.
    Seeded(u64),
}

impl X0Policy {
    pub fn seed_for(self, repeat: usize) -> Option<u64> {
        match self {
            X0Policy::Seeded(seed) => Some(seed.wrapping_add(repeat as u64)),
            _ => None,
        }
    }

    pub fn initial_point(self, problem: &CompositeProblem, repeat: usize) -> Vec<f64> {
        let n = problem.dim();
        match self {
            X0Policy::Zeros => vec![0.0; n],
            X0Policy::DomainWitness => problem.phi.domain_witness(),
            X0Policy::Seeded(_) => {
                let seed = self.seed_for(repeat).expect("seeded policy");
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                if problem.phi.eval(&v).is_finite() {
                    v
                } else {
                    problem.phi.prox(1.0, &v)
                }
            }
        }
    }
}

fn default_repeats() -> usize {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("nmprox-out")
}

fn default_x0() -> X0Policy {
    X0Policy::Zeros
}

/// One experiment: a problem, solver parameters and a set of starting points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub params: SolverParams,
    #[serde(default = "default_x0")]
    pub x0_policy: X0Policy,
    #[serde(default)]
    pub record_iterates: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec, params: SolverParams) -> Self {
        ExperimentConfig {
            problem,
            params,
            x0_policy: default_x0(),
            record_iterates: false,
            out_dir: default_out_dir(),
            repeats: default_repeats(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, Path::new("<inline>"))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| ConfigError::Invalid {
            field: format!("params.{}", e.field),
            reason: e.reason,
        })?;
        if self.repeats == 0 {
            return Err(ConfigError::Invalid {
                field: "repeats".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<CompositeProblem, ConfigError> {
        self.problem.build().map_err(|e| ConfigError::Invalid {
            field: "problem".into(),
            reason: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nmprox::{GammaInitPolicy, ProblemKind, ReferencePolicy};

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml_str("[problem]\nkind = \"lasso_identity\"\n").unwrap();
        assert_eq!(c.params, SolverParams::default());
        assert_eq!(c.x0_policy, X0Policy::Zeros);
        assert_eq!(c.repeats, 1);
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::new(
            ProblemSpec::new(ProblemKind::SparsityProjectedQuadratic, 4)
                .with_data(Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), vec![3.0, -1.0])
                .with_sparsity(1),
            SolverParams {
                gamma_min: 1e-12,
                epsilon: 1.0 / 3.0,
                gamma_init_policy: GammaInitPolicy::Constant(0.7),
                reference_policy: ReferencePolicy::Max { window: 5 },
                ..Default::default()
            },
        );
        c.x0_policy = X0Policy::Seeded(9);
        c.record_iterates = true;
        c.repeats = 3;
        let text = c.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str(
            "[problem]\nkind = \"lasso_identity\"\n[params]\nepsilonn = 1e-3\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("epsilonn"), "{err}");
    }

    #[test]
    fn invalid_params_name_the_field() {
        let err = ExperimentConfig::from_toml_str(
            "[problem]\nkind = \"lasso_identity\"\n[params]\ngamma_min = 2.0\ngamma_max = 1.0\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("gamma_min"), "{err}");
    }

    #[test]
    fn seeded_starts_vary_with_repeat_and_stay_feasible() {
        let p = ProblemSpec::new(ProblemKind::SparsityProjectedQuadratic, 0)
            .build()
            .unwrap();
        let a = X0Policy::Seeded(3).initial_point(&p, 0);
        let b = X0Policy::Seeded(3).initial_point(&p, 1);
        assert_ne!(a, b);
        assert_eq!(a, X0Policy::Seeded(3).initial_point(&p, 0));
        assert!(p.phi.eval(&a).is_finite());
    }
}

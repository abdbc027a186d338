use serde::{Deserialize, Serialize};

/// One outer iteration `k`: the state at `x^k` plus the accepted step to `x^{k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `psi(x^k)`
    pub psi: f64,
    /// `R_k`
    pub reference: f64,
    /// `gamma_k` after backtracking.
    pub gamma: f64,
    pub backtracks: usize,
    /// `|x^{k+1} - x^k|`
    pub step_norm: f64,
    pub residual: f64,
    /// `sqrt(R_{k-1} - R_k)`, zero at `k = 0`.
    pub xi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    ConvergedResidual,
    MaxIters,
    BacktrackCapExceeded,
    NumericalFailure,
}

impl RunStatus {
    pub fn is_error(self) -> bool {
        matches!(
            self,
            RunStatus::BacktrackCapExceeded | RunStatus::NumericalFailure
        )
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub status: RunStatus,
    pub x_final: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    /// `x^0, x^1, ...` and finally `x_final`, when iterate recording is on.
    pub iterates: Option<Vec<Vec<f64>>>,
    pub wall_time: f64,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.trace.last().map(|r| r.residual)
    }

    pub fn total_backtracks(&self) -> usize {
        self.trace.iter().map(|r| r.backtracks).sum()
    }

    pub fn references(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.reference).collect()
    }
}

use std::io::{Read, Write};

use nmprox::diagnostics::{AuditReport, RateReport};
use nmprox::{IterationRecord, RunStatus};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const TRACE_HEADER: [&str; 8] = [
    "k",
    "psi",
    "reference",
    "gamma",
    "backtracks",
    "step_norm",
    "residual",
    "xi",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        w.write_record([
            r.k.to_string(),
            fmt_float(r.psi),
            fmt_float(r.reference),
            fmt_float(r.gamma),
            r.backtracks.to_string(),
            fmt_float(r.step_norm),
            fmt_float(r.residual),
            fmt_float(r.xi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_csv_bytes(trace: &[IterationRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, trace).expect("writing to memory");
    buf
}

pub fn read_trace_csv<R: Read>(input: R) -> csv::Result<Vec<IterationRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// One row per stored iterate: `k, x_0, ..., x_{n-1}`.
pub fn write_iterates_csv<W: Write>(out: W, iterates: &[Vec<f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = iterates.first().map_or(0, Vec::len);
    let header = std::iter::once("k".to_string()).chain((0..n).map(|i| format!("x{i}")));
    w.write_record(header)?;
    for (k, x) in iterates.iter().enumerate() {
        w.write_record(std::iter::once(k.to_string()).chain(x.iter().map(|v| fmt_float(*v))))?;
    }
    w.flush()?;
    Ok(())
}

/// A rate fit attached to a run. `report` is absent when the fit could not
/// be computed, with the reason in `error`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub series: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<RateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub repeat: usize,
    pub x0_seed: Option<u64>,
    /// Relative to the summary file.
    pub trace_file: String,
    pub iterates_file: Option<String>,
    pub status: RunStatus,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub total_backtracks: usize,
    pub wall_time_seconds: f64,
    pub audit: AuditReport,
    pub rates: Vec<RateEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub problem: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
}

impl ExperimentSummary {
    pub fn any_error(&self) -> bool {
        self.runs.iter().any(|r| r.status.is_error())
    }
}

//! Trajectory CSV and JSON summaries.
//!
//! The CSV has one row per recorded step with header
//! `t,x0..x{n-1},u0..u{m-1},h,b,h_r,qnorm,lambda_b,lambda_h,active`, where
//! `active` is a bitmask (1 = input constraint, 2 = barrier constraint).
//! Floats are written in shortest round-trip form.

use std::io::Write;
use std::path::Path;

use safeflow_core::analysis::{Classification, EquivalenceReport, KktReport};
use safeflow_core::sim::{AbortReason, Outcome, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SafeflowError};

pub fn csv_header(n: usize, m: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend(["h", "b", "h_r", "qnorm", "lambda_b", "lambda_h", "active"].map(String::from));
    header
}

pub fn write_trajectory_csv<W: Write>(writer: W, traj: &Trajectory) -> Result<()> {
    let n = traj.final_state.len();
    let m = traj.final_input.len();
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(csv_header(n, m))?;
    let mut row = Vec::with_capacity(n + m + 8);
    for k in 0..traj.len() {
        row.clear();
        row.push(traj.times[k].to_string());
        row.extend(traj.states[k].iter().map(f64::to_string));
        row.extend(traj.inputs[k].iter().map(f64::to_string));
        let qp = &traj.qp_trace[k];
        row.push(traj.h_trace[k].to_string());
        row.push(traj.b_trace[k].to_string());
        row.push(traj.chain_trace[k].last().copied().unwrap_or(f64::NAN).to_string());
        row.push(qp.qnorm.to_string());
        row.push(qp.lambda_b.to_string());
        row.push(qp.lambda_h.to_string());
        row.push(qp.active.bits().to_string());
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| SafeflowError::Csv(e.into()))?;
    Ok(())
}

pub fn save_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| SafeflowError::Io { path: path.to_path_buf(), source })?;
    write_trajectory_csv(std::io::BufWriter::new(file), traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettledPoint {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcome: String,
    pub settled_point: Option<SettledPoint>,
    pub min_h: f64,
    pub min_b: f64,
    pub settle_time: Option<f64>,
    /// Present when the run aborted.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub abort_reason: Option<String>,
    pub safe_start: bool,
}

impl RunSummary {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let (settled_point, settle_time, abort_reason) = match &traj.outcome {
            Outcome::Settled { x, u, time } => {
                (Some(SettledPoint { x: x.iter().copied().collect(), u: u.iter().copied().collect() }), Some(*time), None)
            }
            Outcome::TimedOut => (None, None, None),
            Outcome::Aborted { reason, time } => {
                let why = match reason {
                    AbortReason::Controller(err) => err.to_string(),
                    AbortReason::NonFiniteState => "state became non-finite".to_string(),
                };
                (None, None, Some(format!("t = {time}: {why}")))
            }
        };
        RunSummary {
            outcome: traj.outcome.label().to_string(),
            settled_point,
            min_h: traj.min_h,
            min_b: traj.min_b,
            settle_time,
            abort_reason,
            safe_start: traj.safe_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub sgf_min_h: f64,
    pub baseline_min_h: f64,
    pub both_settled_points: [Option<SettledPoint>; 2],
    pub sgf: RunSummary,
    pub baseline: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub is_equilibrium: bool,
    pub f_norm: f64,
    pub q_norm: Option<f64>,
    pub kkt: KktReport,
    pub equivalence: EquivalenceReport,
}

impl From<Classification> for AnalysisSummary {
    fn from(c: Classification) -> Self {
        AnalysisSummary {
            is_equilibrium: c.is_equilibrium,
            f_norm: c.f_norm,
            q_norm: c.q_norm,
            kkt: c.kkt,
            equivalence: c.equivalence,
        }
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|source| SafeflowError::Io { path: path.to_path_buf(), source })
}

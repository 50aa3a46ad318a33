//! Command-line front end.
//!
//! Exit codes: 0 settled (or a reporting command succeeded), 1 configuration
//! or parse error, 2 aborted run, 3 timed-out run.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use safeflow_core::controller::ControllerParams;
use safeflow_core::model::Regularization;
use safeflow_core::sim::{Outcome, RhsKind, Trajectory};
use serde::Serialize;

use crate::error::{Result, SafeflowError};
use crate::export::{save_json, save_trajectory_csv, AnalysisSummary, ComparisonSummary, RunSummary};
use crate::scenario::{resolve, InitialCondition, Scenario, BUILTIN_NAMES};
use crate::sweep::{initial_condition_sweep, SweepSummary};

pub const EXIT_SETTLED: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORTED: i32 = 2;
pub const EXIT_TIMED_OUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "safeflow", version, about = "Safe gradient flow feedback optimization of LTI plants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one initial condition and write its trajectory.
    Run {
        #[command(flatten)]
        common: Common,
        /// Initial condition `x0,..,xn;u0,..,um`; defaults to the scenario's first.
        #[arg(long, allow_hyphen_values = true)]
        ic: Option<String>,
        /// Trajectory CSV path; the JSON summary is written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the steady-state-constraint baseline controller.
        #[arg(long)]
        baseline: bool,
    },
    /// Simulate many initial conditions and report where each one settles.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Replaces the scenario's initial conditions; repeatable.
        #[arg(long, allow_hyphen_values = true)]
        ic: Vec<String>,
        /// Directory for per-run CSVs and `sweep.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        baseline: bool,
    },
    /// Run the safe gradient flow and the baseline from the same point.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        ic: Option<String>,
        /// Output prefix: writes `<prefix>_sgf.csv`, `<prefix>_baseline.csv` and `<prefix>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for symmetry with `run`; compare always runs the baseline.
        #[arg(long, hide = true)]
        baseline: bool,
    },
    /// Print KKT and equilibrium diagnostics for a point `x;u`.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long, alias = "ic", allow_hyphen_values = true)]
        point: String,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Built-in name (see `list-scenarios`) or path to a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long = "t-final", allow_negative_numbers = true)]
    pub t_final: Option<f64>,
    /// Penalty regularization `p,margin`.
    #[arg(long, allow_hyphen_values = true)]
    pub regularize: Option<String>,
}

impl Common {
    /// Loads the scenario and applies the overrides; the rebuilt scenario is
    /// validated as a whole.
    pub fn scenario(&self) -> Result<Scenario> {
        let base = resolve(&self.scenario)?;
        let regularization = self.regularize.as_deref().map(parse_regularization).transpose()?;
        if self.epsilon.is_none()
            && self.alpha.is_none()
            && self.gamma.is_none()
            && self.beta.is_none()
            && self.dt.is_none()
            && self.t_final.is_none()
            && regularization.is_none()
        {
            return Ok(base);
        }
        base.modified(|doc| {
            let p = &mut doc.params;
            *p = ControllerParams {
                epsilon: self.epsilon.unwrap_or(p.epsilon),
                alpha: self.alpha.unwrap_or(p.alpha),
                gamma: self.gamma.unwrap_or(p.gamma),
                beta: self.beta.unwrap_or(p.beta),
            };
            if let Some(dt) = self.dt {
                doc.sim.dt = dt;
            }
            if let Some(t) = self.t_final {
                doc.sim.t_final = t;
            }
            if regularization.is_some() {
                doc.regularization = regularization;
            }
        })
    }
}

fn parse_numbers(text: &str, flag: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| SafeflowError::Parse {
                path: flag.to_string(),
                message: format!("`{}` is not a finite number", s.trim()),
            })
        })
        .collect()
}

/// Parses `x0,..,xn;u0,..,um`.
pub fn parse_point(text: &str) -> Result<InitialCondition> {
    let (x, u) = text.split_once(';').ok_or_else(|| SafeflowError::Parse {
        path: "point".to_string(),
        message: format!("expected `x0,..,xn;u0,..,um`, got `{text}`"),
    })?;
    Ok(InitialCondition { x: parse_numbers(x, "point")?, u: parse_numbers(u, "point")? })
}

/// Parses `p,margin`.
pub fn parse_regularization(text: &str) -> Result<Regularization> {
    match parse_numbers(text, "--regularize")?.as_slice() {
        &[p, margin] => Ok(Regularization { p, margin }),
        _ => Err(SafeflowError::Parse {
            path: "--regularize".to_string(),
            message: format!("expected `p,margin`, got `{text}`"),
        }),
    }
}

fn initial_condition(scenario: &Scenario, ic: Option<&str>) -> Result<InitialCondition> {
    let ic = match ic {
        Some(text) => parse_point(text)?,
        None => scenario.ics().first().cloned().ok_or_else(|| SafeflowError::Parse {
            path: "--ic".to_string(),
            message: format!("scenario `{}` has no initial conditions; pass --ic", scenario.name()),
        })?,
    };
    // Rebuilding checks the dimensions against the plant.
    scenario.with_ics(vec![ic.clone()])?;
    Ok(ic)
}

fn outcome_code(outcome: &Outcome) -> i32 {
    match outcome {
        Outcome::Settled { .. } => EXIT_SETTLED,
        Outcome::Aborted { .. } => EXIT_ABORTED,
        Outcome::TimedOut => EXIT_TIMED_OUT,
    }
}

fn kind(baseline: bool) -> RhsKind {
    if baseline {
        RhsKind::Baseline
    } else {
        RhsKind::Sgf
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn print_json<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(|source| SafeflowError::Io { path: PathBuf::from("<stdout>"), source })
}

fn write_run(path: &Path, traj: &Trajectory, summary: &RunSummary) -> Result<()> {
    save_trajectory_csv(path, traj)?;
    save_json(&path.with_extension("json"), summary)
}

/// Executes a parsed command, printing reports to `out`, and returns the exit
/// code.
pub fn execute<W: Write>(command: Command, out: &mut W) -> Result<i32> {
    match command {
        Command::Run { common, ic, out: path, baseline } => {
            let scenario = common.scenario()?;
            let ic = initial_condition(&scenario, ic.as_deref())?;
            let traj = scenario.run(kind(baseline), &ic);
            let summary = RunSummary::from_trajectory(&traj);
            if let Some(path) = path {
                write_run(&path, &traj, &summary)?;
            }
            print_json(out, &summary)?;
            Ok(outcome_code(&traj.outcome))
        }
        Command::Sweep { common, ic, out: dir, jobs, baseline } => {
            let scenario = common.scenario()?;
            let ics = if ic.is_empty() {
                scenario.ics().to_vec()
            } else {
                let ics = ic.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>>>()?;
                scenario.with_ics(ics.clone())?;
                ics
            };
            let report = initial_condition_sweep(&scenario, &ics, kind(baseline), scenario.sim(), jobs);
            let summary = SweepSummary::new(&scenario, &report);
            if let Some(dir) = dir {
                std::fs::create_dir_all(&dir).map_err(|source| SafeflowError::Io { path: dir.clone(), source })?;
                for (k, run) in report.runs.iter().enumerate() {
                    write_run(&dir.join(format!("run_{k:03}.csv")), &run.trajectory, &run.summary)?;
                }
                save_json(&dir.join("sweep.json"), &summary)?;
            }
            print_json(out, &summary)?;
            Ok(EXIT_SETTLED)
        }
        Command::Compare { common, ic, out: prefix, .. } => {
            let scenario = common.scenario()?;
            let ic = initial_condition(&scenario, ic.as_deref())?;
            let sgf = scenario.run(RhsKind::Sgf, &ic);
            let base = scenario.run(RhsKind::Baseline, &ic);
            let (sgf_summary, base_summary) = (RunSummary::from_trajectory(&sgf), RunSummary::from_trajectory(&base));
            let diff = ComparisonSummary {
                sgf_min_h: sgf.min_h,
                baseline_min_h: base.min_h,
                both_settled_points: [sgf_summary.settled_point.clone(), base_summary.settled_point.clone()],
                sgf: sgf_summary,
                baseline: base_summary,
            };
            if let Some(prefix) = prefix {
                save_trajectory_csv(&with_suffix(&prefix, "_sgf.csv"), &sgf)?;
                save_trajectory_csv(&with_suffix(&prefix, "_baseline.csv"), &base)?;
                save_json(&with_suffix(&prefix, ".json"), &diff)?;
            }
            print_json(out, &diff)?;
            Ok(EXIT_SETTLED)
        }
        Command::Analyze { common, point } => {
            let scenario = common.scenario()?;
            let p = parse_point(&point)?;
            let report = AnalysisSummary::from(scenario.classify(&p.x, &p.u)?);
            print_json(out, &report)?;
            Ok(EXIT_SETTLED)
        }
        Command::ListScenarios => {
            for name in BUILTIN_NAMES {
                writeln!(out, "{name}").map_err(|source| SafeflowError::Io { path: PathBuf::from("<stdout>"), source })?;
            }
            Ok(EXIT_SETTLED)
        }
    }
}

/// Parses `args` (including the program name) and runs the command. Errors
/// go to standard error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_SETTLED };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

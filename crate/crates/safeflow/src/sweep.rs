//! Parallel initial-condition sweeps and basin bookkeeping.

use rayon::prelude::*;
use safeflow_core::analysis::Classification;
use safeflow_core::sim::{RhsKind, SimConfig, Trajectory};
use serde::Serialize;

use crate::error::Result;
use crate::export::{RunSummary, SettledPoint};
use crate::scenario::{InitialCondition, Scenario};

/// Settled points closer than this (∞-norm over `(x, u)`) share a basin.
pub const BASIN_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub ic: InitialCondition,
    pub summary: RunSummary,
    /// Index into [`SweepReport::basins`] for settled runs.
    pub basin: Option<usize>,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Basin {
    pub point: SettledPoint,
    pub count: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    /// Initial conditions outside the safe set; these are not simulated.
    pub rejected: Vec<InitialCondition>,
    pub basins: Vec<Basin>,
}

impl SweepReport {
    pub fn settled(&self) -> impl Iterator<Item = &SweepRun> {
        self.runs.iter().filter(|r| r.trajectory.outcome.is_settled())
    }

    pub fn aborted(&self) -> usize {
        self.runs.iter().filter(|r| r.summary.outcome == "aborted").count()
    }

    pub fn timed_out(&self) -> usize {
        self.runs.iter().filter(|r| r.summary.outcome == "timed_out").count()
    }
}

/// Aggregate form written by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub scenario: String,
    pub runs: Vec<SweepEntry>,
    pub rejected: Vec<InitialCondition>,
    pub basins: Vec<Basin>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub ic: InitialCondition,
    pub basin: Option<usize>,
    #[serde(flatten)]
    pub summary: RunSummary,
}

impl SweepSummary {
    pub fn new(scenario: &Scenario, report: &SweepReport) -> Self {
        SweepSummary {
            scenario: scenario.name().to_string(),
            runs: report
                .runs
                .iter()
                .map(|r| SweepEntry { ic: r.ic.clone(), basin: r.basin, summary: r.summary.clone() })
                .collect(),
            rejected: report.rejected.clone(),
            basins: report.basins.clone(),
        }
    }
}

fn stacked(p: &SettledPoint) -> impl Iterator<Item = f64> + '_ {
    p.x.iter().chain(&p.u).copied()
}

fn distance(a: &SettledPoint, b: &SettledPoint) -> f64 {
    stacked(a).zip(stacked(b)).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Runs `kind` from every safe IC in `ics`, using at most `jobs` worker
/// threads (0 picks the rayon default). Results keep the order of `ics`.
pub fn initial_condition_sweep(
    scenario: &Scenario,
    ics: &[InitialCondition],
    kind: RhsKind,
    cfg: &SimConfig,
    jobs: usize,
) -> SweepReport {
    let (safe, rejected): (Vec<_>, Vec<_>) = ics.iter().cloned().partition(|ic| scenario.is_safe(ic));
    let simulate = || -> Vec<(InitialCondition, Trajectory)> {
        safe.par_iter().map(|ic| (ic.clone(), scenario.run_with(kind, ic, cfg))).collect()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(simulate),
        Err(_) => simulate(),
    };

    let mut basins: Vec<Basin> = Vec::new();
    let runs = results
        .into_iter()
        .map(|(ic, trajectory)| {
            let summary = RunSummary::from_trajectory(&trajectory);
            let basin = summary.settled_point.as_ref().map(|p| {
                match basins.iter().position(|b| distance(&b.point, p) <= BASIN_TOL) {
                    Some(k) => {
                        basins[k].count += 1;
                        k
                    }
                    None => {
                        basins.push(Basin { point: p.clone(), count: 1 });
                        basins.len() - 1
                    }
                }
            });
            SweepRun { ic, summary, basin, trajectory }
        })
        .collect();
    SweepReport { runs, rejected, basins }
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub basin: Basin,
    pub classification: Classification,
}

/// Sweeps the closed loop from `seeds` and classifies every distinct settled
/// point.
pub fn find_equilibria(scenario: &Scenario, seeds: &[InitialCondition], jobs: usize) -> Result<Vec<Equilibrium>> {
    let report = initial_condition_sweep(scenario, seeds, RhsKind::Sgf, scenario.sim(), jobs);
    report
        .basins
        .into_iter()
        .map(|basin| {
            let classification = scenario.classify(&basin.point.x, &basin.point.u)?;
            Ok(Equilibrium { basin, classification })
        })
        .collect()
}

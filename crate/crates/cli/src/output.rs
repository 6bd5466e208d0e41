//! Output documents and atomic file writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use influence_core::dynamics::TrajectoryPoint;
use influence_core::equilibrium::{EquilibriumResult, LearningTrace, NoRegretConfig};
use influence_core::game::BudgetPlan;
use influence_core::single::{SolveReport, StepSchedule};
use influence_core::verification::SuiteReport;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliError;

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let fail = |e: std::io::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain data serializes");
    bytes.push(b'\n');
    bytes
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> Vec<u8> {
    let rows = points.iter().flat_map(|p| {
        let state = &p.state;
        (0..state.nrows()).flat_map(move |i| {
            (0..state.ncols()).map(move |j| {
                vec![
                    p.time.to_string(),
                    p.phase.as_str().to_string(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    state[(i, j)].to_string(),
                ]
            })
        })
    });
    csv_bytes(&["time", "phase", "individual", "player", "opinion"], rows)
}

/// One row per iteration, player, stage and individual.
pub fn trace_csv(trace: &LearningTrace) -> Vec<u8> {
    let rows = (0..trace.iterations()).flat_map(move |t| {
        let iterate = &trace.iterates[t];
        let average = &trace.averages[t];
        (0..iterate.len()).flat_map(move |j| {
            let (cur, avg) = (iterate[j].entries(), average[j].entries());
            let payoff = trace.payoffs[t][j];
            (0..cur.nrows()).flat_map(move |k| {
                (0..cur.ncols()).map(move |i| {
                    vec![
                        (t + 1).to_string(),
                        (j + 1).to_string(),
                        (k + 1).to_string(),
                        (i + 1).to_string(),
                        cur[(k, i)].to_string(),
                        avg[(k, i)].to_string(),
                        payoff.to_string(),
                    ]
                })
            })
        })
    });
    csv_bytes(
        &["iteration", "player", "stage", "individual", "iterate", "average", "payoff"],
        rows,
    )
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn plan_rows(plans: &[BudgetPlan]) -> Vec<Vec<Vec<f64>>> {
    plans.iter().map(|p| rows(p.entries())).collect()
}

#[derive(Debug, Serialize)]
pub struct SolveDocument {
    /// `K x n`, rows are stages.
    pub plan: Vec<Vec<f64>>,
    pub objective: f64,
    pub total_spend: f64,
    pub iterations: usize,
    pub final_step_norm: f64,
    pub kkt_residual: f64,
    pub history: Vec<f64>,
}

impl SolveDocument {
    pub fn new(report: &SolveReport) -> Self {
        Self {
            plan: rows(report.plan.entries()),
            objective: report.objective,
            total_spend: report.plan.total_spend(),
            iterations: report.iterations,
            final_step_norm: report.final_step_norm,
            kkt_residual: report.kkt_residual,
            history: report.history.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StepDocument {
    pub kind: &'static str,
    pub c: f64,
}

#[derive(Debug, Serialize)]
pub struct RegretDocument {
    pub player: usize,
    pub value: f64,
    pub per_round: f64,
    pub hindsight_total: f64,
    pub realized_total: f64,
    pub hindsight_plan: Vec<Vec<f64>>,
    pub kkt_residual: f64,
}

#[derive(Debug, Serialize)]
pub struct ExploitabilityDocument {
    pub value: f64,
    /// Best-response payoff minus current payoff, per player.
    pub gains: Vec<f64>,
    pub best_responses: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize)]
pub struct EquilibriumDocument {
    pub iterations: usize,
    pub step: StepDocument,
    pub seed: u64,
    /// Averaged plans, one `K x n` matrix per player.
    pub profile: Vec<Vec<Vec<f64>>>,
    pub last_iterate: Vec<Vec<Vec<f64>>>,
    pub payoffs: Vec<f64>,
    pub exploitability: ExploitabilityDocument,
    pub regrets: Vec<RegretDocument>,
}

impl EquilibriumDocument {
    pub fn new(result: &EquilibriumResult, config: &NoRegretConfig) -> Self {
        let (kind, c) = match config.step {
            StepSchedule::COverTau(c) => ("c_over_tau", c),
            StepSchedule::COverSqrtTau(c) => ("c_over_sqrt_tau", c),
        };
        let t = result.iterations as f64;
        Self {
            iterations: result.iterations,
            step: StepDocument { kind, c },
            seed: config.seed,
            profile: plan_rows(&result.profile),
            last_iterate: plan_rows(&result.last_iterate),
            payoffs: result.payoffs.clone(),
            exploitability: ExploitabilityDocument {
                value: result.exploitability.value,
                gains: result.exploitability.gains.clone(),
                best_responses: result
                    .exploitability
                    .best_responses
                    .iter()
                    .map(|b| rows(b.plan.entries()))
                    .collect(),
            },
            regrets: result
                .regrets
                .iter()
                .enumerate()
                .map(|(j, r)| RegretDocument {
                    player: j + 1,
                    value: r.value,
                    per_round: r.value / t,
                    hindsight_total: r.hindsight_total,
                    realized_total: r.realized_total,
                    hindsight_plan: rows(r.hindsight.entries()),
                    kkt_residual: r.kkt_residual,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PropertyDocument {
    pub name: String,
    pub pass: bool,
    pub worst: f64,
    pub threshold: f64,
    pub samples: usize,
}

#[derive(Debug, Serialize)]
pub struct VerifyDocument {
    pub suite: &'static str,
    pub seed: u64,
    pub pass: bool,
    pub properties: Vec<PropertyDocument>,
}

impl VerifyDocument {
    pub fn new(report: &SuiteReport) -> Self {
        Self {
            suite: report.suite.name(),
            seed: report.seed,
            pass: report.pass(),
            properties: report
                .properties
                .iter()
                .map(|p| PropertyDocument {
                    name: p.name.clone(),
                    pass: p.pass,
                    worst: p.worst,
                    threshold: p.threshold,
                    samples: p.samples,
                })
                .collect(),
        }
    }
}

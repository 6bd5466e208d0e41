//! Scenario and plan files.

use std::path::Path;

use influence_core::dynamics::{CampaignSchedule, OpinionState};
use influence_core::equilibrium::{Initialization, NoRegretConfig, SocialConcavity};
use influence_core::game::{BudgetPlan, GameSpec, LinearUtility, QuadraticUtility, StageUtility};
use influence_core::network::Network;
use influence_core::single::{SolveOptions, StepSchedule, PROJECTION_MAX_CYCLES, PROJECTION_TOL};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SEED_ENV: &str = "INFLUENCE_GAME_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Adjacency rows; normalized on load.
    pub network: Vec<Vec<f64>>,
    /// `t_0`, the campaign times, then `t_f`.
    pub schedule: Vec<f64>,
    pub players: Vec<PlayerEntry>,
    /// `n` rows of `m` opinions.
    pub x0: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplex: Option<bool>,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerEntry {
    pub budget: f64,
    pub utility: UtilityEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityEntry {
    pub kind: UtilityKind,
    /// One weight vector per stage `1..=K+1`.
    pub rho: Vec<Vec<f64>>,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    LinearFavor,
    LinearComplement,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(rename = "T", default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub step: StepEntry,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitKind,
    #[serde(default)]
    pub social_concavity: ConcavityKind,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_iterations() -> usize {
    100
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            step: StepEntry::default(),
            seed: 0,
            init: InitKind::default(),
            social_concavity: ConcavityKind::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepEntry {
    pub kind: StepKind,
    pub c: f64,
}

impl Default for StepEntry {
    fn default() -> Self {
        Self {
            kind: StepKind::COverTau,
            c: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    COverTau,
    COverSqrtTau,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcavityKind {
    #[default]
    Verify,
    Attested,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Stopping tolerance of the single-player ascent.
    pub optimality: f64,
    pub max_iters: usize,
    pub projection: f64,
    pub projection_max_cycles: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let solve = SolveOptions::default();
        Self {
            optimality: solve.tol,
            max_iters: solve.max_iters,
            projection: PROJECTION_TOL,
            projection_max_cycles: PROJECTION_MAX_CYCLES,
        }
    }
}

impl StepEntry {
    pub fn schedule(&self) -> StepSchedule {
        match self.kind {
            StepKind::COverTau => StepSchedule::COverTau(self.c),
            StepKind::COverSqrtTau => StepSchedule::COverSqrtTau(self.c),
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Parse(format!("{what} rows have unequal lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_spec(&self) -> Result<GameSpec, CliError> {
        let network = Network::new(rows_to_matrix(&self.network, "network")?)?;
        let schedule = CampaignSchedule::new(self.schedule.clone())?;
        let x0 = OpinionState::new(rows_to_matrix(&self.x0, "x0")?)?;
        let m = self.players.len();
        let utilities = self
            .players
            .iter()
            .enumerate()
            .map(|(j, p)| p.utility.to_stage_utility(j))
            .collect::<Result<Vec<_>, _>>()?;
        let budgets = self.players.iter().map(|p| p.budget).collect();
        Ok(GameSpec::new(
            network,
            schedule,
            x0,
            budgets,
            utilities,
            self.simplex.unwrap_or(m >= 2),
        )?)
    }

    /// Serializes a game with the given solver section.
    pub fn from_spec(spec: &GameSpec, solver: SolverSection) -> Result<Self, CliError> {
        let players = spec
            .utilities()
            .iter()
            .zip(spec.budgets())
            .map(|(u, &budget)| {
                Ok(PlayerEntry {
                    budget,
                    utility: UtilityEntry::from_stage_utility(u)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(Self {
            network: matrix_to_rows(spec.network().weights()),
            schedule: spec.schedule().times().to_vec(),
            players,
            x0: matrix_to_rows(spec.x0().values()),
            simplex: Some(spec.simplex()),
            solver,
        })
    }

    /// Seed of the run, with the environment override applied.
    pub fn seed(&self) -> Result<u64, CliError> {
        seed_override()?.map_or(Ok(self.solver.seed), Ok)
    }

    pub fn no_regret_config(&self, iterations: Option<usize>) -> Result<NoRegretConfig, CliError> {
        Ok(NoRegretConfig {
            iterations: iterations.unwrap_or(self.solver.iterations),
            step: self.solver.step.schedule(),
            seed: self.seed()?,
            init: match self.solver.init {
                InitKind::Uniform => Initialization::Uniform,
                InitKind::Random => Initialization::Random,
            },
            social_concavity: match self.solver.social_concavity {
                ConcavityKind::Verify => SocialConcavity::Verify,
                ConcavityKind::Attested => SocialConcavity::Attested,
            },
        })
    }

    pub fn solve_options(&self) -> Result<SolveOptions, CliError> {
        let t = &self.solver.tolerances;
        // the single-player solver picks its own step unless one is given explicitly
        Ok(SolveOptions {
            step: None,
            max_iters: t.max_iters,
            tol: t.optimality,
            projection_tol: t.projection,
            projection_max_cycles: t.projection_max_cycles,
            seed: self.seed()?,
        })
    }
}

pub fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Parse(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

impl UtilityEntry {
    fn to_stage_utility(&self, player: usize) -> Result<StageUtility, CliError> {
        let rho: Vec<DVector<f64>> = self.rho.iter().map(|r| DVector::from_column_slice(r)).collect();
        match (self.kind, self.curvature) {
            (UtilityKind::LinearFavor, None) => Ok(StageUtility::linear_favor(rho, self.lambda)),
            (UtilityKind::LinearComplement, None) => Ok(StageUtility::linear_complement(rho, self.lambda)),
            (UtilityKind::Custom, Some(curvature)) => Ok(StageUtility::custom(QuadraticUtility {
                rho,
                lambda: self.lambda,
                curvature,
            })),
            (UtilityKind::Custom, None) => Err(CliError::Parse(format!(
                "player {}: custom utility requires \"curvature\"",
                player + 1
            ))),
            (_, Some(_)) => Err(CliError::Parse(format!(
                "player {}: \"curvature\" is only valid for custom utilities",
                player + 1
            ))),
        }
    }

    fn from_stage_utility(u: &StageUtility) -> Result<Self, CliError> {
        let rows = |rho: &[DVector<f64>]| rho.iter().map(|r| r.iter().copied().collect()).collect();
        match u {
            StageUtility::LinearFavor(LinearUtility { rho, lambda }) => Ok(Self {
                kind: UtilityKind::LinearFavor,
                rho: rows(rho),
                lambda: *lambda,
                curvature: None,
            }),
            StageUtility::LinearComplement(LinearUtility { rho, lambda }) => Ok(Self {
                kind: UtilityKind::LinearComplement,
                rho: rows(rho),
                lambda: *lambda,
                curvature: None,
            }),
            StageUtility::Custom(c) => {
                let q = c
                    .as_quadratic()
                    .ok_or_else(|| CliError::Parse("only quadratic custom utilities can be serialized".into()))?;
                Ok(Self {
                    kind: UtilityKind::Custom,
                    rho: rows(&q.rho),
                    lambda: q.lambda,
                    curvature: Some(q.curvature),
                })
            }
        }
    }
}

/// Budget plans for `simulate`: one `K x n` matrix (rows are stages) per
/// player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlansFile {
    pub plans: Vec<Vec<Vec<f64>>>,
}

impl PlansFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_plans(&self, spec: &GameSpec) -> Result<Vec<BudgetPlan>, CliError> {
        if self.plans.len() != spec.m() {
            return Err(CliError::Parse(format!(
                "{} plans for {} players",
                self.plans.len(),
                spec.m()
            )));
        }
        self.plans
            .iter()
            .enumerate()
            .map(|(j, rows)| {
                let entries = rows_to_matrix(rows, "plan")?;
                if entries.shape() != (spec.stages(), spec.n()) {
                    return Err(CliError::Parse(format!(
                        "plan of player {} is {}x{}, expected {}x{}",
                        j + 1,
                        entries.nrows(),
                        entries.ncols(),
                        spec.stages(),
                        spec.n()
                    )));
                }
                Ok(BudgetPlan::new(j, entries, spec.budgets()[j])?)
            })
            .collect()
    }
}

/// The two-player reference configuration as a scenario file.
pub fn reference_scenario() -> ScenarioFile {
    ScenarioFile::from_spec(&influence_core::scenarios::two_player_path(), SolverSection::default())
        .expect("linear utilities serialize")
}

//! Open-loop equilibria by no-regret learning.
//!
//! Every player runs projected online gradient ascent on its own payoff
//! against the opponents' current plans; the running average of the joint
//! iterates approaches an open-loop equilibrium. Regret and exploitability
//! quantify how far a run is from that limit.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{all_payoffs, payoffs_and_gradients, BudgetPlan, GameSpec, StageUtility};
use crate::single::{
    build_region, flat_objective, kkt_residual, projected_ascent, AscentOptions, AscentOutcome, AscentStep,
    FeasibleRegion, FeasibleSet, StepSchedule,
};
use crate::verification;

/// `{b in R_+^{Kn} : sum b <= cap}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSimplexSet {
    pub dimension: usize,
    pub cap: f64,
}

impl FeasibleSet for BudgetSimplexSet {
    fn dim(&self) -> usize {
        self.dimension
    }

    fn project(&self, point: &DVector<f64>) -> Result<DVector<f64>> {
        project_budget_set(point, self.cap)
    }

    fn violation(&self, point: &DVector<f64>) -> f64 {
        let negative = point.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
        negative.max(point.sum() - self.cap)
    }
}

/// Euclidean projection onto the capped nonnegative orthant: clamp, and if
/// the clamped point still overspends, water-fill onto `sum = cap`.
pub fn project_budget_set(point: &DVector<f64>, cap: f64) -> Result<DVector<f64>> {
    if cap.is_nan() || cap < 0.0 {
        return Err(Error::Config(format!("budget cap {cap} must be nonnegative")));
    }
    let clamped = point.map(|v| v.max(0.0));
    if clamped.sum() <= cap {
        return Ok(clamped);
    }
    let mut sorted: Vec<f64> = clamped.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = sorted[0];
    let mut theta = sorted[0] - cap;
    for (idx, &v) in sorted.iter().enumerate().skip(1) {
        prefix += v;
        let candidate = (prefix - cap) / (idx + 1) as f64;
        if v > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    Ok(clamped.map(|v| (v - theta).max(0.0)))
}

/// Starting point of the learning dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initialization {
    /// Every entry `beta_j / (2 K n)`: half the budget spread evenly.
    Uniform,
    /// A seeded random point of each player's feasible set.
    Random,
}

/// How the social-concavity hypothesis of the convergence guarantee is
/// established before a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocialConcavity {
    /// Midpoint-test the sum of payoffs on seeded random profile pairs.
    Verify,
    /// Trust the caller.
    Attested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoRegretConfig {
    pub iterations: usize,
    pub step: StepSchedule,
    pub seed: u64,
    pub init: Initialization,
    pub social_concavity: SocialConcavity,
}

impl Default for NoRegretConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            step: StepSchedule::COverTau(10.0),
            seed: 0,
            init: Initialization::Uniform,
            social_concavity: SocialConcavity::Verify,
        }
    }
}

/// Everything a learning run produced, one entry per iteration `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningTrace {
    /// Joint plans `b^tau`.
    pub iterates: Vec<Vec<BudgetPlan>>,
    /// Running averages `(1/tau) sum_{s <= tau} b^s`.
    pub averages: Vec<Vec<BudgetPlan>>,
    /// `U_j(b^tau)` per player.
    pub payoffs: Vec<Vec<f64>>,
    pub stepsizes: Vec<f64>,
}

impl LearningTrace {
    pub fn iterations(&self) -> usize {
        self.iterates.len()
    }

    /// The averaged profile after the last iteration.
    pub fn average(&self) -> &[BudgetPlan] {
        self.averages.last().expect("trace has at least one iteration")
    }

    pub fn last_iterate(&self) -> &[BudgetPlan] {
        self.iterates.last().expect("trace has at least one iteration")
    }
}

/// Own feasible set of a player: the capped orthant in a multiplayer game,
/// the headroom polytope when the game has a single player.
pub(crate) enum PlayerSet {
    Simplex(BudgetSimplexSet),
    Region(FeasibleRegion),
}

impl FeasibleSet for PlayerSet {
    fn dim(&self) -> usize {
        match self {
            PlayerSet::Simplex(s) => s.dim(),
            PlayerSet::Region(r) => r.dim(),
        }
    }

    fn project(&self, point: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            PlayerSet::Simplex(s) => s.project(point),
            PlayerSet::Region(r) => r.project(point),
        }
    }

    fn violation(&self, point: &DVector<f64>) -> f64 {
        match self {
            PlayerSet::Simplex(s) => s.violation(point),
            PlayerSet::Region(r) => r.violation(point),
        }
    }
}

pub(crate) fn player_set(spec: &GameSpec, j: usize) -> Result<PlayerSet> {
    if spec.m() == 1 {
        Ok(PlayerSet::Region(build_region(spec)?))
    } else {
        Ok(PlayerSet::Simplex(BudgetSimplexSet {
            dimension: spec.plan_len(),
            cap: spec.budgets()[j],
        }))
    }
}

fn flatten(grad: &nalgebra::DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(grad.len(), grad.transpose().iter().copied())
}

fn average_of(spec: &GameSpec, sums: &[DVector<f64>], count: usize) -> Vec<BudgetPlan> {
    sums.iter()
        .enumerate()
        .map(|(j, s)| {
            let flat = s / count as f64;
            crate::game::BudgetPlan::from_flat(j, spec.stages(), spec.n(), spec.budgets()[j], flat.as_slice())
                .expect("average of feasible plans is feasible")
        })
        .collect()
}

/// Runs simultaneous projected gradient ascent
/// `b_j <- P_j[b_j + eta_tau grad_j U_j(b)]` for all players.
pub fn run_no_regret(spec: &GameSpec, config: &NoRegretConfig) -> Result<LearningTrace> {
    config.step.validate()?;
    if config.iterations == 0 {
        return Err(Error::Config("at least one iteration is required".into()));
    }
    for j in 0..spec.m() {
        if spec.m() == 1 {
            verification::check_concave_utility(spec, j, config.seed)?;
        } else {
            verification::check_increasing_convex_utility(spec, j, config.seed)?;
        }
    }
    if config.social_concavity == SocialConcavity::Verify {
        verification::check_social_concavity(spec, config.seed)?;
    }

    let m = spec.m();
    let dim = spec.plan_len();
    let sets = (0..m).map(|j| player_set(spec, j)).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = (0..m)
        .map(|j| {
            let beta = spec.budgets()[j];
            let raw = match config.init {
                Initialization::Uniform => DVector::from_element(dim, beta / (2.0 * dim.max(1) as f64)),
                Initialization::Random => {
                    let mut v = DVector::from_fn(dim, |_, _| rng.gen::<f64>());
                    let total = v.sum();
                    if total > 0.0 {
                        v *= beta * rng.gen::<f64>() / total;
                    }
                    v
                }
            };
            sets[j].project(&raw)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sums = vec![DVector::zeros(dim); m];
    let mut trace = LearningTrace {
        iterates: Vec::with_capacity(config.iterations),
        averages: Vec::with_capacity(config.iterations),
        payoffs: Vec::with_capacity(config.iterations),
        stepsizes: Vec::with_capacity(config.iterations),
    };
    for tau in 1..=config.iterations {
        let plans: Vec<BudgetPlan> = current
            .iter()
            .enumerate()
            .map(|(j, flat)| spec.plan_from_flat(j, flat.as_slice()))
            .collect::<Result<_>>()?;
        let (payoffs, grads) = payoffs_and_gradients(spec, &plans)?;
        for (s, c) in sums.iter_mut().zip(&current) {
            *s += c;
        }
        let eta = config.step.step(tau);
        let next = current
            .iter()
            .zip(&grads)
            .zip(&sets)
            .map(|((b, g), set)| set.project(&(b + flatten(g) * eta)))
            .collect::<Result<Vec<_>>>()?;

        trace.averages.push(average_of(spec, &sums, tau));
        trace.iterates.push(plans);
        trace.payoffs.push(payoffs);
        trace.stepsizes.push(eta);
        current = next;
    }
    Ok(trace)
}

/// Options of the best-response and hindsight maximizations.
pub fn subproblem_options() -> AscentOptions {
    AscentOptions {
        step: AscentStep::Adaptive { initial: 1.0 },
        max_iters: 20_000,
        tol: 1e-13,
    }
}

fn multi_start<F>(set: &PlayerSet, starts: &[DVector<f64>], mut objective: F) -> Result<AscentOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let mut best: Option<AscentOutcome> = None;
    for start in starts {
        let outcome = projected_ascent(&mut objective, set, start, &subproblem_options())?;
        if best.as_ref().is_none_or(|b| outcome.objective > b.objective) {
            best = Some(outcome);
        }
    }
    Ok(best.expect("at least one start"))
}

fn default_starts(spec: &GameSpec, j: usize, own: &DVector<f64>) -> Vec<DVector<f64>> {
    let dim = spec.plan_len();
    vec![
        own.clone(),
        DVector::zeros(dim),
        DVector::from_element(dim, spec.budgets()[j] / (2.0 * dim.max(1) as f64)),
    ]
}

fn ensure_attested(spec: &GameSpec, j: usize) -> Result<()> {
    if let StageUtility::Custom(c) = &spec.utilities()[j] {
        if !c.concave_best_response() {
            return Err(Error::Hypothesis(format!(
                "best-response problem of player {j} is not attested concave"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub plan: BudgetPlan,
    pub payoff: f64,
    pub kkt_residual: f64,
}

/// Maximizes `U_j(., profile_{-j})` over player `j`'s feasible set.
pub fn best_response(spec: &GameSpec, profile: &[BudgetPlan], j: usize) -> Result<BestResponse> {
    ensure_attested(spec, j)?;
    let set = player_set(spec, j)?;
    let own = profile[j].flat();
    let outcome = multi_start(&set, &default_starts(spec, j, &own), flat_objective(spec, profile, j))?;
    let residual = kkt_residual(&set, &outcome.point, &outcome.gradient)?;
    Ok(BestResponse {
        plan: spec.plan_from_flat(j, outcome.point.as_slice())?,
        payoff: outcome.objective,
        kkt_residual: residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exploitability {
    /// `max_j` of the unilateral gains.
    pub value: f64,
    /// `U_j(best response, profile_{-j}) - U_j(profile)` per player.
    pub gains: Vec<f64>,
    pub best_responses: Vec<BestResponse>,
}

/// Largest payoff improvement any single player can obtain by deviating.
pub fn exploitability(spec: &GameSpec, profile: &[BudgetPlan]) -> Result<Exploitability> {
    let payoffs = all_payoffs(spec, profile)?;
    let mut gains = Vec::with_capacity(spec.m());
    let mut best_responses = Vec::with_capacity(spec.m());
    for j in 0..spec.m() {
        let br = best_response(spec, profile, j)?;
        gains.push(br.payoff - payoffs[j]);
        best_responses.push(br);
    }
    let value = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Exploitability {
        value,
        gains,
        best_responses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regret {
    /// `sum_tau f^tau(best fixed plan) - sum_tau f^tau(b_j^tau)`.
    pub value: f64,
    pub hindsight: BudgetPlan,
    pub hindsight_total: f64,
    pub realized_total: f64,
    pub kkt_residual: f64,
}

/// Regret of player `j` against the best fixed plan in hindsight, with
/// `f^tau(y) = U_j(y, b_{-j}^tau)`.
pub fn regret(spec: &GameSpec, trace: &LearningTrace, j: usize) -> Result<Regret> {
    if j >= spec.m() {
        return Err(Error::Dimension(format!("no player {j}")));
    }
    if trace.iterations() == 0 {
        return Err(Error::Config("empty trace".into()));
    }
    let set = player_set(spec, j)?;
    let realized_total: f64 = trace.payoffs.iter().map(|p| p[j]).sum();
    let objective = |flat: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let mut value = 0.0;
        let mut grad = DVector::zeros(flat.len());
        for profile in &trace.iterates {
            let mut eval = flat_objective(spec, profile, j);
            let (v, g) = eval(flat)?;
            value += v;
            grad += g;
        }
        Ok((value, grad))
    };
    let mut starts = default_starts(spec, j, &trace.average()[j].flat());
    starts.push(trace.last_iterate()[j].flat());
    let outcome = multi_start(&set, &starts, objective)?;
    let residual = kkt_residual(&set, &outcome.point, &outcome.gradient)?;
    Ok(Regret {
        value: outcome.objective - realized_total,
        hindsight: spec.plan_from_flat(j, outcome.point.as_slice())?,
        hindsight_total: outcome.objective,
        realized_total,
        kkt_residual: residual,
    })
}

/// Summary of a learning run at its averaged profile.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub profile: Vec<BudgetPlan>,
    pub last_iterate: Vec<BudgetPlan>,
    pub payoffs: Vec<f64>,
    pub exploitability: Exploitability,
    pub regrets: Vec<Regret>,
    pub iterations: usize,
}

/// Runs the learning dynamics and evaluates the averaged profile.
pub fn equilibrate(spec: &GameSpec, config: &NoRegretConfig) -> Result<(LearningTrace, EquilibriumResult)> {
    let trace = run_no_regret(spec, config)?;
    let profile = trace.average().to_vec();
    let payoffs = all_payoffs(spec, &profile)?;
    let exploitability = exploitability(spec, &profile)?;
    let regrets = (0..spec.m())
        .map(|j| regret(spec, &trace, j))
        .collect::<Result<Vec<_>>>()?;
    let result = EquilibriumResult {
        last_iterate: trace.last_iterate().to_vec(),
        profile,
        payoffs,
        exploitability,
        regrets,
        iterations: trace.iterations(),
    };
    Ok((trace, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_budget_set(&v(&[2.0, 2.0]), 3.0).unwrap(), v(&[1.5, 1.5]));
        assert_eq!(project_budget_set(&v(&[-1.0, 2.0]), 3.0).unwrap(), v(&[0.0, 2.0]));
        assert_eq!(project_budget_set(&v(&[3.0, 1.0, 0.0]), 2.0).unwrap(), v(&[2.0, 0.0, 0.0]));
        assert_eq!(project_budget_set(&v(&[0.4, 0.7]), 0.0).unwrap(), v(&[0.0, 0.0]));
        assert!(project_budget_set(&v(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn projection_of_ties() {
        let p = project_budget_set(&v(&[1.0, 1.0, 1.0, 1.0]), 2.0).unwrap();
        assert_eq!(p, v(&[0.5; 4]));
    }
}

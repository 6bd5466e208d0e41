//! Game data, stage utilities, campaign-time opinions, payoffs and their
//! exact gradients.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{apply_jump, check_plan_shapes, stage_budgets, CampaignSchedule, OpinionState};
use crate::error::{Error, Result};
use crate::network::{Network, Propagator};
use crate::FEASIBILITY_TOL;

/// One player's investment plan: a `K x n` nonnegative matrix whose row `k`
/// is the allocation at campaign `k + 1`. The terminal stage carries no
/// investment.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPlan {
    player: usize,
    entries: DMatrix<f64>,
    budget_cap: f64,
}

impl BudgetPlan {
    /// Validates nonnegativity and the total-spend cap. Entries within the
    /// feasibility tolerance below zero are clamped to zero.
    pub fn new(player: usize, mut entries: DMatrix<f64>, budget_cap: f64) -> Result<Self> {
        for v in entries.iter_mut() {
            if *v < 0.0 && *v >= -FEASIBILITY_TOL {
                *v = 0.0;
            }
        }
        let plan = Self {
            player,
            entries,
            budget_cap,
        };
        plan.check_feasible()
            .map_err(|reason| Error::InfeasiblePlan { player, reason })?;
        Ok(plan)
    }

    pub fn zeros(player: usize, stages: usize, n: usize, budget_cap: f64) -> Self {
        Self {
            player,
            entries: DMatrix::zeros(stages, n),
            budget_cap,
        }
    }

    /// Builds a plan from a stage-major flat vector of length `K n`.
    pub fn from_flat(player: usize, stages: usize, n: usize, budget_cap: f64, flat: &[f64]) -> Result<Self> {
        if flat.len() != stages * n {
            return Err(Error::Dimension(format!(
                "flat plan has {} entries, expected {}",
                flat.len(),
                stages * n
            )));
        }
        Self::new(player, DMatrix::from_row_slice(stages, n, flat), budget_cap)
    }

    /// Same as [`BudgetPlan::from_flat`] without validation; for iterates that
    /// come straight out of a projection.
    pub(crate) fn from_flat_unchecked(player: usize, stages: usize, n: usize, budget_cap: f64, flat: &[f64]) -> Self {
        Self {
            player,
            entries: DMatrix::from_row_slice(stages, n, flat),
            budget_cap,
        }
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn budget_cap(&self) -> f64 {
        self.budget_cap
    }

    pub fn stages(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn total_spend(&self) -> f64 {
        self.entries.sum()
    }

    /// Stage-major flattening, index `k * n + i`.
    pub fn flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.entries.len(),
            self.entries.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()),
        )
    }

    /// Allocation at campaign `k` in `1..=K`.
    pub fn stage(&self, k: usize) -> DVector<f64> {
        self.entries.row(k - 1).transpose()
    }

    pub(crate) fn check_feasible(&self) -> std::result::Result<(), String> {
        if self.budget_cap < 0.0 || !self.budget_cap.is_finite() {
            return Err(format!("invalid budget cap {}", self.budget_cap));
        }
        if let Some(v) = self
            .entries
            .iter()
            .find(|v| !v.is_finite() || **v < -FEASIBILITY_TOL)
        {
            return Err(format!("entry {v} is negative or non-finite"));
        }
        let spend = self.total_spend();
        if spend > self.budget_cap + FEASIBILITY_TOL {
            return Err(format!(
                "total spend {spend} exceeds budget {}",
                self.budget_cap
            ));
        }
        Ok(())
    }
}

/// Stage utility with an opinion-linear term and a linear advertising cost.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearUtility {
    /// One nonnegative weight vector per stage `1..=K+1`.
    pub rho: Vec<DVector<f64>>,
    /// Cost per unit of budget.
    pub lambda: f64,
}

/// A user-supplied stage utility `u(x_j, b_j(k), k)` of the player's own
/// opinion column and own allocation. Stages are numbered `1..=K+1`; the
/// terminal stage receives a zero allocation.
pub trait CustomUtility: fmt::Debug + Send + Sync {
    fn value(&self, stage: usize, opinions: &DVector<f64>, budget: &DVector<f64>) -> f64;
    fn opinion_gradient(&self, stage: usize, opinions: &DVector<f64>, budget: &DVector<f64>) -> DVector<f64>;
    fn budget_gradient(&self, stage: usize, opinions: &DVector<f64>, budget: &DVector<f64>) -> DVector<f64>;

    /// Whether the caller vouches that best-response problems built from this
    /// utility are concave in the player's own plan.
    fn concave_best_response(&self) -> bool {
        false
    }

    /// Serializable parameters, when the utility is the built-in quadratic.
    fn as_quadratic(&self) -> Option<&QuadraticUtility> {
        None
    }
}

/// `rho(k)'x + (c/2)|x|^2 - lambda 1'b`: convex in opinions for `c >= 0`,
/// concave for `c <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticUtility {
    pub rho: Vec<DVector<f64>>,
    pub lambda: f64,
    pub curvature: f64,
}

impl CustomUtility for QuadraticUtility {
    fn value(&self, stage: usize, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.rho[stage - 1].dot(x) + 0.5 * self.curvature * x.norm_squared() - self.lambda * b.sum()
    }

    fn opinion_gradient(&self, stage: usize, x: &DVector<f64>, _b: &DVector<f64>) -> DVector<f64> {
        &self.rho[stage - 1] + x * self.curvature
    }

    fn budget_gradient(&self, _stage: usize, x: &DVector<f64>, _b: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(x.len(), -self.lambda)
    }

    fn as_quadratic(&self) -> Option<&QuadraticUtility> {
        Some(self)
    }
}

/// Stage utility of one player.
#[derive(Debug, Clone)]
pub enum StageUtility {
    /// `rho(k)'x_j - lambda 1'b_j(k)`.
    LinearFavor(LinearUtility),
    /// `rho(k)'(1 - sum of rival opinion columns) - lambda 1'b_j(k)`. With two
    /// players this is the complement of the rival's opinions; on simplex rows
    /// it coincides with the favor form.
    LinearComplement(LinearUtility),
    Custom(Arc<dyn CustomUtility>),
}

impl PartialEq for StageUtility {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::LinearFavor(a), Self::LinearFavor(b)) => a == b,
            (Self::LinearComplement(a), Self::LinearComplement(b)) => a == b,
            (Self::Custom(a), Self::Custom(b)) => match (a.as_quadratic(), b.as_quadratic()) {
                (Some(qa), Some(qb)) => qa == qb,
                _ => Arc::ptr_eq(a, b),
            },
            _ => false,
        }
    }
}

impl StageUtility {
    pub fn linear_favor(rho: Vec<DVector<f64>>, lambda: f64) -> Self {
        Self::LinearFavor(LinearUtility { rho, lambda })
    }

    pub fn linear_complement(rho: Vec<DVector<f64>>, lambda: f64) -> Self {
        Self::LinearComplement(LinearUtility { rho, lambda })
    }

    pub fn custom<U: CustomUtility + 'static>(utility: U) -> Self {
        Self::Custom(Arc::new(utility))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::LinearFavor(_) => "linear-favor",
            Self::LinearComplement(_) => "linear-complement",
            Self::Custom(_) => "custom",
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, Self::Custom(_))
    }

    fn validate(&self, n: usize, stages: usize, m: usize) -> Result<()> {
        let check_rho = |rho: &[DVector<f64>]| -> Result<()> {
            if rho.len() != stages + 1 {
                return Err(Error::InvalidSpec(format!(
                    "rho needs {} stage vectors, got {}",
                    stages + 1,
                    rho.len()
                )));
            }
            for (k, r) in rho.iter().enumerate() {
                if r.len() != n {
                    return Err(Error::InvalidSpec(format!(
                        "rho({}) has length {}, expected {n}",
                        k + 1,
                        r.len()
                    )));
                }
                if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidSpec(format!("rho({}) must be nonnegative", k + 1)));
                }
            }
            Ok(())
        };
        let check_lambda = |lambda: f64| -> Result<()> {
            if !lambda.is_finite() || lambda < 0.0 {
                return Err(Error::InvalidSpec(format!("cost coefficient {lambda} must be nonnegative")));
            }
            Ok(())
        };
        match self {
            Self::LinearFavor(u) => {
                check_rho(&u.rho)?;
                check_lambda(u.lambda)
            }
            Self::LinearComplement(u) => {
                if m < 2 {
                    return Err(Error::InvalidSpec(
                        "linear-complement utility needs at least one rival player".into(),
                    ));
                }
                check_rho(&u.rho)?;
                check_lambda(u.lambda)
            }
            Self::Custom(c) => {
                if let Some(q) = c.as_quadratic() {
                    check_rho(&q.rho)?;
                    check_lambda(q.lambda)?;
                }
                Ok(())
            }
        }
    }

    /// `u_j(x(t_k), b_j(k), k)` for stage `k` in `1..=K+1`.
    pub fn value(&self, stage: usize, opinions: &DMatrix<f64>, player: usize, budget: &DVector<f64>) -> f64 {
        match self {
            Self::LinearFavor(u) => u.rho[stage - 1].dot(&opinions.column(player)) - u.lambda * budget.sum(),
            Self::LinearComplement(u) => {
                let rho = &u.rho[stage - 1];
                let mut v = rho.sum();
                for l in (0..opinions.ncols()).filter(|l| *l != player) {
                    v -= rho.dot(&opinions.column(l));
                }
                v - u.lambda * budget.sum()
            }
            Self::Custom(c) => c.value(stage, &opinions.column(player).into_owned(), budget),
        }
    }

    /// Partial derivatives with respect to the full `n x m` opinion matrix.
    pub fn opinion_gradient(
        &self,
        stage: usize,
        opinions: &DMatrix<f64>,
        player: usize,
        budget: &DVector<f64>,
    ) -> DMatrix<f64> {
        let (n, m) = opinions.shape();
        let mut g = DMatrix::zeros(n, m);
        match self {
            Self::LinearFavor(u) => g.set_column(player, &u.rho[stage - 1]),
            Self::LinearComplement(u) => {
                let neg = -&u.rho[stage - 1];
                for l in (0..m).filter(|l| *l != player) {
                    g.set_column(l, &neg);
                }
            }
            Self::Custom(c) => {
                let x = opinions.column(player).into_owned();
                g.set_column(player, &c.opinion_gradient(stage, &x, budget));
            }
        }
        g
    }

    /// Partial derivatives with respect to the player's own allocation.
    pub fn budget_gradient(
        &self,
        stage: usize,
        opinions: &DMatrix<f64>,
        player: usize,
        budget: &DVector<f64>,
    ) -> DVector<f64> {
        match self {
            Self::LinearFavor(u) | Self::LinearComplement(u) => DVector::from_element(budget.len(), -u.lambda),
            Self::Custom(c) => c.budget_gradient(stage, &opinions.column(player).into_owned(), budget),
        }
    }
}

/// Normalization factors `1 / (1 + total budget on individual i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingMatrix {
    pub diagonal: DVector<f64>,
}

impl DampingMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            diagonal: DVector::from_element(n, 1.0),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diagonal)
    }
}

/// Damping matrix of an `n x m` budget matrix.
pub fn damping_matrix(budgets: &DMatrix<f64>) -> Result<DampingMatrix> {
    if let Some((idx, v)) = budgets.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeBudget {
            individual: idx % budgets.nrows(),
            value: *v,
        });
    }
    let diagonal = DVector::from_iterator(
        budgets.nrows(),
        budgets.row_iter().map(|r| 1.0 / (1.0 + r.sum())),
    );
    Ok(DampingMatrix { diagonal })
}

/// Full problem data for one game instance.
#[derive(Debug, Clone)]
pub struct GameSpec {
    network: Network,
    schedule: CampaignSchedule,
    x0: OpinionState,
    budgets: Vec<f64>,
    utilities: Vec<StageUtility>,
    simplex: bool,
    /// `A_{k,k-1}` for `k = 1..=K+1`, stored at index `k - 1`.
    steps: Vec<DMatrix<f64>>,
}

impl PartialEq for GameSpec {
    fn eq(&self, other: &Self) -> bool {
        self.network == other.network
            && self.schedule == other.schedule
            && self.x0 == other.x0
            && self.budgets == other.budgets
            && self.utilities == other.utilities
            && self.simplex == other.simplex
    }
}

impl GameSpec {
    /// Assembles and validates a game. `simplex` requests that the initial
    /// opinion rows lie on the probability simplex.
    pub fn new(
        network: Network,
        schedule: CampaignSchedule,
        x0: OpinionState,
        budgets: Vec<f64>,
        utilities: Vec<StageUtility>,
        simplex: bool,
    ) -> Result<Self> {
        let n = network.n();
        let m = budgets.len();
        let stages = schedule.campaigns();
        if m == 0 {
            return Err(Error::InvalidSpec("at least one player is required".into()));
        }
        if utilities.len() != m {
            return Err(Error::InvalidSpec(format!(
                "{} utilities for {m} players",
                utilities.len()
            )));
        }
        if x0.n() != n || x0.m() != m {
            return Err(Error::Dimension(format!(
                "x0 is {}x{}, expected {n}x{m}",
                x0.n(),
                x0.m()
            )));
        }
        if let Some(b) = budgets.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::InvalidSpec(format!("budget {b} must be nonnegative")));
        }
        if simplex && m >= 2 && !x0.rows_on_simplex(1e-10) {
            return Err(Error::InvalidSpec("x0 rows must sum to 1 under simplex semantics".into()));
        }
        for u in &utilities {
            u.validate(n, stages, m)?;
        }
        let steps = (1..=stages + 1)
            .map(|k| {
                network
                    .propagator(schedule.time(k) - schedule.time(k - 1))
                    .map(|p| p.matrix)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            network,
            schedule,
            x0,
            budgets,
            utilities,
            simplex,
            steps,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn schedule(&self) -> &CampaignSchedule {
        &self.schedule
    }

    pub fn x0(&self) -> &OpinionState {
        &self.x0
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn utilities(&self) -> &[StageUtility] {
        &self.utilities
    }

    pub fn simplex(&self) -> bool {
        self.simplex
    }

    pub fn n(&self) -> usize {
        self.network.n()
    }

    pub fn m(&self) -> usize {
        self.budgets.len()
    }

    /// Campaign count `K`.
    pub fn stages(&self) -> usize {
        self.schedule.campaigns()
    }

    /// Length `K n` of one player's flattened plan.
    pub fn plan_len(&self) -> usize {
        self.stages() * self.n()
    }

    /// `A_{k,k-1}` for `k` in `1..=K+1`.
    pub fn step_propagator(&self, k: usize) -> &DMatrix<f64> {
        &self.steps[k - 1]
    }

    /// `A_{rs} = e^{-L (t_r - t_s)}` for `s <= r`.
    pub fn propagator_between(&self, s: usize, r: usize) -> Result<Propagator> {
        if s > r {
            return Err(Error::NegativeDuration(self.schedule.time(r) - self.schedule.time(s)));
        }
        Ok(self
            .network
            .propagator(self.schedule.time(r) - self.schedule.time(s))?
            .with_interval(s, r))
    }

    pub fn zero_plans(&self) -> Vec<BudgetPlan> {
        (0..self.m())
            .map(|j| BudgetPlan::zeros(j, self.stages(), self.n(), self.budgets[j]))
            .collect()
    }

    /// Flattened plan of player `j` rebuilt as a [`BudgetPlan`].
    pub fn plan_from_flat(&self, j: usize, flat: &[f64]) -> Result<BudgetPlan> {
        BudgetPlan::from_flat(j, self.stages(), self.n(), self.budgets[j], flat)
    }

    /// Replaces player `j`'s plan in a profile without validating it.
    pub(crate) fn with_flat(&self, plans: &[BudgetPlan], j: usize, flat: &[f64]) -> Vec<BudgetPlan> {
        let mut out = plans.to_vec();
        out[j] = BudgetPlan::from_flat_unchecked(j, self.stages(), self.n(), self.budgets[j], flat);
        out
    }

    fn check_plans(&self, plans: &[BudgetPlan]) -> Result<()> {
        check_plan_shapes(plans, self.m(), self.n(), self.stages())?;
        for (j, p) in plans.iter().enumerate() {
            if p.budget_cap() > self.budgets[j] + FEASIBILITY_TOL {
                return Err(Error::InfeasiblePlan {
                    player: j,
                    reason: format!(
                        "plan cap {} exceeds the player's budget {}",
                        p.budget_cap(),
                        self.budgets[j]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Pre-jump opinion matrices `x(t_k)` for `k = 0..=K+1` (index 0 is `x_0`).
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOpinions {
    pub states: Vec<DMatrix<f64>>,
}

impl CampaignOpinions {
    /// `x_j(t_k)`.
    pub fn player(&self, j: usize, k: usize) -> DVector<f64> {
        self.states[k].column(j).into_owned()
    }
}

struct Forward {
    /// Pre-jump states, `0..=K+1`.
    pre: Vec<DMatrix<f64>>,
    /// Post-jump states, `1..=K` at index `k`; index 0 holds `x_0`.
    post: Vec<DMatrix<f64>>,
    /// Damping diagonals, `1..=K` at index `k`; index 0 is the identity.
    damping: Vec<DVector<f64>>,
}

fn forward(spec: &GameSpec, plans: &[BudgetPlan]) -> Result<Forward> {
    spec.check_plans(plans)?;
    forward_unchecked(spec, plans)
}

fn forward_unchecked(spec: &GameSpec, plans: &[BudgetPlan]) -> Result<Forward> {
    let n = spec.n();
    let stages = spec.stages();
    let x0 = spec.x0.values().clone();
    let mut pre = Vec::with_capacity(stages + 2);
    let mut post = Vec::with_capacity(stages + 1);
    let mut damping = Vec::with_capacity(stages + 1);
    pre.push(x0.clone());
    post.push(x0);
    damping.push(DVector::from_element(n, 1.0));
    for k in 1..=stages + 1 {
        let x = spec.step_propagator(k) * &post[k - 1];
        if k <= stages {
            let b = stage_budgets(plans, k, n);
            let jumped = apply_jump(&x, &b).map_err(|e| match e {
                Error::InfeasiblePlan { player, reason } => Error::InfeasiblePlan {
                    player,
                    reason: format!("campaign {k}: {reason}"),
                },
                other => other,
            })?;
            if spec.m() >= 2 {
                damping.push(damping_matrix(&b)?.diagonal);
            } else {
                damping.push(DVector::from_element(n, 1.0));
            }
            post.push(jumped);
        }
        pre.push(x);
    }
    Ok(Forward { pre, post, damping })
}

/// Opinions at every campaign time by the stage recursion
/// `x(t_k) = A_{k,k-1} (D(k-1) x(t_{k-1}) + D(k-1) B(k-1))`.
pub fn opinions_at_campaigns(spec: &GameSpec, plans: &[BudgetPlan]) -> Result<CampaignOpinions> {
    Ok(CampaignOpinions {
        states: forward(spec, plans)?.pre,
    })
}

/// Same opinions as [`opinions_at_campaigns`] evaluated through the explicit
/// sum `x_j(t_k) = sum_s (prod_{r=s}^{k-1} A_{r+1,r} D(r)) b_j(s)` with
/// `b_j(0) = x_0` and `D(0) = I`.
pub fn opinions_by_summation(spec: &GameSpec, plans: &[BudgetPlan]) -> Result<CampaignOpinions> {
    spec.check_plans(plans)?;
    let n = spec.n();
    let m = spec.m();
    let stages = spec.stages();
    let mut damping = vec![DMatrix::identity(n, n)];
    for k in 1..=stages {
        if m >= 2 {
            damping.push(damping_matrix(&stage_budgets(plans, k, n))?.to_matrix());
        } else {
            damping.push(DMatrix::identity(n, n));
        }
    }
    let source = |s: usize| -> DMatrix<f64> {
        if s == 0 {
            spec.x0.values().clone()
        } else {
            stage_budgets(plans, s, n)
        }
    };
    let mut states = vec![spec.x0.values().clone()];
    for k in 1..=stages + 1 {
        let mut x = DMatrix::zeros(n, m);
        for s in 0..k {
            // left-multiplied product A_{k,k-1} D(k-1) ... A_{s+1,s} D(s)
            let mut prod = DMatrix::<f64>::identity(n, n);
            for r in s..k {
                prod = spec.step_propagator(r + 1) * &damping[r] * prod;
            }
            x += prod * source(s);
        }
        if m == 1 {
            // additive jumps must respect the headroom constraint
            if k <= stages {
                let b = plans[0].stage(k);
                for i in 0..n {
                    if b[i] > 1.0 - x[(i, 0)] + FEASIBILITY_TOL {
                        return Err(Error::InfeasiblePlan {
                            player: 0,
                            reason: format!("campaign {k}: budget exceeds headroom at individual {i}"),
                        });
                    }
                }
            }
        }
        states.push(x);
    }
    Ok(CampaignOpinions { states })
}

fn stage_value(spec: &GameSpec, fwd: &Forward, plans: &[BudgetPlan], j: usize) -> f64 {
    let stages = spec.stages();
    let n = spec.n();
    let u = &spec.utilities[j];
    let total: f64 = (1..=stages + 1)
        .map(|k| {
            let b = if k <= stages {
                plans[j].stage(k)
            } else {
                DVector::zeros(n)
            };
            u.value(k, &fwd.pre[k], j, &b)
        })
        .sum();
    total / (stages + 1) as f64
}

/// Average payoff `U_j = (1/(K+1)) sum_{k=1}^{K+1} u_j(x_j(t_k), b_j(k), k)`.
pub fn total_payoff(spec: &GameSpec, plans: &[BudgetPlan], j: usize) -> Result<f64> {
    if j >= spec.m() {
        return Err(Error::Dimension(format!("no player {j}")));
    }
    let fwd = forward(spec, plans)?;
    Ok(stage_value(spec, &fwd, plans, j))
}

/// Payoffs of all players from one forward pass.
pub fn all_payoffs(spec: &GameSpec, plans: &[BudgetPlan]) -> Result<Vec<f64>> {
    let fwd = forward(spec, plans)?;
    Ok((0..spec.m()).map(|j| stage_value(spec, &fwd, plans, j)).collect())
}

fn gradient_from_forward(spec: &GameSpec, fwd: &Forward, plans: &[BudgetPlan], j: usize) -> DMatrix<f64> {
    let n = spec.n();
    let m = spec.m();
    let stages = spec.stages();
    let u = &spec.utilities[j];
    let normalized = m >= 2;

    let stage_budget = |k: usize| {
        if k <= stages {
            plans[j].stage(k)
        } else {
            DVector::zeros(n)
        }
    };
    let opinion_grads: Vec<DMatrix<f64>> = (1..=stages + 1)
        .map(|k| u.opinion_gradient(k, &fwd.pre[k], j, &stage_budget(k)))
        .collect();

    let mut grad = DMatrix::zeros(stages, n);
    for s in 1..=stages {
        // Direction of the post-jump row i under a unit change of b_ij(s).
        let directions: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                if normalized {
                    let d = fwd.damping[s][i];
                    DVector::from_iterator(
                        m,
                        (0..m).map(|l| (if l == j { 1.0 } else { 0.0 } - fwd.post[s][(i, l)]) * d),
                    )
                } else {
                    DVector::from_element(1, 1.0)
                }
            })
            .collect();

        // Sensitivity carrier: column i is d x(t_k) row-direction for b_ij(s).
        let mut carrier = DMatrix::<f64>::identity(n, n);
        for k in s + 1..=stages + 1 {
            carrier = spec.step_propagator(k) * carrier;
            let h = carrier.transpose() * &opinion_grads[k - 1];
            for i in 0..n {
                grad[(s - 1, i)] += h.row(i).dot(&directions[i].transpose());
            }
            if k <= stages && normalized {
                for (r, mut row) in carrier.row_iter_mut().enumerate() {
                    row *= fwd.damping[k][r];
                }
            }
        }
        let direct = u.budget_gradient(s, &fwd.pre[s], j, &plans[j].stage(s));
        for i in 0..n {
            grad[(s - 1, i)] += direct[i];
        }
    }
    grad / (stages + 1) as f64
}

/// Exact gradient of `U_j` with respect to player `j`'s own `K x n` plan.
pub fn payoff_gradient(spec: &GameSpec, plans: &[BudgetPlan], j: usize) -> Result<DMatrix<f64>> {
    if j >= spec.m() {
        return Err(Error::Dimension(format!("no player {j}")));
    }
    let fwd = forward(spec, plans)?;
    Ok(gradient_from_forward(spec, &fwd, plans, j))
}

/// Payoffs and own-plan gradients of every player from one forward pass.
pub fn payoffs_and_gradients(spec: &GameSpec, plans: &[BudgetPlan]) -> Result<(Vec<f64>, Vec<DMatrix<f64>>)> {
    let fwd = forward(spec, plans)?;
    let payoffs = (0..spec.m()).map(|j| stage_value(spec, &fwd, plans, j)).collect();
    let grads = (0..spec.m())
        .map(|j| gradient_from_forward(spec, &fwd, plans, j))
        .collect();
    Ok((payoffs, grads))
}

/// Payoff and gradient of player `j` without re-validating caps; used on
/// solver iterates that are feasible up to projection accuracy.
pub(crate) fn payoff_and_gradient_unchecked(
    spec: &GameSpec,
    plans: &[BudgetPlan],
    j: usize,
) -> Result<(f64, DMatrix<f64>)> {
    let fwd = forward_unchecked(spec, plans)?;
    Ok((stage_value(spec, &fwd, plans, j), gradient_from_forward(spec, &fwd, plans, j)))
}

pub(crate) fn payoff_unchecked(spec: &GameSpec, plans: &[BudgetPlan], j: usize) -> Result<f64> {
    let fwd = forward_unchecked(spec, plans)?;
    Ok(stage_value(spec, &fwd, plans, j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> DVector<f64> {
        DVector::from_element(n, 1.0)
    }

    fn static_single(n: usize, stages: usize, x0: f64, budget: f64, rho: f64, lambda: f64) -> GameSpec {
        let times: Vec<f64> = (0..stages + 2).map(|k| k as f64).collect();
        GameSpec::new(
            Network::new(DMatrix::identity(n, n)).unwrap(),
            CampaignSchedule::new(times).unwrap(),
            OpinionState::uniform(n, 1, x0).unwrap(),
            vec![budget],
            vec![StageUtility::linear_favor(vec![ones(n) * rho; stages + 1], lambda)],
            false,
        )
        .unwrap()
    }

    #[test]
    fn damping_examples() {
        assert_eq!(damping_matrix(&DMatrix::zeros(3, 2)).unwrap(), DampingMatrix::identity(3));
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 2.0]);
        assert_eq!(damping_matrix(&b).unwrap().diagonal, DVector::from_vec(vec![0.5, 0.25]));
        let single = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        assert_eq!(damping_matrix(&single).unwrap().diagonal[0], 0.5);
        assert!(damping_matrix(&DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn static_zero_plan_payoff() {
        let spec = static_single(3, 2, 0.5, 1.0, 1.0, 1.0);
        let u = total_payoff(&spec, &spec.zero_plans(), 0).unwrap();
        assert!((u - 1.5).abs() < 1e-14);
    }

    #[test]
    fn no_diffusion_single_jump() {
        let spec = static_single(2, 1, 0.3, 2.0, 1.0, 0.0);
        let plan = BudgetPlan::new(0, DMatrix::from_row_slice(1, 2, &[0.2, 0.7]), 2.0).unwrap();
        let ops = opinions_at_campaigns(&spec, &[plan]).unwrap();
        assert!((ops.player(0, 2) - DVector::from_vec(vec![0.5, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn plan_over_budget_rejected() {
        let err = BudgetPlan::new(1, DMatrix::from_element(2, 2, 1.0), 3.0).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePlan { player: 1, .. }));
        assert!(BudgetPlan::new(0, DMatrix::from_element(1, 1, -0.5), 3.0).is_err());
    }

    #[test]
    fn single_player_headroom_violation() {
        let spec = static_single(1, 1, 0.9, 5.0, 1.0, 0.0);
        let plan = BudgetPlan::new(0, DMatrix::from_element(1, 1, 0.2), 5.0).unwrap();
        assert!(matches!(
            total_payoff(&spec, &[plan], 0),
            Err(Error::InfeasiblePlan { player: 0, .. })
        ));
    }

    #[test]
    fn complement_needs_rival() {
        let err = GameSpec::new(
            Network::new(DMatrix::identity(1, 1)).unwrap(),
            CampaignSchedule::new(vec![0.0, 1.0, 2.0]).unwrap(),
            OpinionState::uniform(1, 1, 0.5).unwrap(),
            vec![1.0],
            vec![StageUtility::linear_complement(vec![ones(1); 2], 1.0)],
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
    }

    #[test]
    fn rho_length_checked() {
        let err = GameSpec::new(
            Network::new(DMatrix::identity(2, 2)).unwrap(),
            CampaignSchedule::new(vec![0.0, 1.0, 2.0]).unwrap(),
            OpinionState::uniform(2, 1, 0.5).unwrap(),
            vec![1.0],
            vec![StageUtility::linear_favor(vec![ones(2); 1], 1.0)],
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
    }

    #[test]
    fn one_individual_two_player_gradient() {
        // U_1 = (1/2)[x + (x + b1)/(1 + b1 + b2)], dU_1/db1 at 0 = (1/2)(1 - x) = 0.25
        let spec = GameSpec::new(
            Network::new(DMatrix::identity(1, 1)).unwrap(),
            CampaignSchedule::new(vec![0.0, 1.0, 2.0]).unwrap(),
            OpinionState::uniform(1, 2, 0.5).unwrap(),
            vec![1.0, 1.0],
            vec![
                StageUtility::linear_favor(vec![ones(1); 2], 0.0),
                StageUtility::linear_favor(vec![ones(1); 2], 0.0),
            ],
            true,
        )
        .unwrap();
        let g = payoff_gradient(&spec, &spec.zero_plans(), 0).unwrap();
        assert!((g[(0, 0)] - 0.25).abs() < 1e-15);

        // closed form (1/2)(1 + b2 - x)/(1 + b1 + b2)^2 at b1 = 0.3, b2 = 0.6
        let plans = vec![
            BudgetPlan::new(0, DMatrix::from_element(1, 1, 0.3), 1.0).unwrap(),
            BudgetPlan::new(1, DMatrix::from_element(1, 1, 0.6), 1.0).unwrap(),
        ];
        let g = payoff_gradient(&spec, &plans, 0).unwrap();
        let expected = 0.5 * (1.0 + 0.6 - 0.5) / (1.9f64 * 1.9);
        assert!((g[(0, 0)] - expected).abs() < 1e-14);
    }
}

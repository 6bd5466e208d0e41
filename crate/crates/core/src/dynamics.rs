//! Campaign schedules, opinion jumps and hybrid trajectory simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::BudgetPlan;
use crate::network::Network;
use crate::FEASIBILITY_TOL;

const OPINION_TOL: f64 = 1e-10;

/// Ordered times `t_0 < t_1 < ... < t_K < t_{K+1}`: the initial time, the `K`
/// campaign times and the terminal time.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSchedule {
    times: Vec<f64>,
}

impl CampaignSchedule {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidSchedule(
                "need at least an initial and a terminal time".into(),
            ));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidSchedule(format!("non-finite time {t}")));
        }
        if let Some(w) = times.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(format!(
                "times must be strictly increasing: t_{} = {} >= t_{} = {}",
                w,
                times[w],
                w + 1,
                times[w + 1]
            )));
        }
        Ok(Self { times })
    }

    /// Number of campaign times `K`.
    pub fn campaigns(&self) -> usize {
        self.times.len() - 2
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `t_k` for `k` in `0..=K+1`.
    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn initial(&self) -> f64 {
        self.times[0]
    }

    pub fn terminal(&self) -> f64 {
        *self.times.last().expect("schedule is nonempty")
    }

    /// Campaign times `t_1..t_K`.
    pub fn campaign_times(&self) -> &[f64] {
        &self.times[1..self.times.len() - 1]
    }
}

/// Opinions of `n` individuals about `m` players, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState(DMatrix<f64>);

impl OpinionState {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < -OPINION_TOL || *v > 1.0 + OPINION_TOL {
                return Err(Error::OpinionOutOfRange {
                    individual: idx % values.nrows(),
                    value: *v,
                });
            }
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize, m: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(n, m, value))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn m(&self) -> usize {
        self.0.ncols()
    }

    /// True when every row lies on the probability simplex within `tol`.
    pub fn rows_on_simplex(&self, tol: f64) -> bool {
        self.0.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol)
    }
}

/// Additive single-player jump `x + b`, requiring `0 <= b <= 1 - x`.
pub fn jump_single(x: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != b.len() {
        return Err(Error::Dimension(format!(
            "opinion length {} vs budget length {}",
            x.len(),
            b.len()
        )));
    }
    for i in 0..x.len() {
        if b[i] < -FEASIBILITY_TOL {
            return Err(Error::NegativeBudget {
                individual: i,
                value: b[i],
            });
        }
        let headroom = 1.0 - x[i];
        if b[i] > headroom + FEASIBILITY_TOL {
            return Err(Error::InfeasibleJump {
                individual: i,
                budget: b[i],
                headroom,
            });
        }
    }
    Ok(x + b)
}

/// Normalized multiplayer jump: entry `(i, j)` becomes
/// `(x_ij + b_ij) / (1 + sum_l b_il)`.
pub fn jump_multi(x: &DMatrix<f64>, budgets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != budgets.shape() {
        return Err(Error::Dimension(format!(
            "opinions {:?} vs budgets {:?}",
            x.shape(),
            budgets.shape()
        )));
    }
    if let Some((idx, v)) = budgets.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeBudget {
            individual: idx % budgets.nrows(),
            value: *v,
        });
    }
    let mut out = x + budgets;
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let denom = 1.0 + budgets.row(i).sum();
        row /= denom;
    }
    Ok(out)
}

/// Where a trajectory sample sits relative to the jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Between campaign times.
    Flow,
    /// At a campaign time, before the budgets act.
    PreJump,
    /// At a campaign time, just after the budgets act.
    PostJump,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Flow => "flow",
            Phase::PreJump => "pre",
            Phase::PostJump => "post",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub phase: Phase,
    pub state: DMatrix<f64>,
}

/// Budget matrix `B(k)` (n x m) for campaign `k` in `1..=K`.
pub(crate) fn stage_budgets(plans: &[BudgetPlan], k: usize, n: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, plans.len());
    for (j, plan) in plans.iter().enumerate() {
        for i in 0..n {
            b[(i, j)] = plan.entries()[(k - 1, i)];
        }
    }
    b
}

/// Applies the jump rule of the game: additive for one player, normalized
/// otherwise. `player` is only used to label infeasibility.
pub(crate) fn apply_jump(pre: &DMatrix<f64>, budgets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if pre.ncols() == 1 {
        let x = pre.column(0).into_owned();
        let b = budgets.column(0).into_owned();
        let post = jump_single(&x, &b).map_err(|e| Error::InfeasiblePlan {
            player: 0,
            reason: e.to_string(),
        })?;
        Ok(DMatrix::from_column_slice(post.len(), 1, post.as_slice()))
    } else {
        jump_multi(pre, budgets)
    }
}

pub(crate) fn check_plan_shapes(plans: &[BudgetPlan], m: usize, n: usize, k: usize) -> Result<()> {
    if plans.len() != m {
        return Err(Error::Dimension(format!(
            "expected {m} plans, got {}",
            plans.len()
        )));
    }
    for (j, plan) in plans.iter().enumerate() {
        if plan.entries().shape() != (k, n) {
            return Err(Error::InfeasiblePlan {
                player: j,
                reason: format!(
                    "plan is {:?}, expected {k}x{n}",
                    plan.entries().shape()
                ),
            });
        }
        plan.check_feasible().map_err(|reason| Error::InfeasiblePlan { player: j, reason })?;
    }
    Ok(())
}

/// Simulates the hybrid flow/jump model and samples it at `sample_times`.
///
/// Samples falling exactly on a campaign time produce two records, the
/// pre-jump and the post-jump state.
pub fn simulate_trajectory(
    network: &Network,
    schedule: &CampaignSchedule,
    x0: &OpinionState,
    plans: &[BudgetPlan],
    sample_times: &[f64],
) -> Result<Vec<TrajectoryPoint>> {
    let n = network.n();
    let k_count = schedule.campaigns();
    if x0.n() != n {
        return Err(Error::Dimension(format!(
            "x0 has {} rows, network has {n} individuals",
            x0.n()
        )));
    }
    check_plan_shapes(plans, x0.m(), n, k_count)?;
    if let Some(w) = sample_times.windows(2).find(|w| w[0] > w[1]) {
        return Err(Error::SampleTimes(format!("{} after {}", w[1], w[0])));
    }
    if let Some(t) = sample_times
        .iter()
        .find(|t| !(**t >= schedule.initial() && **t <= schedule.terminal()))
    {
        return Err(Error::SampleTimes(format!(
            "{t} outside [{}, {}]",
            schedule.initial(),
            schedule.terminal()
        )));
    }

    let mut out = Vec::with_capacity(sample_times.len());
    let mut state = x0.values().clone();
    let mut t_prev = schedule.initial();
    let mut next = 1;

    let cross = |state: &mut DMatrix<f64>, t_prev: &mut f64, k: usize| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let t_k = schedule.time(k);
        let pre = network.propagator(t_k - *t_prev)?.apply(state);
        let post = apply_jump(&pre, &stage_budgets(plans, k, n)).map_err(|e| match e {
            Error::InfeasiblePlan { reason, .. } => Error::InfeasiblePlan {
                player: 0,
                reason: format!("campaign {k}: {reason}"),
            },
            other => other,
        })?;
        *state = post.clone();
        *t_prev = t_k;
        Ok((pre, post))
    };

    for &t in sample_times {
        while next <= k_count && schedule.time(next) < t {
            cross(&mut state, &mut t_prev, next)?;
            next += 1;
        }
        if next <= k_count && schedule.time(next) == t {
            let (pre, post) = cross(&mut state, &mut t_prev, next)?;
            next += 1;
            out.push(TrajectoryPoint {
                time: t,
                phase: Phase::PreJump,
                state: pre,
            });
            out.push(TrajectoryPoint {
                time: t,
                phase: Phase::PostJump,
                state: post,
            });
            continue;
        }
        let x = network.propagator(t - t_prev)?.apply(&state);
        out.push(TrajectoryPoint {
            time: t,
            phase: Phase::Flow,
            state: x,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn schedule_must_increase() {
        assert!(CampaignSchedule::new(vec![0.0, 1.0, 1.0, 3.0]).is_err());
        assert!(CampaignSchedule::new(vec![0.0]).is_err());
        let s = CampaignSchedule::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.campaigns(), 2);
        assert_eq!(s.campaign_times(), &[1.0, 2.0]);
    }

    #[test]
    fn single_jump_examples() {
        assert_eq!(jump_single(&v(&[0.5; 3]), &v(&[0.0; 3])).unwrap(), v(&[0.5; 3]));
        let out = jump_single(&v(&[0.2, 0.9]), &v(&[0.3, 0.1])).unwrap();
        assert!((out - v(&[0.5, 1.0])).amax() < 1e-15);
        assert!(matches!(
            jump_single(&v(&[0.9]), &v(&[0.2])),
            Err(Error::InfeasibleJump { .. })
        ));
    }

    #[test]
    fn single_jump_boundary_is_feasible() {
        let out = jump_single(&v(&[0.25]), &v(&[0.75])).unwrap();
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn multi_jump_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.3, 0.7]);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(jump_multi(&x, &zero).unwrap(), x);

        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 2.0]);
        let out = jump_multi(&x, &b).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.46, 0.54]);
        assert!((out - expected).amax() < 1e-15);
    }

    #[test]
    fn multi_jump_rejects_negative_budget() {
        let x = DMatrix::from_element(1, 2, 0.5);
        let b = DMatrix::from_row_slice(1, 2, &[0.1, -0.1]);
        assert!(matches!(jump_multi(&x, &b), Err(Error::NegativeBudget { .. })));
    }

    #[test]
    fn opinion_state_bounds() {
        assert!(OpinionState::new(DMatrix::from_element(2, 2, 1.2)).is_err());
        let s = OpinionState::uniform(3, 2, 0.5).unwrap();
        assert!(s.rows_on_simplex(1e-12));
    }
}

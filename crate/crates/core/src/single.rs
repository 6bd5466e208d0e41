//! Optimal single-player allocation.
//!
//! With one player the jumps are additive, so every campaign-time opinion is
//! an affine function of the plan and the problem becomes a concave program
//! over a polytope of `2Kn + 1` halfspaces. It is solved by projected
//! gradient ascent, projecting with Dykstra's cyclic algorithm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{payoff_and_gradient_unchecked, BudgetPlan, GameSpec};
use crate::verification;

/// Default constraint-violation tolerance of the polytope projection.
pub const PROJECTION_TOL: f64 = 1e-10;
/// Default cycle cap of the polytope projection.
pub const PROJECTION_MAX_CYCLES: usize = 10_000;

/// `normal . b <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn violation(&self, point: &DVector<f64>) -> f64 {
        self.normal.dot(point) - self.offset
    }

    fn project_into(&self, point: &mut DVector<f64>) {
        let excess = self.violation(point);
        if excess > 0.0 {
            let scale = excess / self.normal.norm_squared();
            point.axpy(-scale, &self.normal, 1.0);
        }
    }
}

/// A closed convex set with a Euclidean projection.
pub trait FeasibleSet {
    fn dim(&self) -> usize;
    fn project(&self, point: &DVector<f64>) -> Result<DVector<f64>>;
    /// Largest constraint violation at `point` (nonpositive when inside).
    fn violation(&self, point: &DVector<f64>) -> f64;
}

/// The single-player polytope: headroom rows, the budget cap and
/// nonnegativity, over stage-major plans of length `K n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    pub halfspaces: Vec<Halfspace>,
    pub stages: usize,
    pub n: usize,
    pub tol: f64,
    pub max_cycles: usize,
}

impl FeasibleRegion {
    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        self.violation(point) <= tol
    }
}

impl FeasibleSet for FeasibleRegion {
    fn dim(&self) -> usize {
        self.stages * self.n
    }

    fn project(&self, point: &DVector<f64>) -> Result<DVector<f64>> {
        project_feasible(point, self, self.tol, self.max_cycles)
    }

    fn violation(&self, point: &DVector<f64>) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.violation(point))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Assembles the `2Kn + 1` halfspaces of a single-player game. The fixed
/// contribution `A_{k0} x_0` of the initial opinions is folded into the
/// headroom offsets.
pub fn build_region(spec: &GameSpec) -> Result<FeasibleRegion> {
    if spec.m() != 1 {
        return Err(Error::WrongMode(format!(
            "the single-player program needs exactly one player, found {}",
            spec.m()
        )));
    }
    let n = spec.n();
    let stages = spec.stages();
    let dim = n * stages;
    let x0 = spec.x0().values().column(0).into_owned();

    // propagators[k][s] = A_{ks}, s < k
    let mut propagators: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); stages + 1];
    for k in 1..=stages {
        for s in 0..k {
            propagators[k].push(spec.propagator_between(s, k)?.matrix);
        }
    }

    let mut halfspaces = Vec::with_capacity(2 * dim + 1);
    for k in 1..=stages {
        let base = &propagators[k][0] * &x0;
        for i in 0..n {
            let mut normal = DVector::zeros(dim);
            normal[(k - 1) * n + i] = 1.0;
            for s in 1..k {
                for l in 0..n {
                    normal[(s - 1) * n + l] += propagators[k][s][(i, l)];
                }
            }
            halfspaces.push(Halfspace {
                normal,
                offset: 1.0 - base[i],
            });
        }
    }
    halfspaces.push(Halfspace {
        normal: DVector::from_element(dim, 1.0),
        offset: spec.budgets()[0],
    });
    for idx in 0..dim {
        let mut normal = DVector::zeros(dim);
        normal[idx] = -1.0;
        halfspaces.push(Halfspace { normal, offset: 0.0 });
    }
    Ok(FeasibleRegion {
        halfspaces,
        stages,
        n,
        tol: PROJECTION_TOL,
        max_cycles: PROJECTION_MAX_CYCLES,
    })
}

/// Euclidean projection onto the region by Dykstra's algorithm. Stops once
/// the violation and the movement over a full cycle are both within `tol`.
pub fn project_feasible(
    point: &DVector<f64>,
    region: &FeasibleRegion,
    tol: f64,
    max_cycles: usize,
) -> Result<DVector<f64>> {
    if point.len() != region.dim() {
        return Err(Error::Dimension(format!(
            "point has length {}, region dimension is {}",
            point.len(),
            region.dim()
        )));
    }
    let mut x = point.clone();
    let mut corrections = vec![DVector::<f64>::zeros(x.len()); region.halfspaces.len()];
    let mut violation = region.violation(&x);
    for _ in 0..max_cycles {
        let start = x.clone();
        for (h, y) in region.halfspaces.iter().zip(corrections.iter_mut()) {
            let z = &x + &*y;
            let mut p = z.clone();
            h.project_into(&mut p);
            *y = z - &p;
            x = p;
        }
        violation = region.violation(&x);
        let moved = (&x - start).amax();
        if violation <= tol && moved <= tol {
            return Ok(x);
        }
    }
    Err(Error::ProjectionNonConvergence {
        cycles: max_cycles,
        violation,
        last: x.as_slice().to_vec(),
    })
}

/// Step-size sequence `eta_tau`, `tau = 1, 2, ...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `c / tau`.
    COverTau(f64),
    /// `c / sqrt(tau)`.
    COverSqrtTau(f64),
}

impl StepSchedule {
    pub fn step(&self, tau: usize) -> f64 {
        match *self {
            StepSchedule::COverTau(c) => c / tau as f64,
            StepSchedule::COverSqrtTau(c) => c / (tau as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = match *self {
            StepSchedule::COverTau(c) | StepSchedule::COverSqrtTau(c) => c,
        };
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("step constant must be positive, got {c}")));
        }
        Ok(())
    }
}

/// Step control of the projected ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AscentStep {
    /// Follow a schedule; backtrack only when a step would lose objective.
    Schedule(StepSchedule),
    /// Grow the step after every accepted move, halve on rejection.
    Adaptive { initial: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub step: AscentStep,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome {
    pub point: DVector<f64>,
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub final_step_norm: f64,
    /// Objective after every accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Projected gradient ascent on a concave objective returning
/// `(value, gradient)`. Every accepted iterate increases the objective.
pub fn projected_ascent<F, S>(
    mut objective: F,
    set: &S,
    start: &DVector<f64>,
    options: &AscentOptions,
) -> Result<AscentOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
    S: FeasibleSet + ?Sized,
{
    let mut x = set.project(start)?;
    let (mut f, mut g) = objective(&x)?;
    let mut history = vec![f];
    let mut final_step_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut adaptive_eta = match options.step {
        AscentStep::Adaptive { initial } => initial,
        AscentStep::Schedule(_) => 0.0,
    };

    for t in 1..=options.max_iters {
        let mut eta = match options.step {
            AscentStep::Schedule(s) => s.step(t),
            AscentStep::Adaptive { .. } => adaptive_eta,
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &g * eta;
            let cand = set.project(&trial)?;
            let (fc, gc) = objective(&cand)?;
            let gain = g.dot(&(&cand - &x));
            if fc >= f + ARMIJO * gain.max(0.0) && fc >= f {
                accepted = Some((cand, fc, gc));
                break;
            }
            eta *= 0.5;
        }
        iterations = t;
        let Some((cand, fc, gc)) = accepted else {
            // no ascent possible at machine precision
            final_step_norm = 0.0;
            break;
        };
        final_step_norm = (&cand - &x).norm();
        x = cand;
        f = fc;
        g = gc;
        history.push(f);
        if let AscentStep::Adaptive { .. } = options.step {
            adaptive_eta = eta * 2.0;
        }
        if final_step_norm < options.tol {
            break;
        }
    }
    Ok(AscentOutcome {
        point: x,
        objective: f,
        gradient: g,
        iterations,
        final_step_norm,
        history,
    })
}

/// Norm of the gradient projected on the tangent cone of the set at `point`,
/// estimated from a short projected step.
pub fn kkt_residual<S: FeasibleSet + ?Sized>(set: &S, point: &DVector<f64>, gradient: &DVector<f64>) -> Result<f64> {
    let scale = gradient.amax();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let s = 1e-4 / scale;
    let moved = set.project(&(point + gradient * s))?;
    Ok((moved - point).norm() / s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// `None` selects `eta_0 / sqrt(t)` with `eta_0` the inverse of the
    /// estimated gradient norm.
    pub step: Option<StepSchedule>,
    pub max_iters: usize,
    pub tol: f64,
    pub projection_tol: f64,
    pub projection_max_cycles: usize,
    /// Seed of the concavity check run on custom utilities.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            step: None,
            max_iters: 100_000,
            tol: 1e-8,
            projection_tol: PROJECTION_TOL,
            projection_max_cycles: PROJECTION_MAX_CYCLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub plan: BudgetPlan,
    pub objective: f64,
    pub iterations: usize,
    pub final_step_norm: f64,
    pub kkt_residual: f64,
    /// Objective after every accepted iterate.
    pub history: Vec<f64>,
}

/// Objective and gradient of a single-player game over flat plans.
pub(crate) fn flat_objective<'a>(
    spec: &'a GameSpec,
    profile: &'a [BudgetPlan],
    j: usize,
) -> impl FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)> + 'a {
    move |flat: &DVector<f64>| {
        let plans = spec.with_flat(profile, j, flat.as_slice());
        let (value, grad) = payoff_and_gradient_unchecked(spec, &plans, j)?;
        let flat_grad = DVector::from_iterator(grad.len(), grad.transpose().iter().copied());
        Ok((value, flat_grad))
    }
}

/// Maximizes the single-player payoff over the polytope, starting from the
/// zero plan.
pub fn solve_single(spec: &GameSpec, options: &SolveOptions) -> Result<SolveReport> {
    let mut region = build_region(spec)?;
    region.tol = options.projection_tol;
    region.max_cycles = options.projection_max_cycles;
    verification::check_concave_utility(spec, 0, options.seed)?;

    let profile = spec.zero_plans();
    let mut objective = flat_objective(spec, &profile, 0);
    let zero = DVector::zeros(region.dim());

    let step = match options.step {
        Some(s) => {
            s.validate()?;
            s
        }
        None => {
            let (_, g0) = objective(&zero)?;
            let interior = region.project(&DVector::from_element(region.dim(), spec.budgets()[0] / (2.0 * region.dim().max(1) as f64)))?;
            let (_, g1) = objective(&interior)?;
            let bound = g0.norm().max(g1.norm());
            StepSchedule::COverSqrtTau(if bound > 0.0 { 1.0 / bound } else { 1.0 })
        }
    };
    let outcome = projected_ascent(
        &mut objective,
        &region,
        &zero,
        &AscentOptions {
            step: AscentStep::Schedule(step),
            max_iters: options.max_iters,
            tol: options.tol,
        },
    )?;
    let residual = kkt_residual(&region, &outcome.point, &outcome.gradient)?;
    let plan = spec.plan_from_flat(0, outcome.point.as_slice())?;
    Ok(SolveReport {
        plan,
        objective: outcome.objective,
        iterations: outcome.iterations,
        final_step_norm: outcome.final_step_norm,
        kkt_residual: residual,
        history: outcome.history,
    })
}

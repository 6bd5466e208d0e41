//! Independent oracles and executable checks of the structural properties
//! the solvers rely on: finite-difference gradients, exhaustive grid search,
//! stochasticity of the flow and midpoint convexity.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{CampaignSchedule, OpinionState};
use crate::equilibrium::{player_set, project_budget_set};
use crate::error::{Error, Result};
use crate::game::{
    opinions_at_campaigns, payoff_gradient, payoff_unchecked, total_payoff, BudgetPlan, GameSpec, StageUtility,
};
use crate::network::Network;
use crate::single::{build_region, solve_single, FeasibleSet, SolveOptions};

/// Tolerance of every midpoint test.
pub const MIDPOINT_TOL: f64 = 1e-9;

/// Finite-difference gradient; `one_sided` lists the coordinates where a
/// perturbed evaluation failed and a forward or backward difference was used.
#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient {
    pub gradient: DVector<f64>,
    pub one_sided: Vec<usize>,
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`, falling back to a
/// one-sided difference where `f` returns `None`.
pub fn fd_gradient<F>(mut f: F, point: &DVector<f64>, h: f64) -> Result<FdGradient>
where
    F: FnMut(&DVector<f64>) -> Option<f64>,
{
    let center = f(point).ok_or_else(|| Error::Config("function undefined at the base point".into()))?;
    let mut gradient = DVector::zeros(point.len());
    let mut one_sided = Vec::new();
    for i in 0..point.len() {
        let mut up = point.clone();
        up[i] += h;
        let mut down = point.clone();
        down[i] -= h;
        gradient[i] = match (f(&up), f(&down)) {
            (Some(a), Some(b)) => (a - b) / (2.0 * h),
            (Some(a), None) => {
                one_sided.push(i);
                (a - center) / h
            }
            (None, Some(b)) => {
                one_sided.push(i);
                (center - b) / h
            }
            (None, None) => {
                return Err(Error::Config(format!(
                    "function undefined on both sides of coordinate {i}"
                )))
            }
        };
    }
    Ok(FdGradient { gradient, one_sided })
}

/// Largest number of decision variables the grid search accepts.
pub const BRUTE_FORCE_MAX_DIM: usize = 4;

/// Exhaustive search of player `j`'s grid-restricted feasible set against the
/// fixed opponents in `profile`. Grid points are visited in lexicographic
/// order and only strict improvements replace the incumbent, so ties resolve
/// to the lexicographically smallest plan.
pub fn brute_force_best_response(
    spec: &GameSpec,
    profile: &[BudgetPlan],
    j: usize,
    grid_step: f64,
) -> Result<(BudgetPlan, f64)> {
    let dim = spec.plan_len();
    if dim > BRUTE_FORCE_MAX_DIM {
        return Err(Error::TooLarge(format!(
            "{dim} decision variables, at most {BRUTE_FORCE_MAX_DIM} supported"
        )));
    }
    if !grid_step.is_finite() || grid_step <= 0.0 {
        return Err(Error::Config(format!("grid step {grid_step} must be positive")));
    }
    let beta = spec.budgets()[j];
    let region = if spec.m() == 1 { Some(build_region(spec)?) } else { None };
    let upper = if region.is_some() { beta.min(1.0) } else { beta };
    let levels = (upper / grid_step + 1e-9).floor() as usize;

    let mut idx = vec![0usize; dim];
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let point: Vec<f64> = idx.iter().map(|&k| k as f64 * grid_step).collect();
        let spend: f64 = point.iter().sum();
        let feasible = spend <= beta + 1e-12
            && region
                .as_ref()
                .is_none_or(|r| r.violation(&DVector::from_column_slice(&point)) <= 1e-12);
        if feasible {
            let plans = spec.with_flat(profile, j, &point);
            let value = payoff_unchecked(spec, &plans, j)?;
            if best.as_ref().is_none_or(|(_, b)| value > *b) {
                best = Some((point, value));
            }
        }
        // odometer, last coordinate fastest
        let mut pos = dim;
        loop {
            if pos == 0 {
                let (point, value) = best.expect("the zero plan is always feasible");
                return Ok((spec.plan_from_flat(j, &point)?, value));
            }
            pos -= 1;
            if idx[pos] < levels {
                idx[pos] += 1;
                for later in idx.iter_mut().skip(pos + 1) {
                    *later = 0;
                }
                break;
            }
        }
        if dim == 0 {
            let (point, value) = best.expect("the zero plan is always feasible");
            return Ok((spec.plan_from_flat(j, &point)?, value));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticReport {
    pub pass: bool,
    /// Largest `|row sum - 1|`.
    pub max_row_deviation: f64,
    pub min_entry: f64,
}

/// Row sums within `tol` of one and no entry below `-tol`.
pub fn check_stochastic(matrix: &DMatrix<f64>, tol: f64) -> StochasticReport {
    let max_row_deviation = matrix
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let min_entry = matrix.iter().copied().fold(f64::INFINITY, f64::min);
    StochasticReport {
        pass: matrix.is_square() && max_row_deviation <= tol && min_entry >= -tol,
        max_row_deviation,
        min_entry,
    }
}

/// A function on a convex domain together with a sampler of that domain.
pub struct ConvexityProbe<F, S> {
    pub function: F,
    pub sampler: S,
    pub samples: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub pass: bool,
    /// Largest `f(mid) - (f(y) + f(y')) / 2` seen.
    pub worst_violation: f64,
    pub samples: usize,
}

/// Tests `f((y + y') / 2) <= (f(y) + f(y')) / 2 + tolerance` on sampled pairs.
pub fn midpoint_convexity_check<F, S, R>(probe: &mut ConvexityProbe<F, S>, rng: &mut R) -> ConvexityReport
where
    F: FnMut(&DVector<f64>) -> f64,
    S: FnMut(&mut R) -> DVector<f64>,
    R: Rng,
{
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..probe.samples {
        let a = (probe.sampler)(rng);
        let b = (probe.sampler)(rng);
        let mid = (&a + &b) * 0.5;
        let gap = (probe.function)(&mid) - 0.5 * ((probe.function)(&a) + (probe.function)(&b));
        worst = worst.max(gap);
    }
    ConvexityReport {
        pass: probe.samples == 0 || worst <= probe.tolerance,
        worst_violation: worst,
        samples: probe.samples,
    }
}

/// `h(y) = prod_r 1 / (a_r + w_r' y_r)` with `y` the concatenation of the
/// blocks `y_r`.
pub fn reciprocal_product(offsets: &[f64], weights: &[DVector<f64>], y: &DVector<f64>) -> f64 {
    let block = weights.first().map_or(0, |w| w.len());
    offsets
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(r, (a, w))| 1.0 / (a + w.dot(&y.rows(r * block, block))))
        .product()
}

fn uniform_point<R: Rng>(rng: &mut R, dim: usize, hi: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.gen::<f64>() * hi)
}

/// Seeded random point of the budget set `{b >= 0, sum b <= cap}`.
pub fn random_budget_point<R: Rng>(rng: &mut R, dim: usize, cap: f64) -> DVector<f64> {
    let mut v = DVector::from_fn(dim, |_, _| -rng.gen::<f64>().ln());
    let total = v.sum();
    if total > 0.0 {
        v *= cap * rng.gen::<f64>() / total;
    }
    v
}

/// Random feasible plan of player `j`: a point of the capped orthant, pulled
/// into the headroom polytope when the game has a single player.
pub fn random_plan<R: Rng>(rng: &mut R, spec: &GameSpec, j: usize) -> Result<BudgetPlan> {
    let dim = spec.plan_len();
    let raw = random_budget_point(rng, dim, spec.budgets()[j]);
    let flat = if spec.m() == 1 {
        player_set(spec, j)?.project(&raw)?
    } else {
        raw
    };
    spec.plan_from_flat(j, flat.as_slice())
}

pub fn random_profile<R: Rng>(rng: &mut R, spec: &GameSpec) -> Result<Vec<BudgetPlan>> {
    (0..spec.m()).map(|j| random_plan(rng, spec, j)).collect()
}

/// Random strongly connected network: a directed ring plus random extra
/// edges with random weights and self-loops.
pub fn random_network<R: Rng>(rng: &mut R, n: usize) -> Network {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        w[(i, (i + 1) % n)] = 0.1 + rng.gen::<f64>();
        w[(i, i)] = rng.gen::<f64>();
        for j in 0..n {
            if rng.gen_bool(0.3) {
                w[(i, j)] += rng.gen::<f64>();
            }
        }
    }
    Network::new(w).expect("ring weights are positive")
}

/// Random multiplayer game with simplex initial opinions and linear-favor
/// utilities. Stage weights are shared by all players when `shared_rho`.
pub fn random_game<R: Rng>(rng: &mut R, m: usize, n: usize, stages: usize, shared_rho: bool) -> GameSpec {
    let network = random_network(rng, n);
    let mut times = vec![0.0];
    for _ in 0..=stages {
        let last = *times.last().unwrap();
        times.push(last + 0.2 + 1.5 * rng.gen::<f64>());
    }
    let x0 = if m == 1 {
        DMatrix::from_fn(n, 1, |_, _| 0.8 * rng.gen::<f64>())
    } else {
        let mut x = DMatrix::from_fn(n, m, |_, _| 0.05 + rng.gen::<f64>());
        for mut row in x.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        x
    };
    let random_rho = |rng: &mut R| -> Vec<DVector<f64>> {
        (0..=stages).map(|_| uniform_point(rng, n, 2.0)).collect()
    };
    let common = random_rho(rng);
    let utilities = (0..m)
        .map(|_| {
            let rho = if shared_rho { common.clone() } else { random_rho(rng) };
            StageUtility::linear_favor(rho, 0.05 + 0.5 * rng.gen::<f64>())
        })
        .collect();
    let budgets = (0..m).map(|_| 0.5 + 3.0 * rng.gen::<f64>()).collect();
    GameSpec::new(
        network,
        CampaignSchedule::new(times).expect("increasing by construction"),
        OpinionState::new(x0).expect("entries in [0, 1]"),
        budgets,
        utilities,
        m >= 2,
    )
    .expect("consistent by construction")
}

const HYPOTHESIS_SAMPLES: usize = 64;

/// Midpoint concavity of a custom stage utility jointly in opinions and
/// budget. Linear utilities pass without sampling.
pub fn check_concave_utility(spec: &GameSpec, j: usize, seed: u64) -> Result<()> {
    let StageUtility::Custom(utility) = &spec.utilities()[j] else {
        return Ok(());
    };
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0C4);
    for stage in 1..=spec.stages() + 1 {
        let mut probe = ConvexityProbe {
            function: |z: &DVector<f64>| -> f64 {
                -utility.value(stage, &z.rows(0, n).into_owned(), &z.rows(n, n).into_owned())
            },
            sampler: |rng: &mut ChaCha8Rng| uniform_point(rng, 2 * n, 1.0),
            samples: HYPOTHESIS_SAMPLES,
            tolerance: MIDPOINT_TOL,
        };
        let report = midpoint_convexity_check(&mut probe, &mut rng);
        if !report.pass {
            return Err(Error::Hypothesis(format!(
                "stage utility of player {j} is not concave at stage {stage} (worst midpoint violation {:e})",
                report.worst_violation
            )));
        }
    }
    Ok(())
}

/// Midpoint convexity in opinions and a sampled sign check of the opinion
/// gradient for a custom stage utility. Linear utilities pass without
/// sampling.
pub fn check_increasing_convex_utility(spec: &GameSpec, j: usize, seed: u64) -> Result<()> {
    let StageUtility::Custom(utility) = &spec.utilities()[j] else {
        return Ok(());
    };
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0E5);
    for stage in 1..=spec.stages() + 1 {
        let budget = uniform_point(&mut rng, n, 1.0);
        let mut probe = ConvexityProbe {
            function: |x: &DVector<f64>| utility.value(stage, x, &budget),
            sampler: |rng: &mut ChaCha8Rng| uniform_point(rng, n, 1.0),
            samples: HYPOTHESIS_SAMPLES,
            tolerance: MIDPOINT_TOL,
        };
        let report = midpoint_convexity_check(&mut probe, &mut rng);
        if !report.pass {
            return Err(Error::Hypothesis(format!(
                "stage utility of player {j} is not convex in opinions at stage {stage} (worst midpoint violation {:e})",
                report.worst_violation
            )));
        }
        for _ in 0..HYPOTHESIS_SAMPLES {
            let x = uniform_point(&mut rng, n, 1.0);
            let g = utility.opinion_gradient(stage, &x, &budget);
            if g.min() < -MIDPOINT_TOL {
                return Err(Error::Hypothesis(format!(
                    "stage utility of player {j} is decreasing in opinions at stage {stage}"
                )));
            }
        }
    }
    Ok(())
}

/// Midpoint concavity of the unweighted payoff sum over random feasible
/// profile pairs.
pub fn check_social_concavity(spec: &GameSpec, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x50C1);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..HYPOTHESIS_SAMPLES {
        let a = random_profile(&mut rng, spec)?;
        let b = random_profile(&mut rng, spec)?;
        let mid: Vec<BudgetPlan> = a
            .iter()
            .zip(&b)
            .map(|(pa, pb)| BudgetPlan::new(pa.player(), (pa.entries() + pb.entries()) * 0.5, pa.budget_cap()))
            .collect::<Result<_>>()?;
        let social = |p: &[BudgetPlan]| -> Result<f64> {
            (0..spec.m()).map(|j| total_payoff(spec, p, j)).sum()
        };
        let gap = 0.5 * (social(&a)? + social(&b)?) - social(&mid)?;
        worst = worst.max(gap);
    }
    if worst > MIDPOINT_TOL {
        return Err(Error::Hypothesis(format!(
            "sum of payoffs is not concave (worst midpoint violation {worst:e}); attest social concavity explicitly to proceed"
        )));
    }
    Ok(())
}

/// Outcome of one property inside a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    pub pass: bool,
    /// Worst observed value of the property's error measure.
    pub worst: f64,
    /// Threshold the worst value is compared against.
    pub threshold: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemmas,
    Gradients,
    Oracles,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemmas => "lemmas",
            Suite::Gradients => "gradients",
            Suite::Oracles => "oracles",
            Suite::All => "all",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemmas" => Ok(Suite::Lemmas),
            "gradients" => Ok(Suite::Gradients),
            "oracles" => Ok(Suite::Oracles),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub properties: Vec<PropertyReport>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }
}

fn property(name: &str, worst: f64, threshold: f64, samples: usize) -> PropertyReport {
    PropertyReport {
        name: name.to_string(),
        pass: worst <= threshold,
        worst,
        threshold,
        samples,
    }
}

/// Propagators of random networks over random horizons are stochastic.
pub fn stochasticity_property(rng: &mut ChaCha8Rng, samples: usize) -> Result<PropertyReport> {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let n = rng.gen_range(1..=8);
        let net = random_network(rng, n);
        let t = rng.gen::<f64>() * 100.0;
        let report = check_stochastic(&net.propagator(t)?.matrix, 1e-10);
        // the entry bound is the tighter 1e-12; fold both into one margin
        worst = worst.max(report.max_row_deviation).max(-report.min_entry * 100.0);
    }
    Ok(property("propagator_is_stochastic", worst, 1e-10, samples))
}

/// Convexity of the reciprocal product on random instances.
pub fn reciprocal_product_property(rng: &mut ChaCha8Rng, instances: usize) -> PropertyReport {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let d = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=3);
        let offsets: Vec<f64> = (0..d).map(|_| 0.1 + 2.0 * rng.gen::<f64>()).collect();
        let weights: Vec<DVector<f64>> = (0..d).map(|_| uniform_point(rng, m, 2.0)).collect();
        let mut probe = ConvexityProbe {
            function: |y: &DVector<f64>| reciprocal_product(&offsets, &weights, y),
            sampler: |rng: &mut ChaCha8Rng| uniform_point(rng, d * m, 3.0),
            samples: 20,
            tolerance: MIDPOINT_TOL,
        };
        worst = worst.max(midpoint_convexity_check(&mut probe, rng).worst_violation);
    }
    property("reciprocal_product_is_convex", worst, MIDPOINT_TOL, instances)
}

fn replace_rivals(base: &[BudgetPlan], rivals: &[BudgetPlan], j: usize) -> Vec<BudgetPlan> {
    base.iter()
        .zip(rivals)
        .enumerate()
        .map(|(l, (own, rival))| if l == j { own.clone() } else { rival.clone() })
        .collect()
}

/// Midpoint convexity, in the rivals' plans, of player `j`'s payoff and of
/// every coordinate of `x_j(t_k)`, on random games. Returns the payoff and
/// opinion reports.
pub fn rival_convexity_properties(
    rng: &mut ChaCha8Rng,
    games: usize,
    pairs_per_game: usize,
) -> Result<(PropertyReport, PropertyReport)> {
    let mut worst_payoff = f64::NEG_INFINITY;
    let mut worst_opinion = f64::NEG_INFINITY;
    for _ in 0..games {
        let m = rng.gen_range(2..=3);
        let n = rng.gen_range(1..=5);
        let stages = rng.gen_range(1..=3);
        let spec = random_game(rng, m, n, stages, false);
        let j = rng.gen_range(0..m);
        let base = random_profile(rng, &spec)?;
        for _ in 0..pairs_per_game {
            let a = replace_rivals(&base, &random_profile(rng, &spec)?, j);
            let b = replace_rivals(&base, &random_profile(rng, &spec)?, j);
            let mid: Vec<BudgetPlan> = a
                .iter()
                .zip(&b)
                .map(|(pa, pb)| BudgetPlan::new(pa.player(), (pa.entries() + pb.entries()) * 0.5, pa.budget_cap()))
                .collect::<Result<_>>()?;
            let gap = total_payoff(&spec, &mid, j)?
                - 0.5 * (total_payoff(&spec, &a, j)? + total_payoff(&spec, &b, j)?);
            worst_payoff = worst_payoff.max(gap);

            let (oa, ob, om) = (
                opinions_at_campaigns(&spec, &a)?,
                opinions_at_campaigns(&spec, &b)?,
                opinions_at_campaigns(&spec, &mid)?,
            );
            for k in 1..=stages + 1 {
                let gap = om.player(j, k) - (oa.player(j, k) + ob.player(j, k)) * 0.5;
                worst_opinion = worst_opinion.max(gap.max());
            }
        }
    }
    let samples = games * pairs_per_game;
    Ok((
        property("payoff_convex_in_rival_plans", worst_payoff, MIDPOINT_TOL, samples),
        property("opinions_convex_in_rival_plans", worst_opinion, MIDPOINT_TOL, samples),
    ))
}

/// Relative infinity-norm gap between the analytic gradient and central
/// differences at `point`.
pub fn gradient_gap(spec: &GameSpec, profile: &[BudgetPlan], j: usize, h: f64) -> Result<f64> {
    let analytic = payoff_gradient(spec, profile, j)?;
    let analytic = DVector::from_iterator(analytic.len(), analytic.transpose().iter().copied());
    let fd = fd_gradient(
        |flat| {
            let plans = spec.with_flat(profile, j, flat.as_slice());
            payoff_unchecked(spec, &plans, j).ok()
        },
        &profile[j].flat(),
        h,
    )?;
    let scale = analytic.amax().max(fd.gradient.amax()).max(1e-8);
    Ok((analytic - fd.gradient).amax() / scale)
}

/// Random interior profile: every entry at least `margin`, spend strictly
/// inside the cap, and for a single player strictly inside the headroom.
pub fn random_interior_profile<R: Rng>(rng: &mut R, spec: &GameSpec, margin: f64) -> Result<Vec<BudgetPlan>> {
    let dim = spec.plan_len();
    (0..spec.m())
        .map(|j| {
            let beta = spec.budgets()[j];
            let mut flat = random_budget_point(rng, dim, 0.9 * beta);
            flat.iter_mut().for_each(|v| *v += margin);
            flat = project_budget_set(&flat, 0.95 * beta)?;
            flat.iter_mut().for_each(|v| *v = v.max(margin));
            if spec.m() == 1 {
                // pull towards the all-margin plan until every row has slack
                let region = build_region(spec)?;
                let floor = DVector::from_element(dim, margin);
                for _ in 0..60 {
                    if region.violation(&flat) <= -0.5 * margin {
                        break;
                    }
                    flat = &floor + (&flat - &floor) * 0.5;
                }
            }
            spec.plan_from_flat(j, flat.as_slice())
        })
        .collect()
}

/// Analytic gradients against central differences over random games.
pub fn gradient_property(rng: &mut ChaCha8Rng, scenarios: usize, points: usize) -> Result<PropertyReport> {
    let mut worst = 0.0f64;
    for s in 0..scenarios {
        let m = if s % 3 == 0 { 1 } else { rng.gen_range(2..=3) };
        let n = rng.gen_range(1..=5);
        let stages = rng.gen_range(1..=3);
        let spec = random_game(rng, m, n, stages, false);
        for _ in 0..points {
            let profile = random_interior_profile(rng, &spec, 1e-3)?;
            for j in 0..m {
                worst = worst.max(gradient_gap(&spec, &profile, j, 1e-5)?);
            }
        }
    }
    Ok(property("gradient_matches_finite_differences", worst, 1e-6, scenarios * points))
}

/// Small single-player game with `K n <= 3` for grid comparisons.
pub fn random_small_single<R: Rng>(rng: &mut R) -> GameSpec {
    let (n, stages) = match rng.gen_range(0..4) {
        0 => (1, 1),
        1 => (1, 2),
        2 => (2, 1),
        _ => (3, 1),
    };
    let mut spec;
    loop {
        spec = random_game(rng, 1, n, stages, true);
        if spec.plan_len() <= 3 {
            break;
        }
    }
    spec
}

/// Upper bound on `|U(b) - U(b')| / |b - b'|_inf` for a linear single-player
/// game, from the gradient (which is constant).
pub fn lipschitz_bound(spec: &GameSpec) -> Result<f64> {
    let g = payoff_gradient(spec, &spec.zero_plans(), 0)?;
    Ok(g.iter().map(|v| v.abs()).sum())
}

/// `solve_single` against exhaustive grid search. The reported worst value
/// is the shortfall `grid optimum - solver objective - L * step`.
pub fn single_vs_grid_property(rng: &mut ChaCha8Rng, instances: usize, grid_step: f64) -> Result<PropertyReport> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let spec = random_small_single(rng);
        let report = solve_single(&spec, &SolveOptions::default())?;
        let (_, grid_best) = brute_force_best_response(&spec, &spec.zero_plans(), 0, grid_step)?;
        let slack = lipschitz_bound(&spec)? * grid_step;
        worst = worst.max(grid_best - report.objective - slack);
    }
    Ok(property("single_solver_beats_grid", worst, 0.0, instances))
}

/// Midpoint concavity of the single-player objective on random feasible
/// plan pairs.
pub fn single_concavity_property(rng: &mut ChaCha8Rng, games: usize, pairs: usize) -> Result<PropertyReport> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..games {
        let n = rng.gen_range(1..=4);
        let stages = rng.gen_range(1..=3);
        let spec = random_game(rng, 1, n, stages, true);
        for _ in 0..pairs {
            let a = random_plan(rng, &spec, 0)?;
            let b = random_plan(rng, &spec, 0)?;
            let mid = BudgetPlan::new(0, (a.entries() + b.entries()) * 0.5, a.budget_cap())?;
            let gap = 0.5 * (total_payoff(&spec, &[a], 0)? + total_payoff(&spec, &[b], 0)?)
                - total_payoff(&spec, &[mid], 0)?;
            worst = worst.max(gap);
        }
    }
    Ok(property("single_objective_is_concave", worst, MIDPOINT_TOL, games * pairs))
}

/// Budget-set projection against a grid search of the nearest point.
pub fn projection_property(rng: &mut ChaCha8Rng, samples: usize) -> Result<PropertyReport> {
    let mut worst = 0.0f64;
    let step = 0.005;
    for _ in 0..samples {
        let cap = 0.5 + 2.0 * rng.gen::<f64>();
        let point = DVector::from_fn(2, |_, _| -1.0 + 4.0 * rng.gen::<f64>());
        let projected = project_budget_set(&point, cap)?;
        let levels = (cap / step).floor() as usize;
        let mut best = f64::INFINITY;
        for a in 0..=levels {
            for b in 0..=levels - a {
                let cand = DVector::from_vec(vec![a as f64 * step, b as f64 * step]);
                best = best.min((&cand - &point).norm());
            }
        }
        // the exact projection is never farther than the best grid point
        worst = worst.max((&projected - &point).norm() - best);
    }
    Ok(property("budget_projection_is_nearest", worst, 1e-12, samples))
}

/// Runs one of the property suites with a seeded generator.
pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut properties = Vec::new();
    if matches!(suite, Suite::Lemmas | Suite::All) {
        properties.push(stochasticity_property(&mut rng, 200)?);
        properties.push(reciprocal_product_property(&mut rng, 100));
        let (payoff, opinion) = rival_convexity_properties(&mut rng, 10, 10)?;
        properties.push(payoff);
        properties.push(opinion);
        properties.push(single_concavity_property(&mut rng, 10, 10)?);
    }
    if matches!(suite, Suite::Gradients | Suite::All) {
        properties.push(gradient_property(&mut rng, 10, 20)?);
    }
    if matches!(suite, Suite::Oracles | Suite::All) {
        properties.push(projection_property(&mut rng, 20)?);
        properties.push(single_vs_grid_property(&mut rng, 3, 0.02)?);
    }
    Ok(SuiteReport {
        suite,
        seed,
        properties,
    })
}

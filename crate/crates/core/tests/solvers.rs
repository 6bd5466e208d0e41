use influence_core::dynamics::{CampaignSchedule, OpinionState};
use influence_core::equilibrium::{
    equilibrate, exploitability, project_budget_set, regret, run_no_regret, Initialization, NoRegretConfig,
};
use influence_core::game::{all_payoffs, total_payoff, BudgetPlan, GameSpec, StageUtility};
use influence_core::network::Network;
use influence_core::scenarios::two_player_path;
use influence_core::single::{build_region, kkt_residual, solve_single, FeasibleSet, SolveOptions, StepSchedule};
use influence_core::verification::{
    brute_force_best_response, lipschitz_bound, random_game, random_small_single, single_concavity_property,
};
use influence_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn one_individual(lambda: f64, budget: f64) -> GameSpec {
    GameSpec::new(
        Network::new(DMatrix::identity(1, 1)).unwrap(),
        CampaignSchedule::new(vec![0.0, 1.0, 2.0]).unwrap(),
        OpinionState::uniform(1, 1, 0.5).unwrap(),
        vec![budget],
        vec![StageUtility::linear_favor(vec![DVector::from_element(1, 1.0); 2], lambda)],
        false,
    )
    .unwrap()
}

#[test]
fn grid_and_solver_agree_on_one_individual() {
    let spec = one_individual(0.4, 1.0);
    let (plan, value) = brute_force_best_response(&spec, &spec.zero_plans(), 0, 0.01).unwrap();
    assert!((plan.entries()[(0, 0)] - 0.5).abs() <= 0.01);
    let report = solve_single(&spec, &SolveOptions::default()).unwrap();
    assert!((report.plan.entries()[(0, 0)] - 0.5).abs() < 1e-8);
    assert!(report.objective >= value - 1e-12);
}

#[test]
fn grid_with_zero_cap_returns_zero_plan() {
    let spec = one_individual(0.4, 0.0);
    let (plan, value) = brute_force_best_response(&spec, &spec.zero_plans(), 0, 0.01).unwrap();
    assert_eq!(plan.total_spend(), 0.0);
    assert_eq!(value, total_payoff(&spec, &spec.zero_plans(), 0).unwrap());
}

#[test]
fn grid_ties_resolve_to_smallest_plan() {
    // zero cost and zero weights make every plan tie
    let spec = GameSpec::new(
        Network::new(DMatrix::identity(2, 2)).unwrap(),
        CampaignSchedule::new(vec![0.0, 1.0, 2.0]).unwrap(),
        OpinionState::uniform(2, 1, 0.5).unwrap(),
        vec![1.0],
        vec![StageUtility::linear_favor(vec![DVector::zeros(2); 2], 0.0)],
        false,
    )
    .unwrap();
    let (plan, _) = brute_force_best_response(&spec, &spec.zero_plans(), 0, 0.1).unwrap();
    assert_eq!(plan.total_spend(), 0.0);
}

#[test]
fn grid_refuses_large_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = random_game(&mut rng, 2, 3, 2, false);
    assert!(matches!(
        brute_force_best_response(&spec, &spec.zero_plans(), 0, 0.1),
        Err(Error::TooLarge(_))
    ));
}

#[test]
fn solver_beats_grid_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let spec = random_small_single(&mut rng);
        let report = solve_single(&spec, &SolveOptions::default()).unwrap();
        let (_, grid) = brute_force_best_response(&spec, &spec.zero_plans(), 0, 0.01).unwrap();
        assert!(report.objective >= grid - lipschitz_bound(&spec).unwrap() * 0.01);
        assert!(report.kkt_residual < 1e-5, "kkt {}", report.kkt_residual);
        assert!(report.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(build_region(&spec).unwrap().contains(&report.plan.flat(), 1e-9));
    }
}

#[test]
fn single_objective_concavity() {
    let report = single_concavity_property(&mut ChaCha8Rng::seed_from_u64(9), 10, 20).unwrap();
    assert!(report.pass, "worst {}", report.worst);
}

#[test]
fn kkt_residual_vanishes_only_at_optimum() {
    let spec = one_individual(0.4, 1.0);
    let region = build_region(&spec).unwrap();
    let g = DVector::from_element(1, 0.05);
    assert!(kkt_residual(&region, &DVector::from_element(1, 0.5), &g).unwrap() < 1e-9);
    assert!(kkt_residual(&region, &DVector::from_element(1, 0.2), &g).unwrap() > 1e-3);
}

#[test]
fn sqrt_schedule_solves_too() {
    let spec = one_individual(0.4, 1.0);
    let options = SolveOptions {
        step: Some(StepSchedule::COverSqrtTau(0.5)),
        ..SolveOptions::default()
    };
    let report = solve_single(&spec, &options).unwrap();
    assert!((report.plan.entries()[(0, 0)] - 0.5).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn budget_projection_idempotent_and_nonexpansive(
        u in prop::collection::vec(-3.0f64..3.0, 1..8),
        w in prop::collection::vec(-3.0f64..3.0, 8),
        cap in 0.0f64..4.0,
    ) {
        let u = DVector::from_vec(u);
        let v = DVector::from_iterator(u.len(), w.into_iter().take(u.len()));
        let pu = project_budget_set(&u, cap).unwrap();
        let pv = project_budget_set(&v, cap).unwrap();
        prop_assert!(pu.min() >= 0.0);
        prop_assert!(pu.sum() <= cap + 1e-12);
        prop_assert!((project_budget_set(&pu, cap).unwrap() - &pu).amax() < 1e-12);
        prop_assert!((&pu - &pv).norm() <= (&u - &v).norm() + 1e-12);
    }

    #[test]
    fn region_projection_idempotent_and_nonexpansive(seed in any::<u64>(), a in prop::collection::vec(-1.0f64..2.0, 4), b in prop::collection::vec(-1.0f64..2.0, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_game(&mut rng, 1, 2, 2, true);
        let region = build_region(&spec).unwrap();
        let u = DVector::from_vec(a);
        let v = DVector::from_vec(b);
        let pu = region.project(&u).unwrap();
        let pv = region.project(&v).unwrap();
        prop_assert!(region.violation(&pu) <= 1e-9);
        prop_assert!((region.project(&pu).unwrap() - &pu).amax() < 1e-8);
        prop_assert!((&pu - &pv).norm() <= (&u - &v).norm() + 1e-8);
    }
}

#[test]
fn reference_run_structure() {
    let spec = two_player_path();
    let run = |t| {
        let config = NoRegretConfig {
            iterations: t,
            ..NoRegretConfig::default()
        };
        run_no_regret(&spec, &config).unwrap()
    };
    let trace = run(100);
    for plan in trace.average() {
        for row in plan.entries().row_iter() {
            assert!(row.max() - row.min() < 1e-2);
        }
    }
    let half = &trace.averages[49];
    for (a, b) in trace.average().iter().zip(half) {
        assert!((a.entries() - b.entries()).amax() < 0.1);
    }
    for (tau, profile) in trace.iterates.iter().enumerate() {
        let spend: f64 = profile.iter().map(|p| p.total_spend()).sum();
        let total: f64 = trace.payoffs[tau].iter().sum();
        assert!((total - (3.0 - spend / 3.0)).abs() < 1e-10);
        for (j, plan) in profile.iter().enumerate() {
            assert!(plan.entries().min() >= -1e-9);
            assert!(plan.total_spend() <= spec.budgets()[j] + 1e-9);
        }
    }
    let short = exploitability(&spec, trace.average()).unwrap().value;
    let long = exploitability(&spec, run(1000).average()).unwrap().value;
    assert!(long < short);
    assert!(long >= -1e-8);
}

#[test]
fn zero_profile_is_an_equilibrium_of_the_reference_game() {
    // the first-stage marginal gain equals the unit cost at zero, later stages fall short
    let spec = two_player_path();
    let e = exploitability(&spec, &spec.zero_plans()).unwrap();
    assert!(e.value.abs() < 1e-8, "exploitability {}", e.value);
}

#[test]
fn reference_learning_is_deterministic() {
    let spec = two_player_path();
    let config = NoRegretConfig {
        iterations: 60,
        init: Initialization::Random,
        seed: 42,
        ..NoRegretConfig::default()
    };
    let a = run_no_regret(&spec, &config).unwrap();
    let b = run_no_regret(&spec, &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_round_regret_is_nonnegative() {
    let spec = two_player_path();
    let config = NoRegretConfig {
        iterations: 1,
        ..NoRegretConfig::default()
    };
    let trace = run_no_regret(&spec, &config).unwrap();
    for j in 0..2 {
        assert!(regret(&spec, &trace, j).unwrap().value >= -1e-10);
    }
}

#[test]
fn expensive_budget_keeps_zero_profile() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = random_game(&mut rng, 2, 3, 2, false);
    let utilities = (0..2)
        .map(|_| StageUtility::linear_favor(vec![DVector::from_element(3, 1.0); 3], 1e6))
        .collect();
    let spec = GameSpec::new(
        base.network().clone(),
        base.schedule().clone(),
        base.x0().clone(),
        base.budgets().to_vec(),
        utilities,
        true,
    )
    .unwrap();
    let config = NoRegretConfig {
        iterations: 20,
        ..NoRegretConfig::default()
    };
    let trace = run_no_regret(&spec, &config).unwrap();
    for profile in &trace.iterates[1..] {
        for plan in profile {
            assert_eq!(plan.total_spend(), 0.0);
        }
    }
}

#[test]
fn single_player_loop_matches_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let spec = random_game(&mut rng, 1, 2, 2, true);
    let best = solve_single(&spec, &SolveOptions::default()).unwrap().objective;
    let config = NoRegretConfig {
        iterations: 20_000,
        ..NoRegretConfig::default()
    };
    let trace = run_no_regret(&spec, &config).unwrap();
    let value = total_payoff(&spec, trace.average(), 0).unwrap();
    assert!((best - value).abs() < 1e-4, "{best} vs {value}");
}

#[test]
fn equilibrate_reports_consistent_payoffs() {
    let spec = two_player_path();
    let (trace, result) = equilibrate(&spec, &NoRegretConfig::default()).unwrap();
    assert_eq!(result.iterations, 100);
    assert_eq!(trace.iterations(), 100);
    assert_eq!(result.payoffs, all_payoffs(&spec, &result.profile).unwrap());
    assert!(result.exploitability.value >= -1e-8);
    assert!(result.regrets.iter().all(|r| r.value >= -1e-8));
    let zero: Vec<BudgetPlan> = spec.zero_plans();
    assert_eq!(zero.len(), result.profile.len());
}

use influence_core::dynamics::{jump_multi, jump_single, simulate_trajectory, CampaignSchedule, OpinionState, Phase};
use influence_core::game::{opinions_at_campaigns, BudgetPlan, GameSpec, StageUtility};
use influence_core::network::Network;
use influence_core::scenarios::two_player_path;
use influence_core::verification::{check_stochastic, random_network};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn path() -> Network {
    Network::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]]).unwrap()
}

#[test]
fn path_laplacian_matches_printed_matrix() {
    let expected = DMatrix::from_row_slice(
        3,
        3,
        &[1.0 / 3.0, -1.0 / 3.0, 0.0, -1.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0, 0.0, -1.0 / 3.0, 1.0 / 3.0],
    );
    assert!((path().laplacian() - expected).amax() < 1e-15);
}

#[test]
fn propagator_matches_eigendecomposition() {
    let net = path();
    let eig = SymmetricEigen::new(net.laplacian().clone());
    for dt in [0.1, 1.0, 2.5, 10.0] {
        let diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-l * dt).exp()));
        let oracle = &eig.eigenvectors * diag * eig.eigenvectors.transpose();
        let p = net.propagator(dt).unwrap();
        assert!((&p.matrix - &oracle).amax() < 1e-13, "dt = {dt}");
    }
}

#[test]
fn propagator_at_unit_time_frozen_values() {
    // eigenvalues of the path Laplacian are 0, 1/3 and 1 with eigenvectors
    // (1,1,1)/sqrt3, (1,0,-1)/sqrt2, (1,-2,1)/sqrt6
    let a = (-1.0f64 / 3.0).exp();
    let c = (-1.0f64).exp();
    let expected = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 / 3.0 + a / 2.0 + c / 6.0,
            1.0 / 3.0 - c / 3.0,
            1.0 / 3.0 - a / 2.0 + c / 6.0,
            1.0 / 3.0 - c / 3.0,
            1.0 / 3.0 + 2.0 * c / 3.0,
            1.0 / 3.0 - c / 3.0,
            1.0 / 3.0 - a / 2.0 + c / 6.0,
            1.0 / 3.0 - c / 3.0,
            1.0 / 3.0 + a / 2.0 + c / 6.0,
        ],
    );
    assert!((path().propagator(1.0).unwrap().matrix - expected).amax() < 1e-14);
}

#[test]
fn long_horizon_rows_approach_stationary_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let n = 2 + (rand::Rng::gen::<u32>(&mut rng) % 5) as usize;
        let net = random_network(&mut rng, n);
        let pi = net.stationary_distribution(1_000_000, 1e-15);
        let p = net.propagator(1000.0).unwrap().matrix;
        for row in p.row_iter() {
            assert!((row.transpose() - &pi).amax() < 1e-6);
        }
    }
}

#[test]
fn stochastic_on_reference_network_for_many_horizons() {
    let net = path();
    for i in 0..50 {
        let t = 100.0 * (i as f64 + 0.5) / 50.0;
        assert!(check_stochastic(&net.propagator(t).unwrap().matrix, 1e-10).pass);
    }
}

fn seeded_network(seed: u64, n: usize) -> Network {
    random_network(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagators_are_stochastic(seed in any::<u64>(), n in 1usize..8, t in 0.0f64..100.0) {
        let p = seeded_network(seed, n).propagator(t).unwrap().matrix;
        let report = check_stochastic(&p, 1e-10);
        prop_assert!(report.max_row_deviation <= 1e-10);
        prop_assert!(report.min_entry >= -1e-12);
    }

    #[test]
    fn semigroup(seed in any::<u64>(), n in 1usize..7, t1 in 0.0f64..20.0, t2 in 0.0f64..20.0) {
        let net = seeded_network(seed, n);
        let lhs = net.propagator(t1).unwrap().matrix * net.propagator(t2).unwrap().matrix;
        let rhs = net.propagator(t1 + t2).unwrap().matrix;
        prop_assert!((lhs - rhs).amax() < 1e-8);
    }

    #[test]
    fn jump_multi_row_sums(
        rows in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 3), prop::collection::vec(0.0f64..4.0, 3)), 1..5)
    ) {
        let n = rows.len();
        let x = DMatrix::from_fn(n, 3, |i, j| rows[i].0[j] / 3.0);
        let b = DMatrix::from_fn(n, 3, |i, j| rows[i].1[j]);
        let out = jump_multi(&x, &b).unwrap();
        for i in 0..n {
            let sigma = x.row(i).sum();
            let beta = b.row(i).sum();
            prop_assert!((out.row(i).sum() - (sigma + beta) / (1.0 + beta)).abs() < 1e-12);
        }
        // on the simplex the row sums stay at one
        let mut s = x.clone();
        for mut row in s.row_iter_mut() {
            let total = row.sum();
            if total > 0.0 { row /= total; } else { row.fill(1.0 / 3.0); }
        }
        let out = jump_multi(&s, &b).unwrap();
        for row in out.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jump_single_is_monotone(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..6)) {
        let x = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.0));
        let b = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.1 * (1.0 - p.0)));
        let out = jump_single(&x, &b).unwrap();
        prop_assert!(out.iter().zip(x.iter()).all(|(o, i)| o >= i));
        prop_assert!(out.max() <= 1.0 + 1e-12);
    }

    #[test]
    fn zero_budget_simulation_is_pure_propagation(seed in any::<u64>(), n in 1usize..6, m in 1usize..4) {
        let net = seeded_network(seed, n);
        let schedule = CampaignSchedule::new(vec![0.0, 0.7, 1.9, 4.0]).unwrap();
        let x0 = DMatrix::from_fn(n, m, |i, j| ((i * 7 + j * 3) % 10) as f64 / 10.0);
        let plans: Vec<BudgetPlan> = (0..m).map(|j| BudgetPlan::zeros(j, 2, n, 1.0)).collect();
        let samples: Vec<f64> = (0..=40).map(|s| s as f64 * 0.1).collect();
        let traj = simulate_trajectory(&net, &schedule, &OpinionState::new(x0.clone()).unwrap(), &plans, &samples).unwrap();
        for point in traj {
            let direct = net.propagator(point.time).unwrap().matrix * &x0;
            prop_assert!((point.state - direct).amax() < 1e-10);
        }
    }
}

#[test]
fn jump_examples() {
    let out = jump_single(&DVector::from_vec(vec![0.2, 0.9]), &DVector::from_vec(vec![0.3, 0.1])).unwrap();
    assert!((out - DVector::from_vec(vec![0.5, 1.0])).amax() < 1e-15);
    assert!(jump_single(&DVector::from_vec(vec![0.9]), &DVector::from_vec(vec![0.2])).is_err());
    let out = jump_multi(
        &DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.3, 0.7]),
        &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 2.0]),
    )
    .unwrap();
    assert!((out - DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.46, 0.54])).amax() < 1e-15);
}

#[test]
fn zero_plans_reach_consensus() {
    let net = path();
    let schedule = CampaignSchedule::new(vec![0.0, 1.0, 2.0, 100.0]).unwrap();
    let x0 = OpinionState::new(DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.5, 0.5, 0.0, 1.0])).unwrap();
    let plans = vec![BudgetPlan::zeros(0, 2, 3, 1.0), BudgetPlan::zeros(1, 2, 3, 1.0)];
    let traj = simulate_trajectory(&net, &schedule, &x0, &plans, &[100.0]).unwrap();
    let last = &traj.last().unwrap().state;
    for col in last.column_iter() {
        assert!(col.max() - col.min() < 1e-4);
    }
}

#[test]
fn saturating_jump_reaches_one() {
    let net = path();
    let schedule = CampaignSchedule::new(vec![0.0, 1.0, 2.0]).unwrap();
    let x0 = DMatrix::from_column_slice(3, 1, &[0.2, 0.5, 0.7]);
    let pre = net.propagator(1.0).unwrap().matrix * &x0;
    let b = pre.map(|v| 1.0 - v);
    let plan = BudgetPlan::new(0, b.transpose(), 3.0).unwrap();
    let traj = simulate_trajectory(&net, &schedule, &OpinionState::new(x0).unwrap(), &[plan], &[1.0]).unwrap();
    assert_eq!(traj.len(), 2);
    assert_eq!(traj[1].phase, Phase::PostJump);
    assert!(traj[1].state.iter().all(|&v| v == 1.0));
}

#[test]
fn trajectory_matches_campaign_opinions() {
    let spec: GameSpec = two_player_path();
    let plans = vec![
        BudgetPlan::new(0, DMatrix::from_element(2, 3, 0.5), 3.0).unwrap(),
        BudgetPlan::new(1, DMatrix::from_element(2, 3, 0.8), 5.0).unwrap(),
    ];
    let closed = opinions_at_campaigns(&spec, &plans).unwrap();
    let traj = simulate_trajectory(spec.network(), spec.schedule(), spec.x0(), &plans, &[1.0, 2.0, 3.0]).unwrap();
    let pre: Vec<_> = traj.iter().filter(|p| p.phase != Phase::PostJump).collect();
    assert_eq!(pre.len(), 3);
    for (k, point) in pre.iter().enumerate() {
        assert!((&point.state - &closed.states[k + 1]).amax() < 1e-8);
    }
}

#[test]
fn single_player_trajectory_matches_campaign_opinions() {
    let net = path();
    let schedule = CampaignSchedule::new(vec![0.0, 0.5, 1.5, 2.0]).unwrap();
    let spec = GameSpec::new(
        net,
        schedule,
        OpinionState::new(DMatrix::from_column_slice(3, 1, &[0.1, 0.4, 0.3])).unwrap(),
        vec![1.0],
        vec![StageUtility::linear_favor(vec![DVector::from_element(3, 1.0); 3], 0.2)],
        false,
    )
    .unwrap();
    let plan = BudgetPlan::new(0, DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.0, 0.05, 0.0, 0.3]), 1.0).unwrap();
    let closed = opinions_at_campaigns(&spec, std::slice::from_ref(&plan)).unwrap();
    let traj = simulate_trajectory(spec.network(), spec.schedule(), spec.x0(), &[plan], &[0.5, 1.5, 2.0]).unwrap();
    let pre: Vec<_> = traj.iter().filter(|p| p.phase != Phase::PostJump).collect();
    for (k, point) in pre.iter().enumerate() {
        assert!((&point.state - &closed.states[k + 1]).amax() < 1e-12);
    }
}

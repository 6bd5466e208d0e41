//! Ready-made games.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{CampaignSchedule, OpinionState};
use crate::game::{GameSpec, StageUtility};
use crate::network::Network;

/// Two players on a three-node path with lazy ends, three campaigns at
/// `t = 0, 1, 2` and a terminal time of 3. Player 1 rewards its own share
/// with unit weights; player 2 rewards the complement of player 1's share.
/// Both pay unit cost; the budgets are 3 and 5.
pub fn two_player_path() -> GameSpec {
    let network = Network::from_rows(&[
        vec![2.0, 1.0, 0.0],
        vec![1.0, 1.0, 1.0],
        vec![0.0, 1.0, 2.0],
    ])
    .expect("valid weights");
    let schedule = CampaignSchedule::new(vec![0.0, 1.0, 2.0, 3.0]).expect("increasing");
    let x0 = OpinionState::new(DMatrix::from_element(3, 2, 0.5)).expect("in range");
    let ones = vec![DVector::from_element(3, 1.0); 3];
    GameSpec::new(
        network,
        schedule,
        x0,
        vec![3.0, 5.0],
        vec![
            StageUtility::linear_favor(ones.clone(), 1.0),
            StageUtility::linear_complement(ones, 1.0),
        ],
        true,
    )
    .expect("consistent game")
}

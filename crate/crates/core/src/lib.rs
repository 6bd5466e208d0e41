//! Budget allocation and open-loop equilibria for dynamic influence
//! maximization over social networks.
//!
//! Individuals hold opinions that diffuse along a weighted network by the
//! continuous DeGroot flow `x' = -L x`. At a finite set of campaign times the
//! players invest budget and the opinions jump. A single player's optimal
//! plan is the solution of a concave program ([`single`]); several competing
//! players reach an open-loop equilibrium by running projected online
//! gradient ascent and averaging their iterates ([`equilibrium`]).

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod linalg;
pub mod network;
pub mod scenarios;
pub mod single;
pub mod verification;

pub use error::{Error, Result};

/// Slack allowed on budget and headroom constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;

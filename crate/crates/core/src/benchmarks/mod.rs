//! Comparison systems: an exact optimum (per round and in hindsight) and an
//! offline batch auction.

pub mod auction;
pub mod hindsight;
pub mod hungarian;
pub mod optimal;

pub use auction::{auction_assign, AuctionBatch, AuctionMechanism};
pub use hindsight::{optimal_assign_hindsight, FleetStart};
pub use hungarian::{min_cost_assignment, Cost, Lex};
pub use optimal::{optimal_assign_round, Horizon, OptimalPlan, OptimalRoundMechanism, PlanEntry, PlannedRoute};

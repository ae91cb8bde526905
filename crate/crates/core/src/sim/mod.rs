//! The simulation loop, demand generation and run records.

pub mod demand;
pub mod engine;
pub mod record;

pub use demand::{build_demand_pool, manhattan_ball, DemandModel};
pub use engine::{run, run_hindsight, run_with, DemandSource, ReportOverride, SimState, Simulation};
pub use record::{Metrics, SimTrace};

//! Discrete-time simulator of an autonomous mobility-on-demand fleet on a
//! grid city, driven by a posted-price online ridesharing mechanism.
//!
//! Money and rates are generic over [`Scalar`]; the simulator is normally run
//! with exact rationals ([`Rational`]) so payment identities hold exactly.
//! Geometry is integral, with exact `Ratio<u64>` progress along edges.

pub mod audit;
pub mod benchmarks;
pub mod config;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod iors;
pub mod mechanism;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod trace;
pub mod world;

pub use config::{MechanismKind, Preset, SettlementMode, SimConfig};
pub use error::{Error, Result};
pub use grid::{Cell, Fraction, Grid, Round, RoutePosition};
pub use model::{Coalition, Request, RequestId, Vehicle, VehicleId};
pub use scalar::{Rate, Scalar};

/// Exact money and rate arithmetic.
pub type Rational = num_rational::BigRational;

pub type ExactSimulation = sim::Simulation<Rational>;
pub type ExactTrace = sim::SimTrace<Rational>;
pub type ExactWorld = world::World<Rational>;
pub type FloatSimulation = sim::Simulation<f64>;
pub type FloatTrace = sim::SimTrace<f64>;
pub type FloatWorld = world::World<f64>;

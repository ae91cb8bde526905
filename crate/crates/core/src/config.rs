//! Run configuration, presets and validation.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Fraction, Grid};

/// Which dispatcher drives the fleet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Iors,
    Auction,
    OptimalRound,
    OptimalHindsight,
}

impl MechanismKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::Iors => "iors",
            MechanismKind::Auction => "auction",
            MechanismKind::OptimalRound => "optimal-round",
            MechanismKind::OptimalHindsight => "optimal-hindsight",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iors" => Ok(MechanismKind::Iors),
            "auction" => Ok(MechanismKind::Auction),
            "optimal-round" => Ok(MechanismKind::OptimalRound),
            "optimal-hindsight" => Ok(MechanismKind::OptimalHindsight),
            other => Err(Error::Config(format!("unknown mechanism {other:?}"))),
        }
    }
}

/// When and at which rate completed rides are paid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettlementMode {
    /// Pay at dropoff using the vehicle's lifetime cost per unit demand.
    #[default]
    Literal,
    /// Pay when the vehicle next runs empty, using that epoch's totals only.
    Epoch,
}

impl FromStr for SettlementMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(SettlementMode::Literal),
            "epoch" => Ok(SettlementMode::Epoch),
            other => Err(Error::Config(format!("unknown settlement mode {other:?}"))),
        }
    }
}

impl fmt::Display for SettlementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SettlementMode::Literal => "literal",
            SettlementMode::Epoch => "epoch",
        })
    }
}

/// Serialize exact ratios as `"n/d"` strings.
pub(crate) mod ratio_str {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.trim().parse().map_err(de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub rows: u32,
    pub cols: u32,
    /// Blocks per round.
    #[serde(with = "ratio_str")]
    pub speed: Fraction,
    #[serde(with = "ratio_str")]
    pub cost_per_block: Ratio<i64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            rows: 101,
            cols: 101,
            speed: Fraction::new(1, 2),
            cost_per_block: Ratio::from_integer(1),
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        if self.cost_per_block <= Ratio::from_integer(0) {
            return Err(Error::Config("cost_per_block must be positive".into()));
        }
        Grid::new(self.rows, self.cols, self.speed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandConfig {
    pub pool_size: u32,
    pub pool_mean: f64,
    pub pool_stddev: f64,
    pub waiting_min: u32,
    pub waiting_max: u32,
    pub od_radius: u32,
    pub rounds: u32,
    pub fleet_size: u32,
    pub capacity: u32,
    pub seed: u64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig {
            pool_size: 500,
            pool_mean: 1000.0,
            pool_stddev: 100.0,
            waiting_min: 10,
            waiting_max: 100,
            od_radius: 50,
            rounds: 500,
            fleet_size: 1000,
            capacity: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IorsOptions {
    /// Require every admission to strictly lower the coalition rate.
    /// Disabling it exists only to self-test the incentive audit.
    pub improvement_gate: bool,
    /// Passengers accept a quote only if it is at most this rate times their
    /// demand. `None` accepts every quote.
    #[serde(with = "opt_ratio", skip_serializing_if = "Option::is_none")]
    pub willingness_rate: Option<Ratio<i64>>,
}

impl Default for IorsOptions {
    fn default() -> Self {
        IorsOptions { improvement_gate: true, willingness_rate: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuctionOptions {
    /// Batch window in rounds.
    pub window: u32,
    /// Bids whose resulting rate would exceed this are not served.
    #[serde(with = "opt_ratio", skip_serializing_if = "Option::is_none")]
    pub reserve_rate: Option<Ratio<i64>>,
}

impl Default for AuctionOptions {
    fn default() -> Self {
        AuctionOptions { window: 5, reserve_rate: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimalOptions {
    /// Per-round exact solver caps.
    pub max_requests: usize,
    pub max_vehicles: usize,
    /// Clairvoyant solver caps.
    pub hindsight_max_requests: usize,
    pub hindsight_max_vehicles: usize,
}

impl Default for OptimalOptions {
    fn default() -> Self {
        OptimalOptions {
            max_requests: 2000,
            max_vehicles: 200,
            hindsight_max_requests: 8,
            hindsight_max_vehicles: 3,
        }
    }
}

mod opt_ratio {
    use num_rational::Ratio;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Ratio<i64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => s.collect_str(r),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Ratio<i64>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| s.trim().parse().map_err(de::Error::custom)).transpose()
    }
}

/// Everything needed to reproduce one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mechanism: MechanismKind,
    #[serde(default)]
    pub settlement: SettlementMode,
    pub grid: GridConfig,
    pub demand: DemandConfig,
    #[serde(default)]
    pub iors: IorsOptions,
    #[serde(default)]
    pub auction: AuctionOptions,
    #[serde(default)]
    pub optimal: OptimalOptions,
    /// Safety bound on the post-horizon drain phase.
    #[serde(default = "default_drain_limit")]
    pub drain_limit: u32,
}

fn default_drain_limit() -> u32 {
    100_000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl SimConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => SimConfig {
                mechanism: MechanismKind::Iors,
                settlement: SettlementMode::Literal,
                grid: GridConfig::default(),
                demand: DemandConfig::default(),
                iors: IorsOptions::default(),
                auction: AuctionOptions::default(),
                optimal: OptimalOptions::default(),
                drain_limit: default_drain_limit(),
            },
            Preset::Desk => SimConfig {
                grid: GridConfig { rows: 21, cols: 21, ..GridConfig::default() },
                demand: DemandConfig {
                    pool_mean: 20.0,
                    pool_stddev: 5.0,
                    od_radius: 10,
                    rounds: 100,
                    fleet_size: 50,
                    ..DemandConfig::default()
                },
                ..SimConfig::preset(Preset::Full)
            },
        }
    }

    pub fn desk() -> Self {
        Self::preset(Preset::Desk)
    }

    pub fn full() -> Self {
        Self::preset(Preset::Full)
    }

    pub fn with_mechanism(mut self, mechanism: MechanismKind) -> Self {
        self.mechanism = mechanism;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.demand.seed = seed;
        self
    }

    pub fn with_settlement(mut self, settlement: SettlementMode) -> Self {
        self.settlement = settlement;
        self
    }

    /// The configuration a run actually uses. The auction baseline always
    /// settles per epoch so its payments are comparable across runs.
    pub fn effective(&self) -> SimConfig {
        let mut c = self.clone();
        if c.mechanism == MechanismKind::Auction {
            c.settlement = SettlementMode::Epoch;
        }
        c
    }

    pub fn validate(&self) -> Result<Grid> {
        let grid = self.grid.build()?;
        let d = &self.demand;
        if d.waiting_min > d.waiting_max {
            return Err(Error::Config(format!(
                "waiting_min {} exceeds waiting_max {}",
                d.waiting_min, d.waiting_max
            )));
        }
        let center = grid.center();
        let fits = center.row >= d.od_radius
            && center.col >= d.od_radius
            && center.row + d.od_radius < grid.rows()
            && center.col + d.od_radius < grid.cols();
        if !fits {
            return Err(Error::Config(format!(
                "od_radius {} does not fit a {}x{} grid",
                d.od_radius,
                grid.rows(),
                grid.cols()
            )));
        }
        if d.od_radius == 0 {
            return Err(Error::Config("od_radius must be at least 1".into()));
        }
        if d.capacity == 0 {
            return Err(Error::Config("vehicle capacity must be positive".into()));
        }
        if d.pool_size == 0 {
            return Err(Error::Config("demand pool must be non-empty".into()));
        }
        if !(d.pool_mean.is_finite() && d.pool_stddev.is_finite() && d.pool_stddev >= 0.0) {
            return Err(Error::Config("demand pool parameters must be finite, stddev >= 0".into()));
        }
        if self.auction.window == 0 {
            return Err(Error::Config("auction window must be at least one round".into()));
        }
        Ok(grid)
    }
}

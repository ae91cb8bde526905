//! The online dispatchers the simulation loop can drive.

use crate::benchmarks::{AuctionMechanism, OptimalRoundMechanism};
use crate::config::{MechanismKind, SimConfig};
use crate::error::{Error, Result};
use crate::grid::Round;
use crate::iors::IorsMechanism;
use crate::model::RequestId;
use crate::scalar::Scalar;
use crate::trace::EventLog;
use crate::world::World;

/// A per-round dispatcher. Called once per round after the fleet has moved,
/// with the requests that arrived this round.
pub trait Mechanism<S: Scalar> {
    fn dispatch(
        &mut self,
        world: &mut World<S>,
        now: Round,
        arrivals: &[RequestId],
        log: &mut EventLog<S>,
    ) -> Result<()>;

    /// Requests the mechanism is holding between rounds.
    fn held(&self) -> &[RequestId];
}

#[derive(Clone, Debug)]
pub enum Dispatcher<S> {
    Iors(IorsMechanism<S>),
    Auction(AuctionMechanism<S>),
    OptimalRound(OptimalRoundMechanism),
}

impl<S: Scalar> Dispatcher<S> {
    /// The online dispatcher for `config`. The clairvoyant benchmark is not
    /// online and has no dispatcher.
    pub fn from_config(config: &SimConfig) -> Result<Self> {
        let seed = config.demand.seed;
        Ok(match config.mechanism {
            MechanismKind::Iors => Dispatcher::Iors(IorsMechanism::new(config.iors.clone(), seed)),
            MechanismKind::Auction => Dispatcher::Auction(AuctionMechanism::new(config.auction.clone(), seed)),
            MechanismKind::OptimalRound => {
                Dispatcher::OptimalRound(OptimalRoundMechanism::new(config.optimal.clone()))
            }
            MechanismKind::OptimalHindsight => {
                return Err(Error::Config("optimal-hindsight is solved offline, not dispatched".into()))
            }
        })
    }

    pub fn kind(&self) -> MechanismKind {
        match self {
            Dispatcher::Iors(_) => MechanismKind::Iors,
            Dispatcher::Auction(_) => MechanismKind::Auction,
            Dispatcher::OptimalRound(_) => MechanismKind::OptimalRound,
        }
    }
}

impl<S: Scalar> Mechanism<S> for Dispatcher<S> {
    fn dispatch(
        &mut self,
        world: &mut World<S>,
        now: Round,
        arrivals: &[RequestId],
        log: &mut EventLog<S>,
    ) -> Result<()> {
        match self {
            Dispatcher::Iors(m) => m.dispatch(world, now, arrivals, log),
            Dispatcher::Auction(m) => m.dispatch(world, now, arrivals, log),
            Dispatcher::OptimalRound(m) => m.dispatch(world, now, arrivals, log),
        }
    }

    fn held(&self) -> &[RequestId] {
        match self {
            Dispatcher::Iors(m) => m.carried(),
            Dispatcher::Auction(m) => m.pending(),
            Dispatcher::OptimalRound(m) => m.carried(),
        }
    }
}

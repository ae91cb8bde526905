//! Offline batch auction baseline.
//!
//! Requests are collected for a fixed window and cleared together when it
//! closes: every feasible (vehicle, request) insertion is ranked by the
//! vehicle's resulting cost per unit demand and the best is committed
//! repeatedly, bottom-up, with no improvement requirement. Whatever is still
//! unplaced when seats or feasible pairs run out is the low end of the
//! ranking and is dropped.

use crate::config::AuctionOptions;
use crate::error::Result;
use crate::grid::Round;
use crate::iors::{assign, AssignOptions, Assignment};
use crate::model::RequestId;
use crate::scalar::Scalar;
use crate::trace::{EventLog, RejectReason};
use crate::world::World;

/// Requests collected since the window opened.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuctionBatch {
    pub window: u32,
    pub requests: Vec<RequestId>,
}

impl AuctionBatch {
    pub fn new(window: u32) -> Self {
        AuctionBatch { window, requests: Vec::new() }
    }

    /// Windows are aligned to round zero and close at the end of their last round.
    pub fn closes_at(&self, now: Round) -> bool {
        (now + 1) % self.window == 0
    }
}

/// Clear one batch. Returns the winners and the dropped requests.
pub fn auction_assign<S: Scalar>(
    world: &mut World<S>,
    now: Round,
    batch: &AuctionBatch,
    reserve_rate: Option<S>,
    seed: u64,
    log: &mut EventLog<S>,
) -> Result<(Vec<Assignment<S>>, Vec<RequestId>)> {
    let opts = AssignOptions { improvement_gate: false, honor_quotes: false, rate_cap: reserve_rate, seed };
    assign(world, now, &batch.requests, &opts, log)
}

#[derive(Clone, Debug)]
pub struct AuctionMechanism<S> {
    pub options: AuctionOptions,
    reserve: Option<S>,
    seed: u64,
    batch: AuctionBatch,
}

impl<S: Scalar> AuctionMechanism<S> {
    pub fn new(options: AuctionOptions, seed: u64) -> Self {
        let reserve = options.reserve_rate.map(|r| S::from_ratio(*r.numer(), *r.denom()));
        let batch = AuctionBatch::new(options.window);
        AuctionMechanism { options, reserve, seed, batch }
    }

    pub fn pending(&self) -> &[RequestId] {
        &self.batch.requests
    }

    pub fn dispatch(
        &mut self,
        world: &mut World<S>,
        now: Round,
        arrivals: &[RequestId],
        log: &mut EventLog<S>,
    ) -> Result<()> {
        self.batch.requests.extend_from_slice(arrivals);
        if !self.batch.closes_at(now) || self.batch.requests.is_empty() {
            return Ok(());
        }
        let (_, dropped) = auction_assign(world, now, &self.batch, self.reserve.clone(), self.seed, log)?;
        for id in dropped {
            world.reject(now, id, RejectReason::Outranked, log);
        }
        self.batch.requests.clear();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SettlementMode;
    use crate::grid::{Cell, Fraction, Grid};
    use crate::model::Request;
    use num_rational::BigRational;

    type Q = BigRational;

    fn world(capacity: u32) -> World<Q> {
        let grid = Grid::new(11, 11, Fraction::new(1, 2)).unwrap();
        World::new(grid, Q::from_count(1), SettlementMode::Epoch, 1, capacity, Cell::new(0, 0))
    }

    fn submit(w: &mut World<Q>, id: u64, d: (u32, u32)) -> RequestId {
        let r = Request::new(&w.grid, RequestId(id), Cell::new(0, 0), Cell::new(d.0, d.1), 0, 50).unwrap();
        w.submit(0, r, &mut EventLog::disabled());
        RequestId(id)
    }

    #[test]
    fn lone_request_is_assigned() {
        let mut w = world(4);
        let a = submit(&mut w, 1, (0, 4));
        let batch = AuctionBatch { window: 5, requests: vec![a] };
        let (won, dropped) = auction_assign(&mut w, 4, &batch, None, 0, &mut EventLog::new()).unwrap();
        assert_eq!(won.len(), 1);
        assert!(dropped.is_empty());
    }

    #[test]
    fn lowest_ranked_request_is_dropped_when_seats_run_out() {
        let mut w = world(2);
        // From (0,0): rates after admission are 1 for each alone; pooled
        // along the same row the longer trips dilute the rate more.
        let short = submit(&mut w, 1, (0, 2));
        let mid = submit(&mut w, 2, (0, 6));
        let long = submit(&mut w, 3, (0, 10));
        let batch = AuctionBatch { window: 5, requests: vec![short, mid, long] };
        let (won, dropped) = auction_assign(&mut w, 4, &batch, None, 0, &mut EventLog::new()).unwrap();
        assert_eq!(won.iter().map(|a| a.request).collect::<Vec<_>>(), vec![long, mid]);
        assert_eq!(dropped, vec![short]);
    }

    #[test]
    fn empty_batch_assigns_nothing() {
        let mut w = world(4);
        let batch = AuctionBatch::new(5);
        let (won, dropped) = auction_assign(&mut w, 4, &batch, None, 0, &mut EventLog::new()).unwrap();
        assert!(won.is_empty() && dropped.is_empty());
    }

    #[test]
    fn mechanism_waits_for_the_window_to_close() {
        let mut w = world(4);
        let mut m = AuctionMechanism::<Q>::new(AuctionOptions::default(), 0);
        let mut log = EventLog::new();
        let a = submit(&mut w, 1, (0, 4));
        m.dispatch(&mut w, 0, &[a], &mut log).unwrap();
        assert_eq!(m.pending(), &[a]);
        for t in 1..4 {
            m.dispatch(&mut w, t, &[], &mut log).unwrap();
        }
        assert_eq!(m.pending().len(), 1);
        m.dispatch(&mut w, 4, &[], &mut log).unwrap();
        assert!(m.pending().is_empty());
        assert_eq!(w.fleet[0].pending_pickups.len(), 1);
    }
}

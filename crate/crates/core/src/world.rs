//! Mutable state shared by every dispatcher: the fleet, per-vehicle coalition
//! accounts, the request registry and the cost ledger.

use std::collections::BTreeMap;

use crate::config::SettlementMode;
use crate::error::{Error, Result};
use crate::grid::{Cell, Fraction, Grid, Round};
use crate::iors::settle_payment;
use crate::model::{
    best_insertion, Coalition, CostLedger, InsertionResult, Request, RequestId, Stop, StopKind,
    Vehicle, VehicleId,
};
use crate::scalar::{Rate, Scalar};
use crate::trace::{Event, EventLog, RejectReason};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    /// Submitted and waiting for a vehicle.
    Open,
    Assigned,
    Onboard,
    /// Dropped off; in epoch mode the payment may still be pending.
    Delivered,
    Rejected,
    Expired,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RequestRecord<S> {
    pub request: Request,
    pub quote: Option<S>,
    pub status: Status,
    pub vehicle: Option<VehicleId>,
    pub marginal_cost: Option<S>,
    pub assigned_round: Option<Round>,
    pub pickup_eta: Option<Round>,
    pub pickup_round: Option<Round>,
    pub dropoff_round: Option<Round>,
    pub payment: Option<S>,
}

impl<S> RequestRecord<S> {
    fn new(request: Request) -> Self {
        RequestRecord {
            request,
            quote: None,
            status: Status::Open,
            vehicle: None,
            marginal_cost: None,
            assigned_round: None,
            pickup_eta: None,
            pickup_round: None,
            dropoff_round: None,
            payment: None,
        }
    }

    /// Record for a request in an offline plan: served by `vehicle` or not at all.
    pub fn from_plan(request: Request, vehicle: Option<VehicleId>) -> Self {
        let mut rec = RequestRecord::new(request);
        rec.vehicle = vehicle;
        rec.status = if vehicle.is_some() { Status::Delivered } else { Status::Rejected };
        rec
    }
}

/// A closed empty-to-empty interval of one vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord<S> {
    pub vehicle: VehicleId,
    pub closed: Round,
    pub cost: S,
    pub demand: u64,
    pub payments: Vec<(RequestId, S)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleAccounts<S> {
    /// Every passenger ever admitted.
    pub lifetime: Coalition<S>,
    /// Passengers admitted since the vehicle last ran empty.
    pub epoch: Coalition<S>,
    epoch_paid: Vec<(RequestId, S)>,
}

impl<S: Scalar> VehicleAccounts<S> {
    fn new(id: VehicleId) -> Self {
        VehicleAccounts { lifetime: Coalition::new(id), epoch: Coalition::new(id), epoch_paid: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub generated: u64,
    pub rejected: u64,
    pub expired: u64,
    pub served: u64,
}

/// A priced (vehicle, request) pairing.
#[derive(Clone, Debug)]
pub struct Candidate<S> {
    pub vehicle: usize,
    pub insertion: InsertionResult<S>,
    pub rate_before: Rate<S>,
    pub rate_after: Rate<S>,
}

impl<S: Scalar> Candidate<S> {
    pub fn improves(&self) -> bool {
        self.rate_after.lt(&self.rate_before)
    }
}

#[derive(Clone, Debug)]
pub struct World<S> {
    pub grid: Grid,
    pub cost_per_block: S,
    pub settlement: SettlementMode,
    pub fleet: Vec<Vehicle>,
    pub accounts: Vec<VehicleAccounts<S>>,
    pub ledger: CostLedger<S>,
    pub registry: BTreeMap<RequestId, RequestRecord<S>>,
    pub epochs: Vec<EpochRecord<S>>,
    pub revenue: S,
    pub counters: Counters,
}

impl<S: Scalar> World<S> {
    pub fn new(
        grid: Grid,
        cost_per_block: S,
        settlement: SettlementMode,
        fleet_size: u32,
        capacity: u32,
        depot: Cell,
    ) -> Self {
        let fleet: Vec<Vehicle> =
            (0..fleet_size).map(|i| Vehicle::new(VehicleId(i), depot, capacity)).collect();
        let accounts = fleet.iter().map(|v| VehicleAccounts::new(v.id)).collect();
        World {
            grid,
            cost_per_block,
            settlement,
            fleet,
            accounts,
            ledger: CostLedger::new(fleet_size as usize),
            registry: BTreeMap::new(),
            epochs: Vec::new(),
            revenue: S::zero(),
            counters: Counters::default(),
        }
    }

    /// Coalition whose rate prices new admissions under the active settlement mode.
    pub fn pricing(&self, vehicle: usize) -> &Coalition<S> {
        match self.settlement {
            SettlementMode::Literal => &self.accounts[vehicle].lifetime,
            SettlementMode::Epoch => &self.accounts[vehicle].epoch,
        }
    }

    pub fn request(&self, id: RequestId) -> Result<&Request> {
        self.registry.get(&id).map(|r| &r.request).ok_or(Error::UnknownRequest(id))
    }

    pub fn record(&self, id: RequestId) -> Option<&RequestRecord<S>> {
        self.registry.get(&id)
    }

    /// Requests submitted but not yet finished (open, assigned or onboard).
    pub fn in_system(&self) -> u64 {
        let c = self.counters;
        c.generated - c.rejected - c.expired - c.served
    }

    pub fn active_vehicles(&self) -> u32 {
        self.fleet.iter().filter(|v| !v.route.is_empty()).count() as u32
    }

    pub fn submit(&mut self, now: Round, request: Request, log: &mut EventLog<S>) {
        log.push(now, Event::Request(request.clone()));
        self.counters.generated += 1;
        self.registry.insert(request.id, RequestRecord::new(request));
    }

    pub fn set_quote(&mut self, now: Round, id: RequestId, amount: S, log: &mut EventLog<S>) {
        log.push(now, Event::Quote { request: id, amount: amount.clone() });
        if let Some(rec) = self.registry.get_mut(&id) {
            rec.quote = Some(amount);
        }
    }

    pub fn reject(&mut self, now: Round, id: RequestId, reason: RejectReason, log: &mut EventLog<S>) {
        log.push(now, Event::Reject { request: id, reason });
        self.counters.rejected += 1;
        if let Some(rec) = self.registry.get_mut(&id) {
            rec.status = Status::Rejected;
        }
    }

    pub fn expire(&mut self, now: Round, id: RequestId, log: &mut EventLog<S>) {
        log.push(now, Event::Expire { request: id });
        self.counters.expired += 1;
        if let Some(rec) = self.registry.get_mut(&id) {
            rec.status = Status::Expired;
        }
    }

    /// Cheapest insertion of `request` into vehicle `vehicle` plus the
    /// coalition rates before and after a hypothetical admission.
    pub fn price(&self, vehicle: usize, request: &Request, now: Round) -> Option<Candidate<S>> {
        let insertion = best_insertion(&self.grid, &self.cost_per_block, &self.fleet[vehicle], request, now)?;
        let coalition = self.pricing(vehicle);
        let rate_before = coalition.rate();
        let rate_after = coalition.rate_with(&insertion.marginal_cost, request.demand());
        Some(Candidate { vehicle, insertion, rate_before, rate_after })
    }

    /// Rounds for vehicle `vehicle` to drive straight to `cell`, ignoring its
    /// committed stops. A lower bound on any insertion's pickup time.
    pub fn direct_eta(&self, vehicle: usize, cell: Cell) -> Round {
        let v = &self.fleet[vehicle];
        let (anchor, offset) = self.grid.anchor(&v.position);
        self.grid
            .rounds_for(offset + Fraction::from_integer(u64::from(self.grid.dist(anchor, cell))))
    }

    /// Bind a request to a vehicle with a previously computed insertion.
    pub fn commit(
        &mut self,
        now: Round,
        vehicle: usize,
        id: RequestId,
        candidate: Candidate<S>,
        log: &mut EventLog<S>,
    ) -> Result<()> {
        let request = self.request(id)?.clone();
        let ins = candidate.insertion;
        if ins.pickup_eta > request.latest_departure {
            return Err(Error::Invariant(format!(
                "request {id} committed with pickup {} after deadline {}",
                ins.pickup_eta, request.latest_departure
            )));
        }
        if self.fleet[vehicle].seats_available() == 0 {
            return Err(Error::Invariant(format!("vehicle {vehicle} has no free seat")));
        }
        let vid = self.fleet[vehicle].id;
        self.fleet[vehicle].commit(id, ins.new_route);
        let acc = &mut self.accounts[vehicle];
        acc.lifetime.admit(&request, &ins.marginal_cost)?;
        acc.epoch.admit(&request, &ins.marginal_cost)?;
        self.ledger.record_admission(vehicle, &ins.marginal_cost, request.demand());
        log.push(
            now,
            Event::Assign {
                request: id,
                vehicle: vid,
                marginal_cost: ins.marginal_cost.clone(),
                pickup_eta: ins.pickup_eta,
                rate: candidate.rate_after,
            },
        );
        let rec = self.registry.get_mut(&id).expect("request registered");
        rec.status = Status::Assigned;
        rec.vehicle = Some(vid);
        rec.marginal_cost = Some(ins.marginal_cost);
        rec.assigned_round = Some(now);
        rec.pickup_eta = Some(ins.pickup_eta);
        Ok(())
    }

    /// Move every vehicle one round and service the stops it reaches.
    pub fn advance_fleet(&mut self, now: Round, log: &mut EventLog<S>) -> Result<()> {
        let mut moving = 0u32;
        let mut distance = Fraction::from_integer(0);
        for v in 0..self.fleet.len() {
            if self.fleet[v].route.is_empty() && self.fleet[v].position.is_on_cell() {
                continue;
            }
            let cells = self.fleet[v].stop_cells();
            let adv = self.grid.advance(&self.fleet[v].position, &cells, 1);
            if adv.traveled > Fraction::from_integer(0) {
                moving += 1;
                distance += adv.traveled;
            }
            self.fleet[v].position = adv.position;
            let reached: Vec<Stop> = self.fleet[v].route.drain(..adv.reached).collect();
            for stop in reached {
                self.service_stop(now, v, stop, log)?;
            }
            self.close_epoch_if_empty(now, v, log)?;
        }
        if moving > 0 {
            log.push(now, Event::Move { vehicles: moving, distance });
        }
        Ok(())
    }

    /// Service stops at the head of routes that sit exactly on the vehicle's
    /// current cell, e.g. a pickup committed to a co-located vehicle.
    pub fn process_arrivals(&mut self, now: Round, log: &mut EventLog<S>) -> Result<()> {
        for v in 0..self.fleet.len() {
            let pos = self.fleet[v].position;
            if !pos.is_on_cell() {
                continue;
            }
            let mut k = 0;
            while k < self.fleet[v].route.len() && self.fleet[v].route[k].cell == pos.at {
                k += 1;
            }
            if k == 0 {
                continue;
            }
            let reached: Vec<Stop> = self.fleet[v].route.drain(..k).collect();
            for stop in reached {
                self.service_stop(now, v, stop, log)?;
            }
            self.close_epoch_if_empty(now, v, log)?;
        }
        Ok(())
    }

    fn service_stop(&mut self, now: Round, v: usize, stop: Stop, log: &mut EventLog<S>) -> Result<()> {
        let vid = self.fleet[v].id;
        let id = stop.request;
        match stop.kind {
            StopKind::Pickup => {
                let rec = self.registry.get_mut(&id).ok_or(Error::UnknownRequest(id))?;
                if now > rec.request.latest_departure {
                    return Err(Error::Invariant(format!(
                        "request {id} picked up at {now} after deadline {}",
                        rec.request.latest_departure
                    )));
                }
                rec.status = Status::Onboard;
                rec.pickup_round = Some(now);
                let vehicle = &mut self.fleet[v];
                vehicle.pending_pickups.remove(&id);
                vehicle.onboard.insert(id);
                log.push(now, Event::Pickup { request: id, vehicle: vid });
            }
            StopKind::Dropoff => {
                self.fleet[v].onboard.remove(&id);
                let rec = self.registry.get_mut(&id).ok_or(Error::UnknownRequest(id))?;
                rec.status = Status::Delivered;
                rec.dropoff_round = Some(now);
                let demand = rec.request.demand();
                self.counters.served += 1;
                self.ledger.record_service(demand);
                log.push(now, Event::Dropoff { request: id, vehicle: vid });
                if self.settlement == SettlementMode::Literal {
                    let request = rec.request.clone();
                    let payment = settle_payment(&request, &self.accounts[v].lifetime, now, true)?;
                    self.accounts[v].epoch_paid.push((id, payment.amount.clone()));
                    self.pay(now, v, id, payment.amount, log);
                }
            }
        }
        Ok(())
    }

    fn pay(&mut self, now: Round, v: usize, id: RequestId, amount: S, log: &mut EventLog<S>) {
        log.push(now, Event::Payment { request: id, vehicle: self.fleet[v].id, amount: amount.clone() });
        self.revenue = self.revenue.clone() + amount.clone();
        if let Some(rec) = self.registry.get_mut(&id) {
            rec.payment = Some(amount);
        }
    }

    fn close_epoch_if_empty(&mut self, now: Round, v: usize, log: &mut EventLog<S>) -> Result<()> {
        if !self.fleet[v].is_empty() || self.accounts[v].epoch.is_empty() {
            return Ok(());
        }
        let vid = self.fleet[v].id;
        let epoch = std::mem::replace(&mut self.accounts[v].epoch, Coalition::new(vid));
        let mut paid = std::mem::take(&mut self.accounts[v].epoch_paid);
        if self.settlement == SettlementMode::Epoch {
            for &id in &epoch.members {
                let request = self.request(id)?.clone();
                let payment = settle_payment(&request, &epoch, now, true)?;
                paid.push((id, payment.amount.clone()));
                self.pay(now, v, id, payment.amount, log);
            }
        }
        self.epochs.push(EpochRecord {
            vehicle: vid,
            closed: now,
            cost: epoch.cum_marginal_cost,
            demand: epoch.cum_demand,
            payments: paid,
        });
        Ok(())
    }

    /// No vehicle has work left.
    pub fn fleet_idle(&self) -> bool {
        self.fleet.iter().all(|v| v.route.is_empty() && v.position.is_on_cell())
    }
}

//! Requests, vehicles, coalitions, the cost ledger, and the cheapest-insertion
//! routing primitive that prices a request on a vehicle.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, Fraction, Grid, Round, RoutePosition};
use crate::scalar::{Rate, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl RequestId {
    /// Stable id for the `index`-th request generated in `round`.
    pub fn from_round(round: Round, index: u32) -> Self {
        RequestId((u64::from(round) << 32) | u64::from(index))
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Shortest-path length of a trip; zero-length trips are rejected.
pub fn effective_demand(grid: &Grid, origin: Cell, destination: Cell) -> Result<u32> {
    if origin == destination {
        grid.check(origin)?;
        return Err(Error::DegenerateRequest(origin));
    }
    grid.shortest_distance(origin, destination)
}

/// A passenger's reported ride demand.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub origin: Cell,
    pub destination: Cell,
    pub arrival: Round,
    pub latest_departure: Round,
    pub effective_demand: u32,
}

impl Request {
    pub fn new(
        grid: &Grid,
        id: RequestId,
        origin: Cell,
        destination: Cell,
        arrival: Round,
        latest_departure: Round,
    ) -> Result<Self> {
        if latest_departure < arrival {
            return Err(Error::InputDomain(format!(
                "request {id}: latest departure {latest_departure} precedes arrival {arrival}"
            )));
        }
        let effective_demand = effective_demand(grid, origin, destination)?;
        Ok(Request { id, origin, destination, arrival, latest_departure, effective_demand })
    }

    pub fn demand(&self) -> u64 {
        u64::from(self.effective_demand)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stop {
    pub request: RequestId,
    pub cell: Cell,
    pub kind: StopKind,
    /// Latest pickup round for pickup stops.
    pub deadline: Option<Round>,
}

impl Stop {
    pub fn pickup(r: &Request) -> Self {
        Stop {
            request: r.id,
            cell: r.origin,
            kind: StopKind::Pickup,
            deadline: Some(r.latest_departure),
        }
    }

    pub fn dropoff(r: &Request) -> Self {
        Stop { request: r.id, cell: r.destination, kind: StopKind::Dropoff, deadline: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub position: RoutePosition,
    pub capacity: u32,
    pub onboard: BTreeSet<RequestId>,
    pub pending_pickups: BTreeSet<RequestId>,
    pub route: Vec<Stop>,
}

impl Vehicle {
    pub fn new(id: VehicleId, at: Cell, capacity: u32) -> Self {
        Vehicle {
            id,
            position: RoutePosition::at(at),
            capacity,
            onboard: BTreeSet::new(),
            pending_pickups: BTreeSet::new(),
            route: Vec::new(),
        }
    }

    /// Seats not yet promised to anyone: capacity minus onboard minus pending.
    pub fn seats_available(&self) -> u32 {
        let used = (self.onboard.len() + self.pending_pickups.len()) as u32;
        self.capacity.saturating_sub(used)
    }

    /// No passenger onboard and no pickup outstanding.
    pub fn is_empty(&self) -> bool {
        self.onboard.is_empty() && self.pending_pickups.is_empty()
    }

    pub fn stop_cells(&self) -> Vec<Cell> {
        self.route.iter().map(|s| s.cell).collect()
    }

    /// Peak number of passengers aboard over the remaining route.
    pub fn peak_load(&self) -> u32 {
        let mut load = self.onboard.len() as i64;
        let mut peak = load;
        for s in &self.route {
            load += match s.kind {
                StopKind::Pickup => 1,
                StopKind::Dropoff => -1,
            };
            peak = peak.max(load);
        }
        peak as u32
    }

    /// Install an insertion computed by [`best_insertion`].
    pub fn commit(&mut self, request: RequestId, insertion_route: Vec<Stop>) {
        self.route = insertion_route;
        self.pending_pickups.insert(request);
    }
}

/// Outcome of pricing a request on a vehicle by cheapest insertion.
#[derive(Clone, Debug, PartialEq)]
pub struct InsertionResult<S> {
    pub new_route: Vec<Stop>,
    /// Route-length increase in blocks, deadhead included.
    pub extra_blocks: u32,
    pub marginal_cost: S,
    pub pickup_eta: Round,
}

/// Cheapest feasible insertion of `request`'s pickup and dropoff into the
/// vehicle's committed route.
///
/// Existing stops keep their relative order. An insertion is feasible when
/// the vehicle has a free seat, the new pickup is reached by the request's
/// latest departure, and no already-committed pickup is pushed past its own
/// deadline. Ties on length go to the earlier pickup, then the earlier slot.
pub fn best_insertion<S: Scalar>(
    grid: &Grid,
    cost_per_block: &S,
    vehicle: &Vehicle,
    request: &Request,
    now: Round,
) -> Option<InsertionResult<S>> {
    if vehicle.seats_available() == 0 {
        return None;
    }
    let n = vehicle.route.len();
    let (anchor, offset) = grid.anchor(&vehicle.position);
    let node = |k: usize| if k == 0 { anchor } else { vehicle.route[k - 1].cell };
    let leg: Vec<u32> = (0..n).map(|k| grid.dist(node(k), vehicle.route[k].cell)).collect();
    // Distance (whole blocks, excluding `offset`) to reach node(k).
    let mut reach = vec![0u64; n + 1];
    for k in 0..n {
        reach[k + 1] = reach[k] + u64::from(leg[k]);
    }
    let mut load = vec![vehicle.onboard.len() as u32; n + 1];
    for k in 0..n {
        load[k + 1] = match vehicle.route[k].kind {
            StopKind::Pickup => load[k] + 1,
            StopKind::Dropoff => load[k].saturating_sub(1),
        };
    }
    let (o, d, ell) = (request.origin, request.destination, request.effective_demand);
    let eta_of = |blocks: u64| now + grid.rounds_for(offset + Fraction::from_integer(blocks));
    let deadlines_ok = |shift_from: usize, shift1: u64, shift_to: usize, shift2: u64| {
        (shift_from..n).all(|k| {
            let stop = &vehicle.route[k];
            match stop.deadline {
                Some(deadline) if stop.kind == StopKind::Pickup => {
                    let extra = shift1 + if k >= shift_to { shift2 } else { 0 };
                    eta_of(reach[k + 1] + extra) <= deadline
                }
                _ => true,
            }
        })
    };

    let mut best: Option<(u32, Round, usize, usize)> = None;
    for i in 0..=n {
        let to_pickup = grid.dist(node(i), o);
        let pickup_eta = eta_of(reach[i] + u64::from(to_pickup));
        if pickup_eta > request.latest_departure {
            continue;
        }
        let mut peak = load[i];
        for j in i..=n {
            if j > i {
                peak = peak.max(load[j]);
            }
            if peak + 1 > vehicle.capacity {
                break;
            }
            let (extra, shift1, shift2) = if i == j {
                let tail = if i < n {
                    let next = vehicle.route[i].cell;
                    i64::from(grid.dist(d, next)) - i64::from(leg[i])
                } else {
                    0
                };
                let added = (i64::from(to_pickup) + i64::from(ell) + tail) as u64;
                (added, added, 0)
            } else {
                let s_i = vehicle.route[i].cell;
                let detour1 = u64::from(to_pickup + grid.dist(o, s_i)) - u64::from(leg[i]);
                let prev = vehicle.route[j - 1].cell;
                let detour2 = if j < n {
                    u64::from(grid.dist(prev, d) + grid.dist(d, vehicle.route[j].cell))
                        - u64::from(leg[j])
                } else {
                    u64::from(grid.dist(prev, d))
                };
                (detour1 + detour2, detour1, detour2)
            };
            if !deadlines_ok(i, shift1, j, shift2) {
                continue;
            }
            let cand = (extra as u32, pickup_eta, i, j);
            if best.is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                best = Some(cand);
            }
        }
    }

    best.map(|(extra, pickup_eta, i, j)| {
        let mut new_route = Vec::with_capacity(n + 2);
        new_route.extend_from_slice(&vehicle.route[..i]);
        new_route.push(Stop::pickup(request));
        new_route.extend_from_slice(&vehicle.route[i..j]);
        new_route.push(Stop::dropoff(request));
        new_route.extend_from_slice(&vehicle.route[j..]);
        InsertionResult {
            new_route,
            extra_blocks: extra,
            marginal_cost: S::from_count(u64::from(extra)) * cost_per_block.clone(),
            pickup_eta,
        }
    })
}

/// Cost and demand accounted to one vehicle's group of passengers.
#[derive(Clone, Debug, PartialEq)]
pub struct Coalition<S> {
    pub vehicle_id: VehicleId,
    pub cum_marginal_cost: S,
    pub cum_demand: u64,
    pub members: BTreeSet<RequestId>,
}

impl<S: Scalar> Coalition<S> {
    pub fn new(vehicle_id: VehicleId) -> Self {
        Coalition {
            vehicle_id,
            cum_marginal_cost: S::zero(),
            cum_demand: 0,
            members: BTreeSet::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cum_demand == 0
    }

    /// Shared fare rate; unbounded while the coalition is empty.
    pub fn rate(&self) -> Rate<S> {
        Rate::of(&self.cum_marginal_cost, self.cum_demand)
    }

    /// Rate the coalition would have after admitting a request.
    pub fn rate_with(&self, marginal_cost: &S, demand: u64) -> Rate<S> {
        Rate::of(&(self.cum_marginal_cost.clone() + marginal_cost.clone()), self.cum_demand + demand)
    }

    pub fn admit(&mut self, request: &Request, marginal_cost: &S) -> Result<()> {
        if !self.members.insert(request.id) {
            return Err(Error::DuplicateAdmission(request.id));
        }
        self.cum_marginal_cost = self.cum_marginal_cost.clone() + marginal_cost.clone();
        self.cum_demand += request.demand();
        Ok(())
    }
}

/// System-wide running totals.
#[derive(Clone, Debug, PartialEq)]
pub struct CostLedger<S> {
    pub total_cost: S,
    pub admitted_demand: u64,
    pub total_served_demand: u64,
    pub per_vehicle: Vec<S>,
}

impl<S: Scalar> CostLedger<S> {
    pub fn new(fleet_size: usize) -> Self {
        CostLedger {
            total_cost: S::zero(),
            admitted_demand: 0,
            total_served_demand: 0,
            per_vehicle: vec![S::zero(); fleet_size],
        }
    }

    pub fn record_admission(&mut self, vehicle: usize, marginal_cost: &S, demand: u64) {
        self.total_cost = self.total_cost.clone() + marginal_cost.clone();
        self.per_vehicle[vehicle] = self.per_vehicle[vehicle].clone() + marginal_cost.clone();
        self.admitted_demand += demand;
    }

    pub fn record_service(&mut self, demand: u64) {
        self.total_served_demand += demand;
    }

    /// Cost per unit of served demand; unbounded before the first service.
    pub fn w_prime(&self) -> Rate<S> {
        Rate::of(&self.total_cost, self.total_served_demand)
    }
}

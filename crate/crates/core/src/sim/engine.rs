//! The discrete-time loop.
//!
//! Each round runs in a fixed order:
//!
//! 1. the fleet moves, servicing pickups, dropoffs and payments it reaches;
//! 2. the round's requests are generated (none after the horizon);
//! 3. the dispatcher quotes, assigns, carries over or expires requests;
//! 4. vehicles already standing on a newly assigned pickup board at once;
//! 5. conservation is checked and a metric row is recorded.
//!
//! After the horizon the loop keeps stepping without new demand until every
//! admitted passenger is delivered and paid.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use crate::benchmarks::{optimal_assign_hindsight, FleetStart};
use crate::config::{MechanismKind, SimConfig};
use crate::error::{Error, Result};
use crate::grid::{Grid, Round};
use crate::mechanism::{Dispatcher, Mechanism};
use crate::model::{Request, RequestId};
use crate::scalar::{Rate, Scalar};
use crate::trace::{Event, EventLog, MetricRow, RejectReason};
use crate::world::World;

use super::demand::DemandModel;
use super::record::{Metrics, SimTrace};

/// Where each round's requests come from.
#[derive(Clone, Debug)]
pub enum DemandSource {
    Model(DemandModel),
    /// Fixed requests keyed by arrival round.
    Scripted(Arc<BTreeMap<Round, Vec<Request>>>),
}

impl DemandSource {
    pub fn from_config(grid: &Grid, config: &SimConfig) -> Result<Self> {
        Ok(DemandSource::Model(DemandModel::new(grid, &config.demand)?))
    }

    pub fn scripted(requests: impl IntoIterator<Item = Request>) -> Self {
        let mut by_round: BTreeMap<Round, Vec<Request>> = BTreeMap::new();
        for r in requests {
            by_round.entry(r.arrival).or_default().push(r);
        }
        DemandSource::Scripted(Arc::new(by_round))
    }

    pub fn requests(&self, grid: &Grid, now: Round) -> Vec<Request> {
        match self {
            DemandSource::Model(m) => m.round(grid, now),
            DemandSource::Scripted(s) => s.get(&now).cloned().unwrap_or_default(),
        }
    }
}

/// One passenger's altered report: submit at `arrival` with the given
/// latest departure instead of the truthful values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportOverride {
    pub target: RequestId,
    pub arrival: Round,
    pub latest_departure: Round,
}

/// Everything that evolves between rounds, cheap to snapshot.
#[derive(Clone, Debug)]
pub struct SimState<S> {
    /// Next round to execute.
    pub now: Round,
    pub world: World<S>,
    pub dispatcher: Dispatcher<S>,
    /// A manipulated report waiting for its submission round.
    pending: Option<Request>,
}

pub struct Simulation<S> {
    config: SimConfig,
    demand: DemandSource,
    report: Option<ReportOverride>,
    state: SimState<S>,
    log: EventLog<S>,
    rows: Vec<MetricRow<S>>,
    round_ms: Vec<f64>,
}

impl<S: Scalar> Simulation<S> {
    pub fn new(config: &SimConfig) -> Result<Self> {
        let grid = config.validate()?;
        let demand = DemandSource::from_config(&grid, config)?;
        Self::with_demand(config, demand)
    }

    pub fn with_demand(config: &SimConfig, demand: DemandSource) -> Result<Self> {
        let config = &config.effective();
        let grid = config.validate()?;
        let cost = &config.grid.cost_per_block;
        let world = World::new(
            grid,
            S::from_ratio(*cost.numer(), *cost.denom()),
            config.settlement,
            config.demand.fleet_size,
            config.demand.capacity,
            grid.center(),
        );
        let dispatcher = Dispatcher::from_config(config)?;
        let state = SimState { now: 0, world, dispatcher, pending: None };
        Ok(Self::resume(config, demand, state, EventLog::new()))
    }

    /// Continue from a snapshot.
    pub fn resume(config: &SimConfig, demand: DemandSource, state: SimState<S>, log: EventLog<S>) -> Self {
        Simulation {
            config: config.effective(),
            demand,
            report: None,
            state,
            log,
            rows: Vec::new(),
            round_ms: Vec::new(),
        }
    }

    pub fn set_report(&mut self, report: ReportOverride) {
        self.report = Some(report);
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> Round {
        self.state.now
    }

    pub fn state(&self) -> &SimState<S> {
        &self.state
    }

    pub fn world(&self) -> &World<S> {
        &self.state.world
    }

    pub fn log(&self) -> &EventLog<S> {
        &self.log
    }

    /// Horizon reached and nothing left in flight.
    pub fn is_done(&self) -> bool {
        let s = &self.state;
        s.now >= self.config.demand.rounds
            && s.pending.is_none()
            && s.dispatcher.held().is_empty()
            && s.world.fleet_idle()
    }

    fn arrivals(&mut self, now: Round) -> Vec<Request> {
        let grid = self.state.world.grid;
        let mut out = if now < self.config.demand.rounds {
            self.demand.requests(&grid, now)
        } else {
            Vec::new()
        };
        if let Some(rep) = self.report {
            if let Some(k) = out.iter().position(|r| r.id == rep.target) {
                let truthful = out.remove(k);
                self.state.pending = Some(Request {
                    arrival: rep.arrival,
                    latest_departure: rep.latest_departure,
                    ..truthful
                });
            }
        }
        if self.state.pending.as_ref().is_some_and(|r| r.arrival == now) {
            out.extend(self.state.pending.take());
        }
        out
    }

    pub fn step(&mut self) -> Result<()> {
        let started = Instant::now();
        let now = self.state.now;
        self.state.world.advance_fleet(now, &mut self.log)?;

        let arrivals = self.arrivals(now);
        let ids: Vec<RequestId> = arrivals.iter().map(|r| r.id).collect();
        for r in arrivals {
            self.state.world.submit(now, r, &mut self.log);
        }
        self.state.dispatcher.dispatch(&mut self.state.world, now, &ids, &mut self.log)?;
        self.state.world.process_arrivals(now, &mut self.log)?;

        self.check_conservation(now)?;
        self.rows.push(self.metric_row(now));
        self.state.now += 1;
        self.round_ms.push(started.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }

    fn check_conservation(&self, now: Round) -> Result<()> {
        let w = &self.state.world;
        let in_vehicles: usize = w.fleet.iter().map(|v| v.onboard.len() + v.pending_pickups.len()).sum();
        let open = self.state.dispatcher.held().len() + in_vehicles;
        if w.in_system() != open as u64 {
            return Err(Error::Invariant(format!(
                "round {now}: {} requests in system but {open} held or aboard",
                w.in_system()
            )));
        }
        let admitted = w.accounts.iter().fold(S::zero(), |acc, a| acc + a.lifetime.cum_marginal_cost.clone());
        if S::EXACT && admitted != w.ledger.total_cost {
            return Err(Error::Invariant(format!(
                "round {now}: ledger total {} differs from coalition sum {admitted}",
                w.ledger.total_cost
            )));
        }
        Ok(())
    }

    fn metric_row(&self, now: Round) -> MetricRow<S> {
        let w = &self.state.world;
        let w_prime = w.ledger.w_prime();
        MetricRow {
            round: now,
            total_cost: w.ledger.total_cost.clone(),
            served_demand: w.ledger.total_served_demand,
            w: welfare_of(&w_prime),
            w_prime,
            revenue: w.revenue.clone(),
            open_requests: w.in_system(),
            expired: w.counters.expired,
            rejected: w.counters.rejected,
            served_count: w.counters.served,
            generated: w.counters.generated,
            active_vehicles: w.active_vehicles(),
        }
    }

    /// Step until the run is complete.
    pub fn run_to_end(&mut self) -> Result<()> {
        let limit = self.config.demand.rounds.saturating_add(self.config.drain_limit);
        while !self.is_done() {
            if self.state.now >= limit {
                return Err(Error::Invariant(format!(
                    "drain phase did not finish within {} rounds",
                    self.config.drain_limit
                )));
            }
            self.step()?;
        }
        Ok(())
    }

    /// Run to completion, cloning the state before each round in `at`.
    pub fn run_with_snapshots(mut self, at: &BTreeSet<Round>) -> Result<(SimTrace<S>, BTreeMap<Round, SimState<S>>)> {
        let started = Instant::now();
        let mut snaps = BTreeMap::new();
        let limit = self.config.demand.rounds.saturating_add(self.config.drain_limit);
        while !self.is_done() {
            if self.state.now >= limit {
                return Err(Error::Invariant("drain phase did not finish".into()));
            }
            if at.contains(&self.state.now) {
                snaps.insert(self.state.now, self.state.clone());
            }
            self.step()?;
        }
        let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok((self.finish(runtime_ms), snaps))
    }

    pub fn run(mut self) -> Result<SimTrace<S>> {
        let started = Instant::now();
        self.run_to_end()?;
        let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(self.finish(runtime_ms))
    }

    fn finish(self, runtime_ms: f64) -> SimTrace<S> {
        let w = self.state.world;
        let w_prime = w.ledger.w_prime();
        let summary = Metrics {
            w: welfare_of(&w_prime),
            w_prime,
            total_cost: w.ledger.total_cost.clone(),
            revenue: w.revenue.clone(),
            served_demand: w.ledger.total_served_demand,
            served_count: w.counters.served,
            rejected_count: w.counters.rejected,
            expired_count: w.counters.expired,
            generated: w.counters.generated,
            rounds_run: self.state.now,
        };
        SimTrace {
            config: self.config,
            events: self.log.events().to_vec(),
            rows: self.rows,
            summary,
            records: w.registry,
            epochs: w.epochs,
            round_ms: self.round_ms,
            runtime_ms,
        }
    }
}

pub(crate) fn welfare_of<S: Scalar>(w_prime: &Rate<S>) -> Option<S> {
    match w_prime {
        Rate::Finite(r) if !r.is_zero() => Some(S::one() / r.clone()),
        _ => None,
    }
}

/// Run `config` with demand from its own seeded model.
pub fn run<S: Scalar>(config: &SimConfig) -> Result<SimTrace<S>> {
    match config.mechanism {
        MechanismKind::OptimalHindsight => {
            let grid = config.validate()?;
            run_hindsight(config, DemandSource::from_config(&grid, config)?)
        }
        _ => Simulation::new(config)?.run(),
    }
}

/// Run with an explicit demand source.
pub fn run_with<S: Scalar>(config: &SimConfig, demand: DemandSource) -> Result<SimTrace<S>> {
    match config.mechanism {
        MechanismKind::OptimalHindsight => run_hindsight(config, demand),
        _ => Simulation::with_demand(config, demand)?.run(),
    }
}

/// Solve the whole horizon offline and record the plan as a trace.
pub fn run_hindsight<S: Scalar>(config: &SimConfig, demand: DemandSource) -> Result<SimTrace<S>> {
    let started = Instant::now();
    let grid = config.validate()?;
    let opts = &config.optimal;
    let fleet = config.demand.fleet_size as usize;
    if fleet > opts.hindsight_max_vehicles {
        return Err(Error::Capacity { what: "vehicles", got: fleet, cap: opts.hindsight_max_vehicles });
    }
    let mut requests = Vec::new();
    for t in 0..config.demand.rounds {
        requests.extend(demand.requests(&grid, t));
        if requests.len() > opts.hindsight_max_requests {
            return Err(Error::Capacity {
                what: "requests",
                got: requests.len(),
                cap: opts.hindsight_max_requests,
            });
        }
    }
    let starts: Vec<FleetStart> = (0..config.demand.fleet_size)
        .map(|v| FleetStart { vehicle: crate::model::VehicleId(v), cell: grid.center(), capacity: config.demand.capacity })
        .collect();
    let cost = S::from_ratio(*config.grid.cost_per_block.numer(), *config.grid.cost_per_block.denom());
    let plan = optimal_assign_hindsight(&grid, &cost, &starts, &requests, opts)?;

    let mut log = EventLog::new();
    let planned: BTreeMap<RequestId, _> = plan.assignments.iter().map(|a| (a.request, a)).collect();
    let mut records = BTreeMap::new();
    for r in &requests {
        log.push(r.arrival, Event::Request(r.clone()));
        match planned.get(&r.id) {
            Some(a) => log.push(r.arrival, Event::Planned { request: r.id, vehicle: a.vehicle, pickup: a.pickup }),
            None => log.push(r.arrival, Event::Reject { request: r.id, reason: RejectReason::NoCandidate }),
        }
        records.insert(r.id, crate::world::RequestRecord::from_plan(r.clone(), planned.get(&r.id).map(|a| a.vehicle)));
    }
    let last = config.demand.rounds.saturating_sub(1);
    for route in &plan.routes {
        log.push(last, Event::Route { vehicle: route.vehicle, stops: route.stops.len() as u32, cost: route.cost.clone() });
    }
    let mut events = log.events().to_vec();
    events.sort_by_key(|e| (e.round, e.seq));

    let served = plan.assignments.len() as u64;
    let generated = requests.len() as u64;
    let summary = Metrics {
        w: plan.welfare(),
        w_prime: plan.objective.clone(),
        total_cost: plan.total_cost.clone(),
        revenue: S::zero(),
        served_demand: plan.total_demand,
        served_count: served,
        rejected_count: generated - served,
        expired_count: 0,
        generated,
        rounds_run: config.demand.rounds,
    };
    let rows = if config.demand.rounds == 0 {
        Vec::new()
    } else {
        vec![MetricRow {
            round: last,
            total_cost: plan.total_cost.clone(),
            served_demand: plan.total_demand,
            w_prime: plan.objective.clone(),
            w: plan.welfare(),
            revenue: S::zero(),
            open_requests: 0,
            expired: 0,
            rejected: generated - served,
            served_count: served,
            generated,
            active_vehicles: plan.routes.len() as u32,
        }]
    };
    Ok(SimTrace {
        config: config.clone(),
        events,
        rows,
        summary,
        records,
        epochs: Vec::new(),
        round_ms: Vec::new(),
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

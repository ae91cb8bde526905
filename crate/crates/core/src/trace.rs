//! Trace events, per-round metric rows, and their on-disk formats.
//!
//! Traces are line-delimited JSON: one header line carrying the schema tag,
//! artifact version and the full config, then one event per line ordered by
//! `(round, seq)`. Money is rendered as fixed six-place decimals.

use std::io::Write;

use serde_json::{json, Value};

use crate::config::SimConfig;
use crate::grid::{Fraction, Round};
use crate::model::{Request, RequestId, VehicleId};
use crate::scalar::{Rate, Scalar};

pub const TRACE_SCHEMA: &str = "amod-trace/1";
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const METRICS_HEADER: &str =
    "round,total_cost,served_demand,w_prime,w,revenue,open_requests,expired,rejected";

const PLACES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    /// No vehicle could price the request.
    NoCandidate,
    /// The passenger declined the quote.
    Declined,
    /// Dropped when a batch closed.
    Outranked,
}

impl RejectReason {
    fn as_str(self) -> &'static str {
        match self {
            RejectReason::NoCandidate => "no-candidate",
            RejectReason::Declined => "declined",
            RejectReason::Outranked => "outranked",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event<S> {
    Request(Request),
    Quote { request: RequestId, amount: S },
    Reject { request: RequestId, reason: RejectReason },
    Assign {
        request: RequestId,
        vehicle: VehicleId,
        marginal_cost: S,
        pickup_eta: Round,
        rate: Rate<S>,
    },
    Expire { request: RequestId },
    Pickup { request: RequestId, vehicle: VehicleId },
    Dropoff { request: RequestId, vehicle: VehicleId },
    Payment { request: RequestId, vehicle: VehicleId, amount: S },
    /// Fleet motion summary for one round.
    Move { vehicles: u32, distance: Fraction },
    /// Offline plans: a pickup scheduled at an exact time.
    Planned { request: RequestId, vehicle: VehicleId, pickup: Fraction },
    /// Offline plans: one vehicle's whole route.
    Route { vehicle: VehicleId, stops: u32, cost: S },
}

impl<S: Scalar> Event<S> {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Request(_) => "request",
            Event::Quote { .. } => "quote",
            Event::Reject { .. } => "reject",
            Event::Assign { .. } => "assign",
            Event::Expire { .. } => "expire",
            Event::Pickup { .. } => "pickup",
            Event::Dropoff { .. } => "dropoff",
            Event::Payment { .. } => "payment",
            Event::Move { .. } => "move",
            Event::Planned { .. } => "planned",
            Event::Route { .. } => "route",
        }
    }

    pub fn request(&self) -> Option<RequestId> {
        match self {
            Event::Request(r) => Some(r.id),
            Event::Quote { request, .. }
            | Event::Reject { request, .. }
            | Event::Assign { request, .. }
            | Event::Expire { request }
            | Event::Pickup { request, .. }
            | Event::Dropoff { request, .. }
            | Event::Payment { request, .. }
            | Event::Planned { request, .. } => Some(*request),
            Event::Move { .. } | Event::Route { .. } => None,
        }
    }

    fn fields(&self) -> Value {
        let money = |s: &S| s.to_decimal(PLACES);
        match self {
            Event::Request(r) => json!({
                "request": r.id.0,
                "origin": [r.origin.row, r.origin.col],
                "destination": [r.destination.row, r.destination.col],
                "arrival": r.arrival,
                "latest_departure": r.latest_departure,
                "demand": r.effective_demand,
            }),
            Event::Quote { request, amount } => json!({"request": request.0, "amount": money(amount)}),
            Event::Reject { request, reason } => json!({"request": request.0, "reason": reason.as_str()}),
            Event::Assign { request, vehicle, marginal_cost, pickup_eta, rate } => json!({
                "request": request.0,
                "vehicle": vehicle.0,
                "marginal_cost": money(marginal_cost),
                "pickup_eta": pickup_eta,
                "rate": rate.to_decimal(PLACES),
            }),
            Event::Expire { request } => json!({"request": request.0}),
            Event::Pickup { request, vehicle } | Event::Dropoff { request, vehicle } => {
                json!({"request": request.0, "vehicle": vehicle.0})
            }
            Event::Payment { request, vehicle, amount } => json!({
                "request": request.0,
                "vehicle": vehicle.0,
                "amount": money(amount),
            }),
            Event::Move { vehicles, distance } => json!({
                "vehicles": vehicles,
                "distance": distance.to_string(),
            }),
            Event::Planned { request, vehicle, pickup } => json!({
                "request": request.0,
                "vehicle": vehicle.0,
                "pickup": pickup.to_string(),
            }),
            Event::Route { vehicle, stops, cost } => json!({
                "vehicle": vehicle.0,
                "stops": stops,
                "cost": money(cost),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoggedEvent<S> {
    pub seq: u64,
    pub round: Round,
    pub event: Event<S>,
}

impl<S: Scalar> LoggedEvent<S> {
    pub fn to_json_line(&self) -> String {
        let mut v = self.event.fields();
        let obj = v.as_object_mut().expect("event fields are an object");
        obj.insert("seq".into(), json!(self.seq));
        obj.insert("round".into(), json!(self.round));
        obj.insert("event".into(), json!(self.event.kind()));
        v.to_string()
    }
}

/// Append-only, totally ordered event record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog<S> {
    events: Vec<LoggedEvent<S>>,
    next_seq: u64,
    enabled: bool,
}

impl<S: Scalar> EventLog<S> {
    pub fn new() -> Self {
        EventLog { events: Vec::new(), next_seq: 0, enabled: true }
    }

    /// A log that only counts sequence numbers; used by replays that need
    /// outcomes, not records.
    pub fn disabled() -> Self {
        EventLog { events: Vec::new(), next_seq: 0, enabled: false }
    }

    pub fn push(&mut self, round: Round, event: Event<S>) {
        if self.enabled {
            self.events.push(LoggedEvent { seq: self.next_seq, round, event });
        }
        self.next_seq += 1;
    }

    pub fn events(&self) -> &[LoggedEvent<S>] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// One row of the per-round metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow<S> {
    pub round: Round,
    pub total_cost: S,
    pub served_demand: u64,
    pub w_prime: Rate<S>,
    /// Absent until the first passenger is served.
    pub w: Option<S>,
    pub revenue: S,
    pub open_requests: u64,
    pub expired: u64,
    pub rejected: u64,
    pub served_count: u64,
    pub generated: u64,
    pub active_vehicles: u32,
}

impl<S: Scalar> MetricRow<S> {
    pub fn to_csv_line(&self) -> String {
        let w_prime = match &self.w_prime {
            Rate::Finite(v) => v.to_decimal(PLACES),
            Rate::Unbounded => String::new(),
        };
        let w = self.w.as_ref().map(|w| w.to_decimal(PLACES)).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.round,
            self.total_cost.to_decimal(PLACES),
            self.served_demand,
            w_prime,
            w,
            self.revenue.to_decimal(PLACES),
            self.open_requests,
            self.expired,
            self.rejected
        )
    }
}

/// Provenance header embedded in every output file.
pub fn header(config: &SimConfig) -> Value {
    json!({
        "schema": TRACE_SCHEMA,
        "version": ARTIFACT_VERSION,
        "mechanism": config.mechanism.as_str(),
        "seed": config.demand.seed,
        "config": config,
    })
}

pub fn write_trace<S: Scalar, W: Write>(
    out: &mut W,
    config: &SimConfig,
    events: &[LoggedEvent<S>],
) -> std::io::Result<()> {
    writeln!(out, "{}", header(config))?;
    for e in events {
        writeln!(out, "{}", e.to_json_line())?;
    }
    Ok(())
}

pub fn write_metrics<S: Scalar, W: Write>(
    out: &mut W,
    config: &SimConfig,
    rows: &[MetricRow<S>],
) -> std::io::Result<()> {
    writeln!(out, "# {}", header(config))?;
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    Ok(())
}

/// Parse the header line of a trace file back into its config.
pub fn read_header(line: &str) -> crate::Result<SimConfig> {
    let v: Value = serde_json::from_str(line.trim_start_matches("# "))?;
    if v.get("schema").and_then(Value::as_str) != Some(TRACE_SCHEMA) {
        return Err(crate::Error::InputDomain("not an amod trace header".into()));
    }
    Ok(serde_json::from_value(v["config"].clone())?)
}

//! Incentive audit.
//!
//! A manipulation changes one passenger's report: either submitting `k`
//! rounds late or declaring a different latest departure. The run is replayed
//! from a snapshot taken just before the passenger's true arrival, and the
//! outcome is judged against the passenger's true deadline. Not being served,
//! or being picked up after the true deadline, ranks below any service.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{SettlementMode, SimConfig};
use crate::error::{Error, Result};
use crate::grid::Round;
use crate::model::{Request, RequestId, VehicleId};
use crate::rng::keyed_rng;
use crate::scalar::Scalar;
use crate::sim::{DemandSource, ReportOverride, SimState, SimTrace, Simulation};
use crate::trace::{EventLog, ARTIFACT_VERSION};
use crate::world::{RequestRecord, Status};

pub const REPRO_SCHEMA: &str = "amod-repro/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Misreport {
    /// Submit `rounds` later than the true arrival.
    Delay { rounds: Round },
    /// Declare this latest departure instead of the true one.
    Deadline { reported: Round },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manipulation {
    pub target: RequestId,
    pub misreport: Misreport,
}

impl Manipulation {
    /// The submitted report, or `None` when the passenger cannot file one
    /// (arriving after their own deadline, or declaring a deadline in the past).
    pub fn report(&self, truthful: &Request) -> Option<ReportOverride> {
        let (arrival, latest) = match self.misreport {
            Misreport::Delay { rounds } => (truthful.arrival + rounds, truthful.latest_departure),
            Misreport::Deadline { reported } => (truthful.arrival, reported),
        };
        (arrival <= truthful.latest_departure && latest >= arrival).then_some(ReportOverride {
            target: self.target,
            arrival,
            latest_departure: latest,
        })
    }
}

impl fmt::Display for Manipulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.misreport {
            Misreport::Delay { rounds } => write!(f, "request {} delays by {rounds}", self.target),
            Misreport::Deadline { reported } => write!(f, "request {} reports deadline {reported}", self.target),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome<S> {
    Served { payment: S, pickup: Round },
    Unserved,
}

impl<S: Scalar> Outcome<S> {
    /// The outcome once it can no longer change, judged against `deadline`.
    pub fn of(record: &RequestRecord<S>, deadline: Round) -> Option<Self> {
        if let Some(p) = record.pickup_round {
            if p > deadline {
                return Some(Outcome::Unserved);
            }
        }
        match (record.status, &record.payment) {
            (Status::Rejected | Status::Expired, _) => Some(Outcome::Unserved),
            (_, Some(pay)) => Some(Outcome::Served {
                payment: pay.clone(),
                pickup: record.pickup_round.expect("paid passengers were picked up"),
            }),
            _ => None,
        }
    }

    pub fn payment(&self) -> Option<&S> {
        match self {
            Outcome::Served { payment, .. } => Some(payment),
            Outcome::Unserved => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Outcome::Served { payment, pickup } => json!({
                "served": true,
                "payment": payment.to_string(),
                "payment_decimal": payment.to_decimal(6),
                "pickup": pickup,
            }),
            Outcome::Unserved => json!({ "served": false }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gain {
    None,
    /// Served both ways, paying strictly less after lying.
    Cheaper,
    /// Unserved when truthful, served after lying.
    Served,
}

pub fn gain<S: Scalar>(truthful: &Outcome<S>, manipulated: &Outcome<S>) -> Gain {
    match (truthful, manipulated) {
        (Outcome::Unserved, Outcome::Served { .. }) => Gain::Served,
        (Outcome::Served { payment: a, .. }, Outcome::Served { payment: b, .. }) if b < a => Gain::Cheaper,
        _ => Gain::None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport<S> {
    pub seed: u64,
    pub manipulation: Manipulation,
    pub truthful: Outcome<S>,
    pub manipulated: Outcome<S>,
    pub gain: Gain,
}

impl<S: Scalar> AuditReport<S> {
    pub fn verdict(&self) -> &'static str {
        if self.gain == Gain::None {
            "NO_GAIN"
        } else {
            "GAIN"
        }
    }

    /// Self-contained JSON that `replay_bundle` can re-execute.
    pub fn bundle(&self, config: &SimConfig) -> Value {
        let mut config = config.clone();
        config.demand.seed = self.seed;
        json!({
            "schema": REPRO_SCHEMA,
            "version": ARTIFACT_VERSION,
            "config": config,
            "manipulation": self.manipulation,
            "truthful": self.truthful.to_json(),
            "manipulated": self.manipulated.to_json(),
            "verdict": self.verdict(),
        })
    }
}

/// Re-run the manipulated report from a snapshot taken before `truthful.arrival`.
pub fn replay_with_manipulation<S: Scalar>(
    config: &SimConfig,
    demand: DemandSource,
    snapshot: &SimState<S>,
    truthful: &Request,
    manipulation: &Manipulation,
) -> Result<Outcome<S>> {
    if snapshot.now != truthful.arrival {
        return Err(Error::InputDomain(format!(
            "snapshot is at round {} but the request arrives at {}",
            snapshot.now, truthful.arrival
        )));
    }
    let Some(report) = manipulation.report(truthful) else {
        return Ok(Outcome::Unserved);
    };
    let mut sim = Simulation::resume(config, demand, snapshot.clone(), EventLog::disabled());
    sim.set_report(report);
    let limit = config.demand.rounds.saturating_add(config.drain_limit);
    loop {
        if let Some(rec) = sim.world().record(manipulation.target) {
            if let Some(out) = Outcome::of(rec, truthful.latest_departure) {
                return Ok(out);
            }
        }
        if sim.is_done() || sim.now() >= limit {
            return Err(Error::Invariant(format!("{manipulation}: outcome never settled")));
        }
        sim.step()?;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub seeds: Vec<u64>,
    pub per_seed: usize,
    pub max_delay: Round,
    pub max_shift: Round,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { seeds: (0..10).collect(), per_seed: 100, max_delay: 10, max_shift: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport<S> {
    pub config: SimConfig,
    pub reports: Vec<AuditReport<S>>,
}

impl<S: Scalar> SweepReport<S> {
    pub fn gains(&self) -> impl Iterator<Item = &AuditReport<S>> {
        self.reports.iter().filter(|r| r.gain != Gain::None)
    }

    pub fn count(&self, g: Gain) -> usize {
        self.reports.iter().filter(|r| r.gain == g).count()
    }

    /// Served when truthful, unserved after lying.
    pub fn lost_service(&self) -> usize {
        self.reports
            .iter()
            .filter(|r| matches!((&r.truthful, &r.manipulated), (Outcome::Served { .. }, Outcome::Unserved)))
            .count()
    }

    pub fn verdict(&self) -> &'static str {
        if self.gains().next().is_some() {
            "GAIN"
        } else {
            "NO_GAIN"
        }
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "mechanism": self.config.mechanism.as_str(),
            "manipulations": self.reports.len(),
            "verdict": self.verdict(),
            "cheaper": self.count(Gain::Cheaper),
            "served_after_lying": self.count(Gain::Served),
            "lost_service": self.lost_service(),
        })
    }
}

fn sample<R: Rng>(rng: &mut R, r: &Request, opts: &SweepOptions) -> Manipulation {
    let misreport = if rng.random_bool(0.5) {
        Misreport::Delay { rounds: rng.random_range(1..=opts.max_delay.max(1)) }
    } else {
        let shift = rng.random_range(1..=opts.max_shift.max(1));
        let reported = if rng.random_bool(0.5) {
            r.latest_departure + shift
        } else {
            r.latest_departure.saturating_sub(shift)
        };
        Misreport::Deadline { reported }
    };
    Manipulation { target: r.id, misreport }
}

/// Audit one seed: sample targets among all generated requests, run the
/// truthful trace once, then replay every manipulation in parallel.
pub fn audit_seed<S: Scalar>(config: &SimConfig, seed: u64, opts: &SweepOptions) -> Result<Vec<AuditReport<S>>> {
    let config = config.clone().with_seed(seed).effective();
    let grid = config.validate()?;
    let demand = DemandSource::from_config(&grid, &config)?;
    let requests: Vec<Request> = (0..config.demand.rounds).flat_map(|t| demand.requests(&grid, t)).collect();
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let picks: Vec<(Request, Manipulation)> = (0..opts.per_seed)
        .map(|i| {
            let mut rng = keyed_rng(seed, b"audit", &[i as u64]);
            let r = requests[rng.random_range(0..requests.len())].clone();
            let m = sample(&mut rng, &r, opts);
            (r, m)
        })
        .collect();
    let at: BTreeSet<Round> = picks.iter().map(|(r, _)| r.arrival).collect();
    let (trace, snaps) = Simulation::<S>::with_demand(&config, demand.clone())?.run_with_snapshots(&at)?;

    picks
        .par_iter()
        .map(|(r, m)| {
            let rec = trace.record(r.id).ok_or(Error::UnknownRequest(r.id))?;
            let truthful = Outcome::of(rec, r.latest_departure)
                .ok_or_else(|| Error::Invariant(format!("request {} unsettled after drain", r.id)))?;
            let manipulated = replay_with_manipulation(&config, demand.clone(), &snaps[&r.arrival], r, m)?;
            Ok(AuditReport { seed, manipulation: *m, gain: gain(&truthful, &manipulated), truthful, manipulated })
        })
        .collect()
}

pub fn sweep<S: Scalar>(config: &SimConfig, opts: &SweepOptions) -> Result<SweepReport<S>> {
    let mut reports = Vec::with_capacity(opts.seeds.len() * opts.per_seed);
    for &seed in &opts.seeds {
        reports.extend(audit_seed::<S>(config, seed, opts)?);
    }
    Ok(SweepReport { config: config.effective(), reports })
}

/// Re-execute a repro bundle.
pub fn replay_bundle<S: Scalar>(bundle: &Value) -> Result<AuditReport<S>> {
    if bundle.get("schema").and_then(Value::as_str) != Some(REPRO_SCHEMA) {
        return Err(Error::InputDomain("not an amod repro bundle".into()));
    }
    let config: SimConfig = serde_json::from_value(bundle["config"].clone())?;
    let m: Manipulation = serde_json::from_value(bundle["manipulation"].clone())?;
    let config = config.effective();
    let grid = config.validate()?;
    let demand = DemandSource::from_config(&grid, &config)?;
    let arrival = Round::try_from(m.target.0 >> 32)
        .map_err(|_| Error::InputDomain(format!("request id {} out of range", m.target)))?;
    let target = demand
        .requests(&grid, arrival)
        .into_iter()
        .find(|r| r.id == m.target)
        .ok_or(Error::UnknownRequest(m.target))?;
    let at = BTreeSet::from([arrival]);
    let (trace, snaps) = Simulation::<S>::with_demand(&config, demand.clone())?.run_with_snapshots(&at)?;
    let rec = trace.record(m.target).ok_or(Error::UnknownRequest(m.target))?;
    let truthful = Outcome::of(rec, target.latest_departure)
        .ok_or_else(|| Error::Invariant(format!("request {} unsettled after drain", m.target)))?;
    let manipulated = replay_with_manipulation(&config, demand, &snaps[&arrival], &target, &m)?;
    Ok(AuditReport {
        seed: config.demand.seed,
        manipulation: m,
        gain: gain(&truthful, &manipulated),
        truthful,
        manipulated,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrBbReport<S> {
    pub settlement: SettlementMode,
    /// Paid passengers that also received a quote.
    pub quoted: usize,
    pub ir_violations: Vec<RequestId>,
    pub delivered_unpaid: Vec<RequestId>,
    pub epochs: usize,
    /// Epochs whose payments do not sum to their cost (epoch settlement only).
    pub bb_violations: Vec<(VehicleId, Round)>,
    /// Revenue minus admitted cost.
    pub residual: S,
}

impl<S: Scalar> IrBbReport<S> {
    pub fn ir_holds(&self) -> bool {
        self.ir_violations.is_empty()
    }

    pub fn bb_holds(&self) -> bool {
        self.bb_violations.is_empty() && self.delivered_unpaid.is_empty()
    }
}

fn close<S: Scalar>(a: &S, b: &S) -> bool {
    if S::EXACT {
        a == b
    } else {
        (a.as_f64() - b.as_f64()).abs() <= 1e-9 * (1.0 + b.as_f64().abs())
    }
}

fn at_most<S: Scalar>(a: &S, b: &S) -> bool {
    a <= b || (!S::EXACT && close(a, b))
}

/// Individual rationality of every quoted payment, and per-epoch budget
/// balance under epoch settlement.
pub fn check_ir_and_bb<S: Scalar>(trace: &SimTrace<S>) -> IrBbReport<S> {
    let mut quoted = 0;
    let mut ir_violations = Vec::new();
    let mut delivered_unpaid = Vec::new();
    for (id, rec) in &trace.records {
        if rec.status == Status::Delivered && rec.payment.is_none() && rec.vehicle.is_some() && !trace.epochs.is_empty() {
            delivered_unpaid.push(*id);
        }
        if let (Some(q), Some(p)) = (&rec.quote, &rec.payment) {
            quoted += 1;
            if !at_most(p, q) {
                ir_violations.push(*id);
            }
        }
    }
    let settlement = trace.config.settlement;
    let bb_violations = match settlement {
        SettlementMode::Epoch => trace
            .epochs
            .iter()
            .filter(|e| {
                let paid = e.payments.iter().fold(S::zero(), |acc, (_, p)| acc + p.clone());
                !close(&paid, &e.cost)
            })
            .map(|e| (e.vehicle, e.closed))
            .collect(),
        SettlementMode::Literal => Vec::new(),
    };
    IrBbReport {
        settlement,
        quoted,
        ir_violations,
        delivered_unpaid,
        epochs: trace.epochs.len(),
        bb_violations,
        residual: trace.summary.revenue.clone() - trace.summary.total_cost.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::sim::run;
    use crate::Rational;

    fn req(arrival: Round, deadline: Round) -> Request {
        Request {
            id: RequestId::from_round(arrival, 0),
            origin: Cell::new(0, 0),
            destination: Cell::new(0, 3),
            arrival,
            latest_departure: deadline,
            effective_demand: 3,
        }
    }

    #[test]
    fn reports_outside_the_window_cannot_be_filed() {
        let r = req(5, 8);
        let late = Manipulation { target: r.id, misreport: Misreport::Delay { rounds: 4 } };
        assert!(late.report(&r).is_none());
        let ok = Manipulation { target: r.id, misreport: Misreport::Delay { rounds: 3 } };
        assert_eq!(ok.report(&r).map(|o| o.arrival), Some(8));
        let past = Manipulation { target: r.id, misreport: Misreport::Deadline { reported: 4 } };
        assert!(past.report(&r).is_none());
    }

    #[test]
    fn gains_rank_non_service_lowest() {
        let q = |n: i64| Rational::from_integer(n.into());
        let served = |n| Outcome::Served { payment: q(n), pickup: 0 };
        assert_eq!(gain(&served(3), &served(2)), Gain::Cheaper);
        assert_eq!(gain(&served(2), &served(2)), Gain::None);
        assert_eq!(gain(&served(2), &served(3)), Gain::None);
        assert_eq!(gain(&Outcome::Unserved, &served(9)), Gain::Served);
        assert_eq!(gain(&served(1), &Outcome::Unserved), Gain::None);
    }

    #[test]
    fn late_pickup_is_non_service() {
        let r = req(0, 4);
        let mut rec = RequestRecord::<Rational>::from_plan(r, Some(VehicleId(0)));
        rec.pickup_round = Some(5);
        rec.payment = Some(Rational::from_integer(1.into()));
        assert_eq!(Outcome::of(&rec, 4), Some(Outcome::Unserved));
        assert!(matches!(Outcome::of(&rec, 5), Some(Outcome::Served { .. })));
    }

    fn small() -> SimConfig {
        let mut c = SimConfig::desk();
        c.demand.rounds = 30;
        c
    }

    #[test]
    fn identity_replay_reproduces_the_truthful_outcome() {
        let config = small();
        let grid = config.validate().unwrap();
        let demand = DemandSource::from_config(&grid, &config).unwrap();
        let target = demand.requests(&grid, 10).into_iter().next().unwrap();
        let (trace, snaps) = Simulation::<Rational>::with_demand(&config, demand.clone())
            .unwrap()
            .run_with_snapshots(&BTreeSet::from([10]))
            .unwrap();
        let m = Manipulation { target: target.id, misreport: Misreport::Deadline { reported: target.latest_departure } };
        let replayed = replay_with_manipulation(&config, demand, &snaps[&10], &target, &m).unwrap();
        let truthful = Outcome::of(trace.record(target.id).unwrap(), target.latest_departure).unwrap();
        assert_eq!(replayed, truthful);
    }

    #[test]
    fn ir_and_bb_hold_under_epoch_settlement() {
        let config = small().with_settlement(SettlementMode::Epoch);
        let trace = run::<Rational>(&config).unwrap();
        let rep = check_ir_and_bb(&trace);
        assert!(rep.quoted > 0);
        assert!(rep.ir_holds(), "{:?}", rep.ir_violations);
        assert!(rep.bb_holds(), "{:?}", rep.bb_violations);
        assert_eq!(rep.residual, Rational::from_integer(0.into()));
    }

    #[test]
    fn sweep_is_deterministic() {
        let opts = SweepOptions { seeds: vec![3], per_seed: 6, ..SweepOptions::default() };
        let a = sweep::<Rational>(&small(), &opts).unwrap();
        let b = sweep::<Rational>(&small(), &opts).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.reports.len(), 6);
    }
}

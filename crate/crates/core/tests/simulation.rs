use amod_core::benchmarks::optimal_assign_hindsight;
use amod_core::sim::{run, run_with, DemandSource};
use amod_core::trace::Event;
use amod_core::{
    Cell, ExactTrace, FloatTrace, MechanismKind, Rational, Request, RequestId, Scalar, SettlementMode, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn small(rounds: u32) -> SimConfig {
    let mut c = SimConfig::desk();
    c.demand.rounds = rounds;
    c
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn golden_trace_hash() {
    let trace: ExactTrace = run(&small(10).with_seed(42)).unwrap();
    assert_eq!(hex(&trace.trace_bytes()), "74379fb6d1934154f67043db899c59274b78cfd92ee79b7d817f2d29a69d3727");
}

#[test]
fn repeated_runs_are_byte_identical() {
    for mechanism in [MechanismKind::Iors, MechanismKind::Auction, MechanismKind::OptimalRound] {
        let c = small(25).with_mechanism(mechanism).with_seed(3);
        let a: ExactTrace = run(&c).unwrap();
        let b: ExactTrace = run(&c).unwrap();
        assert_eq!(a.trace_bytes(), b.trace_bytes(), "{mechanism}");
        assert_eq!(a.metrics_bytes(), b.metrics_bytes(), "{mechanism}");
    }
}

#[test]
fn seeds_change_the_trace() {
    let a: ExactTrace = run(&small(10).with_seed(1)).unwrap();
    let b: ExactTrace = run(&small(10).with_seed(2)).unwrap();
    assert_ne!(a.trace_bytes(), b.trace_bytes());
}

#[test]
fn zero_rounds_yield_an_empty_run() {
    let t: ExactTrace = run(&small(0)).unwrap();
    assert!(t.events.is_empty());
    assert!(t.rows.is_empty());
    assert_eq!(t.summary.generated, 0);
    assert_eq!(t.summary.w, None);
    assert_eq!(t.trace_bytes().iter().filter(|&&b| b == b'\n').count(), 1);
}

#[test]
fn lone_passenger_lifecycle_pays_its_marginal_cost() {
    let mut c = small(5);
    c.demand.fleet_size = 1;
    let grid = c.validate().unwrap();
    let center = grid.center();
    let r = Request::new(
        &grid,
        RequestId::from_round(0, 0),
        Cell::new(center.row, center.col + 2),
        Cell::new(center.row + 3, center.col + 2),
        0,
        20,
    )
    .unwrap();
    for mode in [SettlementMode::Literal, SettlementMode::Epoch] {
        let t: ExactTrace = run_with(&c.clone().with_settlement(mode), DemandSource::scripted([r.clone()])).unwrap();
        let kinds: Vec<&str> = t.events.iter().filter(|e| e.event.request().is_some()).map(|e| e.event.kind()).collect();
        assert_eq!(kinds, ["request", "quote", "assign", "pickup", "dropoff", "payment"], "{mode}");
        // Two blocks of deadhead plus three loaded.
        let five = Rational::from_count(5);
        let rec = t.record(r.id).unwrap();
        assert_eq!(rec.marginal_cost, Some(five.clone()));
        assert_eq!(rec.payment, Some(five.clone()));
        assert_eq!(rec.quote, Some(five.clone()));
        assert_eq!(t.summary.total_cost, five);
        assert_eq!(t.summary.w, Some(Rational::new(3.into(), 5.into())));
        let pay = t.events.iter().find_map(|e| match &e.event {
            Event::Payment { amount, .. } => Some((e.round, amount.clone())),
            _ => None,
        });
        assert_eq!(pay, Some((rec.dropoff_round.unwrap(), five.clone())));
    }
}

#[test]
fn float_runs_track_exact_runs() {
    let c = small(20).with_seed(5);
    let exact: ExactTrace = run(&c).unwrap();
    let float: FloatTrace = run(&c).unwrap();
    assert_eq!(exact.summary.generated, float.summary.generated);
    let (we, wf) = (exact.summary.w.unwrap().as_f64(), float.summary.w.unwrap());
    assert!((we - wf).abs() < 0.05 * we, "exact {we} float {wf}");
}

fn micro(rng: &mut ChaCha8Rng) -> (SimConfig, Vec<Request>) {
    let mut c = SimConfig::desk();
    c.grid.rows = 7;
    c.grid.cols = 7;
    c.demand.od_radius = 3;
    c.demand.fleet_size = rng.random_range(1..=3);
    c.demand.capacity = rng.random_range(1..=3);
    c.demand.rounds = 12;
    let grid = c.validate().unwrap();
    let n = rng.random_range(1..=8);
    let mut requests = Vec::new();
    while requests.len() < n {
        let o = Cell::new(rng.random_range(0..7), rng.random_range(0..7));
        let d = Cell::new(rng.random_range(0..7), rng.random_range(0..7));
        if o == d {
            continue;
        }
        let arrival = rng.random_range(0..12);
        let id = RequestId::from_round(arrival, requests.len() as u32);
        requests.push(Request::new(&grid, id, o, d, arrival, arrival + rng.random_range(2..=20)).unwrap());
    }
    (c, requests)
}

#[test]
fn hindsight_optimum_dominates_iors_on_micro_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..40 {
        let (c, requests) = micro(&mut rng);
        let iors: ExactTrace = run_with(&c, DemandSource::scripted(requests.clone())).unwrap();
        let hind: ExactTrace = run_with(
            &c.clone().with_mechanism(MechanismKind::OptimalHindsight),
            DemandSource::scripted(requests.clone()),
        )
        .unwrap();
        if let Some(w) = &iors.summary.w {
            let h = hind.summary.w.as_ref().expect("hindsight serves whatever IORS served");
            assert!(h >= w, "case {case}: hindsight {h} < iors {w}");
        }
    }
}

#[test]
fn hindsight_rejects_oversized_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (c, mut requests) = micro(&mut rng);
    let grid = c.validate().unwrap();
    while requests.len() < 9 {
        let k = requests.len() as u32;
        requests.push(Request::new(&grid, RequestId::from_round(0, 100 + k), Cell::new(0, 0), Cell::new(1, k % 7), 0, 9).unwrap());
    }
    let plan = optimal_assign_hindsight::<Rational>(&grid, &Rational::from_count(1), &[], &requests, &c.optimal);
    assert!(plan.is_err());
}

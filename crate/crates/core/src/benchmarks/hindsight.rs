//! Clairvoyant optimum over a whole horizon for tiny instances.
//!
//! Every request's arrival and deadline is known up front. Each vehicle may
//! drive ahead and wait at a pickup until the passenger arrives. For every
//! vehicle and every subset of requests a label-setting search over
//! `(picked, dropped, last stop)` states finds the cheapest route that serves
//! exactly that subset on time; a subset-convolution across vehicles then
//! picks the served set with the lowest cost per unit demand.

use std::cmp::Ordering;

use num_traits::Zero;

use super::optimal::{Horizon, OptimalPlan, PlanEntry, PlannedRoute};
use crate::config::OptimalOptions;
use crate::error::{Error, Result};
use crate::grid::{Cell, Fraction, Grid};
use crate::model::{Request, Stop, VehicleId};
use crate::scalar::{Rate, Scalar};

/// Vehicle starting state for the offline problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FleetStart {
    pub vehicle: VehicleId,
    pub cell: Cell,
    pub capacity: u32,
}

#[derive(Clone, Copy, Debug)]
struct Label {
    cost: u32,
    time: Fraction,
    /// Index of the parent label in the previous layer's arena.
    parent: usize,
    /// Stop just visited: `i` for pickup of request `i`, `n + i` for its dropoff.
    stop: usize,
    picked: u16,
    dropped: u16,
}

/// Cheapest on-time route per subset for one vehicle.
struct VehicleTable {
    /// `best[mask]`: minimal blocks and the arena index of the completing label.
    best: Vec<Option<(u32, usize)>>,
    arena: Vec<Label>,
}

fn solve_vehicle(grid: &Grid, start: &FleetStart, requests: &[Request]) -> VehicleTable {
    let n = requests.len();
    let full = 1usize << n;
    let stop_cell = |s: usize| if s < n { requests[s].origin } else { requests[s - n].destination };
    let travel = |blocks: u32| Fraction::from_integer(u64::from(blocks)) / grid.speed();

    let root = Label { cost: 0, time: Fraction::zero(), parent: usize::MAX, stop: usize::MAX, picked: 0, dropped: 0 };
    let mut arena = vec![root];
    let mut best: Vec<Option<(u32, usize)>> = vec![None; full];
    best[0] = Some((0, 0));
    let mut layer: Vec<usize> = vec![0];

    for _ in 0..2 * n {
        // Pareto front of (cost, time) per (picked, dropped, last stop).
        let mut fronts: std::collections::BTreeMap<(u16, u16, usize), Vec<Label>> = Default::default();
        for &li in &layer {
            let l = arena[li];
            let here = if l.stop == usize::MAX { start.cell } else { stop_cell(l.stop) };
            let load = (l.picked.count_ones() - l.dropped.count_ones()) as u32;
            for s in 0..2 * n {
                let (i, pickup) = if s < n { (s, true) } else { (s - n, false) };
                let bit = 1u16 << i;
                let next = if pickup {
                    if l.picked & bit != 0 || load >= start.capacity {
                        continue;
                    }
                    let r = &requests[i];
                    let d = grid.dist(here, r.origin);
                    let t = (l.time + travel(d)).max(Fraction::from_integer(u64::from(r.arrival)));
                    if t > Fraction::from_integer(u64::from(r.latest_departure)) {
                        continue;
                    }
                    Label { cost: l.cost + d, time: t, parent: li, stop: s, picked: l.picked | bit, dropped: l.dropped }
                } else {
                    if l.picked & bit == 0 || l.dropped & bit != 0 {
                        continue;
                    }
                    let d = grid.dist(here, requests[i].destination);
                    Label { cost: l.cost + d, time: l.time + travel(d), parent: li, stop: s, picked: l.picked, dropped: l.dropped | bit }
                };
                let front = fronts.entry((next.picked, next.dropped, next.stop)).or_default();
                if front.iter().any(|f| f.cost <= next.cost && f.time <= next.time) {
                    continue;
                }
                front.retain(|f| !(next.cost <= f.cost && next.time <= f.time));
                front.push(next);
            }
        }
        layer.clear();
        for ((picked, dropped, _), front) in fronts {
            for lab in front {
                let idx = arena.len();
                arena.push(lab);
                layer.push(idx);
                if picked == dropped {
                    let slot = &mut best[usize::from(dropped)];
                    if slot.is_none_or(|(c, _)| lab.cost < c) {
                        *slot = Some((lab.cost, idx));
                    }
                }
            }
        }
        if layer.is_empty() {
            break;
        }
    }
    VehicleTable { best, arena }
}

fn route_of(table: &VehicleTable, requests: &[Request], mut idx: usize) -> Vec<(usize, Fraction)> {
    let n = requests.len();
    let mut stops = Vec::new();
    while table.arena[idx].stop != usize::MAX {
        let l = table.arena[idx];
        stops.push((l.stop, l.time));
        idx = l.parent;
    }
    stops.reverse();
    debug_assert!(stops.iter().all(|&(s, _)| s < 2 * n));
    stops
}

/// Exact clairvoyant optimum of the cost per unit demand.
///
/// `fleet` holds each vehicle's idle starting cell at time zero; request
/// arrivals and deadlines are absolute rounds.
pub fn optimal_assign_hindsight<S: Scalar>(
    grid: &Grid,
    cost_per_block: &S,
    fleet: &[FleetStart],
    requests: &[Request],
    opts: &OptimalOptions,
) -> Result<OptimalPlan<S>> {
    if requests.len() > opts.hindsight_max_requests {
        return Err(Error::Capacity { what: "requests", got: requests.len(), cap: opts.hindsight_max_requests });
    }
    if fleet.len() > opts.hindsight_max_vehicles {
        return Err(Error::Capacity { what: "vehicles", got: fleet.len(), cap: opts.hindsight_max_vehicles });
    }
    if requests.len() > 16 {
        return Err(Error::Capacity { what: "requests", got: requests.len(), cap: 16 });
    }
    let n = requests.len();
    let full = 1usize << n;
    let tables: Vec<VehicleTable> = fleet.iter().map(|f| solve_vehicle(grid, f, requests)).collect();

    // combined[k][mask]: cheapest way for vehicles 0..k to serve exactly `mask`,
    // with the subset handed to vehicle k - 1.
    let mut combined: Vec<Vec<Option<(u32, usize)>>> = vec![vec![None; full]];
    combined[0][0] = Some((0, 0));
    for table in &tables {
        let prev = combined.last().expect("seeded");
        let mut cur: Vec<Option<(u32, usize)>> = vec![None; full];
        for (mask, slot) in cur.iter_mut().enumerate() {
            let mut sub = mask;
            loop {
                if let (Some((a, _)), Some((b, _))) = (table.best[sub], prev[mask ^ sub]) {
                    if slot.is_none_or(|(c, _)| a + b < c) {
                        *slot = Some((a + b, sub));
                    }
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & mask;
            }
        }
        combined.push(cur);
    }

    let demand_of = |mask: usize| -> u64 {
        (0..n).filter(|i| mask & (1 << i) != 0).map(|i| requests[i].demand()).sum()
    };
    let last = combined.last().expect("seeded");
    let mut best: Option<(usize, u32, u64)> = None;
    for (mask, slot) in last.iter().enumerate().skip(1) {
        let Some((blocks, _)) = *slot else { continue };
        let demand = demand_of(mask);
        let better = match best {
            None => true,
            // blocks / demand < b / d, compared exactly by cross-multiplying.
            Some((_, b, d)) => match (u64::from(blocks) * d).cmp(&(u64::from(b) * demand)) {
                Ordering::Less => true,
                Ordering::Equal => demand > d,
                Ordering::Greater => false,
            },
        };
        if better {
            best = Some((mask, blocks, demand));
        }
    }

    let mut plan = OptimalPlan {
        assignments: Vec::new(),
        routes: Vec::new(),
        total_cost: S::zero(),
        total_demand: 0,
        objective: Rate::Unbounded,
        horizon: Horizon::Hindsight,
        commits: Vec::new(),
    };
    let Some((mut mask, blocks, demand)) = best else { return Ok(plan) };
    plan.total_cost = S::from_count(u64::from(blocks)) * cost_per_block.clone();
    plan.total_demand = demand;
    plan.objective = Rate::of(&plan.total_cost, demand);

    for k in (0..tables.len()).rev() {
        let (_, sub) = combined[k + 1][mask].expect("reachable by construction");
        if sub != 0 {
            let (route_blocks, idx) = tables[k].best[sub].expect("subset served");
            let visits = route_of(&tables[k], requests, idx);
            let stops = visits
                .iter()
                .map(|&(s, _)| if s < n { Stop::pickup(&requests[s]) } else { Stop::dropoff(&requests[s - n]) })
                .collect();
            for &(s, t) in &visits {
                if s < n {
                    plan.assignments.push(PlanEntry { vehicle: fleet[k].vehicle, request: requests[s].id, pickup: t });
                }
            }
            plan.routes.push(PlannedRoute {
                vehicle: fleet[k].vehicle,
                stops,
                cost: S::from_count(u64::from(route_blocks)) * cost_per_block.clone(),
            });
        }
        mask ^= sub;
    }
    plan.routes.reverse();
    plan.assignments.sort_by_key(|e| (e.vehicle, e.request));
    Ok(plan)
}

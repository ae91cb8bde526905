//! Exact per-round optimum of the system cost per unit demand.
//!
//! Within one round each vehicle takes at most one new request. Choosing the
//! map that minimizes `(C + Σδ) / (L + Σℓ)` is a fractional assignment
//! problem: Dinkelbach's parametric method reduces it to a sequence of
//! min-cost assignments `Σ(δ - λℓ)`, each solved exactly by the Hungarian
//! method over rationals. [`OptimalRoundMechanism`] repeats the solve while
//! it still assigns something, so a vehicle may gain several riders per round.

use serde::{Deserialize, Serialize};

use super::hungarian::{min_cost_assignment, Lex};
use crate::config::OptimalOptions;
use crate::error::{Error, Result};
use crate::grid::{Fraction, Round};
use crate::iors::carryover;
use crate::model::{Request, RequestId, Stop, VehicleId};
use crate::scalar::{Rate, Scalar};
use crate::trace::EventLog;
use crate::world::{Candidate, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    Round,
    Hindsight,
}

/// One request served by one vehicle in a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanEntry {
    pub vehicle: VehicleId,
    pub request: RequestId,
    /// Pickup time; whole rounds for per-round plans.
    pub pickup: Fraction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRoute<S> {
    pub vehicle: VehicleId,
    pub stops: Vec<Stop>,
    pub cost: S,
}

#[derive(Clone, Debug)]
pub struct OptimalPlan<S> {
    pub assignments: Vec<PlanEntry>,
    /// Hindsight plans only: the full route of every used vehicle.
    pub routes: Vec<PlannedRoute<S>>,
    /// System cost and served demand after the plan, prior totals included.
    pub total_cost: S,
    pub total_demand: u64,
    pub objective: Rate<S>,
    pub horizon: Horizon,
    pub(crate) commits: Vec<(usize, Candidate<S>)>,
}

impl<S: Scalar> OptimalPlan<S> {
    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Social welfare of the plan, `Σℓ / C`.
    pub fn welfare(&self) -> Option<S> {
        welfare(&self.total_cost, self.total_demand)
    }
}

pub(crate) fn welfare<S: Scalar>(cost: &S, demand: u64) -> Option<S> {
    if demand == 0 || cost.is_zero() {
        return None;
    }
    Some(S::from_count(demand) / cost.clone())
}

struct Pair<S> {
    request: usize,
    vehicle: usize,
    candidate: Candidate<S>,
}

fn ratio<S: Scalar>(cost: &S, demand: u64) -> Option<S> {
    (demand > 0).then(|| cost.clone() / S::from_count(demand))
}

/// Exact minimizer of the resulting system cost per unit demand over all
/// maps of `requests` to distinct vehicles (or to rejection).
pub fn optimal_assign_round<S: Scalar>(
    world: &World<S>,
    now: Round,
    requests: &[Request],
    opts: &OptimalOptions,
) -> Result<OptimalPlan<S>> {
    if requests.len() > opts.max_requests {
        return Err(Error::Capacity { what: "requests per round", got: requests.len(), cap: opts.max_requests });
    }
    if world.fleet.len() > opts.max_vehicles {
        return Err(Error::Capacity { what: "vehicles", got: world.fleet.len(), cap: opts.max_vehicles });
    }
    let base_cost = world.ledger.total_cost.clone();
    let base_demand = world.ledger.admitted_demand;
    // An idle vehicle pays at least the trip itself, so once the system ratio
    // is at most the cost of a block it can never lower it.
    let idle_useless = ratio(&base_cost, base_demand).is_some_and(|l| l <= world.cost_per_block);

    let pairs: Vec<Pair<S>> = requests
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            (0..world.fleet.len()).filter_map(move |v| {
                if world.fleet[v].seats_available() == 0
                    || (idle_useless && world.fleet[v].route.is_empty())
                    || now + world.direct_eta(v, r.origin) > r.latest_departure
                {
                    return None;
                }
                world.price(v, r, now).map(|candidate| Pair { request: i, vehicle: v, candidate })
            })
        })
        .collect();

    let demand_of = |k: usize| requests[pairs[k].request].demand();
    let delta_of = |k: usize| pairs[k].candidate.insertion.marginal_cost.clone();
    let totals = |chosen: &[usize]| -> (S, u64) {
        chosen.iter().fold((base_cost.clone(), base_demand), |(c, l), &k| (c + delta_of(k), l + demand_of(k)))
    };

    // Incumbent: nothing new, or the single cheapest pair if nothing is admitted yet.
    let mut incumbent: Vec<usize> = Vec::new();
    let mut lambda = match ratio(&base_cost, base_demand) {
        Some(l) => l,
        None => {
            let best = (0..pairs.len()).min_by(|&a, &b| {
                let ra = (base_cost.clone() + delta_of(a)) / S::from_count(demand_of(a));
                let rb = (base_cost.clone() + delta_of(b)) / S::from_count(demand_of(b));
                ra.total_cmp(&rb).then(demand_of(b).cmp(&demand_of(a)))
            });
            match best {
                Some(k) => {
                    incumbent.push(k);
                    let (c, l) = totals(&incumbent);
                    c / S::from_count(l)
                }
                None => return Ok(finish(world, requests, &pairs, Vec::new(), base_cost, base_demand)),
            }
        }
    };

    loop {
        // Only pairs with negative weight can lower the ratio; everything else
        // is never better than leaving the request out.
        let weight = |k: usize| delta_of(k) - lambda.clone() * S::from_count(demand_of(k));
        let active: Vec<(usize, S)> =
            (0..pairs.len()).map(|k| (k, weight(k))).filter(|(_, w)| w.is_negative()).collect();
        let mut rows: Vec<usize> = active.iter().map(|&(k, _)| pairs[k].request).collect();
        let mut cols: Vec<usize> = active.iter().map(|&(k, _)| pairs[k].vehicle).collect();
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        let (n, m) = (rows.len(), cols.len());
        let big = active.iter().fold(S::one(), |acc, (_, w)| acc - w.clone());
        let mut matrix: Vec<Vec<Lex<S>>> = vec![vec![Lex(big.clone(), 0); m + n]; n];
        for row in matrix.iter_mut() {
            for cell in row[m..].iter_mut() {
                *cell = Lex(S::zero(), 0);
            }
        }
        let mut cell_pair = vec![vec![usize::MAX; m]; n];
        for (k, w) in &active {
            let i = rows.binary_search(&pairs[*k].request).expect("row present");
            let j = cols.binary_search(&pairs[*k].vehicle).expect("column present");
            let demand = i64::try_from(demand_of(*k)).unwrap_or(i64::MAX);
            matrix[i][j] = Lex(w.clone(), -demand);
            cell_pair[i][j] = *k;
        }
        let chosen: Vec<usize> = min_cost_assignment(&matrix)
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c < m)
            .map(|(i, &c)| cell_pair[i][c])
            .collect();
        debug_assert!(chosen.iter().all(|&k| k != usize::MAX));
        let (cost, demand) = totals(&chosen);
        if !chosen.is_empty() && (cost.clone() - lambda.clone() * S::from_count(demand)).is_negative() {
            lambda = cost / S::from_count(demand);
            incumbent = chosen;
            continue;
        }
        let (cost, demand) = totals(&incumbent);
        return Ok(finish(world, requests, &pairs, incumbent, cost, demand));
    }
}

fn finish<S: Scalar>(
    world: &World<S>,
    requests: &[Request],
    pairs: &[Pair<S>],
    chosen: Vec<usize>,
    total_cost: S,
    total_demand: u64,
) -> OptimalPlan<S> {
    let mut chosen = chosen;
    chosen.sort_by_key(|&k| (pairs[k].vehicle, pairs[k].request));
    let assignments = chosen
        .iter()
        .map(|&k| PlanEntry {
            vehicle: world.fleet[pairs[k].vehicle].id,
            request: requests[pairs[k].request].id,
            pickup: Fraction::from_integer(u64::from(pairs[k].candidate.insertion.pickup_eta)),
        })
        .collect();
    let commits = chosen.iter().map(|&k| (pairs[k].vehicle, pairs[k].candidate.clone())).collect();
    OptimalPlan {
        assignments,
        routes: Vec::new(),
        objective: Rate::of(&total_cost, total_demand),
        total_cost,
        total_demand,
        horizon: Horizon::Round,
        commits,
    }
}

/// Per-round dispatcher that commits successive exact optima.
#[derive(Clone, Debug)]
pub struct OptimalRoundMechanism {
    pub options: OptimalOptions,
    carried: Vec<RequestId>,
}

impl OptimalRoundMechanism {
    pub fn new(options: OptimalOptions) -> Self {
        OptimalRoundMechanism { options, carried: Vec::new() }
    }

    pub fn carried(&self) -> &[RequestId] {
        &self.carried
    }

    pub fn dispatch<S: Scalar>(
        &mut self,
        world: &mut World<S>,
        now: Round,
        arrivals: &[RequestId],
        log: &mut EventLog<S>,
    ) -> Result<()> {
        let mut open = std::mem::take(&mut self.carried);
        open.extend_from_slice(arrivals);
        loop {
            let requests: Vec<Request> =
                open.iter().map(|&id| world.request(id).cloned()).collect::<Result<_>>()?;
            let plan = optimal_assign_round(world, now, &requests, &self.options)?;
            if plan.is_empty() {
                break;
            }
            for (entry, (v, candidate)) in plan.assignments.iter().zip(plan.commits) {
                world.commit(now, v, entry.request, candidate, log)?;
                open.retain(|&id| id != entry.request);
            }
        }
        let (retained, expired) = carryover(world, now, &open);
        for id in expired {
            world.expire(now, id, log);
        }
        self.carried = retained;
        Ok(())
    }
}

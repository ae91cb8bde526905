//! The integrated online ridesharing mechanism.
//!
//! Each round a new request is quoted the highest fare among the vehicles it
//! could join with a strict drop in that vehicle's cost per unit demand. Quoted
//! requests are then assigned greedily, lowest resulting rate first, and those
//! left over are carried to the next round while their deadline is still
//! reachable. Passengers pay their demand times the serving coalition's rate.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use rayon::prelude::*;

use crate::config::IorsOptions;
use crate::error::{Error, Result};
use crate::grid::Round;
use crate::model::{Coalition, Request, RequestId, VehicleId};
use crate::rng::keyed_u64;
use crate::scalar::{Rate, Scalar};
use crate::trace::{EventLog, RejectReason};
use crate::world::{Candidate, World};

#[derive(Clone, Debug, PartialEq)]
pub struct Quote<S> {
    pub request: RequestId,
    pub amount: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<S> {
    pub round: Round,
    pub vehicle: VehicleId,
    pub request: RequestId,
    pub marginal_cost: S,
    pub pickup_eta: Round,
    pub rate: Rate<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Payment<S> {
    pub request: RequestId,
    pub amount: S,
    pub completion_round: Round,
}

/// A (vehicle, request) pairing that would lower the vehicle's rate.
#[derive(Clone, Debug)]
pub struct CandidateEntry<S> {
    pub vehicle: usize,
    pub request: RequestId,
    pub resulting_rate: S,
    pub demand: u32,
    /// Seeded random key for ties left after rate and demand.
    pub tie: u64,
    generation: u64,
    candidate: Candidate<S>,
}

impl<S: Scalar> CandidateEntry<S> {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.resulting_rate
            .total_cmp(&other.resulting_rate)
            .then_with(|| other.demand.cmp(&self.demand))
            .then_with(|| self.tie.cmp(&other.tie))
            .then_with(|| self.vehicle.cmp(&other.vehicle))
            .then_with(|| self.request.cmp(&other.request))
    }

    pub fn marginal_cost(&self) -> &S {
        &self.candidate.insertion.marginal_cost
    }

    pub fn pickup_eta(&self) -> Round {
        self.candidate.insertion.pickup_eta
    }
}

impl<S: Scalar> PartialEq for CandidateEntry<S> {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl<S: Scalar> Eq for CandidateEntry<S> {}
impl<S: Scalar> PartialOrd for CandidateEntry<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.key_cmp(other))
    }
}
impl<S: Scalar> Ord for CandidateEntry<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Fare a passenger would pay on a candidate vehicle: demand times the
/// post-admission rate.
fn fare<S: Scalar>(request: &Request, c: &Candidate<S>) -> Option<S> {
    c.rate_after.finite().map(|r| r.clone() * S::from_count(request.demand()))
}

/// Vehicles that could possibly reach `request` in time.
fn reachable<'a, S: Scalar>(
    world: &'a World<S>,
    request: &'a Request,
    now: Round,
) -> impl Iterator<Item = usize> + 'a {
    (0..world.fleet.len()).filter(move |&v| {
        world.fleet[v].seats_available() > 0
            && now + world.direct_eta(v, request.origin) <= request.latest_departure
    })
}

/// Quote every request: the maximum fare over deadline-feasible vehicles whose
/// coalition rate strictly drops on admission. `None` means rejected.
pub fn estimate<S: Scalar>(
    world: &World<S>,
    now: Round,
    requests: &[Request],
    improvement_gate: bool,
) -> Vec<Option<Quote<S>>> {
    requests
        .par_iter()
        .map(|r| {
            reachable(world, r, now)
                .filter_map(|v| world.price(v, r, now))
                .filter(|c| !improvement_gate || c.improves())
                .filter_map(|c| fare(r, &c))
                .max_by(|a, b| a.total_cmp(b))
                .map(|amount| Quote { request: r.id, amount })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct AssignOptions<S> {
    pub improvement_gate: bool,
    /// Only commit pairings whose fare does not exceed the accepted quote.
    pub honor_quotes: bool,
    /// Skip pairings whose resulting rate would exceed this.
    pub rate_cap: Option<S>,
    pub seed: u64,
}

impl<S> AssignOptions<S> {
    pub fn gated(seed: u64) -> Self {
        AssignOptions { improvement_gate: true, honor_quotes: false, rate_cap: None, seed }
    }
}

fn entries_for<S: Scalar>(
    world: &World<S>,
    now: Round,
    vehicle: usize,
    requests: &[&Request],
    opts: &AssignOptions<S>,
    generation: u64,
) -> Vec<CandidateEntry<S>> {
    if world.fleet[vehicle].seats_available() == 0 {
        return Vec::new();
    }
    requests
        .iter()
        .filter(|r| now + world.direct_eta(vehicle, r.origin) <= r.latest_departure)
        .filter_map(|r| {
            let c = world.price(vehicle, r, now)?;
            if opts.improvement_gate && !c.improves() {
                return None;
            }
            if opts.honor_quotes {
                let quote = world.record(r.id).and_then(|rec| rec.quote.as_ref())?;
                if fare(r, &c)?.total_cmp(quote) == Ordering::Greater {
                    return None;
                }
            }
            let resulting_rate = c.rate_after.finite()?.clone();
            if opts.rate_cap.as_ref().is_some_and(|cap| resulting_rate.total_cmp(cap) == Ordering::Greater) {
                return None;
            }
            Some(CandidateEntry {
                vehicle,
                request: r.id,
                resulting_rate,
                demand: r.effective_demand,
                tie: keyed_u64(opts.seed, b"tie", &[u64::from(now), vehicle as u64, r.id.0]),
                generation,
                candidate: c,
            })
        })
        .collect()
}

/// Greedy pickup assignment. Returns the committed assignments and the
/// requests left unassigned, in input order.
pub fn assign<S: Scalar>(
    world: &mut World<S>,
    now: Round,
    accepted: &[RequestId],
    opts: &AssignOptions<S>,
    log: &mut EventLog<S>,
) -> Result<(Vec<Assignment<S>>, Vec<RequestId>)> {
    let requests: Vec<Request> =
        accepted.iter().map(|&id| world.request(id).cloned()).collect::<Result<_>>()?;
    let mut remaining: BTreeSet<RequestId> = accepted.iter().copied().collect();
    let mut generation = vec![0u64; world.fleet.len()];

    let refs: Vec<&Request> = requests.iter().collect();
    let initial: Vec<CandidateEntry<S>> = {
        let w = &*world;
        (0..w.fleet.len())
            .into_par_iter()
            .flat_map_iter(|v| entries_for(w, now, v, &refs, opts, 0))
            .collect()
    };
    let mut heap: BinaryHeap<Reverse<CandidateEntry<S>>> = initial.into_iter().map(Reverse).collect();
    let mut out = Vec::new();

    while let Some(Reverse(entry)) = heap.pop() {
        if !remaining.contains(&entry.request) || generation[entry.vehicle] != entry.generation {
            continue;
        }
        let v = entry.vehicle;
        if opts.improvement_gate && !entry.candidate.improves() {
            return Err(Error::Invariant(format!(
                "admission of {} would not lower vehicle {v}'s rate",
                entry.request
            )));
        }
        out.push(Assignment {
            round: now,
            vehicle: world.fleet[v].id,
            request: entry.request,
            marginal_cost: entry.marginal_cost().clone(),
            pickup_eta: entry.pickup_eta(),
            rate: entry.candidate.rate_after.clone(),
        });
        world.commit(now, v, entry.request, entry.candidate, log)?;
        remaining.remove(&entry.request);
        generation[v] += 1;
        if remaining.is_empty() {
            break;
        }
        let left: Vec<&Request> = requests.iter().filter(|r| remaining.contains(&r.id)).collect();
        heap.extend(entries_for(world, now, v, &left, opts, generation[v]).into_iter().map(Reverse));
    }

    let unassigned = accepted.iter().copied().filter(|id| remaining.contains(id)).collect();
    Ok((out, unassigned))
}

/// Split unassigned requests into those some vehicle with a free seat could
/// still reach by their deadline, and those that expire.
pub fn carryover<S: Scalar>(
    world: &World<S>,
    now: Round,
    unassigned: &[RequestId],
) -> (Vec<RequestId>, Vec<RequestId>) {
    unassigned.iter().partition(|&&id| match world.request(id) {
        Ok(r) => reachable(world, r, now).next().is_some(),
        Err(_) => false,
    })
}

/// Payment of a completed ride: demand times the coalition's rate.
pub fn settle_payment<S: Scalar>(
    request: &Request,
    coalition: &Coalition<S>,
    completion_round: Round,
    serviced: bool,
) -> Result<Payment<S>> {
    if !serviced || !coalition.members.contains(&request.id) {
        return Err(Error::Unserviced(request.id));
    }
    let rate = coalition.rate();
    let rate = rate.finite().ok_or(Error::Unserviced(request.id))?;
    Ok(Payment {
        request: request.id,
        amount: rate.clone() * S::from_count(request.demand()),
        completion_round,
    })
}

/// Per-round driver for the mechanism; carries accepted-but-unassigned
/// requests between rounds.
#[derive(Clone, Debug)]
pub struct IorsMechanism<S> {
    pub options: IorsOptions,
    willingness: Option<S>,
    seed: u64,
    carried: Vec<RequestId>,
}

impl<S: Scalar> IorsMechanism<S> {
    pub fn new(options: IorsOptions, seed: u64) -> Self {
        let willingness = options
            .willingness_rate
            .map(|r| S::from_ratio(*r.numer(), *r.denom()));
        IorsMechanism { options, willingness, seed, carried: Vec::new() }
    }

    pub fn carried(&self) -> &[RequestId] {
        &self.carried
    }

    pub fn dispatch(
        &mut self,
        world: &mut World<S>,
        now: Round,
        arrivals: &[RequestId],
        log: &mut EventLog<S>,
    ) -> Result<()> {
        let fresh: Vec<Request> =
            arrivals.iter().map(|&id| world.request(id).cloned()).collect::<Result<_>>()?;
        let quotes = estimate(world, now, &fresh, self.options.improvement_gate);

        let mut open = std::mem::take(&mut self.carried);
        for (r, quote) in fresh.iter().zip(quotes) {
            match quote {
                Some(q) => {
                    let accepts = self
                        .willingness
                        .as_ref()
                        .is_none_or(|w| q.amount <= w.clone() * S::from_count(r.demand()));
                    world.set_quote(now, r.id, q.amount, log);
                    if accepts {
                        open.push(r.id);
                    } else {
                        world.reject(now, r.id, RejectReason::Declined, log);
                    }
                }
                None => world.reject(now, r.id, RejectReason::NoCandidate, log),
            }
        }

        let opts = AssignOptions {
            improvement_gate: self.options.improvement_gate,
            honor_quotes: true,
            rate_cap: None,
            seed: self.seed,
        };
        let (_, unassigned) = assign(world, now, &open, &opts, log)?;
        let (retained, expired) = carryover(world, now, &unassigned);
        for id in expired {
            world.expire(now, id, log);
        }
        self.carried = retained;
        Ok(())
    }
}

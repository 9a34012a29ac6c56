//! Route planning and batch feasibility.
//!
//! A worker's committed plan is single-trip: visit every pending pick-up in
//! some order, then drop everything at the drop-off. Adding a batch re-plans
//! the whole trip over all pickup permutations. Because every order on board
//! is dropped at the same moment, a plan meets all deadlines exactly when its
//! fastest permutation completes no later than the earliest deadline.

use itertools::Itertools;
use serde::Serialize;
use smallvec::SmallVec;

use crate::fleet::{FleetParams, Worker, WorkerId};
use crate::grid::{GridMap, NodeId};
use crate::orders::{Order, OrderId};

/// Battery headroom (percent) a feasible plan must leave on arrival at the charger.
pub const BATTERY_MARGIN: f64 = 1e-6;

/// Planned itinerary for a worker's full set of orders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    /// Pick-ups still to visit, in visiting order.
    pub pickups: Vec<Order>,
    /// Node the plan starts from (far endpoint when mid-edge).
    pub start: NodeId,
    /// Node where the plan ends: the drop-off, or `start` for an empty plan.
    pub end: NodeId,
    /// Drop-off time in seconds since the start of the day.
    pub completion: u64,
    pub visits_drop_off: bool,
}

impl Route {
    pub fn duration(&self, now: u64) -> u64 {
        self.completion.saturating_sub(now)
    }
}

/// Fastest deadline-respecting route for the worker's plan plus `extra` pick-ups.
///
/// Returns `None` when capacity would be exceeded or no ordering meets the
/// earliest deadline among carried, pending and extra orders.
pub fn optimal_route(worker: &Worker, extra: &[&Order], map: &GridMap, now: u64) -> Option<Route> {
    let (start, offset) = worker.start_point();
    if worker.load() + extra.len() > worker.max_capacity as usize {
        return None;
    }
    let mut pickups: Vec<&Order> = worker.pending().iter().chain(extra.iter().copied()).collect();
    pickups.sort_by_key(|o| o.id);
    let carried = worker.carried();

    if pickups.is_empty() && carried.is_empty() {
        return Some(Route { pickups: Vec::new(), start, end: start, completion: now, visits_drop_off: false });
    }

    let earliest_deadline = pickups.iter().copied().chain(carried.iter()).map(|o| o.deadline).min()?;
    let kind = worker.kind;
    let drop = map.drop_off();

    let nodes: SmallVec<[NodeId; 4]> = pickups.iter().map(|o| map.pickup_node(o.pickup as usize)).collect();
    let mut best: Option<(u64, SmallVec<[usize; 4]>)> = None;
    for perm in (0..pickups.len()).permutations(pickups.len()) {
        let mut cur = start;
        let mut secs = offset;
        for &i in &perm {
            secs += map.travel_secs(cur, nodes[i], kind);
            cur = nodes[i];
        }
        secs += map.travel_secs(cur, drop, kind);
        if best.as_ref().is_none_or(|(b, _)| secs < *b) {
            best = Some((secs, perm.into_iter().collect()));
        }
    }
    let (secs, perm) = best?;
    let completion = now + secs;
    if completion > earliest_deadline {
        return None;
    }
    Some(Route {
        pickups: perm.iter().map(|&i| pickups[i].clone()).collect(),
        start,
        end: drop,
        completion,
        visits_drop_off: true,
    })
}

/// Battery percent needed to run `route` and then reach the charger nearest its end.
pub fn battery_required(worker: &Worker, route: &Route, map: &GridMap, params: &FleetParams, now: u64) -> f64 {
    let (_, leg) = map.nearest_charger(route.end, worker.kind);
    params.drain_per_min * (route.duration(now) + leg) as f64 / 60.0
}

/// Seconds from `time` until the next decision epoch boundary.
fn slack_to_boundary(time: u64, epoch_seconds: u64) -> u64 {
    (epoch_seconds - time % epoch_seconds) % epoch_seconds
}

/// Re-planned route if `batch` can be added to the worker's plan, else `None`.
///
/// AGVs must also hold enough charge to finish the route, idle until the next
/// decision epoch, and still reach the nearest charger.
pub fn feasible_route(
    worker: &Worker,
    batch: &[&Order],
    map: &GridMap,
    now: u64,
    params: &FleetParams,
) -> Option<Route> {
    if !worker.kind.is_human() && batch.iter().any(|o| o.human_only) {
        return None;
    }
    let route = optimal_route(worker, batch, map, now)?;
    if worker.kind.is_human() {
        return Some(route);
    }
    let idle = slack_to_boundary(route.completion, params.epoch_seconds);
    let needed = battery_required(worker, &route, map, params, now) + params.drain_per_min * idle as f64 / 60.0;
    (worker.battery >= needed + BATTERY_MARGIN).then_some(route)
}

pub fn is_feasible(worker: &Worker, batch: &[&Order], map: &GridMap, now: u64, params: &FleetParams) -> bool {
    feasible_route(worker, batch, map, now, params).is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleBatch {
    /// Positions in the epoch's open-order list, ascending.
    pub orders: SmallVec<[usize; 3]>,
    pub route: Route,
}

impl FeasibleBatch {
    pub fn order_ids<'a>(&'a self, open: &'a [Order]) -> impl Iterator<Item = OrderId> + 'a {
        self.orders.iter().map(move |&i| open[i].id)
    }
}

/// Γ_t(w): every batch of open orders the worker can take on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleBatchSet {
    pub worker: WorkerId,
    pub batches: Vec<FeasibleBatch>,
}

/// Enumerates feasible batches of size `1..=remaining capacity`.
///
/// Subsets are generated level by level and a subset is only tried when all
/// of its one-smaller subsets were feasible; infeasibility is inherited by
/// supersets, so the result equals filtering the full power set.
pub fn matching_feasibility(
    worker: &Worker,
    open: &[Order],
    map: &GridMap,
    now: u64,
    params: &FleetParams,
) -> FeasibleBatchSet {
    let mut batches = Vec::new();
    let cap = worker.remaining_capacity();
    if cap == 0 {
        return FeasibleBatchSet { worker: worker.id, batches };
    }
    let candidates: Vec<usize> = (0..open.len()).filter(|&i| worker.kind.is_human() || !open[i].human_only).collect();

    let mut level: Vec<SmallVec<[usize; 3]>> = Vec::new();
    for &i in &candidates {
        if let Some(route) = feasible_route(worker, &[&open[i]], map, now, params) {
            let key: SmallVec<[usize; 3]> = SmallVec::from_slice(&[i]);
            level.push(key.clone());
            batches.push(FeasibleBatch { orders: key, route });
        }
    }
    for size in 2..=cap {
        if level.len() < size {
            break;
        }
        let feasible_singles: Vec<usize> =
            batches.iter().filter(|b| b.orders.len() == 1).map(|b| b.orders[0]).collect();
        let prev: std::collections::HashSet<SmallVec<[usize; 3]>> = level.iter().cloned().collect();
        let mut next = Vec::new();
        for combo in feasible_singles.iter().copied().combinations(size) {
            let all_subsets_ok = (0..size).all(|skip| {
                let sub: SmallVec<[usize; 3]> =
                    combo.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
                prev.contains(&sub)
            });
            if !all_subsets_ok {
                continue;
            }
            let refs: SmallVec<[&Order; 3]> = combo.iter().map(|&i| &open[i]).collect();
            if let Some(route) = feasible_route(worker, &refs, map, now, params) {
                let key: SmallVec<[usize; 3]> = combo.into_iter().collect();
                next.push(key.clone());
                batches.push(FeasibleBatch { orders: key, route });
            }
        }
        level = next;
    }
    FeasibleBatchSet { worker: worker.id, batches }
}

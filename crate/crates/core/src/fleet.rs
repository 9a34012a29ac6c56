//! Worker and system state, immediate rewards, and state evolution.
//!
//! One decision epoch runs: pre-decision state `S_t` → actions → post-decision
//! state (`statepost`, open orders dropped) → workers move for one interval and
//! new orders arrive (`statenext`) → `S_{t+1}`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridMap, NodeId, WorkerKind};
use crate::orders::{Order, OrderId};
use crate::routing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorkerId(pub u32);

/// Time, battery and reward constants shared by every worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetParams {
    pub epoch_seconds: u64,
    pub delay_seconds: u64,
    /// β: reward per order served.
    pub reward_per_order: f64,
    pub drain_per_min: f64,
    pub charge_per_min: f64,
}

impl Default for FleetParams {
    fn default() -> Self {
        Self { epoch_seconds: 300, delay_seconds: 900, reward_per_order: 30.0, drain_per_min: 0.5, charge_per_min: 5.0 }
    }
}

impl FleetParams {
    /// Minutes of allowed delay (γ).
    pub fn delay_minutes(&self) -> f64 {
        self.delay_seconds as f64 / 60.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FleetError {
    #[error("worker {0:?}: battery depleted at {1} away from a charger")]
    BatteryDepleted(WorkerId, NodeId),
    #[error("order {order:?} dropped off at {at}s after its deadline {deadline}s")]
    DeadlineMissed { order: OrderId, at: u64, deadline: u64 },
    #[error("expected one action per worker ({workers}), got {actions}")]
    ActionCount { workers: usize, actions: usize },
    #[error("order {0:?} assigned more than once")]
    DuplicateAssignment(OrderId),
    #[error("order {0:?} is not open")]
    UnknownOrder(OrderId),
    #[error("worker {0:?}: batch is not feasible")]
    InfeasibleBatch(WorkerId),
    #[error("worker {0:?}: charge action is only valid for idle AGVs")]
    InvalidCharge(WorkerId),
    #[error("worker {0:?}: capacity exceeded")]
    CapacityExceeded(WorkerId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transit {
    pub to: NodeId,
    pub remaining: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Plan {
    Idle,
    /// Visit `pending` in order, then drop everything at the drop-off at `eta`.
    Orders {
        pending: Vec<Order>,
        carried: Vec<Order>,
        eta: u64,
    },
    ToCharger {
        charger: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worker {
    pub id: WorkerId,
    pub kind: WorkerKind,
    pub node: NodeId,
    pub transit: Option<Transit>,
    pub max_capacity: u32,
    /// Percent in `[0, 100]`; humans stay at 100.
    pub battery: f64,
    pub plan: Plan,
    /// Parked at a charger and gaining charge.
    pub charging: bool,
}

impl Worker {
    pub fn new(id: WorkerId, kind: WorkerKind, node: NodeId, max_capacity: u32) -> Self {
        Self { id, kind, node, transit: None, max_capacity, battery: 100.0, plan: Plan::Idle, charging: false }
    }

    pub fn pending(&self) -> &[Order] {
        match &self.plan {
            Plan::Orders { pending, .. } => pending,
            _ => &[],
        }
    }

    pub fn carried(&self) -> &[Order] {
        match &self.plan {
            Plan::Orders { carried, .. } => carried,
            _ => &[],
        }
    }

    pub fn load(&self) -> usize {
        self.pending().len() + self.carried().len()
    }

    pub fn remaining_capacity(&self) -> usize {
        (self.max_capacity as usize).saturating_sub(self.load())
    }

    pub fn has_orders(&self) -> bool {
        matches!(self.plan, Plan::Orders { .. })
    }

    pub fn heading_to_charger(&self) -> bool {
        matches!(self.plan, Plan::ToCharger { .. })
    }

    /// Node from which new plans start, and the seconds needed to get there.
    pub fn start_point(&self) -> (NodeId, u64) {
        match self.transit {
            Some(t) => (t.to, t.remaining),
            None => (self.node, 0),
        }
    }

    /// Seconds from `now` until the current plan is done.
    pub fn plan_seconds(&self, map: &GridMap, now: u64) -> u64 {
        match &self.plan {
            Plan::Idle => 0,
            Plan::Orders { eta, .. } => eta.saturating_sub(now),
            Plan::ToCharger { charger } => {
                let (start, offset) = self.start_point();
                offset + map.travel_secs(start, *charger, self.kind)
            }
        }
    }

    /// Where the worker ends up once the current plan is done.
    pub fn plan_end(&self, map: &GridMap) -> NodeId {
        match &self.plan {
            Plan::Idle => self.start_point().0,
            Plan::Orders { .. } => map.drop_off(),
            Plan::ToCharger { charger } => *charger,
        }
    }

    /// An idle AGV that could not afford to idle through one more interval and
    /// still reach a charger; its only non-batch option is to charge now.
    pub fn must_charge(&self, map: &GridMap, params: &FleetParams) -> bool {
        if self.kind.is_human() || self.has_orders() || self.heading_to_charger() || self.charging {
            return false;
        }
        let (start, offset) = self.start_point();
        let (_, leg) = map.nearest_charger(start, self.kind);
        let reserve = params.drain_per_min * (offset + leg) as f64 / 60.0;
        let after_idle = self.battery - params.drain_per_min * params.epoch_seconds as f64 / 60.0;
        after_idle < reserve + routing::BATTERY_MARGIN
    }

    fn next_target(&self, map: &GridMap) -> Option<NodeId> {
        match &self.plan {
            Plan::Idle => None,
            Plan::Orders { pending, .. } => {
                Some(pending.first().map_or(map.drop_off(), |o| map.pickup_node(o.pickup as usize)))
            }
            Plan::ToCharger { charger } => Some(*charger),
        }
    }

    fn drain(&mut self, secs: u64, params: &FleetParams) -> Result<(), FleetError> {
        if self.kind.is_human() || secs == 0 {
            return Ok(());
        }
        self.battery -= params.drain_per_min * secs as f64 / 60.0;
        if self.battery <= 0.0 {
            return Err(FleetError::BatteryDepleted(self.id, self.node));
        }
        Ok(())
    }

    /// Handles every zero-time event at the current node.
    fn process_stops(
        &mut self,
        map: &GridMap,
        clock: u64,
        completions: &mut Vec<Completion>,
    ) -> Result<(), FleetError> {
        match &mut self.plan {
            Plan::Orders { pending, carried, .. } => {
                while pending.first().is_some_and(|o| map.pickup_node(o.pickup as usize) == self.node) {
                    carried.push(pending.remove(0));
                }
                if pending.is_empty() && self.node == map.drop_off() {
                    for o in carried.drain(..) {
                        if clock > o.deadline {
                            return Err(FleetError::DeadlineMissed { order: o.id, at: clock, deadline: o.deadline });
                        }
                        completions.push(Completion {
                            order: o.id,
                            worker: self.id,
                            kind: self.kind,
                            arrival_epoch: o.arrival_epoch,
                            completed_at: clock,
                        });
                    }
                    self.plan = Plan::Idle;
                }
            }
            Plan::ToCharger { charger } => {
                if *charger == self.node {
                    self.plan = Plan::Idle;
                    self.charging = true;
                }
            }
            Plan::Idle => {}
        }
        Ok(())
    }

    /// Moves the worker along its plan for `secs` seconds starting at `clock`.
    pub fn advance(
        &mut self,
        clock: u64,
        secs: u64,
        map: &GridMap,
        params: &FleetParams,
        completions: &mut Vec<Completion>,
    ) -> Result<(), FleetError> {
        let end = clock + secs;
        let mut clock = clock;
        loop {
            if self.transit.is_none() {
                self.process_stops(map, clock, completions)?;
            }
            if clock == end {
                return Ok(());
            }
            if let Some(mut tr) = self.transit {
                let step = tr.remaining.min(end - clock);
                self.drain(step, params)?;
                clock += step;
                tr.remaining -= step;
                if tr.remaining == 0 {
                    self.node = tr.to;
                    self.transit = None;
                } else {
                    self.transit = Some(tr);
                }
                continue;
            }
            match self.next_target(map) {
                Some(target) => {
                    let hop = map.next_hop(self.node, target);
                    self.transit = Some(Transit { to: hop, remaining: map.edge_seconds(self.kind) });
                }
                None => {
                    let idle = end - clock;
                    if self.charging && map.is_charger(self.node) {
                        self.battery = (self.battery + params.charge_per_min * idle as f64 / 60.0).min(100.0);
                    } else {
                        self.drain(idle, params)?;
                    }
                    clock = end;
                }
            }
        }
    }
}

/// An order delivered to the drop-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub order: OrderId,
    pub worker: WorkerId,
    pub kind: WorkerKind,
    pub arrival_epoch: u32,
    pub completed_at: u64,
}

/// One worker's decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkerAction {
    Assign(Vec<OrderId>),
    Charge,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub epoch: u32,
    pub workers: Vec<Worker>,
    /// Orders revealed at this epoch and not yet assigned.
    pub open_orders: Vec<Order>,
}

impl SystemState {
    pub fn now(&self, params: &FleetParams) -> u64 {
        self.epoch as u64 * params.epoch_seconds
    }

    pub fn in_flight(&self) -> usize {
        self.workers.iter().map(Worker::load).sum()
    }
}

/// β·|batch| minus minutes until the re-planned drop-off.
pub fn immediate_reward(
    worker: &Worker,
    batch: &[&Order],
    map: &GridMap,
    params: &FleetParams,
    now: u64,
) -> Result<f64, FleetError> {
    let route =
        routing::feasible_route(worker, batch, map, now, params).ok_or(FleetError::InfeasibleBatch(worker.id))?;
    Ok(reward_for_route(batch.len(), &route, params, now))
}

pub fn reward_for_route(batch_len: usize, route: &routing::Route, params: &FleetParams, now: u64) -> f64 {
    params.reward_per_order * batch_len as f64 - route.duration(now) as f64 / 60.0
}

/// Worker state after committing to `route` for its whole order set.
pub fn with_route(worker: &Worker, route: routing::Route) -> Worker {
    let mut next = worker.clone();
    next.charging = false;
    next.plan = Plan::Orders { pending: route.pickups, carried: worker.carried().to_vec(), eta: route.completion };
    next
}

/// Worker state after a charge decision.
pub fn with_charge(worker: &Worker, map: &GridMap) -> Result<Worker, FleetError> {
    if worker.kind.is_human() || worker.has_orders() {
        return Err(FleetError::InvalidCharge(worker.id));
    }
    let mut next = worker.clone();
    let (start, _) = worker.start_point();
    if worker.transit.is_none() && map.is_charger(worker.node) {
        next.plan = Plan::Idle;
        next.charging = true;
    } else {
        next.plan = Plan::ToCharger { charger: map.nearest_charger(start, worker.kind).0 };
        next.charging = false;
    }
    Ok(next)
}

/// Applies one action to one worker, re-planning its route for assignments.
pub fn apply_action(
    worker: &Worker,
    action: &WorkerAction,
    open: &[Order],
    map: &GridMap,
    params: &FleetParams,
    now: u64,
) -> Result<Worker, FleetError> {
    match action {
        WorkerAction::Null => Ok(worker.clone()),
        WorkerAction::Charge => with_charge(worker, map),
        WorkerAction::Assign(ids) => {
            let batch = ids
                .iter()
                .map(|id| open.iter().find(|o| o.id == *id).ok_or(FleetError::UnknownOrder(*id)))
                .collect::<Result<Vec<_>, _>>()?;
            if worker.load() + batch.len() > worker.max_capacity as usize {
                return Err(FleetError::CapacityExceeded(worker.id));
            }
            let route = routing::feasible_route(worker, &batch, map, now, params)
                .ok_or(FleetError::InfeasibleBatch(worker.id))?;
            Ok(with_route(worker, route))
        }
    }
}

/// Applies one action per worker and clears the open orders.
pub fn statepost(
    state: &SystemState,
    actions: &[WorkerAction],
    map: &GridMap,
    params: &FleetParams,
) -> Result<SystemState, FleetError> {
    if actions.len() != state.workers.len() {
        return Err(FleetError::ActionCount { workers: state.workers.len(), actions: actions.len() });
    }
    let mut seen = HashSet::new();
    for action in actions {
        if let WorkerAction::Assign(ids) = action {
            for id in ids {
                if !seen.insert(*id) {
                    return Err(FleetError::DuplicateAssignment(*id));
                }
            }
        }
    }
    let now = state.now(params);
    let workers = state
        .workers
        .iter()
        .zip(actions)
        .map(|(w, a)| apply_action(w, a, &state.open_orders, map, params, now))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SystemState { epoch: state.epoch, workers, open_orders: Vec::new() })
}

/// Moves every worker forward by `secs` from the state's epoch start.
pub fn advance(
    state: &SystemState,
    secs: u64,
    map: &GridMap,
    params: &FleetParams,
) -> Result<(SystemState, Vec<Completion>), FleetError> {
    let mut next = state.clone();
    let mut completions = Vec::new();
    let clock = state.now(params);
    for w in &mut next.workers {
        w.advance(clock, secs, map, params, &mut completions)?;
    }
    Ok((next, completions))
}

/// Advances one decision interval and reveals the next epoch's orders.
pub fn statenext(
    post: &SystemState,
    new_orders: Vec<Order>,
    map: &GridMap,
    params: &FleetParams,
) -> Result<(SystemState, Vec<Completion>), FleetError> {
    let (mut next, completions) = advance(post, params.epoch_seconds, map, params)?;
    next.epoch += 1;
    next.open_orders = new_orders;
    Ok((next, completions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LayoutConfig;

    /// Ten-deep two-sided aisles; the hand-computed distances below assume it.
    fn map() -> GridMap {
        GridMap::build(&LayoutConfig { shelf_sides: 2, ..LayoutConfig::default() }).unwrap()
    }

    fn order(id: u32, pickup: u32, deadline: u64) -> Order {
        Order { id: OrderId(id), pickup, human_only: false, arrival_epoch: 0, deadline }
    }

    fn state(workers: Vec<Worker>, open: Vec<Order>) -> SystemState {
        SystemState { epoch: 0, workers, open_orders: open }
    }

    #[test]
    fn reward_formula() {
        let p = FleetParams::default();
        let route = routing::Route {
            pickups: vec![],
            start: NodeId(0),
            end: NodeId(0),
            completion: 12 * 60,
            visits_drop_off: true,
        };
        assert_eq!(reward_for_route(2, &route, &p, 0), 48.0);
    }

    #[test]
    fn more_orders_always_pay_more() {
        let p = FleetParams::default();
        // any drop-off within the γ window
        for one in 0..=p.delay_seconds {
            for two in (0..=p.delay_seconds).step_by(30) {
                let r = |c: u64| routing::Route {
                    pickups: vec![],
                    start: NodeId(0),
                    end: NodeId(0),
                    completion: c,
                    visits_drop_off: true,
                };
                assert!(reward_for_route(2, &r(two), &p, 0) > reward_for_route(1, &r(one), &p, 0));
            }
        }
    }

    #[test]
    fn immediate_reward_rejects_infeasible() {
        let map = map();
        let w = Worker::new(WorkerId(0), WorkerKind::Human, map.drop_off(), 2);
        let o = order(1, 179, 30);
        assert_eq!(
            immediate_reward(&w, &[&o], &map, &FleetParams::default(), 0),
            Err(FleetError::InfeasibleBatch(WorkerId(0)))
        );
        let o = order(1, 0, 900);
        assert!(immediate_reward(&w, &[&o], &map, &FleetParams::default(), 0).unwrap() > 0.0);
    }

    #[test]
    fn idle_agv_drains_and_charger_refills() {
        let map = map();
        let p = FleetParams::default();
        let mut w = Worker::new(WorkerId(0), WorkerKind::Agv, map.drop_off(), 2);
        let mut done = Vec::new();
        w.advance(0, 600, &map, &p, &mut done).unwrap();
        assert!((w.battery - 95.0).abs() < 1e-9);

        let mut c = Worker::new(WorkerId(1), WorkerKind::Agv, map.chargers()[0], 2);
        c.battery = 50.0;
        c.charging = true;
        c.advance(0, 240, &map, &p, &mut done).unwrap();
        assert!((c.battery - 70.0).abs() < 1e-9);
        c.battery = 95.0;
        c.advance(0, 240, &map, &p, &mut done).unwrap();
        assert_eq!(c.battery, 100.0);
    }

    #[test]
    fn idle_worker_stays_put() {
        let map = map();
        let s = state(vec![Worker::new(WorkerId(0), WorkerKind::Human, NodeId(17), 2)], vec![]);
        let (next, done) = advance(&s, 300, &map, &FleetParams::default()).unwrap();
        assert_eq!(next.workers[0].node, NodeId(17));
        assert!(done.is_empty());
    }

    #[test]
    fn null_actions_leave_workers_and_clear_orders() {
        let map = map();
        let p = FleetParams::default();
        let s = state(
            vec![
                Worker::new(WorkerId(0), WorkerKind::Human, map.drop_off(), 2),
                Worker::new(WorkerId(1), WorkerKind::Agv, NodeId(5), 2),
            ],
            vec![order(0, 3, 900)],
        );
        let post = statepost(&s, &[WorkerAction::Null, WorkerAction::Null], &map, &p).unwrap();
        assert_eq!(post.workers, s.workers);
        assert!(post.open_orders.is_empty());
    }

    #[test]
    fn charge_heads_to_nearest_charger() {
        let map = map();
        let p = FleetParams::default();
        let s = state(vec![Worker::new(WorkerId(0), WorkerKind::Agv, map.drop_off(), 2)], vec![]);
        let post = statepost(&s, &[WorkerAction::Charge], &map, &p).unwrap();
        let nearest = map.nearest_charger(map.drop_off(), WorkerKind::Agv).0;
        assert_eq!(post.workers[0].plan, Plan::ToCharger { charger: nearest });

        // reaches the charger (4 minutes away) and charges for the last minute
        let (next, _) = advance(&post, 300, &map, &p).unwrap();
        let w = &next.workers[0];
        assert_eq!(w.node, nearest);
        assert!(w.charging);
        // 98 % on arrival, then one minute of charging caps it
        assert_eq!(w.battery, 100.0);

        let human = state(vec![Worker::new(WorkerId(0), WorkerKind::Human, map.drop_off(), 2)], vec![]);
        assert_eq!(statepost(&human, &[WorkerAction::Charge], &map, &p), Err(FleetError::InvalidCharge(WorkerId(0))));
    }

    #[test]
    fn charging_gains_only_after_arrival() {
        let map = map();
        let p = FleetParams::default();
        let mut w = Worker::new(WorkerId(0), WorkerKind::Agv, map.drop_off(), 2);
        w.battery = 50.0;
        let post = with_charge(&w, &map).unwrap();
        let mut w = post;
        let mut done = Vec::new();
        w.advance(0, 300, &map, &p, &mut done).unwrap();
        // 4 minutes driving at -0.5/min, 1 minute charging at +5/min
        assert!((w.battery - (50.0 - 2.0 + 5.0)).abs() < 1e-9, "{}", w.battery);
    }

    #[test]
    fn assignment_replans_and_delivers() {
        let map = map();
        let p = FleetParams::default();
        let o = order(0, 0, 900);
        let s = state(vec![Worker::new(WorkerId(0), WorkerKind::Human, map.drop_off(), 2)], vec![o.clone()]);
        let post = statepost(&s, &[WorkerAction::Assign(vec![o.id])], &map, &p).unwrap();
        let expect = routing::optimal_route(&s.workers[0], &[&o], &map, 0).unwrap();
        assert_eq!(post.workers[0].pending(), expect.pickups.as_slice());
        assert_eq!(post.workers[0].plan_seconds(&map, 0), expect.completion);

        let (next, done) = statenext(&post, vec![], &map, &p).unwrap();
        assert_eq!(next.epoch, 1);
        assert!(next.open_orders.is_empty());
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].completed_at, expect.completion);
        assert!(matches!(next.workers[0].plan, Plan::Idle));
        assert_eq!(next.workers[0].node, map.drop_off());
    }

    #[test]
    fn statepost_rejects_bad_action_vectors() {
        let map = map();
        let p = FleetParams::default();
        let o = order(0, 0, 900);
        let ws = vec![
            Worker::new(WorkerId(0), WorkerKind::Human, map.drop_off(), 2),
            Worker::new(WorkerId(1), WorkerKind::Human, map.drop_off(), 2),
        ];
        let s = state(ws, vec![o.clone()]);
        let dup = [WorkerAction::Assign(vec![o.id]), WorkerAction::Assign(vec![o.id])];
        assert_eq!(statepost(&s, &dup, &map, &p), Err(FleetError::DuplicateAssignment(o.id)));
        assert!(matches!(statepost(&s, &[WorkerAction::Null], &map, &p), Err(FleetError::ActionCount { .. })));
        let unknown = [WorkerAction::Assign(vec![OrderId(9)]), WorkerAction::Null];
        assert_eq!(statepost(&s, &unknown, &map, &p), Err(FleetError::UnknownOrder(OrderId(9))));
    }

    #[test]
    fn statenext_replaces_open_orders() {
        let map = map();
        let p = FleetParams::default();
        let s = state(vec![], vec![order(0, 0, 900), order(1, 2, 900)]);
        let post = statepost(&s, &[], &map, &p).unwrap();
        let fresh: Vec<Order> = (10..13).map(|i| order(i, 1, 1200)).collect();
        let (next, _) = statenext(&post, fresh.clone(), &map, &p).unwrap();
        assert_eq!(next.open_orders, fresh);
        assert_eq!(next.epoch, s.epoch + 1);
    }

    #[test]
    fn battery_depletion_is_a_fault() {
        let map = map();
        let p = FleetParams::default();
        let mut w = Worker::new(WorkerId(0), WorkerKind::Agv, map.drop_off(), 2);
        w.battery = 1.0;
        assert!(w.must_charge(&map, &p));
        let mut done = Vec::new();
        assert_eq!(
            w.advance(0, 300, &map, &p, &mut done),
            Err(FleetError::BatteryDepleted(WorkerId(0), map.drop_off()))
        );
    }

    #[test]
    fn advance_is_pure() {
        let map = map();
        let p = FleetParams::default();
        let o = order(0, 100, 900);
        let s = state(vec![Worker::new(WorkerId(0), WorkerKind::Agv, map.drop_off(), 2)], vec![o.clone()]);
        let post = statepost(&s, &[WorkerAction::Assign(vec![o.id])], &map, &p).unwrap();
        assert_eq!(advance(&post, 300, &map, &p), advance(&post, 300, &map, &p));
    }
}

//! Per-epoch action menus: every action a worker may take this epoch, with its
//! immediate reward and a compact description of the resulting post-decision
//! worker state.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::allocation::{AllocationInstance, CandidateBatch, Choice, WorkerMenu};
use crate::fleet::{self, FleetParams, SystemState, Worker, WorkerAction};
use crate::grid::{GridMap, WorkerKind};
use crate::routing;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    Null,
    Charge,
    /// Positions in the epoch's open-order list, ascending.
    Batch(SmallVec<[u16; 3]>),
}

/// Compact post-decision worker descriptor, enough to featurize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSummary {
    pub at: (u16, u16),
    pub end: (u16, u16),
    pub agv: bool,
    pub battery: f32,
    pub load: u8,
    pub capacity: u8,
    /// Seconds from the decision until the committed plan is done.
    pub plan_secs: u32,
    /// Charging, or heading to a charger.
    pub charge_intent: bool,
}

impl PostSummary {
    pub fn of(worker: &Worker, map: &GridMap, now: u64) -> Self {
        let (start, _) = worker.start_point();
        let (x, y) = map.coords(start);
        let (ex, ey) = map.coords(worker.plan_end(map));
        Self {
            at: (x as u16, y as u16),
            end: (ex as u16, ey as u16),
            agv: worker.kind == WorkerKind::Agv,
            battery: worker.battery as f32,
            load: worker.load() as u8,
            capacity: worker.max_capacity as u8,
            plan_secs: worker.plan_seconds(map, now) as u32,
            charge_intent: worker.charging || worker.heading_to_charger(),
        }
    }
}

/// Fleet-wide descriptors of the pre-decision state shared by every worker's features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetContext {
    /// Share of workers without orders.
    pub idle_frac: f32,
    /// Mean AGV battery in percent (100 without AGVs).
    pub mean_agv_battery: f32,
    /// t / T.
    pub epoch_frac: f32,
    /// Open orders divided by the peak expected epoch volume.
    pub open_load: f32,
}

impl FleetContext {
    pub fn of(state: &SystemState, horizon: u32, peak_mean: f64) -> Self {
        let n = state.workers.len().max(1) as f32;
        let idle = state.workers.iter().filter(|w| !w.has_orders()).count() as f32;
        let agvs: Vec<f64> = state.workers.iter().filter(|w| w.kind == WorkerKind::Agv).map(|w| w.battery).collect();
        let mean_agv_battery =
            if agvs.is_empty() { 100.0 } else { (agvs.iter().sum::<f64>() / agvs.len() as f64) as f32 };
        Self {
            idle_frac: idle / n,
            mean_agv_battery,
            epoch_frac: state.epoch as f32 / horizon.max(1) as f32,
            open_load: if peak_mean > 0.0 { (state.open_orders.len() as f64 / peak_mean) as f32 } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuAction {
    pub kind: ActionKind,
    pub reward: f64,
    pub post: PostSummary,
}

/// One worker's menu: Null (unless the AGV must charge), Charge (idle AGVs), then feasible batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMenu {
    pub actions: Vec<MenuAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMenus {
    pub epoch: u32,
    pub n_orders: usize,
    pub context: FleetContext,
    pub workers: Vec<ActionMenu>,
}

pub fn worker_menu(worker: &Worker, state: &SystemState, map: &GridMap, params: &FleetParams) -> ActionMenu {
    let now = state.now(params);
    let mut actions = Vec::new();
    if !worker.must_charge(map, params) {
        actions.push(MenuAction { kind: ActionKind::Null, reward: 0.0, post: PostSummary::of(worker, map, now) });
    }
    if let Ok(charged) = fleet::with_charge(worker, map) {
        actions.push(MenuAction { kind: ActionKind::Charge, reward: 0.0, post: PostSummary::of(&charged, map, now) });
    }
    let gamma = routing::matching_feasibility(worker, &state.open_orders, map, now, params);
    for batch in gamma.batches {
        let reward = fleet::reward_for_route(batch.orders.len(), &batch.route, params, now);
        let post = PostSummary::of(&fleet::with_route(worker, batch.route), map, now);
        let kind = ActionKind::Batch(batch.orders.iter().map(|&i| i as u16).collect());
        actions.push(MenuAction { kind, reward, post });
    }
    ActionMenu { actions }
}

pub fn build_menus(
    state: &SystemState,
    map: &GridMap,
    params: &FleetParams,
    horizon: u32,
    peak_mean: f64,
) -> EpochMenus {
    EpochMenus {
        epoch: state.epoch,
        n_orders: state.open_orders.len(),
        context: FleetContext::of(state, horizon, peak_mean),
        workers: state.workers.iter().map(|w| worker_menu(w, state, map, params)).collect(),
    }
}

/// Allocation instance over `coefs[w][a]`, keeping each worker's `cap` best batches.
/// Returns the instance and, per worker, the menu index behind each instance batch.
pub fn to_instance(menus: &EpochMenus, coefs: &[Vec<f64>], cap: usize) -> (AllocationInstance, Vec<Vec<usize>>) {
    let mut index = Vec::with_capacity(menus.workers.len());
    let mut out = Vec::with_capacity(menus.workers.len());
    for (menu, c) in menus.workers.iter().zip(coefs) {
        let mut wm = WorkerMenu { batches: Vec::new(), null: None, charge: None };
        let mut map = Vec::new();
        for (a, (action, &coef)) in menu.actions.iter().zip(c).enumerate() {
            match &action.kind {
                ActionKind::Null => wm.null = Some(coef),
                ActionKind::Charge => wm.charge = Some(coef),
                ActionKind::Batch(orders) => {
                    wm.batches.push(CandidateBatch { orders: orders.iter().map(|&o| o as usize).collect(), coef });
                    map.push(a);
                }
            }
        }
        let kept = wm.truncate_batches(cap);
        index.push(kept.into_iter().map(|k| map[k]).collect());
        out.push(wm);
    }
    (AllocationInstance { n_orders: menus.n_orders, menus: out }, index)
}

/// Menu index chosen by each worker.
pub fn chosen_actions(menus: &EpochMenus, choices: &[Choice], index: &[Vec<usize>]) -> Vec<usize> {
    choices
        .iter()
        .zip(&menus.workers)
        .zip(index)
        .map(|((choice, menu), idx)| match choice {
            Choice::Null => menu.actions.iter().position(|a| a.kind == ActionKind::Null).expect("null on menu"),
            Choice::Charge => menu.actions.iter().position(|a| a.kind == ActionKind::Charge).expect("charge on menu"),
            Choice::Batch(b) => idx[*b],
        })
        .collect()
}

/// Converts menu choices into fleet actions.
pub fn to_actions(menus: &EpochMenus, chosen: &[usize], state: &SystemState) -> Vec<WorkerAction> {
    menus
        .workers
        .iter()
        .zip(chosen)
        .map(|(menu, &a)| match &menu.actions[a].kind {
            ActionKind::Null => WorkerAction::Null,
            ActionKind::Charge => WorkerAction::Charge,
            ActionKind::Batch(orders) => {
                WorkerAction::Assign(orders.iter().map(|&o| state.open_orders[o as usize].id).collect())
            }
        })
        .collect()
}

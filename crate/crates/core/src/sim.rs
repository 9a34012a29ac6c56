//! Day simulation loop, NeurADP training driver and the experiment harness.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};
use thiserror::Error;

use crate::fleet::{self, Completion, FleetParams, SystemState, Worker, WorkerAction, WorkerId};
use crate::grid::{GridMap, LayoutConfig, WorkerKind};
use crate::menu::{self, ActionKind, EpochMenus, FleetContext, PostSummary};
use crate::neuradp::{self, CheckpointError, Experience, FeatureScales, Trainer, TrainingConfig, ValueFunction};
use crate::orders::{ArrivalConfig, ArrivalModel, DayOrders, Fnv};
use crate::policies::{self, Policy, PolicySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub humans: usize,
    pub agvs: usize,
    pub human_capacity: u32,
    pub agv_capacity: u32,
    pub drain_per_min: f64,
    pub charge_per_min: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self { humans: 5, agvs: 5, human_capacity: 2, agv_capacity: 2, drain_per_min: 0.5, charge_per_min: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// β; defaults to the largest worker capacity times the delay in minutes.
    pub per_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub epochs: u32,
    pub epoch_seconds: u64,
    /// Batches kept per worker when building an allocation instance.
    pub candidate_cap: usize,
    pub eval_days: usize,
    /// Order seed of the first evaluation day; day `i` uses `eval_seed + i`.
    pub eval_seed: u64,
    /// Order seed of the first training day.
    pub train_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { epochs: 288, epoch_seconds: 300, candidate_cap: 100, eval_days: 50, eval_seed: 1_000_000, train_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub layout: LayoutConfig,
    pub arrivals: ArrivalConfig,
    pub fleet: FleetConfig,
    pub reward: RewardConfig,
    pub training: TrainingConfig,
    pub sim: RunConfig,
}

pub const DAY_SECONDS: u64 = 86_400;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("invariant violated at epoch {epoch}: {detail}")]
    Invariant { epoch: u32, detail: String },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("output: {0}")]
    Output(String),
}

impl SimError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Checkpoint(_) => 2,
            Self::Invariant { .. } => 3,
            Self::Io(_) | Self::Output(_) => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let s = &self.sim;
        if s.epochs as u64 * s.epoch_seconds != DAY_SECONDS {
            return Err(config_err(format!("epochs × epoch_seconds must equal {DAY_SECONDS}")));
        }
        if s.candidate_cap == 0 {
            return Err(config_err("candidate_cap must be positive"));
        }
        let f = &self.fleet;
        for cap in [f.human_capacity, f.agv_capacity] {
            if !(1..=3).contains(&cap) {
                return Err(config_err("worker capacities must lie in 1..=3"));
            }
        }
        if !(f.drain_per_min > 0.0
            && f.charge_per_min > 0.0
            && f.drain_per_min.is_finite()
            && f.charge_per_min.is_finite())
        {
            return Err(config_err("battery rates must be positive"));
        }
        if let Some(beta) = self.reward.per_order {
            if !(beta > self.arrivals.delay_minutes && beta.is_finite()) {
                return Err(config_err("reward per order must exceed the delay in minutes"));
            }
        }
        let t = &self.training;
        if t.hidden.is_empty() || t.hidden.contains(&0) {
            return Err(config_err("hidden layer widths must be positive"));
        }
        if !(t.learning_rate > 0.0 && t.tau > 0.0 && t.tau <= 1.0 && t.discount > 0.0 && t.discount <= 1.0) {
            return Err(config_err("need learning_rate > 0, tau and discount in (0, 1]"));
        }
        if !(t.value_scale > 0.0 && t.value_scale.is_finite()) || t.batch_size == 0 || t.replay_capacity == 0 {
            return Err(config_err("value_scale, batch_size and replay_capacity must be positive"));
        }
        Ok(())
    }

    pub fn fleet_params(&self) -> FleetParams {
        let f = &self.fleet;
        let caps = [(f.humans, f.human_capacity), (f.agvs, f.agv_capacity)];
        let present = caps.iter().filter(|(n, _)| *n > 0).map(|&(_, c)| c).max();
        let max_cap = present.unwrap_or(f.human_capacity.max(f.agv_capacity));
        FleetParams {
            epoch_seconds: self.sim.epoch_seconds,
            delay_seconds: (self.arrivals.delay_minutes * 60.0).round() as u64,
            reward_per_order: self.reward.per_order.unwrap_or(max_cap as f64 * self.arrivals.delay_minutes),
            drain_per_min: f.drain_per_min,
            charge_per_min: f.charge_per_min,
        }
    }
}

/// Validated configuration with the derived map, fleet parameters and arrival model.
#[derive(Debug, Clone)]
pub struct Env {
    pub config: SimConfig,
    pub map: GridMap,
    pub params: FleetParams,
    pub model: ArrivalModel,
}

impl Env {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let map = GridMap::build(&config.layout).map_err(|e| config_err(e.to_string()))?;
        let model =
            ArrivalModel::new(&config.arrivals, config.sim.epochs, config.sim.epoch_seconds, map.pickup_count())
                .map_err(|e| config_err(e.to_string()))?;
        let params = config.fleet_params();
        Ok(Self { config, map, params, model })
    }

    pub fn horizon(&self) -> u32 {
        self.config.sim.epochs
    }

    pub fn day_orders(&self, seed: u64) -> DayOrders {
        self.model.generate_day(seed)
    }

    pub fn eval_seeds(&self, n: usize) -> Vec<u64> {
        (0..n as u64).map(|i| self.config.sim.eval_seed + i).collect()
    }

    /// Rejects recorded orders this environment could not have generated.
    pub fn check_orders(&self, orders: &DayOrders) -> Result<(), SimError> {
        let mut ids = std::collections::HashSet::new();
        for t in 0..self.horizon() {
            for o in orders.at(t) {
                let due = t as u64 * self.params.epoch_seconds + self.params.delay_seconds;
                if o.pickup as usize >= self.map.pickup_count() {
                    return Err(config_err(format!("order {}: pick-up {} does not exist", o.id.0, o.pickup)));
                }
                if o.deadline != due {
                    return Err(config_err(format!("order {}: deadline {} but expected {due}", o.id.0, o.deadline)));
                }
                if !ids.insert(o.id) {
                    return Err(config_err(format!("order id {} repeats", o.id.0)));
                }
            }
        }
        Ok(())
    }

    pub fn initial_workers(&self) -> Vec<Worker> {
        let f = &self.config.fleet;
        let d = self.map.drop_off();
        let humans = (0..f.humans).map(|_| (WorkerKind::Human, f.human_capacity));
        let agvs = (0..f.agvs).map(|_| (WorkerKind::Agv, f.agv_capacity));
        humans.chain(agvs).enumerate().map(|(i, (k, c))| Worker::new(WorkerId(i as u32), k, d, c)).collect()
    }

    pub fn feature_scales(&self) -> FeatureScales {
        FeatureScales::new(&self.map, &self.params)
    }

    pub fn menus(&self, state: &SystemState) -> EpochMenus {
        menu::build_menus(state, &self.map, &self.params, self.horizon(), self.model.peak_mean())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayStats {
    pub seed: u64,
    pub orders_seen: usize,
    pub orders_filled: usize,
    pub filled_by_humans: usize,
    pub filled_by_agvs: usize,
    pub expired_unassigned: usize,
    pub delivery_mean_min: f64,
    pub delivery_p50_min: f64,
    pub delivery_p90_min: f64,
    pub delivery_max_min: f64,
    /// Pre-decision AGV battery averaged over AGVs and horizon epochs.
    pub mean_agv_battery: f64,
    pub min_agv_battery: f64,
    pub mean_agvs_charging: f64,
    /// Epochs simulated after the horizon to finish in-flight orders.
    pub drain_epochs: u32,
    pub order_fingerprint: u64,
    pub trace_hash: u64,
}

impl DayStats {
    pub fn fill_rate(&self) -> f64 {
        if self.orders_seen == 0 {
            0.0
        } else {
            self.orders_filled as f64 / self.orders_seen as f64
        }
    }
}

#[derive(Serialize)]
struct EpochTrace<'a> {
    epoch: u32,
    workers: &'a [Worker],
    actions: &'a [WorkerAction],
    completions: &'a [Completion],
}

struct Tally {
    generated: usize,
    completed: usize,
    expired: usize,
    by_human: usize,
    by_agv: usize,
    delivery: Vec<f64>,
    battery_sum: f64,
    battery_n: usize,
    battery_min: f64,
    charging_sum: usize,
    horizon_epochs: usize,
    hash: Fnv,
}

fn invariant(epoch: u32, detail: impl Into<String>) -> SimError {
    SimError::Invariant { epoch, detail: detail.into() }
}

fn check_state(state: &SystemState, tally: &Tally, epoch: u32) -> Result<(), SimError> {
    for w in &state.workers {
        let snapshot = || serde_json::to_string(w).unwrap_or_default();
        if w.load() > w.max_capacity as usize {
            return Err(invariant(epoch, format!("capacity exceeded: {}", snapshot())));
        }
        match w.kind {
            WorkerKind::Human if w.battery != 100.0 => {
                return Err(invariant(epoch, format!("human battery changed: {}", snapshot())));
            }
            WorkerKind::Agv if !(w.battery > 0.0 && w.battery <= 100.0) => {
                return Err(invariant(epoch, format!("AGV battery out of range: {}", snapshot())));
            }
            _ => {}
        }
        if w.charging && w.has_orders() {
            return Err(invariant(epoch, format!("charging while serving orders: {}", snapshot())));
        }
    }
    let accounted = tally.completed + tally.expired + state.in_flight() + state.open_orders.len();
    if tally.generated != accounted {
        return Err(invariant(
            epoch,
            format!("conservation: generated {} vs completed+expired+in-flight+open {accounted}", tally.generated),
        ));
    }
    Ok(())
}

/// Runs one day with `decide` choosing menu entries during the horizon.
///
/// After the horizon no orders arrive; workers continue (AGVs that must charge
/// do so) until every carried order has been dropped off.
pub fn simulate<F>(
    env: &Env,
    orders: &DayOrders,
    seed: u64,
    mut decide: F,
    mut trace: Option<&mut dyn Write>,
) -> Result<DayStats, SimError>
where
    F: FnMut(&SystemState, &EpochMenus) -> Result<Vec<usize>, SimError>,
{
    let (map, params) = (&env.map, &env.params);
    let horizon = env.horizon();
    let drain_limit = horizon + (params.delay_seconds / params.epoch_seconds) as u32 + 2;
    let mut state = SystemState { epoch: 0, workers: env.initial_workers(), open_orders: orders.at(0).to_vec() };
    let mut tally = Tally {
        generated: state.open_orders.len(),
        completed: 0,
        expired: 0,
        by_human: 0,
        by_agv: 0,
        delivery: Vec::new(),
        battery_sum: 0.0,
        battery_n: 0,
        battery_min: 100.0,
        charging_sum: 0,
        horizon_epochs: 0,
        hash: Fnv::default(),
    };
    check_state(&state, &tally, 0)?;

    loop {
        let epoch = state.epoch;
        let in_horizon = epoch < horizon;
        if !in_horizon && state.in_flight() == 0 {
            break;
        }
        if epoch >= drain_limit {
            return Err(invariant(epoch, "orders still in flight long after the horizon"));
        }
        let menus = env.menus(&state);
        let chosen = if in_horizon {
            let c = decide(&state, &menus)?;
            if c.len() != menus.workers.len() || c.iter().zip(&menus.workers).any(|(&a, m)| a >= m.actions.len()) {
                return Err(invariant(epoch, "decision does not pick one menu entry per worker"));
            }
            c
        } else {
            menus
                .workers
                .iter()
                .map(|m| m.actions.iter().position(|a| a.kind == ActionKind::Null).unwrap_or(0))
                .collect()
        };
        let actions = menu::to_actions(&menus, &chosen, &state);

        if in_horizon {
            tally.horizon_epochs += 1;
            for w in state.workers.iter().filter(|w| w.kind == WorkerKind::Agv) {
                tally.battery_sum += w.battery;
                tally.battery_n += 1;
                tally.charging_sum += w.charging as usize;
            }
        }
        let assigned: usize =
            actions.iter().map(|a| if let WorkerAction::Assign(ids) = a { ids.len() } else { 0 }).sum();
        tally.expired += state.open_orders.len() - assigned;

        let post = fleet::statepost(&state, &actions, map, params).map_err(|e| {
            invariant(epoch, format!("{e}; state {}", serde_json::to_string(&state).unwrap_or_default()))
        })?;
        let arrivals = if epoch + 1 < horizon { orders.at(epoch + 1).to_vec() } else { Vec::new() };
        tally.generated += arrivals.len();
        let (next, completions) = fleet::statenext(&post, arrivals, map, params).map_err(|e| {
            invariant(epoch, format!("{e}; post-decision state {}", serde_json::to_string(&post).unwrap_or_default()))
        })?;

        for c in &completions {
            let arrival = c.arrival_epoch as u64 * params.epoch_seconds;
            if c.completed_at > arrival + params.delay_seconds {
                return Err(invariant(epoch, format!("deadline missed: {c:?}")));
            }
            tally.completed += 1;
            match c.kind {
                WorkerKind::Human => tally.by_human += 1,
                WorkerKind::Agv => tally.by_agv += 1,
            }
            tally.delivery.push((c.completed_at - arrival) as f64 / 60.0);
            tally.hash.eat(c.order.0 as u64);
            tally.hash.eat(c.completed_at);
        }
        tally.hash.eat(epoch as u64);
        chosen.iter().for_each(|&a| tally.hash.eat(a as u64));
        for w in next.workers.iter().filter(|w| w.kind == WorkerKind::Agv) {
            tally.battery_min = tally.battery_min.min(w.battery);
        }
        if let Some(out) = trace.as_deref_mut() {
            let line = EpochTrace { epoch, workers: &post.workers, actions: &actions, completions: &completions };
            serde_json::to_writer(&mut *out, &line).map_err(|e| SimError::Output(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        check_state(&next, &tally, next.epoch)?;
        state = next;
    }

    let orders_seen = orders.total();
    let delivery = &tally.delivery;
    let (mean, p50, p90, max) = if delivery.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let mut data = Data::new(delivery.clone());
        (delivery.iter().mean(), data.median(), data.percentile(90), delivery.iter().copied().fold(0.0, f64::max))
    };
    Ok(DayStats {
        seed,
        orders_seen,
        orders_filled: tally.completed,
        filled_by_humans: tally.by_human,
        filled_by_agvs: tally.by_agv,
        expired_unassigned: tally.expired,
        delivery_mean_min: mean,
        delivery_p50_min: p50,
        delivery_p90_min: p90,
        delivery_max_min: max,
        mean_agv_battery: if tally.battery_n == 0 { 100.0 } else { tally.battery_sum / tally.battery_n as f64 },
        min_agv_battery: tally.battery_min,
        mean_agvs_charging: tally.charging_sum as f64 / tally.horizon_epochs.max(1) as f64,
        drain_epochs: state.epoch - horizon.min(state.epoch),
        order_fingerprint: orders.fingerprint(),
        trace_hash: tally.hash.finish(),
    })
}

pub fn run_day_with_orders(
    env: &Env,
    policy: &Policy,
    orders: &DayOrders,
    seed: u64,
    trace: Option<&mut dyn Write>,
) -> Result<DayStats, SimError> {
    let cap = env.config.sim.candidate_cap;
    simulate(env, orders, seed, |s, m| Ok(policies::decide(policy, s, m, cap)), trace)
}

pub fn run_day(env: &Env, policy: &Policy, seed: u64) -> Result<DayStats, SimError> {
    run_day_with_orders(env, policy, &env.day_orders(seed), seed, None)
}

pub fn load_policy(spec: &PolicySpec) -> Result<Policy, SimError> {
    Ok(match spec {
        PolicySpec::NeurAdp(path) => Policy::NeurAdp(neuradp::load_checkpoint(path, None)?),
        PolicySpec::MyopicIlp => Policy::MyopicIlp,
        PolicySpec::MyopicHeuristic { priority, threshold } => {
            Policy::MyopicHeuristic { priority: *priority, threshold: *threshold as f64 }
        }
    })
}

pub fn parse_policies(list: &str) -> Result<Vec<PolicySpec>, SimError> {
    let specs: Vec<PolicySpec> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse().map_err(|e: policies::PolicyParseError| config_err(e.to_string())))
        .collect::<Result<_, _>>()?;
    if specs.is_empty() {
        return Err(config_err("at least one policy is required"));
    }
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub day: u32,
    pub step: u64,
    pub loss: f64,
    pub mean_target: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub value: ValueFunction,
    pub log: Vec<TrainLogRow>,
    pub days: Vec<DayStats>,
}

/// Where training writes its checkpoint and log; either may be omitted.
#[derive(Debug, Default, Clone, Copy)]
pub struct TrainOutputs<'a> {
    pub checkpoint: Option<&'a Path>,
    pub log: Option<&'a Path>,
}

/// Trains the value function for `config.training.days` simulated days.
pub fn train(env: &Env, out: TrainOutputs<'_>) -> Result<TrainOutcome, SimError> {
    let tc = env.config.training.clone();
    let cap = env.config.sim.candidate_cap;
    let horizon = env.horizon();
    let mut trainer = Trainer::new(tc.clone(), env.feature_scales(), cap);
    let mut log = Vec::new();
    let mut days = Vec::new();
    let mut log_writer = match out.log {
        Some(p) => Some(csv::Writer::from_path(p).map_err(|e| SimError::Output(e.to_string()))?),
        None => None,
    };

    for day in 0..tc.days {
        let seed = env.config.sim.train_seed + day as u64;
        let mut prev: Option<(Vec<PostSummary>, FleetContext)> = None;
        let first_row = log.len();
        let stats = simulate(
            env,
            &env.day_orders(seed),
            seed,
            |_, menus| {
                let coefs = neuradp::coefficients(Some(&trainer.value), menus);
                let chosen = policies::solve_menus(menus, &coefs, cap);
                if let Some((p, c)) = prev.take() {
                    trainer.replay.push(Experience::new(p, c, menus, menus.epoch + 1 == horizon));
                }
                let posts = chosen.iter().zip(&menus.workers).map(|(&a, m)| m.actions[a].post).collect();
                prev = Some((posts, menus.context));
                for _ in 0..tc.updates_per_epoch {
                    let Some(step) = trainer.train_step() else { break };
                    trainer.sync_target();
                    if !step.loss.is_finite() || !trainer.value.net.is_finite() {
                        return Err(invariant(menus.epoch, format!("non-finite training loss on day {day}")));
                    }
                    log.push(TrainLogRow { day, step: trainer.steps, loss: step.loss, mean_target: step.mean_target });
                }
                Ok(chosen)
            },
            None,
        )?;
        days.push(stats);
        if let Some(w) = log_writer.as_mut() {
            for row in &log[first_row..] {
                w.serialize(row).map_err(|e| SimError::Output(e.to_string()))?;
            }
            w.flush()?;
        }
        if let Some(path) = out.checkpoint {
            if tc.checkpoint_every > 0 && (day + 1) % tc.checkpoint_every == 0 {
                neuradp::save_checkpoint(&trainer.value, path)?;
            }
        }
    }
    if let Some(path) = out.checkpoint {
        neuradp::save_checkpoint(&trainer.value, path)?;
    }
    Ok(TrainOutcome { value: trainer.value, log, days })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub policy: String,
    pub days: Vec<DayStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub policy: String,
    pub days: usize,
    pub seen_mean: f64,
    pub seen_sd: f64,
    pub filled_mean: f64,
    pub filled_sd: f64,
    pub fill_rate: f64,
    pub humans_filled_mean: f64,
    pub agvs_filled_mean: f64,
    pub delivery_mean_min: f64,
    pub mean_agv_battery: f64,
    pub mean_agvs_charging: f64,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    match n {
        0 => (0.0, 0.0),
        1 => (xs.mean(), 0.0),
        _ => (xs.clone().mean(), xs.std_dev()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub results: Vec<PolicyResult>,
}

impl Comparison {
    pub fn summary(&self, i: usize) -> Summary {
        let days = &self.results[i].days;
        let (seen_mean, seen_sd) = mean_sd(days.iter().map(|d| d.orders_seen as f64));
        let (filled_mean, filled_sd) = mean_sd(days.iter().map(|d| d.orders_filled as f64));
        let m = |f: fn(&DayStats) -> f64| mean_sd(days.iter().map(f)).0;
        // delivery mean over every filled order, not over days
        let filled: f64 = days.iter().map(|d| d.orders_filled as f64).sum();
        let delivery = if filled > 0.0 {
            days.iter().map(|d| d.delivery_mean_min * d.orders_filled as f64).sum::<f64>() / filled
        } else {
            0.0
        };
        Summary {
            policy: self.results[i].policy.clone(),
            days: days.len(),
            seen_mean,
            seen_sd,
            filled_mean,
            filled_sd,
            fill_rate: if seen_mean > 0.0 { filled_mean / seen_mean } else { 0.0 },
            humans_filled_mean: m(|d| d.filled_by_humans as f64),
            agvs_filled_mean: m(|d| d.filled_by_agvs as f64),
            delivery_mean_min: delivery,
            mean_agv_battery: m(|d| d.mean_agv_battery),
            mean_agvs_charging: m(|d| d.mean_agvs_charging),
        }
    }

    /// `(fill_a − fill_b) / orders_seen × 100`, on day means.
    pub fn pct_incr(&self, a: usize, b: usize) -> f64 {
        let (sa, sb) = (self.summary(a), self.summary(b));
        if sa.seen_mean > 0.0 {
            (sa.filled_mean - sb.filled_mean) / sa.seen_mean * 100.0
        } else {
            0.0
        }
    }

    pub fn index_of(&self, policy: &str) -> Option<usize> {
        self.results.iter().position(|r| r.policy == policy)
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "policy",
            "days",
            "orders_seen",
            "orders_seen_sd",
            "filled",
            "filled_sd",
            "fill_rate",
            "humans_filled",
            "agvs_filled",
            "delivery_min",
            "agv_battery",
            "agvs_charging",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(self.results.iter().map(|r| format!("pct_incr_over_{}", r.policy)));
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        (0..self.results.len())
            .map(|i| {
                let s = self.summary(i);
                let mut row = vec![
                    s.policy,
                    s.days.to_string(),
                    format!("{:.2}", s.seen_mean),
                    format!("{:.2}", s.seen_sd),
                    format!("{:.2}", s.filled_mean),
                    format!("{:.2}", s.filled_sd),
                    format!("{:.4}", s.fill_rate),
                    format!("{:.2}", s.humans_filled_mean),
                    format!("{:.2}", s.agvs_filled_mean),
                    format!("{:.2}", s.delivery_mean_min),
                    format!("{:.2}", s.mean_agv_battery),
                    format!("{:.2}", s.mean_agvs_charging),
                ];
                row.extend((0..self.results.len()).map(|j| format!("{:.2}", self.pct_incr(i, j))));
                row
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        let out = |e: csv::Error| SimError::Output(e.to_string());
        w.write_record(self.header()).map_err(out)?;
        for row in self.rows() {
            w.write_record(row).map_err(out)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), SimError> {
        serde_json::to_writer_pretty(writer, self).map_err(|e| SimError::Output(e.to_string()))
    }

    /// Plain-text table: policies as rows, seen / filled / % increase as columns.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut head = format!("{:<14} {:>18} {:>18} {:>10}", "Policy", "Orders Seen", "Orders Filled", "Delivery");
        for r in &self.results {
            head.push_str(&format!(" {:>16}", format!("% Incr/{}", r.policy)));
        }
        let _ = writeln!(out, "{head}");
        for i in 0..self.results.len() {
            let s = self.summary(i);
            let _ = write!(
                out,
                "{:<14} {:>18} {:>18} {:>10.2}",
                s.policy,
                format!("{:.2} ± {:.2}", s.seen_mean, s.seen_sd),
                format!("{:.2} ± {:.2}", s.filled_mean, s.filled_sd),
                s.delivery_mean_min
            );
            for j in 0..self.results.len() {
                let _ = write!(out, " {:>16.2}", self.pct_incr(i, j));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every policy on every seed; all policies see identical order streams.
pub fn evaluate(env: &Env, policies: &[Policy], seeds: &[u64]) -> Result<Comparison, SimError> {
    let streams: Vec<DayOrders> = seeds.par_iter().map(|&s| env.day_orders(s)).collect();
    let jobs: Vec<(usize, usize)> = (0..policies.len()).flat_map(|p| (0..seeds.len()).map(move |d| (p, d))).collect();
    let stats: Vec<DayStats> = jobs
        .par_iter()
        .map(|&(p, d)| run_day_with_orders(env, &policies[p], &streams[d], seeds[d], None))
        .collect::<Result<_, _>>()?;
    let mut results: Vec<PolicyResult> =
        policies.iter().map(|p| PolicyResult { policy: p.name(), days: Vec::with_capacity(seeds.len()) }).collect();
    for (&(p, _), s) in jobs.iter().zip(stats) {
        results[p].days.push(s);
    }
    for (d, seed) in seeds.iter().enumerate() {
        let fp = results[0].days[d].order_fingerprint;
        if results.iter().any(|r| r.days[d].order_fingerprint != fp) {
            return Err(invariant(0, format!("order streams differ across policies for seed {seed}")));
        }
    }
    Ok(Comparison { results })
}

pub fn write_comparison(cmp: &Comparison, dir: &Path, stem: &str) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    cmp.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
    cmp.write_json(fs::File::create(dir.join(format!("{stem}.json")))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepDim {
    WorkerMix,
    Speed,
    Delay,
    Capacity,
    Availability,
}

impl FromStr for SweepDim {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "worker_mix" | "mix" => Self::WorkerMix,
            "speed" => Self::Speed,
            "delay" => Self::Delay,
            "capacity" => Self::Capacity,
            "availability" => Self::Availability,
            _ => {
                return Err(config_err(format!(
                    "unknown sweep dimension `{s}` (expected worker_mix, speed, delay, capacity, availability)"
                )));
            }
        })
    }
}

impl SweepDim {
    /// Values of the corresponding experiment tables.
    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            Self::WorkerMix => &["10H+0A", "5H+5A", "0H+10A"],
            Self::Speed => &["30/60", "30/30", "60/30"],
            Self::Delay => &["10", "15", "20"],
            Self::Capacity => &["3/2", "2/2", "2/3"],
            Self::Availability => &["0", "20", "40"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

fn parse_pair<T: FromStr>(value: &str, sep: char) -> Option<(T, T)> {
    match value.split_once(sep) {
        Some((a, b)) => Some((a.trim().parse().ok()?, b.trim().parse().ok()?)),
        None => None,
    }
}

/// Applies one sweep value to a copy of the configuration.
///
/// Formats: worker mix `10H+0A`; speed `human/agv` edge seconds; delay minutes;
/// capacity `human/agv` or one value for both; availability percent of human-only orders.
pub fn apply_sweep(base: &SimConfig, dim: SweepDim, value: &str) -> Result<SimConfig, SimError> {
    let bad = || config_err(format!("bad {dim:?} value `{value}`"));
    let mut cfg = base.clone();
    let v = value.trim();
    match dim {
        SweepDim::WorkerMix => {
            let upper = v.to_ascii_uppercase();
            let (h, a) = upper.split_once('+').ok_or_else(bad)?;
            cfg.fleet.humans = h.trim().trim_end_matches('H').parse().map_err(|_| bad())?;
            cfg.fleet.agvs = a.trim().trim_end_matches('A').parse().map_err(|_| bad())?;
        }
        SweepDim::Speed => {
            let (h, a) = parse_pair::<u64>(v, '/').ok_or_else(bad)?;
            cfg.layout.human_edge_seconds = h;
            cfg.layout.agv_edge_seconds = a;
        }
        SweepDim::Delay => cfg.arrivals.delay_minutes = v.parse().map_err(|_| bad())?,
        SweepDim::Capacity => {
            let (h, a) = parse_pair::<u32>(v, '/').or_else(|| v.parse().ok().map(|c| (c, c))).ok_or_else(bad)?;
            cfg.fleet.human_capacity = h;
            cfg.fleet.agv_capacity = a;
        }
        SweepDim::Availability => {
            let pct: f64 = v.trim_end_matches('%').parse().map_err(|_| bad())?;
            cfg.arrivals.human_only_prob = pct / 100.0;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One comparison per sweep value, every value evaluated on the same seeds.
pub fn sweep(
    base: &SimConfig,
    dim: SweepDim,
    values: &[String],
    policies: &[Policy],
    days: usize,
) -> Result<Vec<(String, Comparison)>, SimError> {
    values
        .iter()
        .map(|v| {
            let env = Env::new(apply_sweep(base, dim, v)?)?;
            let seeds = env.eval_seeds(days);
            Ok((v.clone(), evaluate(&env, policies, &seeds)?))
        })
        .collect()
}

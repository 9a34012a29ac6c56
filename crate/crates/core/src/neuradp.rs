//! Per-worker post-decision value function and its training machinery.
//!
//! The network scores one worker's post-decision state together with a few
//! fleet-wide descriptors; it never sees joint actions. Training regresses the
//! score of each worker's previous post-decision state toward the coefficient
//! of the action the allocation model picks for it now, with every menu action
//! scored by a slowly tracking target network.

use std::collections::VecDeque;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation;
use crate::fleet::FleetParams;
use crate::grid::GridMap;
use crate::menu::{self, ActionKind, EpochMenus, FleetContext, PostSummary};
use crate::net::{valid_arch, Adam, Mlp, Scratch};

pub const FEATURE_DIM: usize = 14;

/// Constants that map raw state quantities into the unit range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales {
    pub max_x: f64,
    pub max_y: f64,
    pub delay_minutes: f64,
    pub drain_per_min: f64,
}

impl FeatureScales {
    pub fn new(map: &GridMap, params: &FleetParams) -> Self {
        let (x, y) = map.extent();
        Self {
            max_x: x.max(1) as f64,
            max_y: y.max(1) as f64,
            delay_minutes: params.delay_minutes().max(1.0),
            drain_per_min: params.drain_per_min,
        }
    }
}

pub fn featurize(post: &PostSummary, ctx: &FleetContext, s: &FeatureScales) -> [f64; FEATURE_DIM] {
    let plan_min = post.plan_secs as f64 / 60.0;
    let end_battery = if post.agv { (post.battery as f64 - s.drain_per_min * plan_min) / 100.0 } else { 1.0 };
    [
        post.at.0 as f64 / s.max_x,
        post.at.1 as f64 / s.max_y,
        post.agv as u8 as f64,
        post.battery as f64 / 100.0,
        post.load as f64 / post.capacity.max(1) as f64,
        (plan_min / s.delay_minutes).min(1.0),
        post.charge_intent as u8 as f64,
        post.end.0 as f64 / s.max_x,
        post.end.1 as f64 / s.max_y,
        end_battery.clamp(0.0, 1.0),
        ctx.idle_frac as f64,
        ctx.mean_agv_battery as f64 / 100.0,
        ctx.epoch_frac as f64,
        (ctx.open_load as f64).clamp(0.0, 1.0),
    ]
}

/// Network plus the constants needed to turn its output into a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub net: Mlp,
    /// Values are `value_scale × network output`.
    pub value_scale: f64,
    pub scales: FeatureScales,
}

impl ValueFunction {
    pub fn score(&self, post: &PostSummary, ctx: &FleetContext, scratch: &mut Scratch) -> f64 {
        self.value_scale * self.net.forward_with(&featurize(post, ctx, &self.scales), scratch)
    }
}

/// α for every menu action: immediate reward plus the post-state score (reward only without a net).
pub fn coefficients(vf: Option<&ValueFunction>, menus: &EpochMenus) -> Vec<Vec<f64>> {
    let mut scratch = Scratch::default();
    menus
        .workers
        .iter()
        .map(|m| {
            m.actions
                .iter()
                .map(|a| a.reward + vf.map_or(0.0, |v| v.score(&a.post, &menus.context, &mut scratch)))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAction {
    pub kind: ActionKind,
    pub reward: f32,
    pub post: PostSummary,
}

/// One decision epoch as seen by training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub epoch: u32,
    /// Last epoch of the horizon: no value beyond the immediate reward.
    pub terminal: bool,
    pub n_orders: usize,
    /// Each worker's post-decision state chosen at the previous epoch.
    pub prev: Vec<PostSummary>,
    pub prev_context: FleetContext,
    pub context: FleetContext,
    pub menus: Vec<Vec<StoredAction>>,
}

impl Experience {
    pub fn new(prev: Vec<PostSummary>, prev_context: FleetContext, menus: &EpochMenus, terminal: bool) -> Self {
        Self {
            epoch: menus.epoch,
            terminal,
            n_orders: menus.n_orders,
            prev,
            prev_context,
            context: menus.context,
            menus: menus
                .workers
                .iter()
                .map(|m| {
                    m.actions
                        .iter()
                        .map(|a| StoredAction { kind: a.kind.clone(), reward: a.reward as f32, post: a.post })
                        .collect()
                })
                .collect(),
        }
    }

    fn as_menus(&self) -> EpochMenus {
        EpochMenus {
            epoch: self.epoch,
            n_orders: self.n_orders,
            context: self.context,
            workers: self
                .menus
                .iter()
                .map(|m| menu::ActionMenu {
                    actions: m
                        .iter()
                        .map(|a| menu::MenuAction { kind: a.kind.clone(), reward: a.reward as f64, post: a.post })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::new() }
    }

    pub fn push(&mut self, exp: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(exp);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Experience {
        &self.items[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub warmup: usize,
    /// Replay updates per decision epoch once warm.
    pub updates_per_epoch: usize,
    pub discount: f64,
    pub value_scale: f64,
    /// Seeds parameter initialization and replay sampling.
    pub seed: u64,
    /// Training budget in simulated days.
    pub days: u32,
    /// Save a checkpoint every this many days (0: only at the end).
    pub checkpoint_every: u32,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            replay_capacity: 50_000,
            batch_size: 32,
            tau: 0.001,
            warmup: 1_000,
            updates_per_epoch: 1,
            discount: 1.0,
            value_scale: 1_000.0,
            seed: 17,
            days: 200,
            checkpoint_every: 25,
        }
    }
}

impl TrainingConfig {
    pub fn arch(&self) -> Vec<usize> {
        std::iter::once(FEATURE_DIM).chain(self.hidden.iter().copied()).chain(std::iter::once(1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub mean_target: f64,
}

/// Inputs and regression targets (in value units) for a sample of experiences.
pub struct Batch {
    pub inputs: Vec<[f64; FEATURE_DIM]>,
    pub targets: Vec<f64>,
}

pub struct Trainer {
    pub value: ValueFunction,
    pub target: Mlp,
    pub replay: ReplayBuffer,
    pub config: TrainingConfig,
    /// Per-worker batch cap used when solving target allocations.
    pub candidate_cap: usize,
    adam: Adam,
    rng: ChaCha8Rng,
    pub steps: u64,
}

impl Trainer {
    pub fn new(config: TrainingConfig, scales: FeatureScales, candidate_cap: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = Mlp::init(&config.arch(), &mut rng);
        Self::with_net(config, scales, candidate_cap, net, rng)
    }

    pub fn with_net(
        config: TrainingConfig,
        scales: FeatureScales,
        candidate_cap: usize,
        net: Mlp,
        rng: ChaCha8Rng,
    ) -> Self {
        let adam = Adam::new(net.params().len(), config.learning_rate);
        Self {
            target: net.clone(),
            value: ValueFunction { net, value_scale: config.value_scale, scales },
            replay: ReplayBuffer::new(config.replay_capacity),
            adam,
            rng,
            steps: 0,
            candidate_cap,
            config,
        }
    }

    pub fn ready(&self) -> bool {
        self.replay.len() >= self.config.warmup.max(self.config.batch_size).max(1)
    }

    /// Regression targets for the given experiences, scored with the target network.
    pub fn batch(&self, sample: &[&Experience]) -> Batch {
        let target = ValueFunction { net: self.target.clone(), ..self.value.clone() };
        let per_exp: Vec<Vec<([f64; FEATURE_DIM], f64)>> = sample
            .par_iter()
            .map(|exp| experience_targets(exp, &target, self.config.discount, self.candidate_cap))
            .collect();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (x, y) in per_exp.into_iter().flatten() {
            inputs.push(x);
            targets.push(y);
        }
        Batch { inputs, targets }
    }

    /// Mean squared error in normalized units and its gradient for the online network.
    pub fn loss_and_grad(&self, net: &Mlp, batch: &Batch) -> (f64, Vec<f64>) {
        let inputs: Vec<&[f64]> = batch.inputs.iter().map(|x| x.as_slice()).collect();
        let targets: Vec<f64> = batch.targets.iter().map(|t| t / self.value.value_scale).collect();
        let mut grad = vec![0.0; net.params().len()];
        let loss = net.mse_grad(&inputs, &targets, &mut grad);
        (loss, grad)
    }

    /// One gradient step on a uniformly sampled minibatch; `None` before warm-up.
    pub fn train_step(&mut self) -> Option<StepStats> {
        if !self.ready() {
            return None;
        }
        let n = self.config.batch_size.min(self.replay.len());
        let picks = rand::seq::index::sample(&mut self.rng, self.replay.len(), n).into_vec();
        let sample: Vec<&Experience> = picks.iter().map(|&i| self.replay.get(i)).collect();
        let batch = self.batch(&sample);
        let (loss, grad) = self.loss_and_grad(&self.value.net, &batch);
        self.adam.step(self.value.net.params_mut(), &grad);
        self.steps += 1;
        let mean_target =
            if batch.targets.is_empty() { 0.0 } else { batch.targets.iter().sum::<f64>() / batch.targets.len() as f64 };
        Some(StepStats { loss, mean_target })
    }

    pub fn sync_target(&mut self) {
        sync_target(&self.value.net, &mut self.target, self.config.tau);
    }
}

fn experience_targets(
    exp: &Experience,
    target: &ValueFunction,
    discount: f64,
    cap: usize,
) -> Vec<([f64; FEATURE_DIM], f64)> {
    let menus = exp.as_menus();
    let mut scratch = Scratch::default();
    let coefs: Vec<Vec<f64>> = menus
        .workers
        .iter()
        .map(|m| {
            m.actions
                .iter()
                .map(|a| {
                    let future =
                        if exp.terminal { 0.0 } else { discount * target.score(&a.post, &menus.context, &mut scratch) };
                    a.reward + future
                })
                .collect()
        })
        .collect();
    let (inst, index) = menu::to_instance(&menus, &coefs, cap);
    let sol = allocation::solve(&inst).expect("stored menus are valid instances");
    let chosen = menu::chosen_actions(&menus, &sol.choices, &index);
    exp.prev
        .iter()
        .zip(&chosen)
        .zip(&coefs)
        .map(|((prev, &a), c)| (featurize(prev, &exp.prev_context, &target.scales), c[a]))
        .collect()
}

/// `target ← τ·net + (1−τ)·target`.
pub fn sync_target(net: &Mlp, target: &mut Mlp, tau: f64) {
    assert!(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
    target.blend_from(net, tau);
}

const MAGIC: &[u8; 8] = b"PKFLVNET";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a value-network checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {CHECKPOINT_VERSION})")]
    Version(u32),
    #[error("architecture {found:?} does not match the expected {expected:?}")]
    Architecture { expected: Vec<usize>, found: Vec<usize> },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
}

pub fn encode_checkpoint(vf: &ValueFunction) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let arch = vf.net.arch();
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    for &w in arch {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    let s = &vf.scales;
    for v in [vf.value_scale, s.max_x, s.max_y, s.delay_minutes, s.drain_per_min] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(vf.net.params().len() as u64).to_le_bytes());
    for p in vf.net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        if self.0.len() < N {
            return Err(CheckpointError::Corrupt("truncated"));
        }
        let (head, tail) = self.0.split_at(N);
        self.0 = tail;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

/// Decodes a checkpoint; `expected_arch` rejects networks of another shape.
pub fn decode_checkpoint(bytes: &[u8], expected_arch: Option<&[usize]>) -> Result<ValueFunction, CheckpointError> {
    let mut c = Cursor(bytes);
    if &c.take::<8>()? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let layers = c.u32()? as usize;
    if layers > 64 {
        return Err(CheckpointError::Corrupt("layer count"));
    }
    let arch = (0..layers).map(|_| c.u32().map(|w| w as usize)).collect::<Result<Vec<_>, _>>()?;
    let expected = expected_arch.map(<[usize]>::to_vec);
    if !valid_arch(&arch) || arch[0] != FEATURE_DIM || expected.as_ref().is_some_and(|e| *e != arch) {
        let expected = expected.unwrap_or_else(|| TrainingConfig::default().arch());
        return Err(CheckpointError::Architecture { expected, found: arch });
    }
    let value_scale = c.f64()?;
    let scales = FeatureScales { max_x: c.f64()?, max_y: c.f64()?, delay_minutes: c.f64()?, drain_per_min: c.f64()? };
    let n = c.u64()? as usize;
    if n != Mlp::zeros(&arch).params().len() || c.0.len() != n * 8 {
        return Err(CheckpointError::Corrupt("parameter count"));
    }
    let params = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
    let net = Mlp::from_params(&arch, params).ok_or(CheckpointError::Corrupt("parameter count"))?;
    if !net.is_finite() || !value_scale.is_finite() || value_scale <= 0.0 {
        return Err(CheckpointError::Corrupt("non-finite values"));
    }
    Ok(ValueFunction { net, value_scale, scales })
}

pub fn save_checkpoint(vf: &ValueFunction, path: &Path) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&encode_checkpoint(vf))?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected_arch: Option<&[usize]>) -> Result<ValueFunction, CheckpointError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes, expected_arch)
}

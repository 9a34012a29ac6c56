//! Per-epoch task-allocation binary program and its exact solver.
//!
//! Every worker picks exactly one action from its menu (a feasible batch, the
//! null action, or, for idle AGVs, charging) and no order may appear in two
//! chosen batches. The objective is the sum of the chosen actions'
//! coefficients.
//!
//! [`solve`] first tries a memoized dynamic program over workers in id order
//! whose state is the set of used orders that later workers could still take.
//! Each worker's actions are tried best coefficient first and the first
//! maximizer wins, so ties go to the lower worker id, then the better-ranked
//! action. Tight instances with a large LP gap stay cheap this way since the
//! state count is bounded by the order subsets actually reachable.
//!
//! When the state table would grow past [`DP_STATE_LIMIT`] the solver falls
//! back to a depth-first branch-and-bound over the same action order. The
//! bound at a node is the smallest of three admissible estimates:
//!
//! * every remaining worker takes its best action that avoids already-used
//!   orders, ignoring conflicts among the remaining workers;
//! * the same with every order priced by a Lagrange multiplier fixed at the
//!   root, plus the prices of the unused orders;
//! * every remaining worker takes its best non-batch action, plus each unused
//!   order contributes the largest per-order share any remaining worker could
//!   get for it.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Objective differences smaller than this are treated as ties.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBatch {
    /// Order indices into the instance's order universe.
    pub orders: Vec<usize>,
    pub coef: f64,
}

/// A worker's action menu. Humans never carry a charge entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerMenu {
    pub batches: Vec<CandidateBatch>,
    pub null: Option<f64>,
    pub charge: Option<f64>,
}

impl WorkerMenu {
    pub fn null_only(coef: f64) -> Self {
        Self { batches: Vec::new(), null: Some(coef), charge: None }
    }

    fn actions(&self) -> impl Iterator<Item = (Choice, f64, &[usize])> {
        let null = self.null.map(|c| (Choice::Null, c, &[][..]));
        let charge = self.charge.map(|c| (Choice::Charge, c, &[][..]));
        null.into_iter()
            .chain(charge)
            .chain(self.batches.iter().enumerate().map(|(i, b)| (Choice::Batch(i), b.coef, b.orders.as_slice())))
    }

    pub fn len(&self) -> usize {
        self.batches.len() + self.null.is_some() as usize + self.charge.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps the `cap` batches with the largest coefficients (stable on ties)
    /// and returns the original positions of the kept batches.
    pub fn truncate_batches(&mut self, cap: usize) -> Vec<usize> {
        if self.batches.len() <= cap {
            return (0..self.batches.len()).collect();
        }
        let mut idx: Vec<usize> = (0..self.batches.len()).collect();
        idx.sort_by(|&a, &b| self.batches[b].coef.total_cmp(&self.batches[a].coef).then(a.cmp(&b)));
        idx.truncate(cap);
        idx.sort_unstable();
        self.batches = idx.iter().map(|&i| self.batches[i].clone()).collect();
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationInstance {
    pub n_orders: usize,
    pub menus: Vec<WorkerMenu>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    Null,
    Charge,
    Batch(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    pub choices: Vec<Choice>,
    pub objective: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("worker {0} has an empty action menu")]
    EmptyMenu(usize),
    #[error("worker {0} has a non-finite coefficient")]
    NonFinite(usize),
    #[error("worker {worker} references order {order} outside the universe of {n}")]
    OrderOutOfRange { worker: usize, order: usize, n: usize },
    #[error("instance too large for exhaustive search ({0} combinations)")]
    TooLarge(f64),
}

impl AllocationInstance {
    pub fn validate(&self) -> Result<(), AllocationError> {
        for (w, menu) in self.menus.iter().enumerate() {
            if menu.is_empty() {
                return Err(AllocationError::EmptyMenu(w));
            }
            for (_, coef, orders) in menu.actions() {
                if !coef.is_finite() {
                    return Err(AllocationError::NonFinite(w));
                }
                if let Some(&o) = orders.iter().find(|&&o| o >= self.n_orders) {
                    return Err(AllocationError::OrderOutOfRange { worker: w, order: o, n: self.n_orders });
                }
            }
        }
        Ok(())
    }

    /// Checks one-action-per-worker and order disjointness; returns the objective.
    pub fn evaluate(&self, choices: &[Choice]) -> Option<f64> {
        if choices.len() != self.menus.len() {
            return None;
        }
        let mut used = vec![false; self.n_orders];
        let mut total = 0.0;
        for (menu, choice) in self.menus.iter().zip(choices) {
            total += match *choice {
                Choice::Null => menu.null?,
                Choice::Charge => menu.charge?,
                Choice::Batch(i) => {
                    let b = menu.batches.get(i)?;
                    for &o in &b.orders {
                        if std::mem::replace(&mut used[o], true) {
                            return None;
                        }
                    }
                    b.coef
                }
            };
        }
        Some(total)
    }
}

struct Action<'a> {
    choice: Choice,
    coef: f64,
    orders: &'a [usize],
}

struct Search<'a> {
    menus: Vec<Vec<Action<'a>>>,
    /// Per worker: `(coef − λ(orders), action index)` sorted best first.
    reduced: Vec<Vec<(f64, usize)>>,
    lambda: Vec<f64>,
    /// Best non-batch coefficient per worker, suffix-summed.
    base_suffix: Vec<f64>,
    /// `share[w][o]`: max over workers v ≥ w of the per-order surplus of batches containing o.
    share: Vec<Vec<f64>>,
    /// Closest lower-id worker with an identical menu.
    twin: Vec<Option<usize>>,
    used: Vec<bool>,
    current: Vec<usize>,
    best: Vec<usize>,
    best_obj: f64,
    /// Nodes left before the search gives up; None = unlimited.
    budget: Option<u64>,
}

/// Order prices from subgradient descent on the Lagrangian dual of the
/// order-disjointness constraints.
fn order_prices(menus: &[Vec<Action<'_>>], n_orders: usize) -> Vec<f64> {
    let lambda = vec![0.0; n_orders];
    if n_orders == 0 {
        return lambda;
    }
    lagrangian(menus, &vec![false; n_orders], lambda, 200).1
}

/// Subgradient descent on the dual of the subproblem over `menus` with the
/// `used` orders forbidden; returns the best dual bound and its prices.
fn lagrangian(menus: &[Vec<Action<'_>>], used: &[bool], mut lambda: Vec<f64>, iters: usize) -> (f64, Vec<f64>) {
    let n_orders = used.len();
    let free = |a: &Action<'_>| a.orders.iter().all(|&o| !used[o]);
    // greedy feasible value as the step target
    let mut taken = used.to_vec();
    let mut lower = 0.0;
    for acts in menus {
        if let Some(a) = acts.iter().find(|a| a.orders.iter().all(|&o| !taken[o])) {
            a.orders.iter().for_each(|&o| taken[o] = true);
            lower += a.coef;
        }
    }
    let mut best = (f64::INFINITY, lambda.clone());
    let mut theta = 1.0;
    let mut stall = 0;
    let mut cover = vec![0i32; n_orders];
    for _ in 0..iters {
        cover.iter_mut().for_each(|c| *c = 0);
        let mut dual: f64 = lambda.iter().zip(used).filter(|&(_, &u)| !u).map(|(l, _)| l).sum();
        for acts in menus {
            let (val, arg) = acts
                .iter()
                .enumerate()
                .filter(|(_, a)| free(a))
                .map(|(i, a)| (a.coef - a.orders.iter().map(|&o| lambda[o]).sum::<f64>(), i))
                .fold((f64::NEG_INFINITY, 0), |acc, (v, i)| if v > acc.0 { (v, i) } else { acc });
            if val == f64::NEG_INFINITY {
                return (f64::NEG_INFINITY, lambda);
            }
            dual += val;
            acts[arg].orders.iter().for_each(|&o| cover[o] += 1);
        }
        if dual < best.0 - 1e-12 {
            best = (dual, lambda.clone());
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                theta /= 2.0;
                stall = 0;
            }
        }
        let norm: f64 = cover
            .iter()
            .enumerate()
            .map(|(o, &c)| {
                let g = (1 - c) as f64;
                if used[o] || (g > 0.0 && lambda[o] == 0.0) {
                    0.0
                } else {
                    g * g
                }
            })
            .sum();
        let gap = dual - lower;
        if norm == 0.0 || gap <= 1e-9 || theta < 1e-4 {
            break;
        }
        let step = theta * gap / norm;
        for ((l, &c), &u) in lambda.iter_mut().zip(&cover).zip(used) {
            if !u {
                *l = (*l - step * (1 - c) as f64).max(0.0);
            }
        }
    }
    let _ = n_orders;
    best
}

/// Each worker's actions, best coefficient first, without dominated actions:
/// an action whose orders include those of a better-ranked one is never part
/// of the lexicographically first optimum, since swapping it keeps feasibility
/// and value and lowers the rank.
fn sorted_menus(inst: &AllocationInstance) -> Vec<Vec<Action<'_>>> {
    inst.menus
        .iter()
        .map(|m| {
            let mut acts: Vec<Action<'_>> =
                m.actions().map(|(choice, coef, orders)| Action { choice, coef, orders }).collect();
            // stable: equal coefficients keep Null, Charge, batch-index order
            acts.sort_by(|a, b| b.coef.total_cmp(&a.coef));
            let mut kept: Vec<Action<'_>> = Vec::with_capacity(acts.len());
            for a in acts {
                if !kept.iter().any(|k| k.orders.iter().all(|o| a.orders.contains(o))) {
                    kept.push(a);
                }
            }
            kept
        })
        .collect()
}

/// States per worker layer the dynamic program may keep before giving up.
pub const DP_STATE_LIMIT: usize = 1_000_000;

/// States per layer kept by the heuristic pass that seeds the exact one.
const DP_BEAM: usize = 1_000;

type Mask = u128;

#[derive(Clone, Copy)]
struct DpState {
    key: Mask,
    value: f64,
    parent: u32,
    action: u32,
}

/// Forward dynamic program over workers in id order. A state is the set of
/// used orders that later workers could still take, holding its best prefix.
struct Dp<'s, 'a> {
    search: &'s Search<'a>,
    masks: Vec<Vec<Mask>>,
    /// Orders reachable by workers `w..`.
    relevant: Vec<Mask>,
    /// Order price per bit.
    price: Vec<f64>,
}

impl<'s, 'a> Dp<'s, 'a> {
    /// None when more orders appear on the menus than a mask can hold.
    fn new(search: &'s Search<'a>) -> Option<Self> {
        let menus = &search.menus;
        let mut bit = vec![None; search.used.len()];
        let mut price = Vec::new();
        for o in menus.iter().flatten().flat_map(|a| a.orders) {
            if bit[*o].is_none() {
                if price.len() == Mask::BITS as usize {
                    return None;
                }
                bit[*o] = Some(price.len());
                price.push(search.lambda[*o]);
            }
        }
        let masks: Vec<Vec<Mask>> = menus
            .iter()
            .map(|acts| {
                acts.iter().map(|a| a.orders.iter().fold(0, |m, &o| m | 1 << bit[o].expect("mapped"))).collect()
            })
            .collect();
        let mut relevant = vec![0; menus.len() + 1];
        for w in (0..menus.len()).rev() {
            relevant[w] = masks[w].iter().fold(relevant[w + 1], |r, &m| r | m);
        }
        Some(Dp { search, masks, relevant, price })
    }

    /// Admissible bound on what workers `w..` add when `key` is used.
    fn bound(&self, w: usize, key: Mask) -> f64 {
        let mut free = self.relevant[w] & !key;
        let mut priced = 0.0;
        while free != 0 {
            priced += self.price[free.trailing_zeros() as usize];
            free &= free - 1;
        }
        let mut greedy = 0.0;
        for v in w..self.masks.len() {
            let masks = &self.masks[v];
            match masks.iter().position(|&m| m & key == 0) {
                Some(k) => greedy += self.search.menus[v][k].coef,
                None => return f64::NEG_INFINITY,
            }
            let (r, _) = *self.search.reduced[v].iter().find(|&&(_, k)| masks[k] & key == 0).expect("free action");
            priced += r;
        }
        greedy.min(priced)
    }

    /// Lexicographically first optimum (by worker, then action rank), skipping
    /// states that cannot reach `incumbent`. None past the state limit. With a
    /// beam only the most promising states of each layer survive, which gives
    /// a feasible assignment but not necessarily an optimal one.
    fn solve(&self, incumbent: f64, beam: Option<usize>) -> Option<Vec<usize>> {
        let n = self.masks.len();
        let mut layers: Vec<Vec<DpState>> = Vec::with_capacity(n + 1);
        layers.push(vec![DpState { key: 0, value: 0.0, parent: u32::MAX, action: 0 }]);
        // key -> (bound of the workers after it, position in the layer if kept)
        let mut index: FxHashMap<Mask, (f64, u32)> = FxHashMap::default();
        for w in 0..n {
            index.clear();
            let mut next: Vec<DpState> = Vec::new();
            // parents are in lexicographic prefix order, so the first state to
            // reach a key with a given value carries the smallest prefix
            for (p, s) in layers[w].iter().enumerate() {
                for (k, &m) in self.masks[w].iter().enumerate() {
                    if m & s.key != 0 {
                        continue;
                    }
                    let key = (s.key | m) & self.relevant[w + 1];
                    let value = s.value + self.search.menus[w][k].coef;
                    let state = DpState { key, value, parent: p as u32, action: k as u32 };
                    let slot = index.entry(key).or_insert_with(|| (self.bound(w + 1, key), u32::MAX));
                    if slot.1 != u32::MAX {
                        let i = slot.1 as usize;
                        if value > next[i].value {
                            next[i] = state;
                        }
                    } else if value + slot.0 >= incumbent - EPS {
                        if next.len() == DP_STATE_LIMIT {
                            return None;
                        }
                        slot.1 = next.len() as u32;
                        next.push(state);
                    }
                }
            }
            if let Some(width) = beam.filter(|&b| next.len() > b) {
                let score = |s: &DpState| s.value + self.bound(w + 1, s.key);
                let mut ranked: Vec<(f64, DpState)> = next.iter().map(|s| (score(s), *s)).collect();
                ranked
                    .sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1.parent, a.1.action).cmp(&(b.1.parent, b.1.action))));
                next = ranked.into_iter().take(width).map(|(_, s)| s).collect();
            }
            next.sort_by_key(|s| (s.parent, s.action));
            layers.push(next);
        }
        let last = layers[n].first()?;
        debug_assert_eq!(layers[n].len(), 1);
        let mut out = vec![0; n];
        let mut at = *last;
        for w in (0..n).rev() {
            out[w] = at.action as usize;
            if w > 0 {
                at = layers[w][at.parent as usize];
            }
        }
        Some(out)
    }
}

impl<'a> Search<'a> {
    fn new(inst: &'a AllocationInstance, menus: Vec<Vec<Action<'a>>>) -> Self {
        let n = inst.menus.len();

        let lambda = order_prices(&menus, inst.n_orders);
        let reduced = menus
            .iter()
            .map(|acts| {
                let mut r: Vec<(f64, usize)> = acts
                    .iter()
                    .enumerate()
                    .map(|(k, a)| (a.coef - a.orders.iter().map(|&o| lambda[o]).sum::<f64>(), k))
                    .collect();
                r.sort_by(|a, b| b.0.total_cmp(&a.0));
                r
            })
            .collect();

        let base: Vec<f64> = inst
            .menus
            .iter()
            .map(|m| {
                let b = m.null.into_iter().chain(m.charge).fold(f64::NEG_INFINITY, f64::max);
                if b.is_finite() {
                    b
                } else {
                    m.batches.iter().map(|x| x.coef).fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let mut base_suffix = vec![0.0; n + 1];
        for w in (0..n).rev() {
            base_suffix[w] = base_suffix[w + 1] + base[w];
        }

        let mut share = vec![vec![0.0; inst.n_orders]; n + 1];
        for w in (0..n).rev() {
            let mut row = share[w + 1].clone();
            for b in &inst.menus[w].batches {
                let surplus = (b.coef - base[w]) / b.orders.len().max(1) as f64;
                for &o in &b.orders {
                    row[o] = f64::max(row[o], surplus);
                }
            }
            share[w] = row;
        }

        let twin = (0..n).map(|w| (0..w).rev().find(|&v| inst.menus[v] == inst.menus[w])).collect();

        Search {
            menus,
            reduced,
            twin,
            lambda,
            base_suffix,
            share,
            used: vec![false; inst.n_orders],
            current: vec![0; n],
            best: Vec::new(),
            best_obj: f64::NEG_INFINITY,
            budget: None,
        }
    }

    fn free(&self, w: usize, k: usize) -> bool {
        self.menus[w][k].orders.iter().all(|&o| !self.used[o])
    }

    /// Upper bound on what workers `w..` can still add.
    fn bound(&self, w: usize) -> f64 {
        let mut greedy = 0.0;
        let mut priced: f64 = self.lambda.iter().zip(&self.used).filter(|&(_, &u)| !u).map(|(l, _)| l).sum();
        for v in w..self.menus.len() {
            match (0..self.menus[v].len()).find(|&k| self.free(v, k)) {
                Some(k) => greedy += self.menus[v][k].coef,
                None => return f64::NEG_INFINITY,
            }
            let (r, _) = *self.reduced[v].iter().find(|&&(_, k)| self.free(v, k)).expect("a free action exists");
            priced += r;
        }
        let per_order: f64 = self.share[w].iter().zip(&self.used).filter(|&(_, &u)| !u).map(|(&s, _)| s.max(0.0)).sum();
        greedy.min(priced).min(self.base_suffix[w] + per_order)
    }

    fn dfs(&mut self, w: usize, value: f64) {
        if let Some(b) = &mut self.budget {
            if *b == 0 {
                return;
            }
            *b -= 1;
        }
        if w == self.menus.len() {
            if value > self.best_obj + EPS || self.best.is_empty() {
                self.best_obj = value;
                self.best = self.current.clone();
            }
            return;
        }
        if !self.best.is_empty() {
            if value + self.bound(w) <= self.best_obj + EPS {
                return;
            }
            if self.menus.len() - w >= 3 {
                let (dual, _) = lagrangian(&self.menus[w..], &self.used, self.lambda.clone(), 20);
                if value + dual <= self.best_obj + EPS {
                    return;
                }
            }
        }
        // identical workers are interchangeable: only visit non-decreasing action ranks,
        // which keeps the lexicographically first optimum reachable
        let first = self.twin[w].map_or(0, |v| self.current[v]);
        for k in first..self.menus[w].len() {
            if !self.free(w, k) {
                continue;
            }
            let coef = self.menus[w][k].coef;
            self.mark(w, k, true);
            self.current[w] = k;
            self.dfs(w + 1, value + coef);
            self.mark(w, k, false);
        }
    }

    fn mark(&mut self, w: usize, k: usize, on: bool) {
        for &o in self.menus[w][k].orders {
            self.used[o] = on;
        }
    }
}

/// Exact optimum of the allocation program.
pub fn solve(inst: &AllocationInstance) -> Result<AllocationSolution, AllocationError> {
    solve_with(inst, Method::Auto)
}

/// Search nodes the branch-and-bound may spend before the dynamic program takes over.
const SEARCH_BUDGET: u64 = 2_000;

#[derive(Clone, Copy, PartialEq)]
#[cfg_attr(not(test), allow(dead_code))]
enum Method {
    /// Budgeted search, then the dynamic program, then unlimited search.
    Auto,
    Search,
    Dp,
}

fn solve_with(inst: &AllocationInstance, method: Method) -> Result<AllocationSolution, AllocationError> {
    inst.validate()?;
    if inst.menus.is_empty() {
        return Ok(AllocationSolution { choices: Vec::new(), objective: 0.0 });
    }
    let mut search = Search::new(inst, sorted_menus(inst));
    let mut picked = None;
    let mut incumbent = f64::NEG_INFINITY;
    if method == Method::Auto {
        search.budget = Some(SEARCH_BUDGET);
        search.dfs(0, 0.0);
        if search.budget != Some(0) && !search.best.is_empty() {
            picked = Some(search.best.clone());
        }
        incumbent = search.best_obj;
    }
    if picked.is_none() && method != Method::Search {
        picked = Dp::new(&search).and_then(|dp| {
            // a narrow pass first tightens the incumbent the exact pass prunes against
            if let Some(beam) = dp.solve(incumbent, Some(DP_BEAM)) {
                let value: f64 = beam.iter().enumerate().map(|(w, &k)| search.menus[w][k].coef).sum();
                incumbent = incumbent.max(value);
            }
            dp.solve(incumbent, None)
        });
    }
    let best = match picked {
        Some(best) => best,
        None => {
            search.budget = None;
            search.best.clear();
            search.best_obj = f64::NEG_INFINITY;
            search.dfs(0, 0.0);
            search.best
        }
    };
    let choices: Vec<Choice> = best.iter().enumerate().map(|(w, &k)| search.menus[w][k].choice).collect();
    let objective = inst.evaluate(&choices).expect("search only visits feasible assignments");
    Ok(AllocationSolution { choices, objective })
}

/// Largest instance (in action combinations) the exhaustive oracle accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Exhaustive enumeration of every action combination; a test oracle.
pub fn brute_force_solve(inst: &AllocationInstance) -> Result<AllocationSolution, AllocationError> {
    inst.validate()?;
    let combos: f64 = inst.menus.iter().map(|m| m.len() as f64).product();
    if combos > BRUTE_FORCE_LIMIT {
        return Err(AllocationError::TooLarge(combos));
    }
    let menus: Vec<Vec<Choice>> = inst.menus.iter().map(|m| m.actions().map(|(c, _, _)| c).collect()).collect();
    let mut idx = vec![0usize; menus.len()];
    let mut best: Option<AllocationSolution> = None;
    loop {
        let choices: Vec<Choice> = idx.iter().zip(&menus).map(|(&i, m)| m[i]).collect();
        if let Some(obj) = inst.evaluate(&choices) {
            if best.as_ref().is_none_or(|b| obj > b.objective) {
                best = Some(AllocationSolution { choices, objective: obj });
            }
        }
        // odometer increment
        let mut w = menus.len();
        loop {
            if w == 0 {
                return Ok(best.unwrap_or(AllocationSolution { choices: Vec::new(), objective: 0.0 }));
            }
            w -= 1;
            idx[w] += 1;
            if idx[w] < menus[w].len() {
                break;
            }
            idx[w] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_instance(seed: u64) -> AllocationInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_workers = rng.random_range(1..=4);
        let n_orders = rng.random_range(0..=5);
        let menus = (0..n_workers)
            .map(|_| {
                let human = rng.random_bool(0.5);
                let n_batches = if n_orders == 0 { 0 } else { rng.random_range(0..=8) };
                let batches = (0..n_batches)
                    .map(|_| {
                        let size = rng.random_range(1..=n_orders.min(3));
                        let mut orders: Vec<usize> = (0..n_orders).collect();
                        for i in 0..size {
                            let j = rng.random_range(i..n_orders);
                            orders.swap(i, j);
                        }
                        orders.truncate(size);
                        orders.sort_unstable();
                        CandidateBatch { orders, coef: rng.random_range(-10.0..10.0) }
                    })
                    .collect();
                WorkerMenu {
                    batches,
                    null: Some(rng.random_range(-10.0..10.0)),
                    charge: (!human).then(|| rng.random_range(-10.0..10.0)),
                }
            })
            .collect();
        AllocationInstance { n_orders, menus }
    }

    #[test]
    fn single_worker_takes_better_batch() {
        let inst = AllocationInstance {
            n_orders: 1,
            menus: vec![WorkerMenu {
                batches: vec![CandidateBatch { orders: vec![0], coef: 5.0 }],
                null: Some(0.0),
                charge: None,
            }],
        };
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.choices, vec![Choice::Batch(0)]);
        assert_eq!(sol.objective, 5.0);
    }

    #[test]
    fn contested_order_goes_to_one_worker() {
        let menu =
            WorkerMenu { batches: vec![CandidateBatch { orders: vec![0], coef: 3.0 }], null: Some(0.0), charge: None };
        let inst = AllocationInstance { n_orders: 1, menus: vec![menu.clone(), menu] };
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.choices, vec![Choice::Batch(0), Choice::Null]);
        assert_eq!(sol.objective, 3.0);
    }

    #[test]
    fn empty_instance() {
        let inst = AllocationInstance { n_orders: 0, menus: vec![] };
        assert_eq!(solve(&inst).unwrap(), AllocationSolution { choices: vec![], objective: 0.0 });
    }

    #[test]
    fn null_only_worker() {
        let inst = AllocationInstance { n_orders: 0, menus: vec![WorkerMenu::null_only(-2.5)] };
        let sol = brute_force_solve(&inst).unwrap();
        assert_eq!(sol.choices, vec![Choice::Null]);
        assert_eq!(sol.objective, -2.5);
    }

    #[test]
    fn equal_coefficients_prefer_lower_action_id() {
        let menu = WorkerMenu { batches: vec![], null: Some(0.0), charge: Some(0.0) };
        let inst = AllocationInstance { n_orders: 0, menus: vec![menu] };
        assert_eq!(solve(&inst).unwrap().choices, vec![Choice::Null]);
    }

    #[test]
    fn rejects_invalid_instances() {
        let bad =
            AllocationInstance { n_orders: 1, menus: vec![WorkerMenu { batches: vec![], null: None, charge: None }] };
        assert_eq!(solve(&bad), Err(AllocationError::EmptyMenu(0)));
        let bad = AllocationInstance { n_orders: 0, menus: vec![WorkerMenu::null_only(f64::NAN)] };
        assert_eq!(solve(&bad), Err(AllocationError::NonFinite(0)));
        let bad = AllocationInstance {
            n_orders: 1,
            menus: vec![WorkerMenu {
                batches: vec![CandidateBatch { orders: vec![3], coef: 1.0 }],
                null: Some(0.0),
                charge: None,
            }],
        };
        assert!(matches!(solve(&bad), Err(AllocationError::OrderOutOfRange { .. })));
    }

    #[test]
    fn brute_force_refuses_huge_instances() {
        let menu = WorkerMenu {
            batches: (0..20).map(|i| CandidateBatch { orders: vec![i], coef: 1.0 }).collect(),
            null: Some(0.0),
            charge: None,
        };
        let inst = AllocationInstance { n_orders: 20, menus: vec![menu; 6] };
        assert!(matches!(brute_force_solve(&inst), Err(AllocationError::TooLarge(_))));
    }

    #[test]
    fn matches_brute_force_on_seeded_instances() {
        for seed in 0..500 {
            let inst = random_instance(seed);
            let fast = solve(&inst).unwrap();
            let slow = brute_force_solve(&inst).unwrap();
            assert_eq!(fast.objective, slow.objective, "seed {seed}");
            assert_eq!(inst.evaluate(&fast.choices), Some(fast.objective));
        }
    }

    #[test]
    fn each_method_matches_brute_force() {
        for seed in 0..500 {
            let inst = random_instance(seed);
            let slow = brute_force_solve(&inst).unwrap().objective;
            for method in [Method::Search, Method::Dp] {
                assert_eq!(solve_with(&inst, method).unwrap().objective, slow, "seed {seed}");
            }
        }
    }

    #[test]
    fn strategies_pick_the_same_tied_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let n_orders = 12;
            let menus = (0..8)
                .map(|_| {
                    let batches = (0..30)
                        .map(|_| {
                            let a = rng.random_range(0..n_orders);
                            let b = rng.random_range(0..n_orders);
                            let orders = if a == b { vec![a] } else { vec![a.min(b), a.max(b)] };
                            CandidateBatch { orders, coef: rng.random_range(1..6) as f64 }
                        })
                        .collect();
                    WorkerMenu { batches, null: Some(0.0), charge: None }
                })
                .collect();
            let inst = AllocationInstance { n_orders, menus };
            let dp = solve_with(&inst, Method::Dp).unwrap();
            let bnb = solve_with(&inst, Method::Search).unwrap();
            assert_eq!(dp, bnb);
        }
    }

    #[test]
    fn identical_workers_match_brute_force() {
        for seed in 0..200 {
            let mut inst = random_instance(seed);
            let copy = inst.menus[0].clone();
            inst.menus.insert(1, copy.clone());
            if seed % 2 == 0 {
                inst.menus.push(copy);
            }
            let fast = solve(&inst).unwrap();
            let slow = brute_force_solve(&inst).unwrap();
            // swapped twins sum the same terms in another order
            assert!((fast.objective - slow.objective).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn truncation_keeps_best_batches() {
        let mut menu = WorkerMenu {
            batches: [3.0, 9.0, 1.0, 9.0, 5.0]
                .iter()
                .enumerate()
                .map(|(i, &c)| CandidateBatch { orders: vec![i], coef: c })
                .collect(),
            null: Some(0.0),
            charge: None,
        };
        assert_eq!(menu.truncate_batches(3), vec![1, 3, 4]);
        let kept: Vec<usize> = menu.batches.iter().map(|b| b.orders[0]).collect();
        assert_eq!(kept, vec![1, 3, 4]);
    }

    proptest! {
        #[test]
        fn solution_satisfies_constraints(seed in 0u64..100_000) {
            let inst = random_instance(seed);
            let sol = solve(&inst).unwrap();
            prop_assert_eq!(sol.choices.len(), inst.menus.len());
            prop_assert!(inst.evaluate(&sol.choices).is_some());
        }

        #[test]
        fn adding_a_batch_never_hurts(seed in 0u64..100_000, coef in -10.0f64..10.0) {
            let mut inst = random_instance(seed);
            let before = solve(&inst).unwrap().objective;
            if inst.n_orders > 0 {
                inst.menus[0].batches.push(CandidateBatch { orders: vec![0], coef });
            }
            prop_assert!(solve(&inst).unwrap().objective >= before - 1e-12);
        }

        #[test]
        fn shifting_one_menu_keeps_its_choice(seed in 0u64..100_000, shift in -20.0f64..20.0) {
            let inst = random_instance(seed);
            let sol = solve(&inst).unwrap();
            let mut shifted = inst.clone();
            let m = &mut shifted.menus[0];
            m.null = m.null.map(|c| c + shift);
            m.charge = m.charge.map(|c| c + shift);
            for b in &mut m.batches {
                b.coef += shift;
            }
            let sol2 = solve(&shifted).unwrap();
            prop_assert!((sol2.objective - (sol.objective + shift)).abs() < 1e-9);
            // exact ties may legitimately resolve differently after rounding
            let other = inst.evaluate(&sol2.choices).unwrap();
            prop_assert!((other - sol.objective).abs() < 1e-9);
        }
    }
}

//! Decision policies: NeurADP, Myopic-ILP and the greedy myopic heuristics.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation;
use crate::fleet::SystemState;
use crate::grid::WorkerKind;
use crate::menu::{self, ActionKind, EpochMenus};
use crate::neuradp::{self, ValueFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Priority {
    HumansFirst,
    AgvsFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicySpec {
    NeurAdp(PathBuf),
    MyopicIlp,
    MyopicHeuristic { priority: Priority, threshold: u8 },
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown policy `{0}` (expected neuradp:<checkpoint>, myopic-ilp, or myopic-{{hf,rf}}-{{20,40,60}})")]
pub struct PolicyParseError(pub String);

impl FromStr for PolicySpec {
    type Err = PolicyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PolicyParseError(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        if lower == "myopic-ilp" {
            return Ok(Self::MyopicIlp);
        }
        if let Some(path) = s.trim().strip_prefix("neuradp:") {
            return if path.is_empty() { Err(err()) } else { Ok(Self::NeurAdp(PathBuf::from(path))) };
        }
        let rest = lower.strip_prefix("myopic-").ok_or_else(err)?;
        let (class, threshold) = rest.split_once('-').ok_or_else(err)?;
        let priority = match class {
            "hf" => Priority::HumansFirst,
            "rf" => Priority::AgvsFirst,
            _ => return Err(err()),
        };
        match threshold {
            "20" | "40" | "60" => Ok(Self::MyopicHeuristic { priority, threshold: threshold.parse().expect("digits") }),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NeurAdp(_) => write!(f, "NeurADP"),
            Self::MyopicIlp => write!(f, "Myopic-ILP"),
            Self::MyopicHeuristic { priority, threshold } => {
                let p = if *priority == Priority::HumansFirst { "HF" } else { "RF" };
                write!(f, "Myopic-{p}-{threshold}")
            }
        }
    }
}

/// A ready-to-run policy; NeurADP carries its loaded value function.
#[derive(Debug, Clone)]
pub enum Policy {
    NeurAdp(ValueFunction),
    MyopicIlp,
    MyopicHeuristic { priority: Priority, threshold: f64 },
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Self::NeurAdp(_) => "NeurADP".into(),
            Self::MyopicIlp => PolicySpec::MyopicIlp.to_string(),
            Self::MyopicHeuristic { priority, threshold } => {
                PolicySpec::MyopicHeuristic { priority: *priority, threshold: *threshold as u8 }.to_string()
            }
        }
    }
}

/// Picks one menu entry per worker.
pub fn decide(policy: &Policy, state: &SystemState, menus: &EpochMenus, cap: usize) -> Vec<usize> {
    match policy {
        Policy::NeurAdp(vf) => solve_menus(menus, &neuradp::coefficients(Some(vf), menus), cap),
        Policy::MyopicIlp => {
            let mut chosen = solve_menus(menus, &neuradp::coefficients(None, menus), cap);
            for (w, c) in chosen.iter_mut().enumerate() {
                let actions = &menus.workers[w].actions;
                if actions[*c].kind == ActionKind::Null && state.workers[w].battery < 100.0 {
                    if let Some(charge) = actions.iter().position(|a| a.kind == ActionKind::Charge) {
                        *c = charge;
                    }
                }
            }
            chosen
        }
        Policy::MyopicHeuristic { priority, threshold } => greedy(state, menus, *priority, *threshold),
    }
}

pub fn solve_menus(menus: &EpochMenus, coefs: &[Vec<f64>], cap: usize) -> Vec<usize> {
    let (inst, index) = menu::to_instance(menus, coefs, cap);
    let sol = allocation::solve(&inst).expect("menus yield valid instances");
    menu::chosen_actions(menus, &sol.choices, &index)
}

fn greedy(state: &SystemState, menus: &EpochMenus, priority: Priority, threshold: f64) -> Vec<usize> {
    let first = if priority == Priority::HumansFirst { WorkerKind::Human } else { WorkerKind::Agv };
    let mut order: Vec<usize> = (0..state.workers.len()).collect();
    order.sort_by_key(|&w| (state.workers[w].kind != first, w));

    let mut claimed = vec![false; menus.n_orders];
    let mut chosen: Vec<Option<usize>> = vec![None; state.workers.len()];
    for w in order {
        let mut best: Option<(usize, f64, &[u16])> = None;
        for (a, action) in menus.workers[w].actions.iter().enumerate() {
            let ActionKind::Batch(orders) = &action.kind else { continue };
            if orders.iter().any(|&o| claimed[o as usize]) {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, r, o)) => {
                    action.reward > r || (action.reward == r && (orders.len(), orders.as_slice()) < (o.len(), o))
                }
            };
            if better {
                best = Some((a, action.reward, orders.as_slice()));
            }
        }
        if let Some((a, _, orders)) = best {
            orders.iter().for_each(|&o| claimed[o as usize] = true);
            chosen[w] = Some(a);
        }
    }

    chosen
        .into_iter()
        .enumerate()
        .map(|(w, c)| {
            c.unwrap_or_else(|| {
                let actions = &menus.workers[w].actions;
                let null = actions.iter().position(|a| a.kind == ActionKind::Null);
                let charge = actions.iter().position(|a| a.kind == ActionKind::Charge);
                match (null, charge) {
                    (Some(_), Some(c)) if state.workers[w].battery < threshold => c,
                    (Some(n), _) => n,
                    (None, Some(c)) => c,
                    (None, None) => unreachable!("every menu offers null or charge"),
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{FleetParams, Worker, WorkerId};
    use crate::grid::{GridMap, LayoutConfig, NodeId};
    use crate::orders::{Order, OrderId};

    fn env() -> (GridMap, FleetParams) {
        (GridMap::build(&LayoutConfig::default()).unwrap(), FleetParams::default())
    }

    fn state(map: &GridMap, n_orders: u32) -> SystemState {
        let d = map.drop_off();
        let workers =
            vec![Worker::new(WorkerId(0), WorkerKind::Human, d, 2), Worker::new(WorkerId(1), WorkerKind::Agv, d, 2)];
        let open = (0..n_orders)
            .map(|i| Order { id: OrderId(i), pickup: i + 1, human_only: false, arrival_epoch: 1, deadline: 1200 })
            .collect();
        SystemState { epoch: 1, workers, open_orders: open }
    }

    fn kinds(menus: &EpochMenus, chosen: &[usize]) -> Vec<ActionKind> {
        chosen.iter().enumerate().map(|(w, &a)| menus.workers[w].actions[a].kind.clone()).collect()
    }

    #[test]
    fn parses_policy_strings() {
        assert_eq!("myopic-ilp".parse(), Ok(PolicySpec::MyopicIlp));
        assert_eq!(
            "Myopic-HF-20".parse(),
            Ok(PolicySpec::MyopicHeuristic { priority: Priority::HumansFirst, threshold: 20 })
        );
        assert_eq!(
            "myopic-rf-60".parse(),
            Ok(PolicySpec::MyopicHeuristic { priority: Priority::AgvsFirst, threshold: 60 })
        );
        assert_eq!("neuradp:ckpt.bin".parse(), Ok(PolicySpec::NeurAdp("ckpt.bin".into())));
        for bad in ["myopic-hf-30", "neuradp:", "greedy", "myopic-xf-20"] {
            assert!(bad.parse::<PolicySpec>().is_err(), "{bad}");
        }
        assert_eq!(
            PolicySpec::MyopicHeuristic { priority: Priority::AgvsFirst, threshold: 40 }.to_string(),
            "Myopic-RF-40"
        );
    }

    #[test]
    fn humans_first_and_robots_first() {
        let (map, params) = env();
        let s = state(&map, 1);
        let menus = menu::build_menus(&s, &map, &params, 288, 20.0);
        let batch = ActionKind::Batch([0u16].into_iter().collect());
        let hf = decide(&Policy::MyopicHeuristic { priority: Priority::HumansFirst, threshold: 20.0 }, &s, &menus, 100);
        assert_eq!(kinds(&menus, &hf), vec![batch.clone(), ActionKind::Null]);
        let rf = decide(&Policy::MyopicHeuristic { priority: Priority::AgvsFirst, threshold: 20.0 }, &s, &menus, 100);
        assert_eq!(kinds(&menus, &rf), vec![ActionKind::Null, batch]);
    }

    #[test]
    fn heuristic_charges_below_threshold() {
        let (map, params) = env();
        let mut s = state(&map, 0);
        s.workers[1].battery = 19.0;
        let menus = menu::build_menus(&s, &map, &params, 288, 20.0);
        let hf = decide(&Policy::MyopicHeuristic { priority: Priority::HumansFirst, threshold: 20.0 }, &s, &menus, 100);
        assert_eq!(kinds(&menus, &hf)[1], ActionKind::Charge);
        s.workers[1].battery = 21.0;
        let menus = menu::build_menus(&s, &map, &params, 288, 20.0);
        let hf = decide(&Policy::MyopicHeuristic { priority: Priority::HumansFirst, threshold: 20.0 }, &s, &menus, 100);
        assert_eq!(kinds(&menus, &hf)[1], ActionKind::Null);
    }

    #[test]
    fn ilp_opportunity_charges_and_breaks_ties_by_worker_id() {
        let (map, params) = env();
        let mut s = state(&map, 1);
        s.workers[1].battery = 99.0;
        // same pickup distance for both: the lower worker id wins
        let menus = menu::build_menus(&s, &map, &params, 288, 20.0);
        let ilp = decide(&Policy::MyopicIlp, &s, &menus, 100);
        assert_eq!(kinds(&menus, &ilp), vec![ActionKind::Batch([0u16].into_iter().collect()), ActionKind::Charge]);
    }

    #[test]
    fn ilp_dominates_heuristics_on_immediate_reward() {
        let (map, params) = env();
        for n in 0..6 {
            let mut s = state(&map, n);
            s.workers.push(Worker::new(WorkerId(2), WorkerKind::Agv, NodeId(50), 3));
            let menus = menu::build_menus(&s, &map, &params, 288, 20.0);
            let reward =
                |c: &[usize]| c.iter().enumerate().map(|(w, &a)| menus.workers[w].actions[a].reward).sum::<f64>();
            let ilp = reward(&decide(&Policy::MyopicIlp, &s, &menus, 100));
            for priority in [Priority::HumansFirst, Priority::AgvsFirst] {
                let h = reward(&decide(&Policy::MyopicHeuristic { priority, threshold: 40.0 }, &s, &menus, 100));
                assert!(ilp >= h - 1e-9);
            }
        }
    }
}

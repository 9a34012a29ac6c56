//! Warehouse grid graph and travel-time queries.
//!
//! The layout is a row of shelf corridors. Each corridor is a vertical aisle
//! lined by shelf cells; the aisle mouths are joined by cross-aisles along the
//! bottom and top rows. The drop-off sits in the bottom-left corner and the two
//! chargers in the bottom-right and top-left corners.
//!
//! Hop counts between all node pairs are computed once by breadth-first search
//! when the map is built, so every travel query afterwards is a table lookup.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an aisle node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Worker class; travel speed and battery handling depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkerKind {
    Human,
    Agv,
}

impl WorkerKind {
    pub fn is_human(self) -> bool {
        matches!(self, WorkerKind::Human)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("corridor count must be at least 1, got {0}")]
    NoCorridors(u32),
    #[error("cells per corridor must be at least 1, got {0}")]
    NoCells(u32),
    #[error("shelf cells per aisle node must be 1 to 4, got {0}")]
    BadShelfSides(u32),
    #[error("edge traversal time for {0:?} must be positive")]
    NonPositiveEdgeTime(WorkerKind),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("no path between {0} and {1}")]
    Unreachable(NodeId, NodeId),
}

/// Layout parameters. Corridor/cell counts default to 9 × 20 = 180 pick-up locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub corridors: u32,
    pub cells_per_corridor: u32,
    /// Shelf cells served by each aisle node (two sides, possibly two levels), 1 to 4.
    pub shelf_sides: u32,
    pub human_edge_seconds: u64,
    pub agv_edge_seconds: u64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { corridors: 9, cells_per_corridor: 20, shelf_sides: 4, human_edge_seconds: 30, agv_edge_seconds: 30 }
    }
}

/// Immutable warehouse graph.
#[derive(Debug, Clone)]
pub struct GridMap {
    coords: Vec<(u32, u32)>,
    adjacency: Vec<Vec<NodeId>>,
    pickups: Vec<NodeId>,
    drop_off: NodeId,
    chargers: [NodeId; 2],
    hops: Vec<u32>,
    human_edge_seconds: u64,
    agv_edge_seconds: u64,
    width: u32,
    height: u32,
}

impl GridMap {
    pub fn build(config: &LayoutConfig) -> Result<Self, GridError> {
        if config.corridors < 1 {
            return Err(GridError::NoCorridors(config.corridors));
        }
        if config.cells_per_corridor < 1 {
            return Err(GridError::NoCells(config.cells_per_corridor));
        }
        if !(1..=4).contains(&config.shelf_sides) {
            return Err(GridError::BadShelfSides(config.shelf_sides));
        }
        if config.human_edge_seconds == 0 {
            return Err(GridError::NonPositiveEdgeTime(WorkerKind::Human));
        }
        if config.agv_edge_seconds == 0 {
            return Err(GridError::NonPositiveEdgeTime(WorkerKind::Agv));
        }

        let depth = config.cells_per_corridor.div_ceil(config.shelf_sides);
        // rows: 0 = bottom cross-aisle, 1..=depth = shelf rows, depth + 1 = top cross-aisle
        let rows = depth + 2;
        let width = config.corridors;
        let id_of = |x: u32, y: u32| NodeId(x * rows + y);

        let n = (width * rows) as usize;
        let mut coords = Vec::with_capacity(n);
        for x in 0..width {
            for y in 0..rows {
                coords.push((x, y));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut link = |a: NodeId, b: NodeId| {
            adjacency[a.index()].push(b);
            adjacency[b.index()].push(a);
        };
        for x in 0..width {
            for y in 0..rows - 1 {
                link(id_of(x, y), id_of(x, y + 1));
            }
        }
        for x in 0..width - 1 {
            link(id_of(x, 0), id_of(x + 1, 0));
            link(id_of(x, rows - 1), id_of(x + 1, rows - 1));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let mut pickups = Vec::with_capacity((width * config.cells_per_corridor) as usize);
        for x in 0..width {
            for cell in 0..config.cells_per_corridor {
                pickups.push(id_of(x, 1 + cell / config.shelf_sides));
            }
        }

        let drop_off = id_of(0, 0);
        let chargers = [id_of(width - 1, 0), id_of(0, rows - 1)];

        let mut map = GridMap {
            coords,
            adjacency,
            pickups,
            drop_off,
            chargers,
            hops: Vec::new(),
            human_edge_seconds: config.human_edge_seconds,
            agv_edge_seconds: config.agv_edge_seconds,
            width,
            height: rows,
        };
        map.hops = all_pairs_hops(&map.adjacency);
        if map.hops.contains(&u32::MAX) {
            return Err(GridError::Unreachable(NodeId(0), NodeId(n as u32 - 1)));
        }
        Ok(map)
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.coords.len() as u32).map(NodeId)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.coords.len()
    }

    pub fn coords(&self, node: NodeId) -> (u32, u32) {
        self.coords[node.index()]
    }

    /// Largest x and y coordinates, used for normalization.
    pub fn extent(&self) -> (u32, u32) {
        (self.width - 1, self.height - 1)
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.index()]
    }

    /// Undirected edge list with `a < b`.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (i, adj) in self.adjacency.iter().enumerate() {
            for &b in adj {
                if (i as u32) < b.0 {
                    out.push((NodeId(i as u32), b));
                }
            }
        }
        out
    }

    pub fn pickup_count(&self) -> usize {
        self.pickups.len()
    }

    /// Aisle node serving a pick-up location.
    pub fn pickup_node(&self, pickup: usize) -> NodeId {
        self.pickups[pickup]
    }

    pub fn drop_off(&self) -> NodeId {
        self.drop_off
    }

    pub fn chargers(&self) -> [NodeId; 2] {
        self.chargers
    }

    pub fn is_charger(&self, node: NodeId) -> bool {
        self.chargers.contains(&node)
    }

    pub fn edge_seconds(&self, kind: WorkerKind) -> u64 {
        match kind {
            WorkerKind::Human => self.human_edge_seconds,
            WorkerKind::Agv => self.agv_edge_seconds,
        }
    }

    /// Shortest-path hop count. Both nodes must exist.
    #[inline]
    pub fn hops(&self, from: NodeId, to: NodeId) -> u32 {
        self.hops[from.index() * self.coords.len() + to.index()]
    }

    /// Travel time without validation; for hot paths over known-valid nodes.
    #[inline]
    pub fn travel_secs(&self, from: NodeId, to: NodeId, kind: WorkerKind) -> u64 {
        self.hops(from, to) as u64 * self.edge_seconds(kind)
    }

    pub fn travel_time(&self, from: NodeId, to: NodeId, kind: WorkerKind) -> Result<u64, GridError> {
        for node in [from, to] {
            if !self.contains(node) {
                return Err(GridError::UnknownNode(node));
            }
        }
        match self.hops(from, to) {
            u32::MAX => Err(GridError::Unreachable(from, to)),
            h => Ok(h as u64 * self.edge_seconds(kind)),
        }
    }

    /// Charger with the smallest travel time; ties go to the lower node id.
    pub fn nearest_charger(&self, node: NodeId, kind: WorkerKind) -> (NodeId, u64) {
        let mut best = (self.chargers[0], self.travel_secs(node, self.chargers[0], kind));
        for &c in &self.chargers[1..] {
            let secs = self.travel_secs(node, c, kind);
            if secs < best.1 || (secs == best.1 && c < best.0) {
                best = (c, secs);
            }
        }
        best
    }

    /// First node on a shortest path from `from` toward `to` (lowest id among candidates).
    pub fn next_hop(&self, from: NodeId, to: NodeId) -> NodeId {
        if from == to {
            return from;
        }
        let remaining = self.hops(from, to);
        self.adjacency[from.index()]
            .iter()
            .copied()
            .find(|&nb| self.hops(nb, to) + 1 == remaining)
            .expect("connected map always has a descending neighbor")
    }
}

fn all_pairs_hops(adjacency: &[Vec<NodeId>]) -> Vec<u32> {
    let n = adjacency.len();
    let mut hops = vec![u32::MAX; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for src in 0..n {
        let row = &mut hops[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let d = row[u];
            for v in &adjacency[u] {
                if row[v.index()] == u32::MAX {
                    row[v.index()] = d + 1;
                    queue.push_back(v.index());
                }
            }
        }
    }
    hops
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    /// Independent BFS over the explicit edge list.
    fn oracle_hops(map: &GridMap, from: NodeId, to: NodeId) -> u32 {
        let mut adj: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for (a, b) in map.edges() {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut dist: HashMap<NodeId, u32> = HashMap::from([(from, 0)]);
        let mut q = VecDeque::from([from]);
        while let Some(u) = q.pop_front() {
            if u == to {
                return dist[&u];
            }
            for &v in adj.get(&u).into_iter().flatten() {
                if !dist.contains_key(&v) {
                    dist.insert(v, dist[&u] + 1);
                    q.push_back(v);
                }
            }
        }
        u32::MAX
    }

    fn default_map() -> GridMap {
        GridMap::build(&LayoutConfig::default()).unwrap()
    }

    #[test]
    fn default_layout_counts() {
        let map = default_map();
        assert_eq!(map.pickup_count(), 180);
        assert_eq!(map.chargers().len(), 2);
        assert_ne!(map.chargers()[0], map.chargers()[1]);
        assert!(map.contains(map.drop_off()));
        assert!(!map.is_charger(map.drop_off()));
        assert_eq!(map.coords(map.drop_off()), (0, 0));
    }

    #[test]
    fn every_pickup_is_served_by_an_adjacent_aisle_node() {
        let map = default_map();
        for p in 0..map.pickup_count() {
            let (x, y) = map.coords(map.pickup_node(p));
            // shelf rows only, never a cross-aisle node
            assert!(y >= 1 && y < map.extent().1, "pickup {p} at {x},{y}");
        }
    }

    #[test]
    fn minimal_layout() {
        let cfg = LayoutConfig { corridors: 1, cells_per_corridor: 1, ..LayoutConfig::default() };
        let map = GridMap::build(&cfg).unwrap();
        assert_eq!(map.pickup_count(), 1);
        for a in map.nodes() {
            for b in map.nodes() {
                assert!(map.travel_time(a, b, WorkerKind::Human).is_ok());
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = default_map();
        let b = default_map();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.pickups, b.pickups);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = LayoutConfig::default();
        assert_eq!(
            GridMap::build(&LayoutConfig { corridors: 0, ..base.clone() }).unwrap_err(),
            GridError::NoCorridors(0)
        );
        assert_eq!(
            GridMap::build(&LayoutConfig { cells_per_corridor: 0, ..base.clone() }).unwrap_err(),
            GridError::NoCells(0)
        );
        assert!(GridMap::build(&LayoutConfig { agv_edge_seconds: 0, ..base.clone() }).is_err());
        assert!(GridMap::build(&LayoutConfig { human_edge_seconds: 0, ..base }).is_err());
    }

    #[test]
    fn travel_time_examples() {
        let map = default_map();
        let d = map.drop_off();
        assert_eq!(map.travel_time(d, d, WorkerKind::Human).unwrap(), 0);
        let nb = map.neighbors(d)[0];
        assert_eq!(map.travel_time(d, nb, WorkerKind::Human).unwrap(), 30);

        let bottom_right = map.chargers()[0];
        assert_eq!(map.coords(bottom_right), (8, 0));
        let expected = oracle_hops(&map, d, bottom_right) as u64 * 30;
        assert_eq!(map.travel_time(d, bottom_right, WorkerKind::Agv).unwrap(), expected);
        assert_eq!(map.travel_time(NodeId(9999), d, WorkerKind::Agv), Err(GridError::UnknownNode(NodeId(9999))));
    }

    #[test]
    fn nearest_charger_examples() {
        let map = default_map();
        for c in map.chargers() {
            assert_eq!(map.nearest_charger(c, WorkerKind::Agv), (c, 0));
        }
        let d = map.drop_off();
        let [c0, c1] = map.chargers();
        let (h0, h1) = (oracle_hops(&map, d, c0), oracle_hops(&map, d, c1));
        let expect = if h0 < h1 || (h0 == h1 && c0 < c1) { c0 } else { c1 };
        assert_eq!(map.nearest_charger(d, WorkerKind::Agv).0, expect);

        for n in map.nodes() {
            let (a, b) = (map.hops(n, c0), map.hops(n, c1));
            let want = if a < b || (a == b && c0 < c1) { c0 } else { c1 };
            assert_eq!(map.nearest_charger(n, WorkerKind::Agv).0, want);
        }
    }

    #[test]
    fn hop_table_matches_oracle_everywhere_on_small_map() {
        let cfg = LayoutConfig { corridors: 3, cells_per_corridor: 5, ..LayoutConfig::default() };
        let map = GridMap::build(&cfg).unwrap();
        for a in map.nodes() {
            for b in map.nodes() {
                assert_eq!(map.hops(a, b), oracle_hops(&map, a, b));
            }
        }
    }

    #[test]
    fn next_hop_walks_a_shortest_path() {
        let map = default_map();
        for a in map.nodes().step_by(7) {
            for b in map.nodes().step_by(5) {
                let mut cur = a;
                let mut steps = 0;
                while cur != b {
                    cur = map.next_hop(cur, b);
                    steps += 1;
                }
                assert_eq!(steps, map.hops(a, b));
            }
        }
    }

    proptest! {
        #[test]
        fn travel_time_is_a_metric(a in 0u32..132, b in 0u32..132, c in 0u32..132) {
            let map = default_map();
            let n = map.node_count() as u32;
            let (a, b, c) = (NodeId(a % n), NodeId(b % n), NodeId(c % n));
            let k = WorkerKind::Human;
            let ab = map.travel_time(a, b, k).unwrap();
            prop_assert_eq!(ab, map.travel_time(b, a, k).unwrap());
            prop_assert!(ab <= map.travel_time(a, c, k).unwrap() + map.travel_time(c, b, k).unwrap());
            prop_assert_eq!(map.hops(a, b), oracle_hops(&map, a, b));
        }

        #[test]
        fn nearest_charger_is_minimal(node in 0u32..132) {
            let map = default_map();
            let node = NodeId(node % map.node_count() as u32);
            let (_, secs) = map.nearest_charger(node, WorkerKind::Agv);
            for c in map.chargers() {
                prop_assert!(secs <= map.travel_secs(node, c, WorkerKind::Agv));
            }
        }

        #[test]
        fn edge_time_scales_linearly(k in 1u64..6, a in 0u32..132, b in 0u32..132) {
            let base = default_map();
            let scaled = GridMap::build(&LayoutConfig {
                human_edge_seconds: 30 * k,
                ..LayoutConfig::default()
            }).unwrap();
            let n = base.node_count() as u32;
            let (a, b) = (NodeId(a % n), NodeId(b % n));
            prop_assert_eq!(
                scaled.travel_time(a, b, WorkerKind::Human).unwrap(),
                k * base.travel_time(a, b, WorkerKind::Human).unwrap()
            );
        }
    }
}

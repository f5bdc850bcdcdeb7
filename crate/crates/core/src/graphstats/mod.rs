//! Pairing schedules viewed as weighted bipartite multigraphs: connectivity,
//! shortest paths between speakers and listeners, and edge-weight structure.

use std::collections::BTreeMap;

use petgraph::algo::{dijkstra, ford_fulkerson};
use petgraph::graph::{DiGraph, NodeIndex, UnGraph};
use petgraph::unionfind::UnionFind;

use crate::population::PairingSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Agent {
    Speaker(usize),
    Listener(usize),
}

/// Speakers and listeners as nodes; one edge per distinct pairing, weighted
/// by how often it occurs.
#[derive(Debug, Clone)]
pub struct PairingGraph {
    graph: UnGraph<Agent, u32>,
    speakers: Vec<NodeIndex>,
    listeners: Vec<NodeIndex>,
}

impl PairingGraph {
    /// Builds the graph of arbitrary `(speaker, listener)` pairings over
    /// `speakers` × `listeners` ids.
    pub fn from_pairs(speakers: usize, listeners: usize, pairs: &[(usize, usize)]) -> Self {
        let mut graph = UnGraph::default();
        let s: Vec<NodeIndex> = (0..speakers).map(|i| graph.add_node(Agent::Speaker(i))).collect();
        let l: Vec<NodeIndex> = (0..listeners).map(|i| graph.add_node(Agent::Listener(i))).collect();
        let mut weights: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for &(a, b) in pairs {
            assert!(a < speakers && b < listeners, "pair ({a}, {b}) out of range");
            *weights.entry((a, b)).or_default() += 1;
        }
        for ((a, b), w) in weights {
            graph.add_edge(s[a], l[b], w);
        }
        Self {
            graph,
            speakers: s,
            listeners: l,
        }
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// `(speaker, listener, weight)` for every distinct pairing.
    pub fn edges(&self) -> Vec<(usize, usize, u32)> {
        let mut out: Vec<_> = self
            .graph
            .edge_indices()
            .filter_map(|e| {
                let (a, b) = self.graph.edge_endpoints(e)?;
                match (self.graph[a], self.graph[b]) {
                    (Agent::Speaker(s), Agent::Listener(l)) | (Agent::Listener(l), Agent::Speaker(s)) => {
                        Some((s, l, self.graph[e]))
                    }
                    _ => None,
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn total_weight(&self) -> u32 {
        self.graph.edge_weights().sum()
    }

    pub fn weighted_degree(&self, agent: Agent) -> u32 {
        self.graph.edges(self.index(agent)).map(|e| *e.weight()).sum()
    }

    fn index(&self, agent: Agent) -> NodeIndex {
        match agent {
            Agent::Speaker(i) => self.speakers[i],
            Agent::Listener(i) => self.listeners[i],
        }
    }

    fn agents(&self) -> impl Iterator<Item = Agent> + '_ {
        self.graph.node_indices().map(|i| self.graph[i])
    }
}

pub fn build_pairing_graph(schedule: &PairingSchedule) -> PairingGraph {
    let half = schedule.n() / 2;
    PairingGraph::from_pairs(half, half, schedule.pairs())
}

/// Connected components, each sorted, listed in order of their smallest
/// member.
pub fn connected_components(g: &PairingGraph) -> Vec<Vec<Agent>> {
    let mut uf = UnionFind::<usize>::new(g.graph.node_count());
    for e in g.graph.edge_indices() {
        if let Some((a, b)) = g.graph.edge_endpoints(e) {
            uf.union(a.index(), b.index());
        }
    }
    let mut groups: BTreeMap<usize, Vec<Agent>> = BTreeMap::new();
    for i in g.graph.node_indices() {
        groups.entry(uf.find(i.index())).or_default().push(g.graph[i]);
    }
    let mut out: Vec<Vec<Agent>> = groups
        .into_values()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    out.sort_unstable();
    out
}

/// Components that do not contain every agent. Empty for a connected graph.
pub fn islands(g: &PairingGraph) -> Vec<Vec<Agent>> {
    let components = connected_components(g);
    if components.len() <= 1 {
        return Vec::new();
    }
    components
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    /// Mean and maximum hop count over reachable speaker-listener pairs.
    pub mean: f64,
    pub max: usize,
    pub reachable: usize,
    pub unreachable: usize,
}

/// Unweighted shortest-path lengths between every speaker and every
/// listener.
pub fn path_length_stats(g: &PairingGraph) -> PathStats {
    let (mut sum, mut max, mut reachable, mut unreachable) = (0usize, 0usize, 0usize, 0usize);
    for &s in &g.speakers {
        let dist = dijkstra(&g.graph, s, None, |_| 1usize);
        for l in &g.listeners {
            match dist.get(l) {
                Some(&d) => {
                    sum += d;
                    max = max.max(d);
                    reachable += 1;
                }
                None => unreachable += 1,
            }
        }
    }
    PathStats {
        mean: if reachable == 0 { 0.0 } else { sum as f64 / reachable as f64 },
        max,
        reachable,
        unreachable,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightStats {
    /// Edge weight to number of distinct pairings with that weight.
    pub histogram: BTreeMap<u32, usize>,
    /// Pairings that occur exactly once.
    pub minimal_edges: usize,
    /// Speaker-listener pairs that never occur.
    pub anti_edges: usize,
}

pub fn edge_weight_stats(g: &PairingGraph) -> WeightStats {
    let mut histogram = BTreeMap::new();
    for w in g.graph.edge_weights() {
        *histogram.entry(*w).or_default() += 1;
    }
    let distinct = g.graph.edge_count();
    WeightStats {
        minimal_edges: histogram.get(&1).copied().unwrap_or(0),
        anti_edges: g.speakers.len() * g.listeners.len() - distinct,
        histogram,
    }
}

/// Number of distinct pairings that must be removed to separate `a` from
/// `b`, by max-flow with unit capacity on each edge in both directions.
pub fn edge_connectivity_between(g: &PairingGraph, a: Agent, b: Agent) -> u32 {
    if a == b {
        return 0;
    }
    let mut flow = DiGraph::<(), u32>::with_capacity(g.graph.node_count(), 2 * g.graph.edge_count());
    for _ in g.graph.node_indices() {
        flow.add_node(());
    }
    for e in g.graph.edge_indices() {
        if let Some((x, y)) = g.graph.edge_endpoints(e) {
            flow.add_edge(x, y, 1);
            flow.add_edge(y, x, 1);
        }
    }
    ford_fulkerson(&flow, g.index(a), g.index(b)).0
}

/// Global edge connectivity: the minimum over all agents of the
/// connectivity to the first speaker. Zero when the graph is disconnected.
pub fn edge_connectivity(g: &PairingGraph) -> u32 {
    let Some(root) = g.agents().next() else {
        return 0;
    };
    g.agents()
        .skip(1)
        .map(|v| edge_connectivity_between(g, root, v))
        .min()
        .unwrap_or(0)
}

/// Everything the `analyze-graph` command reports.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphReport {
    pub nodes: usize,
    pub total_weight: u32,
    pub distinct_edges: usize,
    pub components: usize,
    pub largest_component: usize,
    pub paths: PathStats,
    pub weights: WeightStats,
    pub edge_connectivity: u32,
}

impl GraphReport {
    pub fn of(g: &PairingGraph) -> Self {
        let components = connected_components(g);
        let weights = edge_weight_stats(g);
        Self {
            nodes: g.node_count(),
            total_weight: g.total_weight(),
            distinct_edges: weights.histogram.values().sum(),
            components: components.len(),
            largest_component: components.iter().map(Vec::len).max().unwrap_or(0),
            paths: path_length_stats(g),
            weights,
            edge_connectivity: edge_connectivity(g),
        }
    }

    /// `statistic,value` rows.
    pub fn stats_csv(&self) -> String {
        let rows: [(&str, String); 11] = [
            ("nodes", self.nodes.to_string()),
            ("total_weight", self.total_weight.to_string()),
            ("distinct_edges", self.distinct_edges.to_string()),
            ("components", self.components.to_string()),
            ("largest_component", self.largest_component.to_string()),
            ("mean_path_length", format!("{:.6}", self.paths.mean)),
            ("max_path_length", self.paths.max.to_string()),
            ("unreachable_pairs", self.paths.unreachable.to_string()),
            ("minimal_edges", self.weights.minimal_edges.to_string()),
            ("anti_edges", self.weights.anti_edges.to_string()),
            ("edge_connectivity", self.edge_connectivity.to_string()),
        ];
        let mut out = String::from("statistic,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    /// `weight,count` rows in increasing weight.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("weight,count\n");
        for (w, c) in &self.weights.histogram {
            out.push_str(&format!("{w},{c}\n"));
        }
        out
    }
}

//! Graph statistics and the traversal-size benchmark.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::time::Instant;

use chrono::{TimeZone, Utc};

use crate::graph::{Edge, EdgeId, GraphSchema, KnowledgeGraph, Label, NodeId};
use crate::protocol::{Depth, ReturnFormat};
use crate::traversal::{traverse, ExecutionLimits};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Diameter {
    /// Every ordered pair is connected; the longest shortest path.
    Finite(usize),
    /// Some pair is unreachable; carries the largest finite eccentricity.
    Unreached(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    /// Mean out-degree, `E / N`.
    pub avg_degree: f64,
    /// Mean in-plus-out degree, `2E / N`.
    pub avg_total_degree: f64,
    /// `E / (N (N - 1))`; zero for a single node.
    pub density: f64,
    pub diameter: Diameter,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("graph has no nodes")]
pub struct EmptyGraph;

pub fn compute_stats(graph: &KnowledgeGraph) -> Result<GraphStats, EmptyGraph> {
    let n = graph.node_count();
    if n == 0 {
        return Err(EmptyGraph);
    }
    let e = graph.edge_count();
    let density = if n > 1 { e as f64 / (n as f64 * (n as f64 - 1.0)) } else { 0.0 };

    // all-pairs BFS over the union of edge types, on dense indices
    let ids: Vec<&NodeId> = graph.nodes().map(|x| &x.id).collect();
    let index: HashMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut adj = vec![BTreeSet::new(); n];
    for edge in graph.edges() {
        adj[index[&edge.from]].insert(index[&edge.to]);
    }
    let mut longest = 0;
    let mut all_reached = true;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            longest = longest.max(dist[u]);
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        all_reached &= reached == n;
    }
    Ok(GraphStats {
        node_count: n,
        edge_count: e,
        avg_degree: e as f64 / n as f64,
        avg_total_degree: 2.0 * e as f64 / n as f64,
        density,
        diameter: if all_reached { Diameter::Finite(longest) } else { Diameter::Unreached(longest) },
    })
}

/// Out-regular synthetic graph on `n` nodes `N:0..N:{n-1}` in heap layout:
/// node `i` has edges of type `t0` to `i*r + j + 1 (mod n)` for `j < r`.
/// Up to the depth where `r^h` leaves still fit below `n`, the graph looks
/// like a complete `r`-ary tree from node 0.
pub fn regular_graph(n: usize, r: usize) -> KnowledgeGraph {
    let mut schema = GraphSchema::default();
    schema.allow("N", "t0", "N");
    let mut g = KnowledgeGraph::new(schema);
    let id = |i: usize| NodeId::new(&format!("N:{i}")).expect("valid id");
    for i in 0..n {
        let node = g.make_node(id(i), Label::new("N"), "", Default::default());
        g.insert_node(node).expect("fresh node");
    }
    let ts = Utc.timestamp_opt(0, 0).unwrap();
    for i in 0..n {
        for j in 0..r {
            let edge = Edge {
                id: EdgeId(0),
                from: id(i),
                to: id((i * r + j + 1) % n),
                edge_type: Label::new("t0"),
                weight: 1.0,
                timestamp: ts,
                provenance: None,
            };
            g.insert_edge(edge, None).expect("endpoints exist");
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchRow {
    pub n: usize,
    pub r: usize,
    pub h: u32,
    pub sources: usize,
    pub via: usize,
    pub expanded_nodes: usize,
    pub bound: usize,
    pub elapsed_ms: u64,
}

impl BenchRow {
    pub fn within_bound(&self) -> bool {
        self.expanded_nodes <= self.bound
    }
}

/// One row per (n, r, h), traversing from `N:0` with limits disabled.
/// The `seed` only permutes adjacency storage; results must not depend on it.
pub fn bench_traversal(sizes: &[usize], degrees: &[usize], depths: &[u32], seed: u64) -> Vec<BenchRow> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let via: BTreeSet<Label> = [Label::new("t0")].into();
    let mut rows = Vec::new();
    for &n in sizes {
        for &r in degrees {
            let mut g = regular_graph(n, r);
            g.permute_adjacency(&mut rng);
            let sources: BTreeSet<NodeId> = [NodeId::lit("N:0")].into();
            for &h in depths {
                let started = Instant::now();
                let res = traverse(&sources, &via, Depth::Finite(h), ReturnFormat::Subgraph, None, &ExecutionLimits::unlimited(), &g)
                    .expect("source exists");
                rows.push(BenchRow {
                    n,
                    r,
                    h,
                    sources: 1,
                    via: 1,
                    expanded_nodes: res.stats.expanded_nodes,
                    bound: sources.len() * (r * via.len()).pow(h),
                    elapsed_ms: started.elapsed().as_millis() as u64,
                });
            }
        }
    }
    rows
}

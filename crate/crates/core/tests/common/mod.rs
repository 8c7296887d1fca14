//! Shared helpers for the integration suites: fixture paths, a random graph
//! generator and brute-force oracles written independently of the library.

#![allow(dead_code)]

pub mod deltas;
pub mod envelopes;
pub mod logs;
pub mod runs;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use g2cp::agents::{load_scenario, run_scenario, HarnessConfig, Scenario, ScenarioOutcome};
use g2cp::graph::load_graph_str;
use g2cp::{KnowledgeGraph, Label, NodeId};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn fixture_graph(rel: &str) -> KnowledgeGraph {
    load_graph_str(&read_fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn run_fixture(name: &str) -> (Scenario, ScenarioOutcome) {
    let (sc, graph) = load_scenario(&fixture(&format!("scenarios/{name}.json"))).expect("scenario loads");
    let out = run_scenario(&sc, &graph, HarnessConfig::default());
    (sc, out)
}

/// Every scenario file shipped under `fixtures/scenarios`.
pub fn all_scenarios() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixture("scenarios"))
        .expect("scenario dir")
        .filter_map(|e| e.ok())
        .filter_map(|e| e.path().file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    names
}

pub const NODE_TYPES: [&str; 2] = ["A", "B"];
pub const EDGE_TYPES: [&str; 4] = ["t0", "t1", "t2", "t3"];

pub type Triple = (String, String, String);

/// A random graph kept in two forms: loader text and plain tuples.
#[derive(Clone, Debug)]
pub struct RandGraph {
    pub jsonl: String,
    pub nodes: Vec<(String, String)>,
    /// (from, type, to, weight)
    pub edges: Vec<(String, String, String, f64)>,
}

impl RandGraph {
    pub fn load(&self) -> KnowledgeGraph {
        load_graph_str(&self.jsonl).expect("generated graph loads")
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().map(|(id, _)| id.clone()).collect()
    }
}

/// Schema record allowing every (node type, edge type, node type) triple.
pub fn open_schema_record() -> String {
    let mut sigs = Vec::new();
    for a in NODE_TYPES {
        for e in EDGE_TYPES {
            for b in NODE_TYPES {
                sigs.push(serde_json::json!([a, e, b]));
            }
        }
    }
    serde_json::json!({
        "kind": "schema",
        "node_types": NODE_TYPES,
        "edge_types": EDGE_TYPES,
        "signatures": sigs,
    })
    .to_string()
}

/// Up to `max_nodes` nodes and `max_edges` edges; parallel edges and
/// self-loops allowed, timestamps distinct.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize, max_edges: usize) -> RandGraph {
    let n = rng.gen_range(1..=max_nodes);
    let m = rng.gen_range(0..=max_edges);
    let nodes: Vec<(String, String)> = (0..n)
        .map(|i| {
            let t = NODE_TYPES[rng.gen_range(0..NODE_TYPES.len())];
            (format!("{t}:n{i}"), t.to_string())
        })
        .collect();
    let edges: Vec<(String, String, String, f64)> = (0..m)
        .map(|_| {
            let a = &nodes[rng.gen_range(0..n)].0;
            let b = &nodes[rng.gen_range(0..n)].0;
            let t = EDGE_TYPES[rng.gen_range(0..EDGE_TYPES.len())];
            let w = rng.gen_range(1..=100) as f64 / 100.0;
            (a.clone(), t.to_string(), b.clone(), w)
        })
        .collect();
    let mut lines = vec![open_schema_record()];
    for (id, t) in &nodes {
        lines.push(serde_json::json!({"kind": "node", "id": id, "type": t, "name": id}).to_string());
    }
    for (i, (a, t, b, w)) in edges.iter().enumerate() {
        let ts = chrono::DateTime::from_timestamp(1_700_000_000 + i as i64, 0).unwrap().to_rfc3339();
        lines.push(serde_json::json!({"kind": "edge", "from": a, "to": b, "type": t, "weight": w, "ts": ts}).to_string());
    }
    RandGraph { jsonl: lines.join("\n") + "\n", nodes, edges }
}

pub fn random_via(rng: &mut impl Rng) -> BTreeSet<String> {
    let k = rng.gen_range(0..=EDGE_TYPES.len());
    let mut types = EDGE_TYPES.to_vec();
    types.shuffle(rng);
    types[..k].iter().map(|s| s.to_string()).collect()
}

pub fn random_sources(rng: &mut impl Rng, g: &RandGraph) -> BTreeSet<String> {
    let ids = g.node_ids();
    let k = rng.gen_range(1..=ids.len().min(3));
    ids.choose_multiple(rng, k).cloned().collect()
}

pub fn labels(xs: &BTreeSet<String>) -> BTreeSet<Label> {
    xs.iter().map(|x| Label::new(x)).collect()
}

pub fn ids(xs: &BTreeSet<String>) -> BTreeSet<NodeId> {
    xs.iter().map(|x| NodeId::lit(x)).collect()
}

/// Direct set recursion: `V <- V ∪ {v : (u,v) ∈ E, u ∈ V, type ∈ via}`,
/// `h` times; the edges are every via-typed edge with both ends in `V`.
pub fn oracle_expand(
    edges: &[(String, String, String, f64)],
    sources: &BTreeSet<String>,
    via: &BTreeSet<String>,
    h: u32,
) -> (BTreeSet<String>, BTreeSet<Triple>) {
    let mut v = sources.clone();
    for _ in 0..h {
        let next: BTreeSet<String> =
            edges.iter().filter(|(a, t, _, _)| v.contains(a) && via.contains(t)).map(|(_, _, b, _)| b.clone()).collect();
        v.extend(next);
    }
    let e = edges
        .iter()
        .filter(|(a, t, b, _)| via.contains(t) && v.contains(a) && v.contains(b))
        .map(|(a, t, b, _)| (a.clone(), t.clone(), b.clone()))
        .collect();
    (v, e)
}

/// Multi-source BFS distance under the via-filtered relation.
pub fn oracle_depths(edges: &[(String, String, String, f64)], sources: &BTreeSet<String>, via: &BTreeSet<String>) -> BTreeMap<String, u32> {
    let mut dist: BTreeMap<String, u32> = sources.iter().map(|s| (s.clone(), 0)).collect();
    let mut q: VecDeque<String> = sources.iter().cloned().collect();
    while let Some(u) = q.pop_front() {
        let d = dist[&u];
        for (a, t, b, _) in edges {
            if *a == u && via.contains(t) && !dist.contains_key(b) {
                dist.insert(b.clone(), d + 1);
                q.push_back(b.clone());
            }
        }
    }
    dist
}

/// Structural view of a graph for equality checks: node id to type, and
/// edge id to (from, type, to, weight bits).
pub type Structure = (BTreeMap<String, String>, BTreeMap<u64, (String, String, String, u64)>);

pub fn structure(g: &KnowledgeGraph) -> Structure {
    let nodes = g.nodes().map(|n| (n.id.to_string(), n.type_label.to_string())).collect();
    let edges = g.edges().map(|e| (e.id.0, (e.from.to_string(), e.edge_type.to_string(), e.to.to_string(), e.weight.to_bits()))).collect();
    (nodes, edges)
}

//! Type-filtered breadth-first traversal.
//!
//! `traverse` expands the source set level by level over outgoing edges whose
//! type is in the filter: `S₀ = V_s`, `S_{k+1} = S_k ∪ N(S_k)`, stopping at
//! depth `h`. Every set involved is ordered by node id and every tie is broken
//! lexicographically, so results do not depend on adjacency storage order.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crate::graph::{resolve_selector, Edge, EdgeId, EdgeRef, GraphError, KnowledgeGraph, Label, NodeId, Predicate};
use crate::protocol::{ConversationContext, Depth, PathSpec, ResultBody, ReturnFormat, TraverseOp};

/// Upper bound on the number of paths a PATHS result lists.
pub const MAX_PATHS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ExecutionLimits {
    pub timeout_ms: u64,
    pub max_result_nodes: usize,
    pub frontier_cap: usize,
    /// Depth used for `UNBOUNDED`.
    pub max_effective_depth: u32,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        ExecutionLimits { timeout_ms: 30_000, max_result_nodes: 5000, frontier_cap: 1000, max_effective_depth: 6 }
    }
}

impl ExecutionLimits {
    /// Limits that never fire on test-sized graphs.
    pub fn unlimited() -> Self {
        ExecutionLimits { timeout_ms: u64::MAX / 4, max_result_nodes: usize::MAX, frontier_cap: usize::MAX, max_effective_depth: 64 }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TraversalStats {
    /// Largest frontier held at any hop, sources included.
    pub expanded_nodes: usize,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TraversalPath {
    pub start: NodeId,
    pub edges: Vec<EdgeId>,
}

#[derive(Clone, Debug)]
pub struct TraversalResult {
    pub format: ReturnFormat,
    /// Returned nodes with their BFS discovery depth.
    pub nodes: BTreeMap<NodeId, u32>,
    pub edges: BTreeMap<EdgeId, Edge>,
    pub paths: Vec<TraversalPath>,
    pub truncated: bool,
    pub timed_out: bool,
    pub stats: TraversalStats,
}

/// Equality ignores wall-clock time.
impl PartialEq for TraversalResult {
    fn eq(&self, o: &Self) -> bool {
        self.format == o.format
            && self.nodes == o.nodes
            && self.edges == o.edges
            && self.paths == o.paths
            && self.truncated == o.truncated
            && self.timed_out == o.timed_out
            && self.stats.expanded_nodes == o.stats.expanded_nodes
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TraversalError {
    #[error("source selector resolved to no nodes")]
    SourceEmpty,
    #[error(transparent)]
    Selector(#[from] GraphError),
}

impl TraversalResult {
    pub fn path_spec(&self, p: &TraversalPath, graph: &KnowledgeGraph) -> PathSpec {
        PathSpec {
            start: p.start.clone(),
            hops: p
                .edges
                .iter()
                .filter_map(|id| self.edges.get(id).or_else(|| graph.edge(*id)))
                .map(|e| (e.edge_type.clone(), e.to.clone()))
                .collect(),
        }
    }

    /// Per node, the best product of edge weights along any returned path
    /// prefix ending there.
    pub fn confidence(&self) -> BTreeMap<NodeId, f64> {
        let mut out: BTreeMap<NodeId, f64> = BTreeMap::new();
        for p in &self.paths {
            let mut acc = 1.0;
            for id in &p.edges {
                let e = &self.edges[id];
                acc *= e.weight;
                let slot = out.entry(e.to.clone()).or_insert(0.0);
                if acc > *slot {
                    *slot = acc;
                }
            }
        }
        out
    }

    /// Canonical wire form: ids sorted, edges collapsed to their type-level
    /// identity. Confidence is left to callers that rank results.
    pub fn to_body(&self, graph: &KnowledgeGraph) -> ResultBody {
        let edges: BTreeSet<EdgeRef> = self.edges.values().map(Edge::as_ref).collect();
        ResultBody {
            format: self.format,
            nodes: self.nodes.keys().cloned().collect(),
            edges: edges.into_iter().collect(),
            paths: self.paths.iter().map(|p| self.path_spec(p, graph)).collect(),
            confidence: vec![],
            truncated: self.truncated,
        }
    }
}

/// Filtered out-neighborhood of a node set.
pub fn neighborhood(frontier: &BTreeSet<NodeId>, via: &BTreeSet<Label>, graph: &KnowledgeGraph) -> BTreeSet<NodeId> {
    frontier.iter().flat_map(|u| graph.out_edges(u.as_str())).filter(|e| via.contains(&e.edge_type)).map(|e| e.to.clone()).collect()
}

struct Exploration {
    depth: BTreeMap<NodeId, u32>,
    truncated: bool,
    timed_out: bool,
    peak: usize,
}

fn truncate_set(set: &mut BTreeSet<NodeId>, cap: usize) -> bool {
    if set.len() <= cap {
        return false;
    }
    *set = std::mem::take(set).into_iter().take(cap).collect();
    true
}

fn explore(
    sources: &BTreeSet<NodeId>,
    via: &BTreeSet<Label>,
    depth: Depth,
    constraints: Option<&Predicate>,
    limits: &ExecutionLimits,
    graph: &KnowledgeGraph,
    started: Instant,
) -> (Exploration, u32) {
    let h = match depth {
        Depth::Finite(h) => h,
        Depth::Unbounded => limits.max_effective_depth,
    };
    let deadline = Duration::from_millis(limits.timeout_ms);
    let mut ex = Exploration { depth: sources.iter().map(|s| (s.clone(), 0)).collect(), truncated: false, timed_out: false, peak: 0 };
    let mut frontier = sources.clone();
    ex.truncated |= truncate_set(&mut frontier, limits.frontier_cap);
    ex.peak = frontier.len();

    let admit = |v: &NodeId, ex: &Exploration| {
        !ex.depth.contains_key(v) && constraints.is_none_or(|p| graph.node(v.as_str()).is_some_and(|n| p.eval(n)))
    };
    for level in 1..=h {
        if started.elapsed() > deadline {
            ex.timed_out = true;
            ex.truncated = true;
            return (ex, h);
        }
        let mut next: BTreeSet<NodeId> = neighborhood(&frontier, via, graph).into_iter().filter(|v| admit(v, &ex)).collect();
        if next.is_empty() {
            return (ex, h);
        }
        let room = limits.max_result_nodes.saturating_sub(ex.depth.len());
        ex.truncated |= truncate_set(&mut next, room.min(limits.frontier_cap));
        for v in &next {
            ex.depth.insert(v.clone(), level);
        }
        ex.peak = ex.peak.max(next.len());
        frontier = next;
        if frontier.is_empty() {
            return (ex, h);
        }
    }
    if depth == Depth::Unbounded && neighborhood(&frontier, via, graph).iter().any(|v| admit(v, &ex)) {
        ex.truncated = true;
    }
    (ex, h)
}

/// Via-typed edges with both endpoints in `nodes`.
fn edges_among(nodes: &BTreeMap<NodeId, u32>, via: &BTreeSet<Label>, graph: &KnowledgeGraph) -> BTreeMap<EdgeId, Edge> {
    nodes
        .keys()
        .flat_map(|u| graph.out_edges(u.as_str()))
        .filter(|e| via.contains(&e.edge_type) && nodes.contains_key(&e.to))
        .map(|e| (e.id, e.clone()))
        .collect()
}

fn leaves(nodes: &BTreeMap<NodeId, u32>, h: u32, edges: &BTreeMap<EdgeId, Edge>) -> BTreeSet<NodeId> {
    let has_out: BTreeSet<&NodeId> = edges.values().map(|e| &e.from).collect();
    nodes.iter().filter(|(n, d)| **d == h || !has_out.contains(n)).map(|(n, _)| n.clone()).collect()
}

/// All shortest paths from `s` to each target over the explored edges.
/// Parallel edges of one type collapse to the lowest id.
fn shortest_paths(
    s: &NodeId,
    dist: &BTreeMap<NodeId, u32>,
    edges: &BTreeMap<EdgeId, Edge>,
    targets: &BTreeSet<NodeId>,
    budget: usize,
) -> (Vec<TraversalPath>, bool) {
    // predecessor DAG keyed by target node, ordered by (from, type)
    let mut preds: BTreeMap<&NodeId, BTreeMap<(&NodeId, &Label), EdgeId>> = BTreeMap::new();
    for e in edges.values() {
        if dist[&e.from] + 1 == dist[&e.to] {
            preds.entry(&e.to).or_default().entry((&e.from, &e.edge_type)).or_insert(e.id);
        }
    }
    let mut out = Vec::new();
    for t in targets {
        // depth-first from the target back to the source; the order is
        // fixed by the ordered predecessor maps
        let mut stack: Vec<(&NodeId, Vec<EdgeId>)> = vec![(t, vec![])];
        while let Some((node, suffix)) = stack.pop() {
            if node == s {
                if out.len() == budget {
                    return (out, true);
                }
                let mut p = suffix;
                p.reverse();
                out.push(TraversalPath { start: s.clone(), edges: p });
                continue;
            }
            if let Some(ps) = preds.get(node) {
                for ((from, _), id) in ps.iter().rev() {
                    let mut next = suffix.clone();
                    next.push(*id);
                    stack.push((from, next));
                }
            }
        }
    }
    (out, false)
}

/// Executes a traversal over a resolved, nonempty source set.
pub fn traverse(
    sources: &BTreeSet<NodeId>,
    via: &BTreeSet<Label>,
    depth: Depth,
    ret: ReturnFormat,
    constraints: Option<&Predicate>,
    limits: &ExecutionLimits,
    graph: &KnowledgeGraph,
) -> Result<TraversalResult, TraversalError> {
    if sources.is_empty() {
        return Err(TraversalError::SourceEmpty);
    }
    if let Some(missing) = sources.iter().find(|s| !graph.contains_node(s.as_str())) {
        return Err(GraphError::UnknownNodeId(missing.clone()).into());
    }
    let started = Instant::now();
    let (ex, h) = explore(sources, via, depth, constraints, limits, graph, started);
    let mut result = TraversalResult {
        format: ret,
        nodes: BTreeMap::new(),
        edges: BTreeMap::new(),
        paths: vec![],
        truncated: ex.truncated,
        timed_out: ex.timed_out,
        stats: TraversalStats { expanded_nodes: ex.peak, elapsed_ms: 0 },
    };
    match ret {
        ReturnFormat::Subgraph => {
            result.edges = edges_among(&ex.depth, via, graph);
            result.nodes = ex.depth;
        }
        ReturnFormat::Leaves => {
            let edges = edges_among(&ex.depth, via, graph);
            let keep = leaves(&ex.depth, h, &edges);
            result.nodes = ex.depth.into_iter().filter(|(n, _)| keep.contains(n)).collect();
        }
        ReturnFormat::Paths => {
            // Each source contributes the shortest paths to the leaves of
            // its own traversal, so a node reached first from one source
            // still yields the paths from every other source that reaches it.
            let mut depth_of: BTreeMap<NodeId, u32> = BTreeMap::new();
            for s in sources {
                let single = BTreeSet::from([s.clone()]);
                let (sx, _) = explore(&single, via, depth, constraints, limits, graph, started);
                result.truncated |= sx.truncated;
                result.timed_out |= sx.timed_out;
                let edges = edges_among(&sx.depth, via, graph);
                let targets = leaves(&sx.depth, h, &edges);
                let budget = MAX_PATHS - result.paths.len();
                let (paths, cut) = shortest_paths(s, &sx.depth, &edges, &targets, budget);
                result.truncated |= cut;
                for p in &paths {
                    for id in &p.edges {
                        result.edges.insert(*id, edges[id].clone());
                    }
                    for n in std::iter::once(&p.start).chain(p.edges.iter().map(|id| &edges[id].to)) {
                        let d = sx.depth[n];
                        depth_of.entry(n.clone()).and_modify(|x| *x = (*x).min(d)).or_insert(d);
                    }
                }
                result.paths.extend(paths);
            }
            result.nodes = depth_of;
        }
    }
    result.stats.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(result)
}

/// Resolves the operation's selector in `ctx` and runs the traversal.
pub fn execute(
    op: &TraverseOp,
    ctx: &ConversationContext,
    graph: &KnowledgeGraph,
    limits: &ExecutionLimits,
) -> Result<TraversalResult, TraversalError> {
    let sources = resolve_selector(&op.source, graph, ctx)?;
    traverse(&sources, &op.via, op.depth, op.ret, op.constraints.as_ref(), limits, graph)
}

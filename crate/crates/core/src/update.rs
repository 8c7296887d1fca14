//! The single mutation path for graphs: validate a delta against the schema
//! and the current head, tag new edges with provenance, and commit it as the
//! next version.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};

use crate::graph::{
    AppliedDelta, AttrValue, Edge, EdgeId, GraphError, GraphStore, KnowledgeGraph, Label, NodeId, ProvenanceTag, VersionId,
};
use crate::protocol::AgentId;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub type_label: Label,
    pub name: String,
    pub attrs: BTreeMap<String, AttrValue>,
}

/// An edge to add. The graph assigns its id. A missing timestamp defaults
/// to the update's timestamp, a missing confidence to 1.0, and a missing
/// weight to the confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub edge_type: Label,
    pub weight: Option<f64>,
    pub timestamp: Option<DateTime<Utc>>,
    pub confidence: Option<f64>,
}

impl EdgeSpec {
    pub fn confidence(&self) -> f64 {
        self.confidence.unwrap_or(1.0)
    }

    pub fn weight(&self) -> f64 {
        self.weight.unwrap_or_else(|| self.confidence())
    }
}

/// Applied in the order add_nodes, add_edges, del_edges, del_nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphDelta {
    pub add_nodes: Vec<NodeSpec>,
    pub add_edges: Vec<EdgeSpec>,
    pub del_edges: Vec<EdgeId>,
    pub del_nodes: Vec<NodeId>,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.add_nodes.is_empty() && self.add_edges.is_empty() && self.del_edges.is_empty() && self.del_nodes.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaViolation {
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for DeltaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum UpdateError {
    #[error("delta rejected: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<DeltaViolation>),
    #[error("delta based on version {base} but head is {head}")]
    ConcurrentWriteConflict { base: VersionId, head: VersionId },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Who is writing and on behalf of which message.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOrigin {
    pub author: AgentId,
    pub timestamp: DateTime<Utc>,
    /// Hex digest of the carrying message.
    pub source_message: String,
}

/// Checks a delta against the schema and the current state of `graph`.
/// `at` is the timestamp given to edges that do not carry one.
pub fn validate_delta(delta: &GraphDelta, graph: &KnowledgeGraph, at: DateTime<Utc>) -> Vec<DeltaViolation> {
    let schema = graph.schema();
    let mut out = Vec::new();
    let mut bad = |entity: String, rule: &str| out.push(DeltaViolation { entity, rule: rule.to_string() });

    let added: BTreeMap<&NodeId, &NodeSpec> = delta.add_nodes.iter().map(|n| (&n.id, n)).collect();
    let deleted: BTreeSet<&NodeId> = delta.del_nodes.iter().collect();
    let del_edges: BTreeSet<EdgeId> = delta.del_edges.iter().copied().collect();

    if added.len() != delta.add_nodes.len() {
        bad("delta".into(), "node added twice");
    }
    if deleted.len() != delta.del_nodes.len() || del_edges.len() != delta.del_edges.len() {
        bad("delta".into(), "element deleted twice");
    }

    for n in &delta.add_nodes {
        let entity = format!("node {}", n.id);
        if deleted.contains(&n.id) {
            bad(entity.clone(), "node both added and deleted");
        }
        if graph.contains_node(n.id.as_str()) {
            bad(entity.clone(), "node already exists");
        }
        if !schema.has_node_type(n.type_label.as_str()) {
            bad(entity.clone(), "unknown node type");
        } else if n.id.type_prefix() != n.type_label.as_str() {
            bad(entity.clone(), "id prefix does not match type");
        }
        if let Some(req) = schema.required_attributes.get(&n.type_label) {
            if req.iter().any(|k| !n.attrs.contains_key(k)) {
                bad(entity.clone(), "missing required attribute");
            }
        }
        if n.attrs.keys().any(|k| k.is_empty()) {
            bad(entity, "empty attribute key");
        }
    }

    let type_of = |id: &NodeId| -> Option<Label> {
        added.get(id).map(|n| n.type_label.clone()).or_else(|| graph.node(id.as_str()).map(|n| n.type_label.clone()))
    };
    let mut seen = BTreeSet::new();
    for (i, e) in delta.add_edges.iter().enumerate() {
        let entity = format!("add_edge[{i}] {} -[{}]-> {}", e.from, e.edge_type, e.to);
        let (Some(a), Some(b)) = (type_of(&e.from), type_of(&e.to)) else {
            bad(entity, "endpoint does not exist");
            continue;
        };
        if deleted.contains(&e.from) || deleted.contains(&e.to) {
            bad(entity.clone(), "dangling edge would result");
        }
        if !schema.has_edge_type(e.edge_type.as_str()) {
            bad(entity.clone(), "unknown edge type");
        } else if !schema.allows(a.as_str(), e.edge_type.as_str(), b.as_str()) {
            bad(entity.clone(), "edge signature not allowed");
        }
        if !(0.0..=1.0).contains(&e.weight()) || !(0.0..=1.0).contains(&e.confidence()) {
            bad(entity.clone(), "weight or confidence outside [0,1]");
        }
        let ts = e.timestamp.unwrap_or(at);
        let dup_existing = graph
            .out_edges(e.from.as_str())
            .any(|x| x.to == e.to && x.edge_type == e.edge_type && x.timestamp == ts && !del_edges.contains(&x.id));
        if dup_existing || !seen.insert((e.from.clone(), e.edge_type.clone(), e.to.clone(), ts)) {
            bad(entity, "duplicate edge with identical timestamp");
        }
    }

    for id in &delta.del_edges {
        if graph.edge(*id).is_none() {
            bad(format!("edge {id}"), "edge does not exist");
        }
    }
    for id in &delta.del_nodes {
        let entity = format!("node {id}");
        if !graph.contains_node(id.as_str()) {
            bad(entity, "node does not exist");
            continue;
        }
        let survivors = graph.out_edges(id.as_str()).chain(graph.in_edges(id.as_str())).any(|e| !del_edges.contains(&e.id));
        if survivors {
            bad(entity, "dangling edge would result");
        }
    }
    out
}

/// Resolves ids and provenance for a validated delta.
fn resolve(delta: &GraphDelta, graph: &KnowledgeGraph, origin: &UpdateOrigin) -> AppliedDelta {
    let mut next = graph.next_edge_id().0;
    let add_edges = delta
        .add_edges
        .iter()
        .map(|e| {
            let id = EdgeId(next);
            next += 1;
            Edge {
                id,
                from: e.from.clone(),
                to: e.to.clone(),
                edge_type: e.edge_type.clone(),
                weight: e.weight(),
                timestamp: e.timestamp.unwrap_or(origin.timestamp),
                provenance: Some(ProvenanceTag {
                    author: origin.author.clone(),
                    timestamp: origin.timestamp,
                    source_message: origin.source_message.clone(),
                    confidence: e.confidence(),
                }),
            }
        })
        .collect();
    AppliedDelta {
        add_nodes: delta.add_nodes.iter().map(|n| graph.make_node(n.id.clone(), n.type_label.clone(), &n.name, n.attrs.clone())).collect(),
        add_edges,
        del_edges: delta.del_edges.iter().filter_map(|id| graph.edge(*id).cloned()).collect(),
        del_nodes: delta.del_nodes.iter().filter_map(|id| graph.node(id.as_str()).cloned()).collect(),
    }
}

/// Validates and commits `delta` as the next version.
///
/// `base` is the head version the sender saw; a stale base is rejected
/// rather than merged.
pub fn apply_update(
    store: &mut GraphStore,
    delta: &GraphDelta,
    base: Option<VersionId>,
    origin: &UpdateOrigin,
) -> Result<VersionId, UpdateError> {
    let head = store.snapshot();
    if let Some(base) = base {
        if base != head {
            return Err(UpdateError::ConcurrentWriteConflict { base, head });
        }
    }
    let violations = validate_delta(delta, store.head(), origin.timestamp);
    if !violations.is_empty() {
        return Err(UpdateError::ValidationFailed(violations));
    }
    let applied = resolve(delta, store.head(), origin);
    Ok(store.commit(applied, origin.author.clone(), origin.timestamp)?)
}

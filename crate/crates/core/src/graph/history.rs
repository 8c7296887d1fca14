//! Linear version history with rollback.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};

use super::{Edge, EdgeId, GraphError, KnowledgeGraph, Node, NodeId, VersionId};
use crate::protocol::AgentId;

/// A delta with every id resolved and every removed element captured in
/// full, so it can be inverted without consulting the graph.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AppliedDelta {
    pub add_nodes: Vec<Node>,
    pub add_edges: Vec<Edge>,
    pub del_edges: Vec<Edge>,
    pub del_nodes: Vec<Node>,
}

impl AppliedDelta {
    pub fn is_empty(&self) -> bool {
        self.add_nodes.is_empty() && self.add_edges.is_empty() && self.del_edges.is_empty() && self.del_nodes.is_empty()
    }

    pub fn inverse(&self) -> AppliedDelta {
        AppliedDelta {
            add_nodes: self.del_nodes.clone(),
            add_edges: self.del_edges.clone(),
            del_edges: self.add_edges.clone(),
            del_nodes: self.add_nodes.clone(),
        }
    }

    /// Applies removals before additions. For deltas whose add and delete
    /// sets are disjoint the order does not affect the result; removing
    /// first lets a rollback replace a node that was deleted and re-added.
    pub(crate) fn apply(&self, g: &mut KnowledgeGraph) -> Result<(), GraphError> {
        for e in &self.del_edges {
            g.remove_edge(e.id).ok_or_else(|| GraphError::DanglingEdge(e.id.to_string()))?;
        }
        for n in &self.del_nodes {
            g.remove_node(&n.id).ok_or_else(|| GraphError::SchemaViolation {
                entity: format!("node {}", n.id),
                rule: "dangling edge would result".into(),
            })?;
        }
        for n in &self.add_nodes {
            g.insert_node(n.clone())?;
        }
        for e in &self.add_edges {
            g.insert_edge(e.clone(), Some(e.id))?;
        }
        Ok(())
    }

    /// The delta taking `from` to `to`.
    pub fn diff(from: &KnowledgeGraph, to: &KnowledgeGraph) -> AppliedDelta {
        let mut d = AppliedDelta::default();
        let to_nodes: BTreeMap<&NodeId, &Node> = to.nodes().map(|n| (&n.id, n)).collect();
        for n in from.nodes() {
            if to_nodes.get(&n.id) != Some(&n) {
                d.del_nodes.push(n.clone());
            }
        }
        for n in to.nodes() {
            if from.node(n.id.as_str()) != Some(n) {
                d.add_nodes.push(n.clone());
            }
        }
        let to_edges: BTreeMap<EdgeId, &Edge> = to.edges().map(|e| (e.id, e)).collect();
        for e in from.edges() {
            if to_edges.get(&e.id) != Some(&e) {
                d.del_edges.push(e.clone());
            }
        }
        for e in to.edges() {
            if from.edge(e.id) != Some(e) {
                d.add_edges.push(e.clone());
            }
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphDeltaRecord {
    /// Version produced by this delta.
    pub version: VersionId,
    pub delta: AppliedDelta,
    pub author: AgentId,
    pub timestamp: DateTime<Utc>,
}

/// Owns the base graph, the head graph and the delta log between them.
#[derive(Clone, Debug)]
pub struct GraphStore {
    base: KnowledgeGraph,
    head: KnowledgeGraph,
    history: Vec<GraphDeltaRecord>,
}

impl GraphStore {
    /// `base` becomes version 0 regardless of its recorded version.
    pub fn new(mut base: KnowledgeGraph) -> Self {
        base.set_version(0);
        GraphStore { head: base.clone(), base, history: Vec::new() }
    }

    pub fn head(&self) -> &KnowledgeGraph {
        &self.head
    }

    pub fn base(&self) -> &KnowledgeGraph {
        &self.base
    }

    pub fn history(&self) -> &[GraphDeltaRecord] {
        &self.history
    }

    /// Current head version; every version up to it stays reconstructible.
    pub fn snapshot(&self) -> VersionId {
        self.head.version()
    }

    /// Rebuilds the graph at `version` by replaying the delta log from the base.
    pub fn graph_at(&self, version: VersionId) -> Result<KnowledgeGraph, GraphError> {
        if version > self.snapshot() {
            return Err(GraphError::UnknownVersion(version));
        }
        if version == self.snapshot() {
            return Ok(self.head.clone());
        }
        let mut g = self.base.clone();
        for rec in &self.history[..version as usize] {
            rec.delta.apply(&mut g)?;
            g.set_version(rec.version);
        }
        Ok(g)
    }

    /// Appends an already-validated delta; the head is untouched on failure.
    pub(crate) fn commit(&mut self, delta: AppliedDelta, author: AgentId, timestamp: DateTime<Utc>) -> Result<VersionId, GraphError> {
        let mut next = self.head.clone();
        delta.apply(&mut next)?;
        let version = self.snapshot() + 1;
        next.set_version(version);
        self.head = next;
        self.history.push(GraphDeltaRecord { version, delta, author, timestamp });
        Ok(version)
    }

    /// Restores the structure of `version` by appending a compensating delta.
    /// History is never rewritten; rolling back to the head is a no-op.
    pub fn rollback(&mut self, version: VersionId, author: AgentId, timestamp: DateTime<Utc>) -> Result<VersionId, GraphError> {
        if version == self.snapshot() {
            return Ok(version);
        }
        let target = self.graph_at(version)?;
        let delta = AppliedDelta::diff(&self.head, &target);
        self.commit(delta, author, timestamp)
    }
}

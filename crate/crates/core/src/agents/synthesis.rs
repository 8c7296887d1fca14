//! Pattern discovery over maintenance history.
//!
//! For each fault `f` and condition `c`, count the work orders in which `f`
//! occurred and `c` was recorded within a time window of it. A pair that
//! clears the support and ratio thresholds becomes a proposed edge with
//! confidence `count / total`.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};

use crate::graph::{EdgeRef, KnowledgeGraph, Label, NodeId};
use crate::update::EdgeSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisConfig {
    pub window: Duration,
    pub min_support: usize,
    pub min_ratio: f64,
    pub relation: Label,
    pub fault_type: Label,
    pub condition_types: Vec<Label>,
    /// Edge type linking faults and conditions to work orders.
    pub event_edge: Label,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            window: Duration::hours(48),
            min_support: 3,
            min_ratio: 0.5,
            relation: Label::new("correlates_with"),
            fault_type: Label::new("Fault"),
            condition_types: vec![Label::new("Sensor"), Label::new("Condition")],
            event_edge: Label::new("occurred_in"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub edge: EdgeRef,
    pub count: usize,
    pub total: usize,
    pub confidence: f64,
}

impl Proposal {
    pub fn to_edge_spec(&self) -> EdgeSpec {
        EdgeSpec {
            from: self.edge.from.clone(),
            to: self.edge.to.clone(),
            edge_type: self.edge.edge_type.clone(),
            weight: None,
            timestamp: None,
            confidence: Some(self.confidence),
        }
    }
}

/// Earliest event time per work order for `node`.
fn events(graph: &KnowledgeGraph, node: &NodeId, edge: &Label) -> BTreeMap<NodeId, DateTime<Utc>> {
    let mut out: BTreeMap<NodeId, DateTime<Utc>> = BTreeMap::new();
    for e in graph.out_edges(node.as_str()).filter(|e| &e.edge_type == edge) {
        out.entry(e.to.clone()).and_modify(|t| *t = (*t).min(e.timestamp)).or_insert(e.timestamp);
    }
    out
}

/// Proposals in (fault, condition) id order; existing edges are skipped.
pub fn discover_patterns(graph: &KnowledgeGraph, cfg: &SynthesisConfig) -> Vec<Proposal> {
    let schema = graph.schema();
    let faults: Vec<&NodeId> = graph.nodes().filter(|n| n.type_label == cfg.fault_type).map(|n| &n.id).collect();
    let conditions: Vec<&NodeId> = graph.nodes().filter(|n| cfg.condition_types.contains(&n.type_label)).map(|n| &n.id).collect();
    let mut out = Vec::new();
    for f in faults {
        let orders = events(graph, f, &cfg.event_edge);
        let total = orders.len();
        if total == 0 {
            continue;
        }
        for c in &conditions {
            let seen: Vec<(NodeId, DateTime<Utc>)> =
                graph.out_edges(c.as_str()).filter(|e| e.edge_type == cfg.event_edge).map(|e| (e.to.clone(), e.timestamp)).collect();
            let count = orders.iter().filter(|(w, tf)| seen.iter().any(|(wc, tc)| wc == *w && (*tc - **tf).abs() <= cfg.window)).count();
            let ratio = count as f64 / total as f64;
            if count < cfg.min_support || ratio < cfg.min_ratio {
                continue;
            }
            let (ft, ct) = (cfg.fault_type.as_str(), c.type_prefix());
            let (from, to) = if schema.allows(ft, cfg.relation.as_str(), ct) {
                ((*f).clone(), (*c).clone())
            } else if schema.allows(ct, cfg.relation.as_str(), ft) {
                ((*c).clone(), (*f).clone())
            } else {
                continue;
            };
            let edge = EdgeRef { from, edge_type: cfg.relation.clone(), to };
            if !graph.contains_edge_ref(&edge) {
                out.push(Proposal { edge, count, total, confidence: ratio });
            }
        }
    }
    out
}

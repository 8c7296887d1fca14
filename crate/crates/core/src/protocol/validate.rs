use std::fmt;

use super::{Message, OperationPayload, Performative, ReturnFormat};
use crate::graph::{is_ident_char, GraphSchema, Label, NodeSelector};

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Incompatible { performative: Performative, payload: &'static str },
    EmptyEdgeFilter,
    EmptySelector,
    SelfAddressed,
    BadConversationId,
    UnknownEdgeType(Label),
    UnknownNodeType(Label),
    ConfidenceMisaligned { nodes: usize, confidence: usize },
    ValueOutOfRange { field: &'static str, value: f64 },
    PathsOutsidePathsResult,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Incompatible { performative, payload } => write!(f, "{performative} cannot carry a {payload} payload"),
            Violation::EmptyEdgeFilter => f.write_str("empty edge filter"),
            Violation::EmptySelector => f.write_str("empty node selector"),
            Violation::SelfAddressed => f.write_str("sender equals receiver"),
            Violation::BadConversationId => f.write_str("invalid conversation id"),
            Violation::UnknownEdgeType(t) => write!(f, "edge type {t} not in schema"),
            Violation::UnknownNodeType(t) => write!(f, "node type {t} not in schema"),
            Violation::ConfidenceMisaligned { nodes, confidence } => {
                write!(f, "{confidence} confidences for {nodes} nodes")
            }
            Violation::ValueOutOfRange { field, value } => write!(f, "{field} {value} outside [0,1]"),
            Violation::PathsOutsidePathsResult => f.write_str("paths listed in a non-PATHS result"),
        }
    }
}

fn compatible(p: Performative, op: &OperationPayload) -> bool {
    use OperationPayload as O;
    use Performative as P;
    matches!(
        (p, op),
        (P::Request | P::Query | P::Propose, O::Traverse(_))
            | (P::Update, O::Update(_))
            | (P::Inform | P::Confirm, O::Result(_) | O::Error(_))
            | (P::Reject, O::Error(_) | O::Traverse(_))
    )
}

/// Schema-independent checks. Never fails; returns every violation found.
pub fn validate(m: &Message) -> Vec<Violation> {
    let mut v = Vec::new();
    if !compatible(m.performative, &m.operation) {
        v.push(Violation::Incompatible { performative: m.performative, payload: m.operation.kind() });
    }
    let conv = &m.context.conversation_id;
    if conv.is_empty() || !conv.chars().all(is_ident_char) {
        v.push(Violation::BadConversationId);
    }
    if matches!(m.performative, Performative::Request | Performative::Query | Performative::Propose) && m.sender == m.receiver {
        v.push(Violation::SelfAddressed);
    }
    let in_unit = |field, x: f64, v: &mut Vec<Violation>| {
        if !(0.0..=1.0).contains(&x) {
            v.push(Violation::ValueOutOfRange { field, value: x });
        }
    };
    match &m.operation {
        OperationPayload::Traverse(t) => {
            if t.via.is_empty() {
                v.push(Violation::EmptyEdgeFilter);
            }
            let empty = match &t.source {
                NodeSelector::ExplicitIds(ids) => ids.is_empty(),
                NodeSelector::ByType(ts) => ts.is_empty(),
                NodeSelector::ByName(ns) => ns.is_empty(),
                NodeSelector::ContextRef(s) => s.is_empty(),
                NodeSelector::PropertyFilter { .. } => false,
            };
            if empty {
                v.push(Violation::EmptySelector);
            }
        }
        OperationPayload::Result(r) => {
            if !r.confidence.is_empty() && r.confidence.len() != r.nodes.len() {
                v.push(Violation::ConfidenceMisaligned { nodes: r.nodes.len(), confidence: r.confidence.len() });
            }
            for c in &r.confidence {
                in_unit("confidence", *c, &mut v);
            }
            if !r.paths.is_empty() && r.format != ReturnFormat::Paths {
                v.push(Violation::PathsOutsidePathsResult);
            }
        }
        OperationPayload::Update(u) => {
            for e in &u.delta.add_edges {
                if let Some(w) = e.weight {
                    in_unit("weight", w, &mut v);
                }
                if let Some(c) = e.confidence {
                    in_unit("confidence", c, &mut v);
                }
            }
        }
        OperationPayload::Error(_) => {}
    }
    v
}

/// [`validate`] plus type-universe membership of every referenced label.
pub fn validate_against(m: &Message, schema: &GraphSchema) -> Vec<Violation> {
    let mut v = validate(m);
    if let OperationPayload::Traverse(t) = &m.operation {
        for e in &t.via {
            if !schema.has_edge_type(e.as_str()) {
                v.push(Violation::UnknownEdgeType(e.clone()));
            }
        }
        let node_types: Vec<&Label> = match &t.source {
            NodeSelector::ByType(ts) => ts.iter().collect(),
            NodeSelector::PropertyFilter { node_type, .. } => vec![node_type],
            _ => vec![],
        };
        for nt in node_types {
            if !schema.has_node_type(nt.as_str()) {
                v.push(Violation::UnknownNodeType(nt.clone()));
            }
        }
    }
    v
}

//! Query to operation: entity linking, intent, edge filter, depth.

use std::collections::BTreeSet;

use crate::graph::{resolve_by_name, KnowledgeGraph, Label, NodeId, NodeSelector, LINK_THRESHOLD};
use crate::protocol::{Depth, ReturnFormat, TraverseOp};

use super::{labels, Intent, LanguagePort};

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub intent: Intent,
    /// Agent the operation is routed to.
    pub receiver: &'static str,
    pub op: TraverseOp,
    /// Every linked entity, used as conversation focus.
    pub anchors: BTreeSet<NodeId>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SelectError {
    #[error("no entities linked")]
    NoEntitiesLinked,
    #[error("no {0} edge types in the schema")]
    NoEdgeTypes(&'static str),
}

/// Maps a user query to one traversal.
///
/// Diagnostic queries start from linked symptoms when there are any (PATHS
/// once two or more converge). Without symptoms they anchor on the linked
/// components and ask for their symptoms first.
pub fn select_operation(query: &str, graph: &KnowledgeGraph, port: &dyn LanguagePort) -> Result<Selection, SelectError> {
    let intent = port.classify_intent(query);
    let names = port.extract_entities(query);
    let anchors = resolve_by_name(&names, graph, LINK_THRESHOLD);
    if anchors.is_empty() {
        return Err(SelectError::NoEntitiesLinked);
    }
    let schema = graph.schema();
    let known = |xs: &[&str]| -> BTreeSet<Label> { labels(xs).into_iter().filter(|l| schema.has_edge_type(l.as_str())).collect() };
    let via = known(intent.edge_map());
    let depth = port.estimate_depth(intent, anchors.len());

    let (source, via, depth, ret) = if intent == Intent::Diagnostic {
        let symptoms: BTreeSet<NodeId> = anchors.iter().filter(|n| n.type_prefix() == "Symptom").cloned().collect();
        let has_symptom = known(&["has_symptom"]);
        if !symptoms.is_empty() {
            let ret = if symptoms.len() >= 2 { ReturnFormat::Paths } else { ReturnFormat::Subgraph };
            (symptoms, via, depth, ret)
        } else if !has_symptom.is_empty() {
            (anchors.clone(), has_symptom, 1, ReturnFormat::Subgraph)
        } else {
            (anchors.clone(), via, depth, ReturnFormat::Subgraph)
        }
    } else {
        (anchors.clone(), via, depth, ReturnFormat::Subgraph)
    };
    if via.is_empty() {
        return Err(SelectError::NoEdgeTypes(intent.as_str()));
    }
    Ok(Selection {
        intent,
        receiver: intent.route(),
        op: TraverseOp { source: NodeSelector::ExplicitIds(source), via, depth: Depth::Finite(depth), ret, constraints: None },
        anchors,
    })
}

use std::collections::{BTreeMap, BTreeSet};

use super::{GraphError, Label, Node};

/// Type universes plus the edge signatures and required attributes that
/// every node and edge must satisfy.
///
/// Validation is total: every candidate edge is either accepted or rejected
/// by [`GraphSchema::check_edge`]. An edge type with no listed signature is
/// rejected everywhere.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphSchema {
    pub node_types: BTreeSet<Label>,
    pub edge_types: BTreeSet<Label>,
    /// Allowed (source node type, edge type, target node type) triples.
    pub signatures: BTreeSet<(Label, Label, Label)>,
    pub required_attributes: BTreeMap<Label, BTreeSet<String>>,
}

impl GraphSchema {
    pub fn has_node_type(&self, t: &str) -> bool {
        self.node_types.contains(t)
    }

    pub fn has_edge_type(&self, t: &str) -> bool {
        self.edge_types.contains(t)
    }

    pub fn allows(&self, src: &str, edge: &str, dst: &str) -> bool {
        self.signatures.contains(&(Label::new(src), Label::new(edge), Label::new(dst)))
    }

    /// Every violation of a single node against the schema.
    pub fn check_node(&self, node: &Node) -> Vec<GraphError> {
        let mut out = Vec::new();
        let entity = format!("node {}", node.id);
        if !self.has_node_type(node.type_label.as_str()) {
            out.push(GraphError::SchemaViolation { entity: entity.clone(), rule: format!("unknown node type {}", node.type_label) });
        }
        if node.id.type_prefix() != node.type_label.as_str() {
            out.push(GraphError::SchemaViolation {
                entity: entity.clone(),
                rule: format!("id prefix does not match type {}", node.type_label),
            });
        }
        if let Some(req) = self.required_attributes.get(&node.type_label) {
            for key in req {
                if !node.attributes.contains_key(key) {
                    out.push(GraphError::SchemaViolation { entity: entity.clone(), rule: format!("missing required attribute {key}") });
                }
            }
        }
        if node.attributes.keys().any(|k| k.is_empty()) {
            out.push(GraphError::SchemaViolation { entity: entity.clone(), rule: "empty attribute key".into() });
        }
        if node.embedding.iter().any(|x| !x.is_finite()) {
            out.push(GraphError::SchemaViolation { entity, rule: "non-finite embedding".into() });
        }
        out
    }

    pub fn check_edge(&self, src: &Label, edge: &Label, dst: &Label, entity: &str) -> Result<(), GraphError> {
        let rule = if !self.has_edge_type(edge.as_str()) {
            format!("unknown edge type {edge}")
        } else if !self.allows(src.as_str(), edge.as_str(), dst.as_str()) {
            format!("signature ({src}, {edge}, {dst}) not allowed")
        } else {
            return Ok(());
        };
        Err(GraphError::SchemaViolation { entity: format!("edge {entity}"), rule })
    }

    /// Registers a node type, an edge type and the signature joining them.
    pub fn allow(&mut self, src: &str, edge: &str, dst: &str) -> &mut Self {
        self.node_types.insert(src.into());
        self.node_types.insert(dst.into());
        self.edge_types.insert(edge.into());
        self.signatures.insert((src.into(), edge.into(), dst.into()));
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undeclared_signature_is_rejected() {
        let mut s = GraphSchema::default();
        s.allow("Part", "risk_indicator", "Sensor");
        let (p, r, sn) = (Label::new("Part"), Label::new("risk_indicator"), Label::new("Sensor"));
        assert!(s.check_edge(&p, &r, &sn, "1").is_ok());
        assert!(s.check_edge(&sn, &r, &p, "1").is_err());
        assert!(s.check_edge(&p, &Label::new("causes"), &sn, "1").is_err());
    }
}

//! Knowledge graph storage.
//!
//! A [`KnowledgeGraph`] is a heterogeneous directed graph with typed nodes and
//! typed, weighted, timestamped edges. Node and edge type universes are fixed
//! by the [`GraphSchema`] the graph was loaded with; only the [`crate::update`]
//! module mutates a graph after construction.

mod embed;
mod history;
mod io;
mod schema;
pub(crate) mod selector;

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};

pub use embed::{cosine, Embedder, HashedTrigramEmbedder, DEFAULT_EMBEDDING_DIM};
pub use history::{AppliedDelta, GraphDeltaRecord, GraphStore};
pub use io::{load_graph, load_graph_str, write_graph};
pub use schema::GraphSchema;
pub use selector::{resolve_by_name, resolve_selector, CmpOp, NodeSelector, Predicate, CURRENT_FOCUS, LINK_THRESHOLD};

use crate::protocol::AgentId;

/// Monotone graph version counter. Version 0 is the loaded base graph.
pub type VersionId = u64;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("schema violation on {entity}: {rule}")]
    SchemaViolation { entity: String, rule: String },
    #[error("edge {0} references a missing node")]
    DanglingEdge(String),
    #[error("unknown node id {0}")]
    UnknownNodeId(NodeId),
    #[error("context symbol {0} is not bound")]
    UnknownContextSymbol(String),
    #[error("unknown version {0}")]
    UnknownVersion(VersionId),
    #[error("invalid node id {0:?}: expected <Type>:<name>")]
    InvalidNodeId(String),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | ':' | '-')
}

/// Interned type label (an element of the node or edge type universe).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(s: &str) -> Self {
        Label(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::new(s)
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label(Arc::from(s))
    }
}

impl Borrow<str> for Label {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

/// Node identifier of the form `<TypeLabel>:<local-name>`, case-sensitive.
/// The prefix `type` is reserved for by-type selectors.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(Arc<str>);

impl NodeId {
    pub fn new(s: &str) -> Result<Self, GraphError> {
        let valid = !s.is_empty()
            && s.chars().all(is_ident_char)
            && matches!(s.split_once(':'), Some((t, n)) if !t.is_empty() && t != "type" && !n.is_empty());
        if valid {
            Ok(NodeId(Arc::from(s)))
        } else {
            Err(GraphError::InvalidNodeId(s.to_string()))
        }
    }

    /// Panicking constructor for literals in tests and fixtures.
    pub fn lit(s: &str) -> Self {
        Self::new(s).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The `<TypeLabel>` prefix.
    pub fn type_prefix(&self) -> &str {
        self.0.split_once(':').map(|(t, _)| t).unwrap_or("")
    }

    pub fn local_name(&self) -> &str {
        self.0.split_once(':').map(|(_, n)| n).unwrap_or("")
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EdgeId(pub u64);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Flat attribute scalar.
#[derive(Clone, Debug, PartialEq)]
pub enum AttrValue {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Time(DateTime<Utc>),
}

impl AttrValue {
    pub(crate) fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Int(i) => Some(*i as f64),
            AttrValue::Float(f) => Some(*f),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub type_label: Label,
    pub display_name: String,
    pub attributes: BTreeMap<String, AttrValue>,
    pub embedding: Vec<f64>,
}

/// Who introduced an edge, when, from which message, with what confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct ProvenanceTag {
    pub author: AgentId,
    pub timestamp: DateTime<Utc>,
    /// Hex digest of the message that carried the update.
    pub source_message: String,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub edge_type: Label,
    pub weight: f64,
    pub timestamp: DateTime<Utc>,
    pub provenance: Option<ProvenanceTag>,
}

/// Type-level identity of an edge as it appears on the wire and in claims.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EdgeRef {
    pub from: NodeId,
    pub edge_type: Label,
    pub to: NodeId,
}

impl Edge {
    pub fn as_ref(&self) -> EdgeRef {
        EdgeRef { from: self.from.clone(), edge_type: self.edge_type.clone(), to: self.to.clone() }
    }
}

impl fmt::Display for EdgeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -[{}]-> {}", self.from, self.edge_type, self.to)
    }
}

impl std::str::FromStr for EdgeRef {
    type Err = GraphError;

    /// Parses the display form `from -[type]-> to`.
    fn from_str(s: &str) -> Result<Self, GraphError> {
        let bad = || GraphError::ParseError { line: 1, reason: format!("expected <from> -[<type>]-> <to>, found {s:?}") };
        let (from, rest) = s.split_once(" -[").ok_or_else(bad)?;
        let (t, to) = rest.split_once("]-> ").ok_or_else(bad)?;
        if t.is_empty() || !t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(bad());
        }
        Ok(EdgeRef { from: NodeId::new(from)?, edge_type: Label::new(t), to: NodeId::new(to)? })
    }
}

/// In-memory heterogeneous directed graph.
#[derive(Clone)]
pub struct KnowledgeGraph {
    schema: GraphSchema,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    out: HashMap<NodeId, Vec<EdgeId>>,
    inc: HashMap<NodeId, Vec<EdgeId>>,
    version: VersionId,
    next_edge_id: u64,
    embedder: Arc<dyn Embedder>,
}

impl fmt::Debug for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeGraph")
            .field("version", &self.version)
            .field("nodes", &self.nodes.len())
            .field("edges", &self.edges.len())
            .finish()
    }
}

/// Structural equality: schema, nodes and edges. Version and adjacency
/// storage order are not compared.
impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl KnowledgeGraph {
    pub fn new(schema: GraphSchema) -> Self {
        Self::with_embedder(schema, Arc::new(HashedTrigramEmbedder::default()))
    }

    pub fn with_embedder(schema: GraphSchema, embedder: Arc<dyn Embedder>) -> Self {
        KnowledgeGraph {
            schema,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            out: HashMap::new(),
            inc: HashMap::new(),
            version: 0,
            next_edge_id: 1,
            embedder,
        }
    }

    pub fn schema(&self) -> &GraphSchema {
        &self.schema
    }

    pub fn version(&self) -> VersionId {
        self.version
    }

    pub(crate) fn set_version(&mut self, v: VersionId) {
        self.version = v;
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn next_edge_id(&self) -> EdgeId {
        EdgeId(self.next_edge_id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    /// Nodes in lexicographic id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Edges in id order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    /// Outgoing edges of `id` in adjacency storage order.
    pub fn out_edges<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.out.get(id).into_iter().flatten().filter_map(move |e| self.edges.get(e))
    }

    pub fn in_edges<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.inc.get(id).into_iter().flatten().filter_map(move |e| self.edges.get(e))
    }

    /// True when some live edge matches `r` by endpoints and type.
    pub fn contains_edge_ref(&self, r: &EdgeRef) -> bool {
        self.out_edges(r.from.as_str()).any(|e| e.to == r.to && e.edge_type == r.edge_type)
    }

    /// Builds a node, computing its embedding from the display name.
    pub fn make_node(&self, id: NodeId, type_label: Label, display_name: &str, attributes: BTreeMap<String, AttrValue>) -> Node {
        let text = if display_name.trim().is_empty() { id.local_name() } else { display_name };
        Node { embedding: self.embedder.embed(text), id, type_label, display_name: display_name.to_string(), attributes }
    }

    pub(crate) fn insert_node(&mut self, node: Node) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Inserts an edge. A `None` id takes the next fresh id; an explicit id
    /// restores a previously retired edge (used by rollback and replay).
    pub(crate) fn insert_edge(&mut self, mut edge: Edge, id: Option<EdgeId>) -> Result<EdgeId, GraphError> {
        if !self.nodes.contains_key(&edge.from) || !self.nodes.contains_key(&edge.to) {
            return Err(GraphError::DanglingEdge(format!("{}", edge.as_ref())));
        }
        let id = match id {
            Some(id) => {
                self.next_edge_id = self.next_edge_id.max(id.0 + 1);
                id
            }
            None => {
                let id = EdgeId(self.next_edge_id);
                self.next_edge_id += 1;
                id
            }
        };
        edge.id = id;
        self.out.entry(edge.from.clone()).or_default().push(id);
        self.inc.entry(edge.to.clone()).or_default().push(id);
        self.edges.insert(id, edge);
        Ok(id)
    }

    pub(crate) fn remove_edge(&mut self, id: EdgeId) -> Option<Edge> {
        let edge = self.edges.remove(&id)?;
        if let Some(v) = self.out.get_mut(&edge.from) {
            v.retain(|e| *e != id);
        }
        if let Some(v) = self.inc.get_mut(&edge.to) {
            v.retain(|e| *e != id);
        }
        Some(edge)
    }

    /// Removes a node with no remaining incident edges.
    pub(crate) fn remove_node(&mut self, id: &NodeId) -> Option<Node> {
        let has_edges = self.out.get(id).is_some_and(|v| !v.is_empty()) || self.inc.get(id).is_some_and(|v| !v.is_empty());
        if has_edges {
            return None;
        }
        self.out.remove(id);
        self.inc.remove(id);
        self.nodes.remove(id)
    }

    /// Shuffles adjacency storage order. Results of every read operation
    /// must be invariant under this.
    pub fn permute_adjacency<R: rand::Rng>(&mut self, rng: &mut R) {
        use rand::seq::SliceRandom;
        let mut keys: Vec<NodeId> = self.out.keys().cloned().collect();
        keys.sort();
        for k in keys {
            if let Some(v) = self.out.get_mut(&k) {
                v.shuffle(rng);
            }
        }
    }

    /// Checks referential integrity and schema conformance of the whole graph.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        for node in self.nodes.values() {
            if let Some(v) = self.schema.check_node(node).into_iter().next() {
                return Err(v);
            }
        }
        for edge in self.edges.values() {
            let (Some(a), Some(b)) = (self.nodes.get(&edge.from), self.nodes.get(&edge.to)) else {
                return Err(GraphError::DanglingEdge(edge.id.to_string()));
            };
            self.schema.check_edge(&a.type_label, &edge.edge_type, &b.type_label, &edge.id.to_string())?;
            if !(0.0..=1.0).contains(&edge.weight) {
                return Err(GraphError::SchemaViolation { entity: format!("edge {}", edge.id), rule: "weight outside [0,1]".into() });
            }
        }
        Ok(())
    }

    /// Hex digest of the canonical line-delimited serialization.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        io::write_canonical(self, &mut buf).expect("in-memory write");
        crate::digest::sha256_hex(&buf)
    }
}

//! Messages, performatives and graph operations, plus the line-oriented
//! wire syntax they travel in.
//!
//! ```text
//! Dispatcher TO A_D
//! PERFORMATIVE: REQUEST
//! CONVERSATION: conv_042
//! OPERATION:
//!   TRAVERSE
//!     FROM: {Component:HC-3}
//!     VIA: {has_symptom}
//!     DEPTH: 1
//!     RETURN: SUBGRAPH
//! ```
//!
//! [`serialize`] is canonical (sorted sets, fixed field order, LF endings)
//! and [`parse`] is its exact inverse on canonical text.

mod parse;
mod serialize;
mod tokens;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::graph::{EdgeRef, Label, NodeId, NodeSelector, Predicate, VersionId};
use crate::update::GraphDelta;

pub use parse::{parse, parse_operation};
pub use serialize::{serialize, serialize_operation, serialize_result};
pub use tokens::{token_count, tokenize};
pub use validate::{validate, validate_against, Violation};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(Arc<str>);

impl AgentId {
    pub fn new(s: &str) -> Result<Self, String> {
        if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            Ok(AgentId(Arc::from(s)))
        } else {
            Err(format!("invalid agent id {s:?}"))
        }
    }

    pub fn lit(s: &str) -> Self {
        Self::new(s).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

macro_rules! wire_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ();
            fn from_str(s: &str) -> Result<Self, ()> {
                match s { $($text => Ok($name::$variant),)+ _ => Err(()) }
            }
        }
    };
}

wire_enum!(
    /// The seven communicative acts.
    Performative {
        Request => "REQUEST",
        Inform => "INFORM",
        Query => "QUERY",
        Propose => "PROPOSE",
        Confirm => "CONFIRM",
        Reject => "REJECT",
        Update => "UPDATE",
    }
);

wire_enum!(ReturnFormat {
    Subgraph => "SUBGRAPH",
    Paths => "PATHS",
    Leaves => "LEAVES",
});

wire_enum!(
    /// Machine-readable failure classes carried by error payloads.
    ErrorCode {
        Malformed => "MALFORMED",
        Unauthorized => "UNAUTHORIZED",
        Timeout => "TIMEOUT",
        SourceEmpty => "SOURCE_EMPTY",
        UnknownNode => "UNKNOWN_NODE",
        UnknownContext => "UNKNOWN_CONTEXT",
        NoEntitiesLinked => "NO_ENTITIES_LINKED",
        ValidationFailed => "VALIDATION_FAILED",
        WriteConflict => "WRITE_CONFLICT",
        BadSignature => "BAD_SIGNATURE",
    }
);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    Finite(u32),
    Unbounded,
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Finite(h) => write!(f, "{h}"),
            Depth::Unbounded => f.write_str("UNBOUNDED"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraverseOp {
    pub source: NodeSelector,
    pub via: BTreeSet<Label>,
    pub depth: Depth,
    pub ret: ReturnFormat,
    /// Filter applied to every admitted non-source node.
    pub constraints: Option<Predicate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOp {
    /// Head version the sender computed the delta against.
    pub base: Option<VersionId>,
    pub delta: GraphDelta,
}

/// A path as it appears on the wire: a start node and typed hops.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathSpec {
    pub start: NodeId,
    pub hops: Vec<(Label, NodeId)>,
}

impl PathSpec {
    pub fn end(&self) -> &NodeId {
        self.hops.last().map(|(_, n)| n).unwrap_or(&self.start)
    }

    pub fn edge_refs(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        let froms = std::iter::once(&self.start).chain(self.hops.iter().map(|(_, n)| n));
        froms.zip(&self.hops).map(|(from, (t, to))| EdgeRef { from: from.clone(), edge_type: t.clone(), to: to.clone() })
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        std::iter::once(&self.start).chain(self.hops.iter().map(|(_, n)| n))
    }
}

/// Wire form of a traversal result.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultBody {
    pub format: ReturnFormat,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeRef>,
    pub paths: Vec<PathSpec>,
    /// Empty, or aligned one-to-one with `nodes`.
    pub confidence: Vec<f64>,
    pub truncated: bool,
}

impl ResultBody {
    pub fn empty(format: ReturnFormat) -> Self {
        ResultBody { format, nodes: vec![], edges: vec![], paths: vec![], confidence: vec![], truncated: false }
    }

    /// Every node and edge the body asserts, including path support.
    pub fn support(&self) -> (BTreeSet<NodeId>, BTreeSet<EdgeRef>) {
        let mut nodes: BTreeSet<NodeId> = self.nodes.iter().cloned().collect();
        let mut edges: BTreeSet<EdgeRef> = self.edges.iter().cloned().collect();
        for p in &self.paths {
            nodes.extend(p.nodes().cloned());
            edges.extend(p.edge_refs());
        }
        for e in &edges {
            nodes.insert(e.from.clone());
            nodes.insert(e.to.clone());
        }
        (nodes, edges)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub detail: String,
    /// Hex digest of the message or result this error refers to.
    pub reference: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperationPayload {
    Traverse(TraverseOp),
    Update(UpdateOp),
    Result(ResultBody),
    Error(ErrorBody),
}

impl OperationPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            OperationPayload::Traverse(_) => "TRAVERSE",
            OperationPayload::Update(_) => "UPDATE",
            OperationPayload::Result(_) => "RESULT",
            OperationPayload::Error(_) => "ERROR",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConversationContext {
    pub conversation_id: String,
    /// Node frontier of the current conversation focus.
    pub focus: BTreeSet<NodeId>,
}

impl ConversationContext {
    pub fn new(conversation_id: &str) -> Self {
        ConversationContext { conversation_id: conversation_id.to_string(), focus: BTreeSet::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub performative: Performative,
    pub operation: OperationPayload,
    pub context: ConversationContext,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("line {line}, column {column}: expected {}, found {found:?}", expected.join(" | "))]
    Parse { line: usize, column: usize, expected: Vec<String>, found: String },
    #[error("incompatible message: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Compatibility(Vec<Violation>),
}

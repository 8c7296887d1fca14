//! Runtime for graph-grounded agent communication.
//!
//! Agents exchange typed graph operations (`TRAVERSE`, `UPDATE`) wrapped in
//! performatives over a shared, versioned knowledge graph. Every delivered
//! message is signed, authorized, executed deterministically and appended to
//! a hash-chained audit log that an independent party can replay.
//!
//! Module map:
//! - [`graph`]: storage, schema, selectors, embeddings, versioned history
//! - [`protocol`]: message model, wire grammar, validation, token counting
//! - [`traversal`]: filtered breadth-first execution and result extraction
//! - [`update`]: delta validation and application
//! - [`commitment`]: social-commitment ledger
//! - [`security`]: signing, role-based authorization, trust scores
//! - [`audit`]: append-only log, replay, claim verification
//! - [`agents`]: roles, language port, scenario harness
//! - [`stats`]: graph statistics and traversal benchmarks
//! - [`cli`]: command-line surface

pub mod agents;
pub mod audit;
pub mod cli;
pub mod commitment;
pub mod digest;
pub mod graph;
pub mod protocol;
pub mod security;
pub mod stats;
pub mod traversal;
pub mod update;

pub use graph::{Edge, EdgeId, KnowledgeGraph, Label, Node, NodeId};
pub use protocol::{AgentId, Message, OperationPayload, Performative};

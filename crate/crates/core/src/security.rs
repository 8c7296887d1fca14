//! Message signing, role-based authorization and trust scores.
//!
//! A signed envelope is the canonical message text followed by three
//! trailer lines:
//!
//! ```text
//! <message body>
//! NONCE: 7
//! SIGNATURE: <base64 ed25519 signature>
//! KEYID: ed25519:<hex>
//! ```
//!
//! The signature covers the SHA-256 digest of every byte before the
//! `SIGNATURE:` line, nonce included.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use base64::Engine as _;
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};

use crate::digest::sha256;
use crate::graph::{KnowledgeGraph, Label, NodeId};
use crate::protocol::AgentId;
use crate::update::GraphDelta;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SecurityError {
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
    #[error("unknown sender {0}")]
    UnknownSender(String),
    #[error("nonce {nonce} from {sender} already seen")]
    Replayed { sender: AgentId, nonce: u64 },
}

#[derive(Clone)]
pub struct AgentIdentity {
    pub agent_id: AgentId,
    key: SigningKey,
}

impl fmt::Debug for AgentIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentIdentity").field("agent_id", &self.agent_id).field("key_id", &self.key_id()).finish()
    }
}

impl AgentIdentity {
    /// Deterministic keypair derived from `(seed, agent id)`.
    pub fn from_seed(agent_id: AgentId, seed: u64) -> Self {
        let material = sha256(format!("g2cp-key:{seed}:{agent_id}").as_bytes());
        AgentIdentity { agent_id, key: SigningKey::from_bytes(&material) }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn key_id(&self) -> String {
        key_id(&self.verifying_key())
    }
}

fn key_id(k: &VerifyingKey) -> String {
    format!("ed25519:{}", hex::encode(&sha256(k.as_bytes())[..8]))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub body: String,
    pub nonce: u64,
    pub signature: Vec<u8>,
    pub key_id: String,
}

impl Envelope {
    /// Bytes covered by the signature.
    pub fn signed_region(&self) -> String {
        format!("{}NONCE: {}\n", self.body, self.nonce)
    }

    pub fn to_text(&self) -> String {
        format!(
            "{}SIGNATURE: {}\nKEYID: {}\n",
            self.signed_region(),
            base64::engine::general_purpose::STANDARD.encode(&self.signature),
            self.key_id
        )
    }

    pub fn parse(text: &str) -> Result<Envelope, SecurityError> {
        let bad = |m: &str| SecurityError::MalformedEnvelope(m.to_string());
        let rest = text.strip_suffix('\n').ok_or_else(|| bad("missing final newline"))?;
        let (rest, key_line) = rest.rsplit_once('\n').ok_or_else(|| bad("missing KEYID"))?;
        let key_id = key_line.strip_prefix("KEYID: ").ok_or_else(|| bad("missing KEYID"))?;
        let (rest, sig_line) = rest.rsplit_once('\n').ok_or_else(|| bad("missing SIGNATURE"))?;
        let sig = sig_line.strip_prefix("SIGNATURE: ").ok_or_else(|| bad("missing SIGNATURE"))?;
        let (body, nonce_line) = rest.rsplit_once('\n').ok_or_else(|| bad("missing NONCE"))?;
        let nonce = nonce_line.strip_prefix("NONCE: ").and_then(|n| n.parse().ok()).ok_or_else(|| bad("missing NONCE"))?;
        let signature = base64::engine::general_purpose::STANDARD.decode(sig).map_err(|_| bad("signature is not base64"))?;
        Ok(Envelope { body: format!("{body}\n"), nonce, signature, key_id: key_id.to_string() })
    }

    /// Sender named in the message header line.
    pub fn claimed_sender(&self) -> Option<&str> {
        self.body.lines().next()?.split_once(" TO ").map(|(s, _)| s)
    }

    /// Hex digest of the whole envelope text.
    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(self.to_text().as_bytes())
    }
}

pub fn sign(body: &str, nonce: u64, identity: &AgentIdentity) -> Envelope {
    let mut env = Envelope { body: body.to_string(), nonce, signature: vec![], key_id: identity.key_id() };
    let digest = sha256(env.signed_region().as_bytes());
    env.signature = identity.key.sign(&digest).to_bytes().to_vec();
    env
}

/// Public keys registered before any message is exchanged.
#[derive(Clone, Debug, Default)]
pub struct Roster {
    keys: BTreeMap<AgentId, VerifyingKey>,
}

impl Roster {
    pub fn register(&mut self, id: &AgentIdentity) {
        self.keys.insert(id.agent_id.clone(), id.verifying_key());
    }

    pub fn contains(&self, a: &AgentId) -> bool {
        self.keys.contains_key(a)
    }
}

/// True iff the envelope's key id belongs to the sender named in the body
/// and the signature verifies under that sender's registered key.
pub fn verify_signature(env: &Envelope, roster: &Roster) -> Result<bool, SecurityError> {
    let sender = env.claimed_sender().ok_or_else(|| SecurityError::MalformedEnvelope("missing header".into()))?;
    let key =
        AgentId::new(sender).ok().and_then(|a| roster.keys.get(&a)).ok_or_else(|| SecurityError::UnknownSender(sender.to_string()))?;
    if key_id(key) != env.key_id {
        return Ok(false);
    }
    let Ok(sig) = Signature::from_slice(&env.signature) else {
        return Ok(false);
    };
    let digest = sha256(env.signed_region().as_bytes());
    Ok(key.verify(&digest, &sig).is_ok())
}

/// Rejects a second envelope carrying a nonce already seen from the same sender.
#[derive(Clone, Debug, Default)]
pub struct NonceGuard {
    seen: BTreeMap<AgentId, BTreeSet<u64>>,
}

impl NonceGuard {
    pub fn check(&mut self, sender: &AgentId, nonce: u64) -> Result<(), SecurityError> {
        if self.seen.entry(sender.clone()).or_default().insert(nonce) {
            Ok(())
        } else {
            Err(SecurityError::Replayed { sender: sender.clone(), nonce })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Action {
    Read,
    Traverse,
    Update,
}

/// A type set in a grant; `All` stands for the whole universe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scope {
    All,
    Only(BTreeSet<Label>),
}

impl Scope {
    pub fn of(labels: &[&str]) -> Scope {
        Scope::Only(labels.iter().map(|l| Label::new(l)).collect())
    }

    fn covers(&self, l: &Label) -> bool {
        match self {
            Scope::All => true,
            Scope::Only(s) => s.contains(l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permission {
    pub action: Action,
    pub node_types: Scope,
    pub edge_types: Scope,
}

/// What an operation touches, in type terms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AccessRequest {
    Traverse { source_types: BTreeSet<Label>, via: BTreeSet<Label> },
    Update { node_types: BTreeSet<Label>, edge_types: BTreeSet<Label> },
}

impl AccessRequest {
    pub fn traverse(sources: &BTreeSet<NodeId>, via: &BTreeSet<Label>) -> Self {
        AccessRequest::Traverse { source_types: sources.iter().map(|s| Label::new(s.type_prefix())).collect(), via: via.clone() }
    }

    /// Node and edge types a delta adds or removes, looked up in `graph`
    /// for deletions.
    pub fn update(delta: &GraphDelta, graph: &KnowledgeGraph) -> Self {
        let mut node_types: BTreeSet<Label> = delta.add_nodes.iter().map(|n| n.type_label.clone()).collect();
        let mut edge_types = BTreeSet::new();
        for e in &delta.add_edges {
            edge_types.insert(e.edge_type.clone());
            node_types.insert(Label::new(e.from.type_prefix()));
            node_types.insert(Label::new(e.to.type_prefix()));
        }
        for id in &delta.del_edges {
            if let Some(e) = graph.edge(*id) {
                edge_types.insert(e.edge_type.clone());
                node_types.insert(Label::new(e.from.type_prefix()));
                node_types.insert(Label::new(e.to.type_prefix()));
            }
        }
        for n in &delta.del_nodes {
            node_types.insert(Label::new(n.type_prefix()));
        }
        AccessRequest::Update { node_types, edge_types }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(String),
}

pub fn authorize(permissions: &[Permission], request: &AccessRequest) -> Decision {
    let (action, nodes, edges) = match request {
        AccessRequest::Traverse { source_types, via } => (Action::Traverse, source_types, via),
        AccessRequest::Update { node_types, edge_types } => (Action::Update, node_types, edge_types),
    };
    let grants: Vec<&Permission> = permissions.iter().filter(|p| p.action == action).collect();
    if grants.is_empty() {
        let name = if action == Action::Update { "UPDATE" } else { "TRAVERSE" };
        return Decision::Deny(format!("no {name} grant"));
    }
    let covered = grants.iter().any(|p| nodes.iter().all(|t| p.node_types.covers(t)) && edges.iter().all(|t| p.edge_types.covers(t)));
    if covered {
        Decision::Allow
    } else {
        Decision::Deny("no grant covers the requested types".into())
    }
}

/// Grants per agent; an agent absent from the table holds none.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Policy {
    grants: BTreeMap<AgentId, Vec<Permission>>,
}

impl Policy {
    pub fn grant(&mut self, agent: AgentId, permission: Permission) -> &mut Self {
        self.grants.entry(agent).or_default().push(permission);
        self
    }

    pub fn grants(&self, agent: &AgentId) -> &[Permission] {
        self.grants.get(agent).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn authorize(&self, agent: &AgentId, request: &AccessRequest) -> Decision {
        authorize(self.grants(agent), request)
    }
}

/// Emitted whenever an agent's trust drops below the review threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct HumanReview {
    pub agent: AgentId,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrustState {
    scores: BTreeMap<AgentId, f64>,
    pub alpha: f64,
    pub review_threshold: f64,
    pub initial: f64,
}

impl Default for TrustState {
    fn default() -> Self {
        TrustState { scores: BTreeMap::new(), alpha: 0.9, review_threshold: 0.5, initial: 1.0 }
    }
}

impl TrustState {
    pub fn score(&self, agent: &AgentId) -> f64 {
        self.scores.get(agent).copied().unwrap_or(self.initial)
    }

    /// `τ' = α·τ + (1 − α)·[verified]`.
    pub fn update(&mut self, agent: &AgentId, verified: bool) -> (f64, Option<HumanReview>) {
        let s = self.alpha * self.score(agent) + (1.0 - self.alpha) * if verified { 1.0 } else { 0.0 };
        self.scores.insert(agent.clone(), s);
        let review = (s < self.review_threshold).then(|| HumanReview { agent: agent.clone(), score: s });
        (s, review)
    }
}

//! Hash-chained audit log, deterministic replay and claim verification.
//!
//! Every message a receiver accepts or refuses becomes one entry, written
//! before any reply is sent. An entry stores the verbatim signed envelope,
//! the receiver's outcome, the graph versions around it and a hash linking
//! it to its predecessor. Replay feeds the same envelopes through the same
//! admission and execution path against the initial graph and compares
//! outcomes entry by entry.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::graph::{EdgeRef, GraphError, GraphStore, KnowledgeGraph, NodeId, VersionId};
use crate::protocol::{
    self, parse_operation, serialize_result, validate_against, ErrorCode, Message, OperationPayload, Performative, ResultBody,
};
use crate::security::{verify_signature, AccessRequest, Decision, Envelope, NonceGuard, Policy, Roster, SecurityError};
use crate::traversal::{execute, traverse, ExecutionLimits, TraversalError};
use crate::update::{apply_update, UpdateError, UpdateOrigin};

pub const LOG_FORMAT: &str = "g2cp-audit-v1";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("corrupt entry at line {line}: {reason}")]
    CorruptEntry { line: usize, reason: String },
    #[error("broken chain at entry {seq}: {reason}")]
    BrokenChain { seq: u64, reason: String },
    #[error("initial graph digest {found} does not match logged {expected}")]
    InitialState { expected: String, found: String },
    #[error("no entry with sequence number {0}")]
    UnknownEntry(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("i/o: {0}")]
    Io(String),
}

/// What the receiving agent did with an entry's message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Result-carrying or error-carrying message accepted as is.
    Delivered,
    /// Traversal executed; the canonical result block.
    Executed { result: String },
    /// Valid message refused during authorization, validation or execution.
    Refused { code: String, detail: String },
    /// Update committed as `version`, leaving the graph with `state_digest`.
    Applied { version: VersionId, state_digest: String },
    /// Envelope or body could not be trusted or parsed.
    Dropped { code: String, detail: String },
}

impl Outcome {
    fn refused(code: ErrorCode, detail: impl Into<String>) -> Self {
        Outcome::Refused { code: code.as_str().into(), detail: detail.into() }
    }

    fn dropped(code: ErrorCode, detail: impl Into<String>) -> Self {
        Outcome::Dropped { code: code.as_str().into(), detail: detail.into() }
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("outcome serializes").as_bytes())
    }

    /// The executed result, parsed back from its canonical text.
    pub fn result_body(&self) -> Option<ResultBody> {
        match self {
            Outcome::Executed { result } => match parse_operation(result) {
                Ok(OperationPayload::Result(r)) => Some(r),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn refusal_code(&self) -> Option<&str> {
        match self {
            Outcome::Refused { code, .. } | Outcome::Dropped { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    /// A bus message; `text` is the signed envelope.
    Message,
    /// An agent-local traversal; `text` is the operation block.
    Internal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    /// Agent that processed the entry.
    pub actor: String,
    pub kind: EntryKind,
    pub conversation: Option<String>,
    pub text: String,
    pub outcome: Outcome,
    pub result_digest: String,
    pub version_before: VersionId,
    pub version_after: VersionId,
    pub prev_hash: String,
    pub entry_hash: String,
}

impl AuditEntry {
    fn compute_hash(&self) -> String {
        let mut bare = self.clone();
        bare.entry_hash.clear();
        let json = serde_json::to_string(&bare).expect("entry serializes");
        sha256_hex(format!("{}\n{json}", self.prev_hash).as_bytes())
    }

    /// The parsed message, if this is a message entry with a readable body.
    pub fn message(&self) -> Option<(Envelope, Message)> {
        if self.kind != EntryKind::Message {
            return None;
        }
        let env = Envelope::parse(&self.text).ok()?;
        let msg = protocol::parse(&env.body).ok()?;
        Some((env, msg))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub initial_digest: String,
    pub limits: ExecutionLimits,
}

impl LogHeader {
    fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("header serializes").as_bytes())
    }
}

/// Fields the writer supplies; sequencing and hashing are filled in on append.
#[derive(Clone, Debug)]
pub struct NewEntry {
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub kind: EntryKind,
    pub conversation: Option<String>,
    pub text: String,
    pub outcome: Outcome,
    pub version_before: VersionId,
    pub version_after: VersionId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditLog {
    pub header: LogHeader,
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn new(initial: &KnowledgeGraph, limits: ExecutionLimits) -> Self {
        AuditLog { header: LogHeader { format: LOG_FORMAT.into(), initial_digest: initial.digest(), limits }, entries: vec![] }
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    /// Direct access for fault-injection tests; appends must go through [`AuditLog::append`].
    pub fn entries_mut(&mut self) -> &mut [AuditEntry] {
        &mut self.entries
    }

    pub fn entry(&self, seq: u64) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.seq == seq)
    }

    pub fn last_hash(&self) -> String {
        self.entries.last().map(|e| e.entry_hash.clone()).unwrap_or_else(|| self.header.hash())
    }

    pub fn append(&mut self, new: NewEntry) -> &AuditEntry {
        let mut e = AuditEntry {
            seq: self.entries.len() as u64 + 1,
            timestamp: new.timestamp,
            actor: new.actor,
            kind: new.kind,
            conversation: new.conversation,
            text: new.text,
            result_digest: new.outcome.digest(),
            outcome: new.outcome,
            version_before: new.version_before,
            version_after: new.version_after,
            prev_hash: self.last_hash(),
            entry_hash: String::new(),
        };
        e.entry_hash = e.compute_hash();
        self.entries.push(e);
        self.entries.last().expect("just pushed")
    }

    /// Sequence numbers of every entry in `conversation`.
    pub fn trace(&self, conversation: &str) -> Vec<u64> {
        self.entries.iter().filter(|e| e.conversation.as_deref() == Some(conversation)).map(|e| e.seq).collect()
    }

    /// Checks hash links and version continuity without re-executing anything.
    pub fn verify_chain(&self) -> Result<(), AuditError> {
        let mut prev = self.header.hash();
        let mut version = None;
        for e in &self.entries {
            if e.prev_hash != prev || e.compute_hash() != e.entry_hash {
                return Err(AuditError::BrokenChain { seq: e.seq, reason: "hash link".into() });
            }
            if version.is_some_and(|v| v != e.version_before) {
                return Err(AuditError::BrokenChain { seq: e.seq, reason: "version gap".into() });
            }
            prev = e.entry_hash.clone();
            version = Some(e.version_after);
        }
        Ok(())
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), AuditError> {
        let io = |e: std::io::Error| AuditError::Io(e.to_string());
        writeln!(out, "{}", serde_json::to_string(&self.header).expect("header serializes")).map_err(io)?;
        for e in &self.entries {
            writeln!(out, "{}", serde_json::to_string(e).expect("entry serializes")).map_err(io)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, AuditError> {
        let mut lines = input.lines().enumerate();
        let corrupt = |line: usize, reason: String| AuditError::CorruptEntry { line: line + 1, reason };
        let (i, first) = lines.next().ok_or_else(|| corrupt(0, "missing header".into()))?;
        let first = first.map_err(|e| AuditError::Io(e.to_string()))?;
        let header: LogHeader = serde_json::from_str(&first).map_err(|e| corrupt(i, e.to_string()))?;
        if header.format != LOG_FORMAT {
            return Err(corrupt(i, format!("unsupported format {}", header.format)));
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| AuditError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| corrupt(i, e.to_string()))?);
        }
        Ok(AuditLog { header, entries })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, AuditError> {
        Self::read_jsonl(text.as_bytes())
    }
}

/// Fixed inputs of message processing, shared by live agents and replay.
#[derive(Clone, Debug)]
pub struct Admission<'a> {
    pub roster: &'a Roster,
    pub policy: &'a Policy,
    pub limits: &'a ExecutionLimits,
}

#[derive(Clone, Debug)]
pub struct Processed {
    pub outcome: Outcome,
    pub envelope: Option<Envelope>,
    pub message: Option<Message>,
}

/// Admission, authorization and execution of one received envelope.
///
/// Deterministic given the store, the nonce history and `at`, apart from
/// wall-clock timeouts.
pub fn process_message(text: &str, adm: &Admission<'_>, nonces: &mut NonceGuard, store: &mut GraphStore, at: DateTime<Utc>) -> Processed {
    let mut done = Processed { outcome: Outcome::Delivered, envelope: None, message: None };
    let env = match Envelope::parse(text) {
        Ok(env) => env,
        Err(e) => {
            done.outcome = Outcome::dropped(ErrorCode::Malformed, e.to_string());
            return done;
        }
    };
    match verify_signature(&env, adm.roster) {
        Ok(true) => {}
        Ok(false) => {
            done.outcome = Outcome::dropped(ErrorCode::BadSignature, "signature does not verify");
            return done;
        }
        Err(SecurityError::MalformedEnvelope(d)) => {
            done.outcome = Outcome::dropped(ErrorCode::Malformed, d);
            return done;
        }
        Err(e) => {
            done.outcome = Outcome::dropped(ErrorCode::BadSignature, e.to_string());
            return done;
        }
    }
    done.envelope = Some(env.clone());
    let msg = match protocol::parse(&env.body) {
        Ok(m) => m,
        Err(e) => {
            done.outcome = Outcome::dropped(ErrorCode::Malformed, e.to_string());
            return done;
        }
    };
    if let Err(e) = nonces.check(&msg.sender, env.nonce) {
        done.outcome = Outcome::dropped(ErrorCode::BadSignature, e.to_string());
        return done;
    }
    done.outcome = execute_message(&msg, &env, adm, store, at);
    done.message = Some(msg);
    done
}

fn execute_message(msg: &Message, env: &Envelope, adm: &Admission<'_>, store: &mut GraphStore, at: DateTime<Utc>) -> Outcome {
    let violations = validate_against(msg, store.head().schema());
    if !violations.is_empty() {
        let detail = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Outcome::refused(ErrorCode::Malformed, detail);
    }
    match (&msg.performative, &msg.operation) {
        (Performative::Request | Performative::Query | Performative::Propose, OperationPayload::Traverse(op)) => {
            let graph = store.head();
            let sources = match crate::graph::resolve_selector(&op.source, graph, &msg.context) {
                Ok(s) if s.is_empty() => return Outcome::refused(ErrorCode::SourceEmpty, "source resolved to no nodes"),
                Ok(s) => s,
                Err(e) => return graph_refusal(&e),
            };
            if let Decision::Deny(why) = adm.policy.authorize(&msg.sender, &AccessRequest::traverse(&sources, &op.via)) {
                return Outcome::refused(ErrorCode::Unauthorized, format!("Unauthorized operation: {why}"));
            }
            match traverse(&sources, &op.via, op.depth, op.ret, op.constraints.as_ref(), adm.limits, graph) {
                Ok(r) if r.timed_out => Outcome::refused(ErrorCode::Timeout, "execution timeout exceeded"),
                Ok(r) => Outcome::Executed { result: serialize_result(&r.to_body(graph)) },
                Err(TraversalError::SourceEmpty) => Outcome::refused(ErrorCode::SourceEmpty, "source resolved to no nodes"),
                Err(TraversalError::Selector(e)) => graph_refusal(&e),
            }
        }
        (Performative::Update, OperationPayload::Update(u)) => {
            let request = AccessRequest::update(&u.delta, store.head());
            if let Decision::Deny(why) = adm.policy.authorize(&msg.sender, &request) {
                return Outcome::refused(ErrorCode::Unauthorized, format!("Unauthorized operation: {why}"));
            }
            let origin = UpdateOrigin { author: msg.sender.clone(), timestamp: at, source_message: env.digest() };
            match apply_update(store, &u.delta, u.base, &origin) {
                Ok(version) => Outcome::Applied { version, state_digest: store.head().digest() },
                Err(UpdateError::ValidationFailed(v)) => {
                    Outcome::refused(ErrorCode::ValidationFailed, v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "))
                }
                Err(e @ UpdateError::ConcurrentWriteConflict { .. }) => Outcome::refused(ErrorCode::WriteConflict, e.to_string()),
                Err(UpdateError::Graph(e)) => Outcome::refused(ErrorCode::ValidationFailed, e.to_string()),
            }
        }
        _ => Outcome::Delivered,
    }
}

fn graph_refusal(e: &GraphError) -> Outcome {
    let code = match e {
        GraphError::UnknownContextSymbol(_) => ErrorCode::UnknownContext,
        _ => ErrorCode::UnknownNode,
    };
    Outcome::refused(code, e.to_string())
}

/// Runs an agent-local traversal given as an operation block.
pub fn process_internal(op_text: &str, limits: &ExecutionLimits, graph: &KnowledgeGraph) -> Outcome {
    let op = match parse_operation(op_text) {
        Ok(OperationPayload::Traverse(op)) => op,
        Ok(other) => return Outcome::dropped(ErrorCode::Malformed, format!("internal {} operation", other.kind())),
        Err(e) => return Outcome::dropped(ErrorCode::Malformed, e.to_string()),
    };
    let ctx = protocol::ConversationContext::new("internal");
    match execute(&op, &ctx, graph, limits) {
        Ok(r) if r.timed_out => Outcome::refused(ErrorCode::Timeout, "execution timeout exceeded"),
        Ok(r) => Outcome::Executed { result: serialize_result(&r.to_body(graph)) },
        Err(TraversalError::SourceEmpty) => Outcome::refused(ErrorCode::SourceEmpty, "source resolved to no nodes"),
        Err(TraversalError::Selector(e)) => graph_refusal(&e),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Match,
    Mismatch(Vec<String>),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Match => f.write_str("MATCH"),
            Verdict::Mismatch(r) => write!(f, "MISMATCH ({})", r.join(", ")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryReport {
    pub seq: u64,
    pub verdict: Verdict,
    /// The outcome replay computed for this entry.
    pub recomputed: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayReport {
    pub entries: Vec<EntryReport>,
    pub final_version: VersionId,
    pub final_digest: String,
}

impl ReplayReport {
    pub fn all_match(&self) -> bool {
        self.entries.iter().all(|e| e.verdict == Verdict::Match)
    }

    pub fn mismatched(&self) -> Vec<u64> {
        self.entries.iter().filter(|e| e.verdict != Verdict::Match).map(|e| e.seq).collect()
    }
}

/// Incremental replay state; one [`Replayer::step`] per logged entry.
pub struct Replayer<'a> {
    pub store: GraphStore,
    nonces: NonceGuard,
    roster: &'a Roster,
    policy: &'a Policy,
    limits: ExecutionLimits,
    prev_hash: String,
}

impl<'a> Replayer<'a> {
    pub fn new(log: &AuditLog, initial: &KnowledgeGraph, roster: &'a Roster, policy: &'a Policy) -> Result<Self, AuditError> {
        let found = initial.digest();
        if found != log.header.initial_digest {
            return Err(AuditError::InitialState { expected: log.header.initial_digest.clone(), found });
        }
        Ok(Replayer {
            store: GraphStore::new(initial.clone()),
            nonces: NonceGuard::default(),
            roster,
            policy,
            limits: log.header.limits,
            prev_hash: log.header.hash(),
        })
    }

    pub fn step(&mut self, e: &AuditEntry) -> EntryReport {
        let mut reasons = Vec::new();
        if e.prev_hash != self.prev_hash || e.compute_hash() != e.entry_hash {
            reasons.push("hash chain".to_string());
        }
        self.prev_hash = e.entry_hash.clone();
        if e.version_before != self.store.snapshot() {
            reasons.push(format!("broken chain: version {} expected {}", e.version_before, self.store.snapshot()));
        }
        if e.result_digest != e.outcome.digest() {
            reasons.push("result digest".to_string());
        }
        let recomputed = match e.kind {
            EntryKind::Message => {
                let adm = Admission { roster: self.roster, policy: self.policy, limits: &self.limits };
                process_message(&e.text, &adm, &mut self.nonces, &mut self.store, e.timestamp).outcome
            }
            EntryKind::Internal => process_internal(&e.text, &self.limits, self.store.head()),
        };
        if recomputed != e.outcome {
            let what = match (&recomputed, &e.outcome) {
                (Outcome::Dropped { detail, .. }, _) => format!("outcome: {detail}"),
                _ => "outcome".to_string(),
            };
            reasons.push(what);
        }
        if e.version_after != self.store.snapshot() {
            reasons.push(format!("version after {} expected {}", e.version_after, self.store.snapshot()));
        }
        let verdict = if reasons.is_empty() { Verdict::Match } else { Verdict::Mismatch(reasons) };
        EntryReport { seq: e.seq, verdict, recomputed }
    }
}

/// Re-executes every entry of `log` from `initial` and reports per-entry
/// MATCH or MISMATCH.
pub fn replay(log: &AuditLog, initial: &KnowledgeGraph, roster: &Roster, policy: &Policy) -> Result<ReplayReport, AuditError> {
    let mut r = Replayer::new(log, initial, roster, policy)?;
    let entries = log.entries().iter().map(|e| r.step(e)).collect();
    Ok(ReplayReport { entries, final_version: r.store.snapshot(), final_digest: r.store.head().digest() })
}

/// A set of nodes and typed edges an agent presents as fact.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Claim {
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeSet<EdgeRef>,
}

impl Claim {
    pub fn from_body(body: &ResultBody) -> Self {
        let (nodes, edges) = body.support();
        Claim { nodes, edges }
    }

    pub fn merge(&mut self, other: Claim) {
        self.nodes.extend(other.nodes);
        self.edges.extend(other.edges);
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    /// Parts of `self` not present in `support`.
    pub fn missing_from(&self, support: &Claim) -> Claim {
        Claim {
            nodes: self.nodes.difference(&support.nodes).cloned().collect(),
            edges: self.edges.difference(&support.edges).cloned().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClaimVerdict {
    Grounded,
    /// The claim asserts elements no replayed result supports.
    Fabricated(Claim),
    /// The trace itself does not replay; carries the first bad entry.
    FalsifiedTrace(u64),
}

/// True iff every node and edge of `body` exists in `graph`.
pub fn grounded_in(body: &ResultBody, graph: &KnowledgeGraph) -> bool {
    let (nodes, edges) = body.support();
    nodes.iter().all(|n| graph.contains_node(n.as_str())) && edges.iter().all(|e| graph.contains_edge_ref(e))
}

/// Replays the log, then checks that `claim` lies inside the union of the
/// results recomputed for the `trace` entries.
pub fn verify_claim(
    claim: &Claim,
    trace: &[u64],
    log: &AuditLog,
    initial: &KnowledgeGraph,
    roster: &Roster,
    policy: &Policy,
) -> Result<ClaimVerdict, AuditError> {
    let wanted: BTreeSet<u64> = trace.iter().copied().collect();
    if let Some(s) = wanted.iter().find(|s| log.entry(**s).is_none()) {
        return Err(AuditError::UnknownEntry(*s));
    }
    let last = wanted.iter().next_back().copied().unwrap_or(0);
    let mut r = Replayer::new(log, initial, roster, policy)?;
    let mut support = Claim::default();
    for e in log.entries().iter().take_while(|e| e.seq <= last) {
        let report = r.step(e);
        if !wanted.contains(&e.seq) {
            continue;
        }
        if report.verdict != Verdict::Match {
            return Ok(ClaimVerdict::FalsifiedTrace(e.seq));
        }
        if let Some(body) = report.recomputed.result_body() {
            support.merge(Claim::from_body(&body));
        }
    }
    let missing = claim.missing_from(&support);
    Ok(if missing.is_empty() { ClaimVerdict::Grounded } else { ClaimVerdict::Fabricated(missing) })
}

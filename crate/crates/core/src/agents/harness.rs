//! Single-threaded runtime hosting all agents on one bus.
//!
//! Every delivery runs the same admission path replay uses
//! ([`process_message`]), appends the audit entry, updates the commitment
//! ledger and only then lets the receiving role react.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};

use crate::audit::{grounded_in, process_internal, process_message, Admission, AuditLog, Claim, EntryKind, NewEntry, Outcome};
use crate::commitment::CommitmentLedger;
use crate::graph::{resolve_selector, EdgeRef, GraphStore, KnowledgeGraph, Label, NodeId, NodeSelector};
use crate::protocol::{
    serialize, serialize_operation, token_count, AgentId, ConversationContext, Depth, ErrorBody, ErrorCode, Message, OperationPayload,
    Performative, ResultBody, ReturnFormat, TraverseOp, UpdateOp,
};
use crate::security::{sign, AgentIdentity, Envelope, HumanReview, NonceGuard, Policy, Roster, TrustState};
use crate::traversal::ExecutionLimits;
use crate::update::GraphDelta;

use super::synthesis::{discover_patterns, SynthesisConfig};
use super::{
    default_policy, labels, rank_faults, select_operation, Bus, Intent, LanguagePort, SelectError, Selection, AGENTS, DIAGNOSTIC,
    DISPATCHER, HISTORIAN, INGESTION, PROCEDURAL, USER,
};

/// Deliveries after which a run is considered divergent.
const MAX_DELIVERIES: usize = 100_000;

#[derive(Clone, Debug)]
pub struct HarnessConfig {
    /// Seed for agent key derivation.
    pub seed: u64,
    pub limits: ExecutionLimits,
    pub policy: Policy,
    /// Logical clock origin; each audit entry advances it by one second.
    pub start: DateTime<Utc>,
    pub synthesis: SynthesisConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 42,
            limits: ExecutionLimits::default(),
            policy: default_policy(),
            start: Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap(),
            synthesis: SynthesisConfig::default(),
        }
    }
}

/// One delivered, well-formed message.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub performative: Performative,
    pub conversation: String,
    /// Canonical message text, without the signature trailer.
    pub body: String,
    pub tokens: usize,
}

impl TranscriptEntry {
    /// Messages between agents, as opposed to the dispatcher's replies to the user.
    pub fn is_inter_agent(&self) -> bool {
        self.sender.as_str() != USER && self.receiver.as_str() != USER
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HarnessEvent {
    HumanReview(HumanReview),
    /// An envelope that failed admission; no reply is sent.
    Dropped {
        seq: u64,
        code: String,
        detail: String,
    },
}

#[derive(Clone, Debug, Default)]
struct Conversation {
    intent: Option<Intent>,
    anchors: BTreeSet<NodeId>,
    claims: Claim,
    followed_up: bool,
}

/// A procedural answer waiting for the history it asked for.
#[derive(Clone, Debug)]
struct PendingHistory {
    requester: AgentId,
    context: ConversationContext,
    procedure: ResultBody,
}

pub struct Harness {
    cfg: HarnessConfig,
    initial: KnowledgeGraph,
    store: GraphStore,
    identities: BTreeMap<AgentId, AgentIdentity>,
    roster: Roster,
    next_nonce: BTreeMap<AgentId, u64>,
    nonces: NonceGuard,
    bus: Bus,
    log: AuditLog,
    ledger: CommitmentLedger,
    trust: TrustState,
    transcript: Vec<TranscriptEntry>,
    events: Vec<HarnessEvent>,
    ticks: i64,
    conversations: BTreeMap<String, Conversation>,
    /// Keyed by the digest of the QUERY envelope.
    pending: BTreeMap<String, PendingHistory>,
}

fn agent(name: &str) -> AgentId {
    AgentId::lit(name)
}

impl Harness {
    pub fn new(graph: KnowledgeGraph, cfg: HarnessConfig) -> Self {
        let roster = super::roster(cfg.seed);
        let identities = AGENTS.iter().map(|n| (agent(n), AgentIdentity::from_seed(agent(n), cfg.seed))).collect();
        Harness {
            log: AuditLog::new(&graph, cfg.limits),
            store: GraphStore::new(graph.clone()),
            initial: graph,
            cfg,
            identities,
            roster,
            next_nonce: BTreeMap::new(),
            nonces: NonceGuard::default(),
            bus: Bus::default(),
            ledger: CommitmentLedger::default(),
            trust: TrustState::default(),
            transcript: vec![],
            events: vec![],
            ticks: 0,
            conversations: BTreeMap::new(),
            pending: BTreeMap::new(),
        }
    }

    pub fn initial_graph(&self) -> &KnowledgeGraph {
        &self.initial
    }

    pub fn store(&self) -> &GraphStore {
        &self.store
    }

    pub fn log(&self) -> &AuditLog {
        &self.log
    }

    pub fn ledger(&self) -> &CommitmentLedger {
        &self.ledger
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn policy(&self) -> &Policy {
        &self.cfg.policy
    }

    pub fn trust(&self) -> &TrustState {
        &self.trust
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn events(&self) -> &[HarnessEvent] {
        &self.events
    }

    pub fn identity(&self, name: &str) -> Option<&AgentIdentity> {
        self.identities.get(&agent(name))
    }

    /// Union of the result bodies the dispatcher accepted in `conversation`.
    pub fn claims(&self, conversation: &str) -> Claim {
        self.conversations.get(conversation).map(|c| c.claims.clone()).unwrap_or_default()
    }

    fn now(&mut self) -> DateTime<Utc> {
        self.ticks += 1;
        self.cfg.start + Duration::seconds(self.ticks)
    }

    /// Signs `msg` with its sender's key and the sender's next nonce.
    pub fn seal(&mut self, msg: &Message) -> Envelope {
        let nonce = self.next_nonce.entry(msg.sender.clone()).or_insert(0);
        *nonce += 1;
        let identity = &self.identities[&msg.sender];
        sign(&serialize(msg), *nonce, identity)
    }

    /// Signs and enqueues; returns the envelope digest.
    pub fn send(&mut self, msg: Message) -> String {
        let env = self.seal(&msg);
        self.bus.send(msg.receiver.clone(), env.to_text());
        env.digest()
    }

    /// Enqueues arbitrary text, bypassing signing.
    pub fn inject_raw(&mut self, receiver: &str, text: String) {
        self.bus.send(agent(receiver), text);
    }

    fn reply(&mut self, to: &Message, performative: Performative, operation: OperationPayload) -> String {
        self.send(Message {
            sender: to.receiver.clone(),
            receiver: to.sender.clone(),
            performative,
            operation,
            context: to.context.clone(),
        })
    }

    /// Dispatcher entry point: links the query and sends the first request.
    /// A query that links nothing is answered with a rejection to the user.
    pub fn ask(&mut self, conversation: &str, query: &str, port: &dyn LanguagePort) -> Result<Selection, SelectError> {
        let ctx = ConversationContext::new(conversation);
        let selected = select_operation(query, self.store.head(), port);
        let conv = self.conversations.entry(conversation.to_string()).or_default();
        match &selected {
            Ok(sel) => {
                conv.intent = Some(sel.intent);
                conv.anchors = sel.anchors.clone();
                self.send(Message {
                    sender: agent(DISPATCHER),
                    receiver: agent(sel.receiver),
                    performative: Performative::Request,
                    operation: OperationPayload::Traverse(sel.op.clone()),
                    context: ctx,
                });
            }
            Err(e) => {
                let code = match e {
                    SelectError::NoEntitiesLinked => ErrorCode::NoEntitiesLinked,
                    SelectError::NoEdgeTypes(_) => ErrorCode::ValidationFailed,
                };
                self.send(Message {
                    sender: agent(DISPATCHER),
                    receiver: agent(USER),
                    performative: Performative::Reject,
                    operation: OperationPayload::Error(ErrorBody { code, detail: e.to_string(), reference: None }),
                    context: ctx,
                });
            }
        }
        selected
    }

    /// Historian pass: proposes discovered correlations to ingestion as one update.
    pub fn synthesize(&mut self, conversation: &str) -> usize {
        let proposals = discover_patterns(self.store.head(), &self.cfg.synthesis);
        if proposals.is_empty() {
            return 0;
        }
        let delta = GraphDelta { add_edges: proposals.iter().map(|p| p.to_edge_spec()).collect(), ..Default::default() };
        self.send(Message {
            sender: agent(HISTORIAN),
            receiver: agent(INGESTION),
            performative: Performative::Update,
            operation: OperationPayload::Update(UpdateOp { base: Some(self.store.snapshot()), delta }),
            context: ConversationContext::new(conversation),
        });
        proposals.len()
    }

    /// Delivers until the bus is empty.
    pub fn run(&mut self) {
        let mut n = 0;
        while let Some((receiver, text)) = self.bus.pop() {
            self.deliver(&receiver, &text);
            n += 1;
            assert!(n < MAX_DELIVERIES, "message storm: {n} deliveries without quiescence");
        }
    }

    /// Closes the ledger at the last audit entry; pending commitments become violations.
    pub fn finish(&mut self) {
        let last = self.log.entries().last().map(|e| e.seq).unwrap_or(0);
        self.ledger.close(last);
    }

    fn deliver(&mut self, receiver: &AgentId, text: &str) {
        let before = self.store.snapshot();
        let at = self.now();
        let adm = Admission { roster: &self.roster, policy: &self.cfg.policy, limits: &self.cfg.limits };
        let processed = process_message(text, &adm, &mut self.nonces, &mut self.store, at);
        let entry = self
            .log
            .append(NewEntry {
                timestamp: at,
                actor: receiver.to_string(),
                kind: EntryKind::Message,
                conversation: processed.message.as_ref().map(|m| m.context.conversation_id.clone()),
                text: text.to_string(),
                outcome: processed.outcome.clone(),
                version_before: before,
                version_after: self.store.snapshot(),
            })
            .clone();
        self.ledger.observe(&entry, &entry.outcome, &self.store).expect("versions in the live store exist");

        let (Some(env), Some(msg)) = (processed.envelope, processed.message) else {
            if let Outcome::Dropped { code, detail } = &processed.outcome {
                self.events.push(HarnessEvent::Dropped { seq: entry.seq, code: code.clone(), detail: detail.clone() });
            }
            return;
        };
        self.transcript.push(TranscriptEntry {
            seq: entry.seq,
            sender: msg.sender.clone(),
            receiver: msg.receiver.clone(),
            performative: msg.performative,
            conversation: msg.context.conversation_id.clone(),
            body: env.body.clone(),
            tokens: token_count(&env.body),
        });
        self.react(&msg, &env, &processed.outcome, before);
    }

    fn react(&mut self, msg: &Message, env: &Envelope, outcome: &Outcome, version: u64) {
        match (msg.performative, outcome) {
            (
                Performative::Request | Performative::Query | Performative::Propose | Performative::Update,
                Outcome::Refused { code, detail },
            ) => {
                if msg.performative == Performative::Request && code == ErrorCode::Timeout.as_str() {
                    let err = ErrorBody { code: ErrorCode::Timeout, detail: detail.clone(), reference: Some(env.digest()) };
                    self.reply(msg, Performative::Inform, OperationPayload::Error(err));
                } else {
                    let code = code.parse().unwrap_or(ErrorCode::Malformed);
                    let err = ErrorBody { code, detail: detail.clone(), reference: Some(env.digest()) };
                    self.reply(msg, Performative::Reject, OperationPayload::Error(err));
                }
            }
            (Performative::Request, Outcome::Executed { .. }) => self.on_request(msg, outcome),
            (Performative::Query, Outcome::Executed { .. }) => {
                // answered in place: the result is already in the audit entry
                let body = outcome.result_body().expect("executed outcome parses");
                self.on_history(&env.digest(), Some(body));
            }
            (Performative::Propose, Outcome::Executed { .. }) => {
                let body = outcome.result_body().expect("executed outcome parses");
                self.reply(msg, Performative::Confirm, OperationPayload::Result(body));
            }
            (Performative::Update, Outcome::Applied { .. }) => {
                let OperationPayload::Update(u) = &msg.operation else { unreachable!("validated") };
                let body = applied_body(&u.delta);
                self.reply(msg, Performative::Confirm, OperationPayload::Result(body));
            }
            (Performative::Inform, _) if msg.receiver.as_str() == DISPATCHER => self.on_inform(msg, env, version),
            (Performative::Reject, _) => {
                if let OperationPayload::Error(ErrorBody { reference: Some(r), .. }) = &msg.operation {
                    if self.pending.contains_key(r) {
                        self.on_history(&r.clone(), None);
                    }
                }
            }
            _ => {}
        }
    }

    fn on_request(&mut self, msg: &Message, outcome: &Outcome) {
        let OperationPayload::Traverse(op) = &msg.operation else { unreachable!("validated") };
        let body = outcome.result_body().expect("executed outcome parses");
        match msg.receiver.as_str() {
            DIAGNOSTIC => {
                let ranked = self.diagnose(msg, op, body);
                self.reply(msg, Performative::Inform, OperationPayload::Result(ranked));
            }
            PROCEDURAL => {
                let graph = self.store.head();
                let sources = resolve_selector(&op.source, graph, &msg.context).unwrap_or_default();
                let occurred = Label::new("occurred_in");
                let faults: BTreeSet<NodeId> = sources
                    .iter()
                    .filter(|s| s.type_prefix() == "Fault" && graph.out_edges(s.as_str()).any(|e| e.edge_type == occurred))
                    .cloned()
                    .collect();
                if faults.is_empty() || !graph.schema().has_edge_type("occurred_in") {
                    self.reply(msg, Performative::Inform, OperationPayload::Result(body));
                    return;
                }
                let from: BTreeSet<NodeId> = faults.union(&msg.context.focus).cloned().collect();
                let query = Message {
                    sender: msg.receiver.clone(),
                    receiver: agent(HISTORIAN),
                    performative: Performative::Query,
                    operation: OperationPayload::Traverse(TraverseOp {
                        source: NodeSelector::ExplicitIds(from),
                        via: [occurred].into(),
                        depth: Depth::Finite(2),
                        ret: ReturnFormat::Leaves,
                        constraints: None,
                    }),
                    context: msg.context.clone(),
                };
                let digest = self.send(query);
                self.pending
                    .insert(digest, PendingHistory { requester: msg.sender.clone(), context: msg.context.clone(), procedure: body });
            }
            _ => {
                self.reply(msg, Performative::Inform, OperationPayload::Result(body));
            }
        }
    }

    /// Completes a procedural answer once its history query resolves.
    fn on_history(&mut self, query_digest: &str, history: Option<ResultBody>) {
        let Some(p) = self.pending.remove(query_digest) else { return };
        let mut body = p.procedure;
        if let Some(h) = history {
            let nodes: BTreeSet<NodeId> = body.nodes.iter().chain(&h.nodes).cloned().collect();
            let edges: BTreeSet<EdgeRef> = body.edges.iter().chain(&h.edges).cloned().collect();
            body.nodes = nodes.into_iter().collect();
            body.edges = edges.into_iter().collect();
            body.truncated |= h.truncated;
        }
        self.send(Message {
            sender: agent(PROCEDURAL),
            receiver: p.requester,
            performative: Performative::Inform,
            operation: OperationPayload::Result(body),
            context: p.context,
        });
    }

    /// Ranks the faults the request's evidence points at. When the request
    /// only reached symptoms, expands them one diagnostic hop first and logs
    /// that expansion as an internal entry.
    fn diagnose(&mut self, msg: &Message, op: &TraverseOp, body: ResultBody) -> ResultBody {
        let diag = labels(Intent::Diagnostic.edge_map());
        let graph = self.store.head().clone();
        let sources = resolve_selector(&op.source, &graph, &msg.context).unwrap_or_default();
        let mut evidence: BTreeSet<EdgeRef> = body.edges.iter().cloned().collect();
        for p in &body.paths {
            evidence.extend(p.edge_refs());
        }
        let symptoms: BTreeSet<NodeId> = body.nodes.iter().filter(|n| n.type_prefix() == "Symptom").cloned().collect();
        let via: BTreeSet<Label> = diag.iter().filter(|l| graph.schema().has_edge_type(l.as_str())).cloned().collect();
        if !symptoms.is_empty() && op.via.is_disjoint(&diag) && !via.is_empty() {
            let expand = OperationPayload::Traverse(TraverseOp {
                source: NodeSelector::ExplicitIds(symptoms),
                via,
                depth: Depth::Finite(1),
                ret: ReturnFormat::Paths,
                constraints: None,
            });
            let text = serialize_operation(&expand);
            let outcome = process_internal(&text, &self.cfg.limits, &graph);
            let at = self.now();
            let v = self.store.snapshot();
            self.log.append(NewEntry {
                timestamp: at,
                actor: msg.receiver.to_string(),
                kind: EntryKind::Internal,
                conversation: Some(msg.context.conversation_id.clone()),
                text,
                outcome: outcome.clone(),
                version_before: v,
                version_after: v,
            });
            if let Some(r) = outcome.result_body() {
                for p in &r.paths {
                    evidence.extend(p.edge_refs());
                }
            }
        }
        let weighted: Vec<(EdgeRef, f64)> = evidence
            .into_iter()
            .map(|e| {
                let w = graph
                    .out_edges(e.from.as_str())
                    .filter(|x| x.edge_type == e.edge_type && x.to == e.to)
                    .map(|x| x.weight)
                    .fold(0.0, f64::max);
                (e, w)
            })
            .collect();
        let ranking = rank_faults(&sources, &weighted, |n| n.type_prefix() == "Fault");
        if ranking.faults.is_empty() {
            return body;
        }
        ResultBody {
            format: body.format,
            nodes: ranking.faults.iter().map(|f| f.id.clone()).collect(),
            edges: ranking.support.into_iter().collect(),
            paths: body.paths,
            confidence: ranking.faults.iter().map(|f| f.confidence).collect(),
            truncated: body.truncated,
        }
    }

    /// Dispatcher: accept grounded results, reject the rest, and follow a
    /// diagnosis up with a procedure request for the top fault.
    fn on_inform(&mut self, msg: &Message, env: &Envelope, version: u64) {
        let OperationPayload::Result(body) = &msg.operation else { return };
        let graph = self.store.graph_at(version).expect("logged version exists");
        let ok = grounded_in(body, &graph);
        let (_, review) = self.trust.update(&msg.sender, ok);
        if let Some(r) = review {
            self.events.push(HarnessEvent::HumanReview(r));
        }
        if !ok {
            let err = ErrorBody {
                code: ErrorCode::ValidationFailed,
                detail: "result not grounded in the graph".into(),
                reference: Some(env.digest()),
            };
            self.reply(msg, Performative::Reject, OperationPayload::Error(err));
            return;
        }
        let conv_id = msg.context.conversation_id.clone();
        let conv = self.conversations.entry(conv_id.clone()).or_default();
        conv.claims.merge(Claim::from_body(body));
        if msg.sender.as_str() != DIAGNOSTIC || conv.intent != Some(Intent::Diagnostic) || conv.followed_up {
            return;
        }
        conv.followed_up = true;
        let anchors = conv.anchors.clone();
        let Some(top) = body.nodes.first().filter(|n| n.type_prefix() == "Fault").cloned() else { return };
        let present: BTreeSet<Label> = graph.out_edges(top.as_str()).map(|e| e.edge_type.clone()).collect();
        let via: BTreeSet<Label> = labels(Intent::Procedural.edge_map()).intersection(&present).cloned().collect();
        if via.is_empty() {
            return;
        }
        self.send(Message {
            sender: agent(DISPATCHER),
            receiver: agent(PROCEDURAL),
            performative: Performative::Request,
            operation: OperationPayload::Traverse(TraverseOp {
                source: NodeSelector::ExplicitIds([top].into()),
                via,
                depth: Depth::Finite(1),
                ret: ReturnFormat::Subgraph,
                constraints: None,
            }),
            context: ConversationContext { conversation_id: conv_id, focus: anchors },
        });
    }
}

/// What ingestion confirms: the added nodes and edges.
fn applied_body(delta: &GraphDelta) -> ResultBody {
    let mut nodes: BTreeSet<NodeId> = delta.add_nodes.iter().map(|n| n.id.clone()).collect();
    let mut edges = BTreeSet::new();
    for e in &delta.add_edges {
        nodes.insert(e.from.clone());
        nodes.insert(e.to.clone());
        edges.insert(EdgeRef { from: e.from.clone(), edge_type: e.edge_type.clone(), to: e.to.clone() });
    }
    ResultBody {
        format: ReturnFormat::Subgraph,
        nodes: nodes.into_iter().collect(),
        edges: edges.into_iter().collect(),
        paths: vec![],
        confidence: vec![],
        truncated: false,
    }
}

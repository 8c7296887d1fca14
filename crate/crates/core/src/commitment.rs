//! Social commitments created by messages and discharged by evidence.
//!
//! Each validated message creates exactly one commitment `C(debtor,
//! creditor, condition)`. The ledger is a pure function of the audit log:
//! [`CommitmentLedger::rebuild`] replays the log and must reproduce the live
//! ledger exactly.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::audit::{grounded_in, AuditEntry, AuditError, AuditLog, Outcome, Replayer};
use crate::graph::{GraphStore, KnowledgeGraph};
use crate::protocol::{AgentId, ErrorCode, Message, OperationPayload, Performative};
use crate::security::{Policy, Roster};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    ExecuteAndReturn,
    Grounded,
    TruthfulResponse,
    EvaluateAndRespond,
    Verified,
    Violated,
    ApplyIfValid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitmentState {
    Pending,
    Discharged,
    Violated,
    Cancelled,
}

impl fmt::Display for CommitmentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommitmentState::Pending => "pending",
            CommitmentState::Discharged => "discharged",
            CommitmentState::Violated => "violated",
            CommitmentState::Cancelled => "cancelled",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Commitment {
    pub id: u64,
    pub debtor: String,
    pub creditor: String,
    pub conversation: String,
    pub condition: Condition,
    /// Audit sequence number of the creating message.
    pub created_by: u64,
    /// Envelope digest of the creating message.
    pub message: String,
    pub state: CommitmentState,
    pub resolved_by: Option<u64>,
}

/// Which party owes what when `performative` is sent from `sender` to `receiver`.
pub fn commitment_rule(performative: Performative, sender: &AgentId, receiver: &AgentId) -> (AgentId, AgentId, Condition) {
    let (s, r) = (sender.clone(), receiver.clone());
    match performative {
        Performative::Request => (r, s, Condition::ExecuteAndReturn),
        Performative::Inform => (s, r, Condition::Grounded),
        Performative::Query => (r, s, Condition::TruthfulResponse),
        Performative::Propose => (r, s, Condition::EvaluateAndRespond),
        Performative::Confirm => (s, r, Condition::Verified),
        Performative::Reject => (s, r, Condition::Violated),
        Performative::Update => (r, s, Condition::ApplyIfValid),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommitmentLedger {
    commitments: Vec<Commitment>,
    /// Digests named by a REJECT; never accepted as evidence afterwards.
    rejected: BTreeSet<String>,
    /// Per processed message: envelope digest, outcome and grounding of its body.
    seen: Vec<Seen>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Seen {
    digest: String,
    outcome: Outcome,
    grounded: bool,
}

impl CommitmentLedger {
    pub fn commitments(&self) -> &[Commitment] {
        &self.commitments
    }

    pub fn pending(&self) -> impl Iterator<Item = &Commitment> {
        self.commitments.iter().filter(|c| c.state == CommitmentState::Pending)
    }

    pub fn count(&self, state: CommitmentState) -> usize {
        self.commitments.iter().filter(|c| c.state == state).count()
    }

    pub fn is_rejected(&self, digest: &str) -> bool {
        self.rejected.contains(digest)
    }

    /// Records the commitment created by `entry` and applies any discharge it
    /// triggers. `recomputed` is the outcome an independent re-execution
    /// produced; `store` holds every version up to the entry.
    pub fn observe(&mut self, entry: &AuditEntry, recomputed: &Outcome, store: &GraphStore) -> Result<(), AuditError> {
        let Some((env, msg)) = entry.message() else {
            return Ok(());
        };
        if matches!(entry.outcome, Outcome::Dropped { .. }) {
            return Ok(());
        }
        let graph = store.graph_at(entry.version_before)?;
        let grounded = match &msg.operation {
            OperationPayload::Result(body) => grounded_in(body, &graph),
            _ => true,
        };
        let digest = env.digest();
        let (debtor, creditor, condition) = commitment_rule(msg.performative, &msg.sender, &msg.receiver);
        let id = self.commitments.len() as u64 + 1;
        self.commitments.push(Commitment {
            id,
            debtor: debtor.to_string(),
            creditor: creditor.to_string(),
            conversation: msg.context.conversation_id.clone(),
            condition,
            created_by: entry.seq,
            message: digest.clone(),
            state: CommitmentState::Pending,
            resolved_by: None,
        });
        let seq = entry.seq;
        let conv = msg.context.conversation_id.as_str();

        match msg.performative {
            Performative::Inform | Performative::Confirm => {
                let ok = grounded && !self.rejected.contains(&digest);
                self.resolve(id, ok, seq);
                let answered = if msg.performative == Performative::Inform {
                    &[Condition::ExecuteAndReturn][..]
                } else {
                    &[Condition::EvaluateAndRespond, Condition::ApplyIfValid][..]
                };
                if let Some(c) = self.oldest_pending(&msg, conv, answered) {
                    self.resolve(c, ok, seq);
                }
            }
            Performative::Query => {
                let same = match (&entry.outcome, recomputed) {
                    (Outcome::Executed { .. }, Outcome::Executed { .. }) => {
                        let a = entry.outcome.result_body().map(|b| b.nodes.is_empty());
                        let b = recomputed.result_body().map(|b| b.nodes.is_empty());
                        a.is_some() && a == b
                    }
                    (a, b) => a.refusal_code().is_some() && a.refusal_code() == b.refusal_code(),
                };
                self.resolve(id, same, seq);
            }
            Performative::Update => {
                if let Outcome::Applied { .. } = entry.outcome {
                    self.resolve(id, recomputed == &entry.outcome, seq);
                }
            }
            Performative::Reject => {
                let reference = match &msg.operation {
                    OperationPayload::Error(e) => e.reference.clone().map(|r| (r, e.code)),
                    _ => None,
                };
                let reproduces = match &reference {
                    None => true,
                    Some((r, code)) => self.rejection_reproduces(r, *code),
                };
                self.resolve(id, reproduces, seq);
                if let Some((r, _)) = reference {
                    self.rejected.insert(r);
                }
                if let Some(c) = self.oldest_pending(&msg, conv, &[Condition::ExecuteAndReturn]) {
                    self.commitments[c as usize - 1].state = CommitmentState::Cancelled;
                    self.commitments[c as usize - 1].resolved_by = Some(seq);
                } else if let Some(c) = self.oldest_pending(&msg, conv, &[Condition::EvaluateAndRespond, Condition::ApplyIfValid]) {
                    self.resolve(c, reproduces, seq);
                }
            }
            Performative::Request | Performative::Propose => {}
        }
        self.seen.push(Seen { digest, outcome: entry.outcome.clone(), grounded });
        Ok(())
    }

    /// A REJECT reproduces when the message it names was refused with the same
    /// code, or, for a rejected result, when that result is not grounded.
    fn rejection_reproduces(&self, reference: &str, code: ErrorCode) -> bool {
        let Some(s) = self.seen.iter().rev().find(|s| s.digest == reference) else {
            return false;
        };
        match &s.outcome {
            Outcome::Refused { code: c, .. } => c == code.as_str(),
            Outcome::Delivered => !s.grounded,
            _ => false,
        }
    }

    /// The oldest pending commitment owed by the sender of `msg` to its receiver.
    fn oldest_pending(&self, msg: &Message, conv: &str, conditions: &[Condition]) -> Option<u64> {
        self.commitments
            .iter()
            .find(|c| {
                c.state == CommitmentState::Pending
                    && c.debtor == msg.sender.as_str()
                    && c.creditor == msg.receiver.as_str()
                    && c.conversation == conv
                    && conditions.contains(&c.condition)
            })
            .map(|c| c.id)
    }

    fn resolve(&mut self, id: u64, ok: bool, seq: u64) {
        let c = &mut self.commitments[id as usize - 1];
        c.state = if ok { CommitmentState::Discharged } else { CommitmentState::Violated };
        c.resolved_by = Some(seq);
    }

    /// Marks every commitment still pending after `horizon` as violated.
    pub fn close(&mut self, horizon: u64) {
        for c in self.commitments.iter_mut().filter(|c| c.state == CommitmentState::Pending) {
            c.state = CommitmentState::Violated;
            c.resolved_by = Some(horizon);
        }
    }

    /// Reconstructs the ledger from the log alone, closing at the last entry.
    pub fn rebuild(log: &AuditLog, initial: &KnowledgeGraph, roster: &Roster, policy: &Policy) -> Result<Self, AuditError> {
        let mut r = Replayer::new(log, initial, roster, policy)?;
        let mut ledger = CommitmentLedger::default();
        for e in log.entries() {
            let report = r.step(e);
            ledger.observe(e, &report.recomputed, &r.store)?;
        }
        ledger.close(log.entries().last().map(|e| e.seq).unwrap_or(0));
        Ok(ledger)
    }

    /// One JSON object per commitment.
    pub fn to_jsonl(&self) -> String {
        self.commitments.iter().map(|c| serde_json::to_string(c).expect("commitment serializes") + "\n").collect()
    }
}

//! Signed envelopes for admission tests: honest requests and the ways an
//! attacker might alter or forge them.

use chrono::{DateTime, Utc};
use g2cp::agents::{default_policy, roster};
use g2cp::audit::{process_message, Admission, Outcome};
use g2cp::graph::{GraphStore, NodeSelector};
use g2cp::protocol::{ConversationContext, Depth, ReturnFormat, TraverseOp};
use g2cp::security::{AgentIdentity, Envelope, NonceGuard};
use g2cp::traversal::ExecutionLimits;
use g2cp::{AgentId, KnowledgeGraph, Label, Message, NodeId, OperationPayload, Performative};
use rand::Rng;

pub fn at() -> DateTime<Utc> {
    DateTime::from_timestamp(1_717_200_000, 0).unwrap()
}

pub fn request(from: &str, to: &str) -> Message {
    Message {
        sender: AgentId::lit(from),
        receiver: AgentId::lit(to),
        performative: Performative::Request,
        operation: OperationPayload::Traverse(TraverseOp {
            source: NodeSelector::ExplicitIds([NodeId::lit("Component:HC-3")].into()),
            via: [Label::new("has_symptom")].into(),
            depth: Depth::Finite(1),
            ret: ReturnFormat::Subgraph,
            constraints: None,
        }),
        context: ConversationContext::new("conv_sec"),
    }
}

pub fn ident(name: &str) -> AgentIdentity {
    AgentIdentity::from_seed(AgentId::lit(name), 42)
}

/// Processes `text` against a fresh store and nonce history.
pub fn admit(g: &KnowledgeGraph, text: &str) -> Outcome {
    let (roster, policy, limits) = (roster(42), default_policy(), ExecutionLimits::default());
    let adm = Admission { roster: &roster, policy: &policy, limits: &limits };
    let mut store = GraphStore::new(g.clone());
    process_message(text, &adm, &mut NonceGuard::default(), &mut store, at()).outcome
}

pub fn tamper(rng: &mut impl Rng, env: &Envelope) -> String {
    let text = env.to_text();
    match rng.gen_range(0..5) {
        // one byte of the signed body
        0 => {
            let mut b = env.clone();
            let mut chars: Vec<char> = b.body.chars().collect();
            let i = rng.gen_range(0..chars.len() - 1);
            chars[i] = if chars[i] == 'x' { 'y' } else { 'x' };
            b.body = chars.into_iter().collect();
            b.to_text()
        }
        1 => Envelope { nonce: env.nonce + rng.gen_range(1..100), ..env.clone() }.to_text(),
        2 => {
            let mut b = env.clone();
            let i = rng.gen_range(0..b.signature.len());
            b.signature[i] ^= 1 << rng.gen_range(0..8);
            b.to_text()
        }
        3 => Envelope { signature: env.signature[..rng.gen_range(0..env.signature.len())].to_vec(), ..env.clone() }.to_text(),
        _ => text.replacen("SIGNATURE: ", "SIGNATURE: A", 1),
    }
}

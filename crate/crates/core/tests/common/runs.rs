//! Commitment conservation checks and random multi-conversation runs.

use g2cp::agents::{Harness, HarnessConfig, StubPort};
use g2cp::audit::{EntryKind, Outcome};
use g2cp::commitment::{CommitmentLedger, CommitmentState};
use g2cp::{KnowledgeGraph, Performative};
use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;

use super::fixture_graph;

pub fn assert_conserved(h: &mut Harness, label: &str) {
    let pending: Vec<_> = h.ledger().pending().collect();
    assert!(pending.is_empty(), "{label}: pending at quiescence {pending:?}");
    h.finish();
    let rebuilt = CommitmentLedger::rebuild(h.log(), h.initial_graph(), h.roster(), h.policy()).expect("rebuild");
    assert_eq!(&rebuilt, h.ledger(), "{label}: rebuilt ledger differs");
    assert_eq!(h.ledger().count(CommitmentState::Pending), 0);
    let messages =
        h.log().entries().iter().filter(|e| e.kind == EntryKind::Message && !matches!(e.outcome, Outcome::Dropped { .. })).count();
    assert_eq!(h.ledger().commitments().len(), messages, "{label}: one commitment per admitted message");
}

pub const OPENERS: &[&str] = &[
    "What causes",
    "Why is there",
    "How do I fix",
    "Replace",
    "Predict the next failure of",
    "What is the spec of",
    "Diagnose",
    "Tell me about",
    "Which faults affect",
    "",
];

pub fn random_query(rng: &mut impl Rng, g: &KnowledgeGraph) -> String {
    let mut q = OPENERS.choose(rng).unwrap().to_string();
    for _ in 0..rng.gen_range(0..=3) {
        if let Some(n) = g.nodes().choose(rng) {
            q.push(' ');
            q.push_str(&n.display_name);
            if rng.gen_bool(0.3) {
                q.push_str(" and");
            }
        }
    }
    if rng.gen_bool(0.2) {
        q.push_str(" with a strange noise");
    }
    q.push('?');
    q
}

/// Run `k`: up to three random questions on a random fixture graph, some
/// interleaved with delivery, maybe a synthesis pass, then a conservation
/// check. Returns how many INFORM replies were sent.
pub fn random_run(rng: &mut impl Rng, k: usize) -> usize {
    let names = ["hydraulic_plant.jsonl", "hydraulic_press.jsonl", "synthesis.jsonl", "empty.jsonl"];
    let g = fixture_graph(names.choose(rng).unwrap());
    let cfg = HarnessConfig { seed: rng.gen(), ..HarnessConfig::default() };
    let port = StubPort::new(&g);
    let mut h = Harness::new(g.clone(), cfg);
    let mut queries = Vec::new();
    for c in 0..rng.gen_range(1..=3) {
        let q = random_query(rng, &g);
        h.ask(&format!("conv_r{k}_{c}"), &q, &port).ok();
        queries.push(q);
        if rng.gen_bool(0.5) {
            h.run();
        }
    }
    if rng.gen_bool(0.3) {
        h.synthesize(&format!("conv_r{k}_s"));
    }
    h.run();
    let replies = h.transcript().iter().filter(|t| t.performative == Performative::Inform).count();
    assert_conserved(&mut h, &format!("run {k}: {queries:?}"));
    replies
}

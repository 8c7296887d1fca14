//! Audit log fixtures and the two strengths of single-entry mutation.
//!
//! A plain edit changes one field and leaves the stored hashes alone. A
//! rechained edit also recomputes the entry hash and every later link, as an
//! attacker with write access would, so only re-execution can catch it.

use g2cp::agents::{default_policy, roster};
use g2cp::audit::{replay, verify_claim, AuditEntry, AuditLog, Claim, ClaimVerdict, EntryKind, Outcome};
use g2cp::cli::ClaimFile;
use g2cp::graph::EdgeRef;
use g2cp::security::{Policy, Roster};
use g2cp::{KnowledgeGraph, Label, NodeId};
use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use sha2::{Digest, Sha256};

use super::{fixture_graph, read_fixture};

pub struct Case {
    pub graph: KnowledgeGraph,
    pub log: AuditLog,
    pub claim: ClaimFile,
    pub roster: Roster,
    pub policy: Policy,
}

pub fn case(name: &str, graph: &str) -> Case {
    Case {
        graph: fixture_graph(graph),
        log: AuditLog::from_jsonl(&read_fixture(&format!("logs/{name}.audit.jsonl"))).expect("log reads"),
        claim: serde_json::from_str(&read_fixture(&format!("logs/{name}.claims.json"))).expect("claims read"),
        roster: roster(42),
        policy: default_policy(),
    }
}

pub fn cases() -> Vec<(&'static str, Case)> {
    vec![("worked_example", case("worked_example", "hydraulic_plant.jsonl")), ("case_study", case("case_study", "hydraulic_press.jsonl"))]
}

pub fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Entry hash as an outside auditor computes it: the previous link, a
/// newline, then the entry's JSON with its own hash blanked.
pub fn entry_hash(e: &AuditEntry) -> String {
    let mut bare = e.clone();
    bare.entry_hash.clear();
    sha_hex(format!("{}\n{}", e.prev_hash, serde_json::to_string(&bare).unwrap()).as_bytes())
}

pub fn header_hash(log: &AuditLog) -> String {
    sha_hex(serde_json::to_string(&log.header).unwrap().as_bytes())
}

pub fn rechain(log: &mut AuditLog) {
    let mut prev = header_hash(log);
    for e in log.entries_mut() {
        e.prev_hash = prev;
        e.entry_hash = entry_hash(e);
        prev = e.entry_hash.clone();
    }
}

/// Detected if the log no longer reads, its chain breaks, replay refuses to
/// start or any entry replays as a mismatch.
pub fn detected(c: &Case, log: &AuditLog) -> bool {
    let Ok(reread) = AuditLog::from_jsonl(&log.to_jsonl()) else { return true };
    if reread.verify_chain().is_err() {
        return true;
    }
    match replay(&reread, &c.graph, &c.roster, &c.policy) {
        Ok(r) => !r.all_match(),
        Err(_) => true,
    }
}

pub fn flip_char(rng: &mut impl Rng, s: &mut String) {
    let chars: Vec<char> = s.chars().collect();
    let i = rng.gen_range(0..chars.len());
    let pool = ['a', 'Z', '7', '_', ':', '{', ' ', '-', '0'];
    let c = *pool.iter().filter(|c| **c != chars[i]).collect::<Vec<_>>().choose(rng).unwrap();
    *s = chars.iter().enumerate().map(|(j, x)| if j == i { *c } else { *x }).collect();
}

/// A different outcome for an entry, keeping its shape where possible.
pub fn forged_outcome(rng: &mut impl Rng, o: &Outcome) -> Outcome {
    match o {
        Outcome::Executed { result } => {
            let mut forged = match rng.gen_range(0..3) {
                0 => result.replacen("Nodes: {", "Nodes: {Fault:invented, ", 1),
                1 => result.replacen('1', "2", 1).replacen('9', "8", 1),
                _ => result.clone(),
            };
            if forged == *result {
                forged.push_str("    Truncated: true\n");
            }
            Outcome::Executed { result: forged }
        }
        Outcome::Delivered => Outcome::Refused { code: "UNAUTHORIZED".into(), detail: "forged".into() },
        Outcome::Applied { version, state_digest } => Outcome::Applied { version: version + 1, state_digest: state_digest.clone() },
        Outcome::Refused { .. } | Outcome::Dropped { .. } => Outcome::Delivered,
    }
}

/// One field of one entry changed; `rechain` picks the stronger attacker.
pub fn mutate(rng: &mut impl Rng, log: &AuditLog, rechained: bool) -> (AuditLog, String) {
    let mut log = log.clone();
    let i = rng.gen_range(0..log.entries().len());
    let e = &mut log.entries_mut()[i];
    let fields = if rechained { 5 } else { 11 };
    let what = match rng.gen_range(0..fields) {
        0 => {
            flip_char(rng, &mut e.text);
            "text"
        }
        1 => {
            e.outcome = forged_outcome(rng, &e.outcome);
            "outcome"
        }
        2 => {
            e.outcome = forged_outcome(rng, &e.outcome);
            e.result_digest = sha_hex(serde_json::to_string(&e.outcome).unwrap().as_bytes());
            "outcome and digest"
        }
        3 => {
            e.version_before += 1;
            "version_before"
        }
        4 => {
            e.version_after += 1;
            "version_after"
        }
        5 => {
            flip_char(rng, &mut e.result_digest);
            "result_digest"
        }
        6 => {
            e.timestamp += chrono::Duration::seconds(1);
            "timestamp"
        }
        7 => {
            e.actor.push('x');
            "actor"
        }
        8 => {
            e.conversation = Some("conv_other".into());
            "conversation"
        }
        9 => {
            flip_char(rng, &mut e.prev_hash);
            "prev_hash"
        }
        _ => {
            e.kind = match e.kind {
                EntryKind::Message => EntryKind::Internal,
                EntryKind::Internal => EntryKind::Message,
            };
            "kind"
        }
    };
    let label = format!("entry {} {what}{}", i + 1, if rechained { " (rechained)" } else { "" });
    if rechained {
        rechain(&mut log);
    }
    (log, label)
}

pub fn honest(c: &Case) -> Claim {
    c.claim.claim().expect("claim file parses")
}

pub fn verdict(c: &Case, claim: &Claim, log: &AuditLog) -> ClaimVerdict {
    let trace = log.trace(&c.claim.conversation);
    verify_claim(claim, &trace, log, &c.graph, &c.roster, &c.policy).expect("verification runs")
}

pub struct Injection {
    pub claim: Claim,
    pub log: AuditLog,
    pub kind: u32,
    /// The log was doctored to support the claim, chain rebuilt.
    pub rewrote_log: bool,
}

/// The honest claim plus one fabricated element; `k` keeps invented ids
/// unique.
pub fn inject(rng: &mut impl Rng, c: &Case, k: usize) -> Injection {
    let base = honest(c);
    let mut claim = base.clone();
    let mut log = c.log.clone();
    let kind = rng.gen_range(0..5);
    match kind {
        // a real node that no result in the trace mentions
        0 => {
            let n = c.graph.nodes().map(|n| n.id.clone()).filter(|n| !base.nodes.contains(n)).choose(rng).unwrap();
            claim.nodes.insert(n);
        }
        // a node that does not exist at all
        1 => {
            claim.nodes.insert(NodeId::lit(&format!("Fault:invented_{k}")));
        }
        // a real edge outside the results
        2 => {
            let e = c
                .graph
                .edges()
                .map(|e| EdgeRef { from: e.from.clone(), edge_type: e.edge_type.clone(), to: e.to.clone() })
                .filter(|e| !base.edges.contains(e))
                .choose(rng)
                .unwrap();
            claim.edges.insert(e);
        }
        // an edge between claimed nodes with a relation the graph lacks
        3 => {
            let ns: Vec<&NodeId> = base.nodes.iter().collect();
            let e = EdgeRef {
                from: (*ns.choose(rng).unwrap()).clone(),
                edge_type: Label::new("causes"),
                to: (*ns.choose(rng).unwrap()).clone(),
            };
            if base.edges.contains(&e) {
                claim.nodes.insert(NodeId::lit("Fault:invented"));
            }
            claim.edges.insert(e);
        }
        // a logged result inflated to cover the extra node
        _ => {
            let extra = NodeId::lit(&format!("Fault:inflated_{k}"));
            let idx: Vec<usize> =
                log.entries().iter().enumerate().filter(|(_, e)| matches!(e.outcome, Outcome::Executed { .. })).map(|(i, _)| i).collect();
            let e = &mut log.entries_mut()[*idx.choose(rng).unwrap()];
            let Outcome::Executed { result } = &e.outcome else { unreachable!() };
            let result = result.replacen("Nodes: {", &format!("Nodes: {{{extra}, "), 1);
            e.outcome = Outcome::Executed { result };
            e.result_digest = sha_hex(serde_json::to_string(&e.outcome).unwrap().as_bytes());
            rechain(&mut log);
            claim.nodes.insert(extra);
        }
    }
    Injection { claim, log, kind, rewrote_log: kind == 4 }
}

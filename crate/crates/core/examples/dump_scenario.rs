//! Runs a scenario file and prints the inter-agent transcript.

use std::path::PathBuf;

use g2cp::agents::{load_scenario, run_scenario, HarnessConfig};

fn main() {
    let path: PathBuf = std::env::args().nth(1).expect("usage: dump_scenario <scenario.json>").into();
    let (sc, graph) = load_scenario(&path).expect("scenario loads");
    let out = run_scenario(&sc, &graph, HarnessConfig::default());
    for t in out.harness.transcript() {
        println!("#{} {} -> {} {} ({} tokens)\n{}", t.seq, t.sender, t.receiver, t.performative, t.tokens, t.body);
    }
    println!("claims: {:?}", out.claims);
    println!(
        "tokens: {}  commitments pending={} violated={}",
        out.tokens.total,
        out.harness.ledger().count(g2cp::commitment::CommitmentState::Pending),
        out.harness.ledger().count(g2cp::commitment::CommitmentState::Violated)
    );
    println!("response: {}", out.response);
}

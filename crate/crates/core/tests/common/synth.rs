//! Random maintenance histories for pattern synthesis and a counting oracle
//! written straight from the rule: earliest fault time per work order, a
//! 48 hour window, support at least 3 and ratio at least one half.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use g2cp::agents::{discover_patterns, SynthesisConfig};
use g2cp::graph::load_graph_str;
use rand::Rng;

pub const SYNTH_SCHEMA: &str = r#"{"kind":"schema","node_types":["Condition","Fault","Sensor","WorkOrder"],"edge_types":["correlates_with","occurred_in"],"signatures":[["Fault","occurred_in","WorkOrder"],["Sensor","occurred_in","WorkOrder"],["Condition","occurred_in","WorkOrder"],["Fault","correlates_with","Sensor"],["Fault","correlates_with","Condition"]]}"#;

pub struct History {
    pub jsonl: String,
    /// fault -> work order -> time
    pub faults: BTreeMap<String, BTreeMap<String, DateTime<Utc>>>,
    /// condition -> (work order, time) events
    pub conditions: BTreeMap<String, Vec<(String, DateTime<Utc>)>>,
    pub existing: BTreeSet<(String, String)>,
}

pub fn random_history(rng: &mut impl Rng) -> History {
    let t0 = DateTime::from_timestamp(1_600_000_000, 0).unwrap();
    let wos: Vec<String> = (0..rng.gen_range(1..=25)).map(|i| format!("WorkOrder:W{i}")).collect();
    let faults: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("Fault:f{i}")).collect();
    let conds: Vec<String> =
        (0..rng.gen_range(1..=4)).map(|i| if i % 2 == 0 { format!("Sensor:s{i}") } else { format!("Condition:c{i}") }).collect();
    let mut lines = vec![SYNTH_SCHEMA.to_string()];
    for id in wos.iter().chain(&faults).chain(&conds) {
        let ty = id.split(':').next().unwrap();
        lines.push(serde_json::json!({"kind":"node","id":id,"type":ty}).to_string());
    }
    let mut h = History { jsonl: String::new(), faults: BTreeMap::new(), conditions: BTreeMap::new(), existing: BTreeSet::new() };
    let mut edge = |from: &str, to: &str, ty: &str, ts: DateTime<Utc>| {
        lines.push(serde_json::json!({"kind":"edge","from":from,"to":to,"type":ty,"weight":1.0,"ts":ts.to_rfc3339()}).to_string());
    };
    let p_fault = rng.gen_range(0.2..1.0);
    for f in &faults {
        let events = h.faults.entry(f.clone()).or_default();
        for (k, w) in wos.iter().enumerate() {
            if rng.gen_bool(p_fault) {
                let ts = t0 + Duration::days(10 * k as i64) + Duration::hours(rng.gen_range(0..24));
                events.insert(w.clone(), ts);
                edge(f, w, "occurred_in", ts);
            }
        }
    }
    let p_cond = rng.gen_range(0.2..1.0);
    for c in &conds {
        let events = h.conditions.entry(c.clone()).or_default();
        for (k, w) in wos.iter().enumerate() {
            for _ in 0..rng.gen_range(0..=2) {
                if rng.gen_bool(p_cond) {
                    // straddles the 48 h window on both sides
                    let ts = t0 + Duration::days(10 * k as i64) + Duration::hours(rng.gen_range(-80..100));
                    if !events.iter().any(|(w2, t2)| w2 == w && *t2 == ts) {
                        events.push((w.clone(), ts));
                        edge(c, w, "occurred_in", ts);
                    }
                }
            }
        }
    }
    for f in &faults {
        for c in &conds {
            if rng.gen_bool(0.1) {
                h.existing.insert((f.clone(), c.clone()));
                edge(f, c, "correlates_with", t0);
            }
        }
    }
    h.jsonl = lines.join("\n") + "\n";
    h
}

/// Straight counting over the generated events.
pub fn counting_oracle(h: &History) -> Vec<(String, String, usize, usize)> {
    let mut out = Vec::new();
    for (f, orders) in &h.faults {
        let total = orders.len();
        if total == 0 {
            continue;
        }
        for (c, events) in &h.conditions {
            let count = orders
                .iter()
                .filter(|(w, tf)| events.iter().any(|(wc, tc)| wc == *w && (*tc - **tf).num_seconds().abs() <= 48 * 3600))
                .count();
            if count >= 3 && 2 * count >= total && !h.existing.contains(&(f.clone(), c.clone())) {
                out.push((f.clone(), c.clone(), count, total));
            }
        }
    }
    out
}

/// One random history checked against the oracle; returns the proposal count.
pub fn check_random_history(rng: &mut impl Rng) -> usize {
    let h = random_history(rng);
    let g = load_graph_str(&h.jsonl).expect("history loads");
    let mut got: Vec<(String, String, usize, usize)> = discover_patterns(&g, &SynthesisConfig::default())
        .into_iter()
        .map(|p| {
            assert_eq!(p.confidence, p.count as f64 / p.total as f64);
            (p.edge.from.to_string(), p.edge.to.to_string(), p.count, p.total)
        })
        .collect();
    let mut want = counting_oracle(&h);
    want.sort();
    got.sort();
    assert_eq!(got, want);
    got.len()
}

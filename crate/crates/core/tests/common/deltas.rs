//! Update semantics against a plain set model: every accepted delta is a set
//! fold, every rejected one leaves the head untouched, and any version can be
//! rebuilt or restored.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use g2cp::graph::{EdgeId, GraphStore};
use g2cp::update::{apply_update, EdgeSpec, GraphDelta, NodeSpec, UpdateError, UpdateOrigin};
use g2cp::{AgentId, Label, NodeId};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{random_graph, structure, Structure, EDGE_TYPES, NODE_TYPES};

pub fn at(step: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(1_800_000_000 + step * 1000, 0).unwrap()
}

pub fn origin(step: i64) -> UpdateOrigin {
    UpdateOrigin { author: AgentId::lit("A_I"), timestamp: at(step), source_message: format!("{step:02x}") }
}

/// Node id to type, edge id to (from, type, to, weight bits); the same shape
/// as [`structure`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub nodes: BTreeMap<String, String>,
    pub edges: BTreeMap<u64, (String, String, String, u64)>,
    pub next_edge: u64,
}

impl Model {
    pub fn view(&self) -> Structure {
        (self.nodes.clone(), self.edges.clone())
    }

    pub fn fold(&mut self, d: &GraphDelta) {
        for id in &d.del_edges {
            self.edges.remove(&id.0);
        }
        for id in &d.del_nodes {
            self.nodes.remove(id.as_str());
        }
        for n in &d.add_nodes {
            self.nodes.insert(n.id.to_string(), n.type_label.to_string());
        }
        for e in &d.add_edges {
            let w = e.weight.or(e.confidence).unwrap_or(1.0);
            self.edges.insert(self.next_edge, (e.from.to_string(), e.edge_type.to_string(), e.to.to_string(), w.to_bits()));
            self.next_edge += 1;
        }
    }
}

/// A delta that is valid against `m` by construction.
pub fn valid_delta(rng: &mut impl Rng, m: &Model, step: i64) -> GraphDelta {
    let mut d = GraphDelta::default();
    let edge_ids: Vec<u64> = m.edges.keys().copied().collect();
    let k = rng.gen_range(0..=2.min(edge_ids.len()));
    for id in edge_ids.choose_multiple(rng, k) {
        d.del_edges.push(EdgeId(*id));
    }
    // a node goes only together with every edge still touching it
    if rng.gen_bool(0.3) {
        if let Some(victim) = m.nodes.keys().collect::<Vec<_>>().choose(rng).map(|s| s.to_string()) {
            for (id, (a, _, b, _)) in &m.edges {
                if (*a == victim || *b == victim) && !d.del_edges.contains(&EdgeId(*id)) {
                    d.del_edges.push(EdgeId(*id));
                }
            }
            d.del_nodes.push(NodeId::lit(&victim));
        }
    }
    for i in 0..rng.gen_range(0..=2) {
        let t = NODE_TYPES[rng.gen_range(0..NODE_TYPES.len())];
        d.add_nodes.push(NodeSpec {
            id: NodeId::lit(&format!("{t}:s{step}_{i}")),
            type_label: Label::new(t),
            name: format!("new {i}"),
            attrs: BTreeMap::new(),
        });
    }
    let mut ends: Vec<String> = m.nodes.keys().filter(|n| !d.del_nodes.iter().any(|x| x.as_str() == n.as_str())).cloned().collect();
    ends.extend(d.add_nodes.iter().map(|n| n.id.to_string()));
    if !ends.is_empty() {
        for i in 0..rng.gen_range(0..=3) {
            let conf = rng.gen_bool(0.7).then(|| rng.gen_range(0..=100) as f64 / 100.0);
            d.add_edges.push(EdgeSpec {
                from: NodeId::lit(ends.choose(rng).unwrap()),
                to: NodeId::lit(ends.choose(rng).unwrap()),
                edge_type: Label::new(EDGE_TYPES[rng.gen_range(0..EDGE_TYPES.len())]),
                weight: rng.gen_bool(0.5).then(|| rng.gen_range(0..=100) as f64 / 100.0),
                // distinct per edge, so no duplicate relation at one instant
                timestamp: Some(at(step) + chrono::Duration::seconds(i + 1)),
                confidence: conf,
            });
        }
    }
    d
}

/// A delta with exactly one defect, or none when `m` offers nothing to break.
pub fn invalid_delta(rng: &mut impl Rng, m: &Model, step: i64) -> Option<GraphDelta> {
    let mut d = GraphDelta::default();
    let any_node = m.nodes.keys().next().cloned()?;
    match rng.gen_range(0..6) {
        0 => d.del_edges.push(EdgeId(m.next_edge + 7)),
        1 => d.del_nodes.push(NodeId::lit("A:missing")),
        2 => d.add_edges.push(EdgeSpec {
            from: NodeId::lit(&any_node),
            to: NodeId::lit("B:missing"),
            edge_type: Label::new("t0"),
            weight: None,
            timestamp: None,
            confidence: None,
        }),
        3 => d.add_edges.push(EdgeSpec {
            from: NodeId::lit(&any_node),
            to: NodeId::lit(&any_node),
            edge_type: Label::new("t0"),
            weight: Some(1.5),
            timestamp: None,
            confidence: None,
        }),
        4 => d.add_nodes.push(NodeSpec {
            id: NodeId::lit(&any_node),
            type_label: Label::new(&m.nodes[&any_node]),
            name: "again".into(),
            attrs: BTreeMap::new(),
        }),
        _ => d.add_nodes.push(NodeSpec {
            id: NodeId::lit(&format!("C:s{step}")),
            type_label: Label::new("C"),
            name: "untyped".into(),
            attrs: BTreeMap::new(),
        }),
    }
    Some(d)
}

/// One random graph and 1 to 10 deltas, valid and invalid, each checked
/// against the model; ends with a rollback to a random version.
pub fn check_random_sequence(rng: &mut impl Rng) {
    let rg = random_graph(rng, 12, 24);
    let g = rg.load();
    let mut model = Model { nodes: rg.nodes.iter().cloned().collect(), edges: structure(&g).1, next_edge: g.next_edge_id().0 };
    let mut store = GraphStore::new(g);
    let mut versions = vec![model.clone()];

    for step in 0..rng.gen_range(1..=10i64) {
        let head = store.snapshot();
        if rng.gen_bool(0.25) {
            let Some(bad) = invalid_delta(rng, &model, step) else { continue };
            let before = structure(store.head());
            let err = apply_update(&mut store, &bad, Some(head), &origin(step)).unwrap_err();
            assert!(matches!(err, UpdateError::ValidationFailed(_)), "{err:?} for {bad:?}");
            assert_eq!(structure(store.head()), before);
            assert_eq!(store.snapshot(), head);
            continue;
        }
        let d = valid_delta(rng, &model, step);
        if head > 0 && rng.gen_bool(0.1) {
            let err = apply_update(&mut store, &d, Some(head - 1), &origin(step)).unwrap_err();
            assert_eq!(err, UpdateError::ConcurrentWriteConflict { base: head - 1, head });
        }
        let v = apply_update(&mut store, &d, Some(head), &origin(step)).unwrap_or_else(|e| panic!("{e}: {d:?}"));
        assert_eq!(v, head + 1);
        model.fold(&d);
        assert_eq!(structure(store.head()), model.view());
        for e in &d.add_edges {
            let got = store
                .head()
                .out_edges(e.from.as_str())
                .find(|x| x.to == e.to && x.edge_type == e.edge_type && Some(x.timestamp) == e.timestamp)
                .expect("added edge present");
            let p = got.provenance.as_ref().expect("tagged");
            assert_eq!(p.author.as_str(), "A_I");
            assert_eq!(p.timestamp, at(step));
            assert_eq!(p.confidence, e.confidence.unwrap_or(1.0));
        }
        versions.push(model.clone());
    }

    for (k, m) in versions.iter().enumerate() {
        assert_eq!(structure(&store.graph_at(k as u64).unwrap()), m.view(), "prefix {k}");
    }
    let target = rng.gen_range(0..versions.len());
    let before_len = store.history().len();
    store.rollback(target as u64, AgentId::lit("A_I"), at(99)).unwrap();
    assert_eq!(structure(store.head()), versions[target].view());
    assert!(store.history().len() >= before_len, "history is append-only");
    // restored edges keep their ids; fresh ids never reuse retired ones
    assert!(store.head().next_edge_id().0 >= model.next_edge);
}

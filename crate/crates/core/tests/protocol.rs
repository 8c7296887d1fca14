//! Wire format: canonical round trips, golden transcripts and error locations.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use g2cp::graph::{AttrValue, CmpOp, EdgeId, EdgeRef, NodeSelector, Predicate};
use g2cp::protocol::{
    parse, serialize, token_count, validate, AgentId, ConversationContext, Depth, ErrorBody, ErrorCode, PathSpec, ProtocolError,
    ResultBody, ReturnFormat, TraverseOp, UpdateOp, Violation,
};
use g2cp::update::{EdgeSpec, GraphDelta, NodeSpec};
use g2cp::{Label, Message, NodeId, OperationPayload, Performative};
use proptest::prelude::*;

use common::{read_fixture, run_fixture};

// ---- generators -----------------------------------------------------------

fn label() -> impl Strategy<Value = Label> {
    "[A-Za-z0-9_-]{1,8}".prop_map(|s| Label::new(&s))
}

fn node_id() -> impl Strategy<Value = NodeId> {
    ("[A-Za-z0-9_-]{1,6}", "[A-Za-z0-9_:-]{1,10}").prop_map(|(t, l)| NodeId::lit(&format!("{t}:{l}")))
}

fn agent() -> impl Strategy<Value = AgentId> {
    "[A-Za-z0-9_-]{1,8}".prop_map(|s| AgentId::lit(&s))
}

fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![(0u32..=1000).prop_map(|k| k as f64 / 1000.0), 0.0..=1.0f64]
}

fn timestamp() -> impl Strategy<Value = DateTime<Utc>> {
    (0i64..4_000_000_000, prop_oneof![Just(0u32), 0u32..1000])
        .prop_map(|(s, ms)| DateTime::from_timestamp(s, ms * 1_000_000).expect("in range"))
}

fn literal() -> impl Strategy<Value = AttrValue> {
    prop_oneof![
        any::<String>().prop_map(AttrValue::Str),
        any::<i64>().prop_map(AttrValue::Int),
        any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(AttrValue::Float),
        any::<bool>().prop_map(AttrValue::Bool),
        timestamp().prop_map(AttrValue::Time),
    ]
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge])
}

/// Compound nodes always have at least two children; a single child would
/// print as the child itself.
fn predicate() -> impl Strategy<Value = Predicate> {
    let leaf = ("[A-Za-z0-9_]{1,6}", cmp_op(), literal()).prop_map(|(key, op, value)| Predicate::Cmp { key, op, value });
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Predicate::And),
            prop::collection::vec(inner, 2..4).prop_map(Predicate::Or),
        ]
    })
}

fn selector() -> impl Strategy<Value = NodeSelector> {
    prop_oneof![
        prop::collection::btree_set(node_id(), 1..4).prop_map(NodeSelector::ExplicitIds),
        prop::collection::btree_set(label(), 1..4).prop_map(NodeSelector::ByType),
        (label(), predicate()).prop_map(|(node_type, predicate)| NodeSelector::PropertyFilter { node_type, predicate }),
        "[A-Z][A-Z_]{0,12}".prop_map(NodeSelector::ContextRef),
        prop::collection::vec(any::<String>(), 1..4).prop_map(NodeSelector::ByName),
    ]
}

fn format() -> impl Strategy<Value = ReturnFormat> {
    prop::sample::select(ReturnFormat::ALL.to_vec())
}

fn traverse() -> impl Strategy<Value = TraverseOp> {
    (
        selector(),
        prop::collection::btree_set(label(), 1..4),
        prop_oneof![(0u32..10).prop_map(Depth::Finite), Just(Depth::Unbounded)],
        format(),
        prop::option::of(predicate()),
    )
        .prop_map(|(source, via, depth, ret, constraints)| TraverseOp { source, via, depth, ret, constraints })
}

fn edge_ref() -> impl Strategy<Value = EdgeRef> {
    (node_id(), label(), node_id()).prop_map(|(from, edge_type, to)| EdgeRef { from, edge_type, to })
}

fn path() -> impl Strategy<Value = PathSpec> {
    (node_id(), prop::collection::vec((label(), node_id()), 1..4)).prop_map(|(start, hops)| PathSpec { start, hops })
}

fn result() -> impl Strategy<Value = ResultBody> {
    (format(), prop::collection::vec(node_id(), 0..5), prop::collection::vec(edge_ref(), 0..4), any::<bool>(), any::<bool>())
        .prop_flat_map(|(fmt, nodes, edges, with_conf, truncated)| {
            let n = nodes.len();
            let conf = if with_conf && n > 0 { prop::collection::vec(unit(), n).boxed() } else { Just(vec![]).boxed() };
            let paths = if fmt == ReturnFormat::Paths { prop::collection::vec(path(), 0..3).boxed() } else { Just(vec![]).boxed() };
            (Just(fmt), Just(nodes), Just(edges), paths, conf, Just(truncated))
        })
        .prop_map(|(format, nodes, edges, paths, confidence, truncated)| ResultBody { format, nodes, edges, paths, confidence, truncated })
}

fn error() -> impl Strategy<Value = ErrorBody> {
    (prop::sample::select(ErrorCode::ALL.to_vec()), any::<String>(), prop::option::of("[0-9a-f]{1,64}"))
        .prop_map(|(code, detail, reference)| ErrorBody { code, detail, reference })
}

fn update() -> impl Strategy<Value = UpdateOp> {
    let node = (node_id(), label(), any::<String>(), prop::collection::btree_map("[A-Za-z0-9_]{1,6}", literal(), 0..3))
        .prop_map(|(id, type_label, name, attrs)| NodeSpec { id, type_label, name, attrs });
    let edge = (node_id(), node_id(), label(), prop::option::of(unit()), prop::option::of(timestamp()), prop::option::of(unit()))
        .prop_map(|(from, to, edge_type, weight, timestamp, confidence)| EdgeSpec { from, to, edge_type, weight, timestamp, confidence });
    (
        prop::option::of(any::<u64>()),
        prop::collection::vec(node, 0..3),
        prop::collection::vec(edge, 0..3),
        prop::collection::vec(any::<u64>().prop_map(EdgeId), 0..3),
        prop::collection::vec(node_id(), 0..3),
    )
        .prop_map(|(base, add_nodes, add_edges, del_edges, del_nodes)| UpdateOp {
            base,
            delta: GraphDelta { add_nodes, add_edges, del_edges, del_nodes },
        })
}

/// A payload together with a performative allowed to carry it.
fn operation() -> impl Strategy<Value = (Performative, OperationPayload)> {
    use Performative as P;
    prop_oneof![
        (prop::sample::select(vec![P::Request, P::Query, P::Propose, P::Reject]), traverse())
            .prop_map(|(p, t)| (p, OperationPayload::Traverse(t))),
        update().prop_map(|u| (P::Update, OperationPayload::Update(u))),
        (prop::sample::select(vec![P::Inform, P::Confirm]), result()).prop_map(|(p, r)| (p, OperationPayload::Result(r))),
        (prop::sample::select(vec![P::Inform, P::Confirm, P::Reject]), error()).prop_map(|(p, e)| (p, OperationPayload::Error(e))),
    ]
}

fn message() -> impl Strategy<Value = Message> {
    (agent(), agent(), operation(), "[A-Za-z0-9_:-]{1,12}", prop::collection::btree_set(node_id(), 0..3))
        .prop_filter("requests are not self-addressed", |(s, r, (p, _), _, _)| {
            s != r || !matches!(p, Performative::Request | Performative::Query | Performative::Propose)
        })
        .prop_map(|(sender, receiver, (performative, operation), conv, focus)| Message {
            sender,
            receiver,
            performative,
            operation,
            context: ConversationContext { conversation_id: conv, focus },
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10_000, ..ProptestConfig::default() })]

    #[test]
    fn parse_inverts_serialize(m in message()) {
        prop_assert!(validate(&m).is_empty(), "generator produced an invalid message: {:?}", validate(&m));
        let text = serialize(&m);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(serialize(&back), text);
    }
}

proptest! {
    #[test]
    fn canonical_text_ends_in_exactly_one_newline(m in message()) {
        let text = serialize(&m);
        prop_assert!(text.ends_with('\n') && !text.ends_with("\n\n"));
        prop_assert!(!text.contains('\r'));
    }
}

// ---- goldens --------------------------------------------------------------

fn strip_focus(body: &str) -> String {
    body.lines().filter(|l| !l.starts_with("FOCUS: ")).map(|l| format!("{l}\n")).collect()
}

fn transcript_bodies(name: &str) -> Vec<String> {
    let (_, out) = run_fixture(name);
    out.harness.transcript().iter().filter(|t| t.is_inter_agent()).map(|t| t.body.clone()).collect()
}

#[test]
fn goldens_are_canonical() {
    for g in ["worked_step1", "worked_step3", "worked_step4", "case_study_step3"] {
        let text = read_fixture(&format!("golden/{g}.g2cp"));
        let m = parse(&text).unwrap_or_else(|e| panic!("{g}: {e}"));
        assert!(validate(&m).is_empty(), "{g}");
        assert_eq!(serialize(&m), text, "{g} is not in canonical form");
    }
}

#[test]
fn worked_example_messages_match_goldens() {
    let bodies = transcript_bodies("worked_example");
    assert_eq!(bodies.len(), 5);
    assert_eq!(bodies[0], read_fixture("golden/worked_step1.g2cp"));
    let step3 = read_fixture("golden/worked_step3.g2cp");
    let step4 = read_fixture("golden/worked_step4.g2cp");
    let stripped: Vec<String> = bodies.iter().map(|b| strip_focus(b)).collect();
    assert!(stripped.contains(&step3), "no message matches step 3:\n{}", bodies.join("\n"));
    assert!(stripped.contains(&step4), "no message matches step 4:\n{}", bodies.join("\n"));
}

#[test]
fn case_study_follow_up_matches_golden() {
    let bodies = transcript_bodies("case_study");
    let golden = read_fixture("golden/case_study_step3.g2cp");
    assert!(bodies.iter().any(|b| strip_focus(b) == golden), "{}", bodies.join("\n"));
}

#[test]
fn golden_request_token_count() {
    // Identifier runs count once, every other symbol on its own.
    let m = read_fixture("golden/worked_step1.g2cp");
    let by_hand: usize = m
        .split_whitespace()
        .map(|w| {
            let mut n = 0;
            let mut in_word = false;
            for c in w.chars() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    if !in_word {
                        n += 1;
                    }
                    in_word = true;
                } else {
                    n += 1;
                    in_word = false;
                }
            }
            n
        })
        .sum();
    assert_eq!(token_count(&m), by_hand);
    assert_eq!(token_count("REQUEST TRAVERSE FROM {Part:B-4521}"), 10);
}

// ---- errors ---------------------------------------------------------------

fn parse_error(text: &str) -> (usize, usize) {
    match parse(text) {
        Err(ProtocolError::Parse { line, column, .. }) => (line, column),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

fn golden_with(line: usize, replacement: &str) -> String {
    let text = read_fixture("golden/worked_step1.g2cp");
    let mut lines: Vec<&str> = text.lines().collect();
    lines[line - 1] = replacement;
    lines.join("\n") + "\n"
}

#[test]
fn parse_errors_point_at_the_offending_field() {
    // Column is one past the field prefix, where the bad value starts.
    let cases = [
        (1, "Dispatcher A_D", (1, 1)),
        (2, "PERFORMATIVE: ASK", (2, 15)),
        (3, "CONVERSATION: conv 042", (3, 15)),
        (4, "OPERATION: now", (4, 11)),
        (5, "  TRAVEL", (5, 3)),
        (6, "    FROM: Component:HC-3", (6, 11)),
        (7, "    VIA: {has symptom}", (7, 10)),
        (8, "    DEPTH: -1", (8, 12)),
        (9, "    RETURN: TREE", (9, 13)),
        (9, "    RETRN: SUBGRAPH", (9, 1)),
    ];
    for (line, text, want) in cases {
        assert_eq!(parse_error(&golden_with(line, text)), want, "{text}");
    }
}

#[test]
fn trailing_and_missing_lines_are_located() {
    let text = read_fixture("golden/worked_step1.g2cp");
    assert_eq!(parse_error(&format!("{text}    EXTRA: 1\n")), (10, 1));
    let short: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
    assert_eq!(parse_error(&short), (9, 1));
    assert_eq!(parse_error(&text.replace('\n', "\r\n")), (1, 1));
}

#[test]
fn incompatible_performative_is_reported() {
    let text = read_fixture("golden/worked_step1.g2cp").replace("PERFORMATIVE: REQUEST", "PERFORMATIVE: INFORM");
    match parse(&text) {
        Err(ProtocolError::Compatibility(v)) => {
            assert!(matches!(v.as_slice(), [Violation::Incompatible { performative: Performative::Inform, payload: "TRAVERSE" }]))
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn validation_collects_every_violation() {
    let m = Message {
        sender: AgentId::lit("A_D"),
        receiver: AgentId::lit("A_D"),
        performative: Performative::Request,
        operation: OperationPayload::Traverse(TraverseOp {
            source: NodeSelector::ExplicitIds(BTreeSet::new()),
            via: BTreeSet::new(),
            depth: Depth::Finite(1),
            ret: ReturnFormat::Subgraph,
            constraints: None,
        }),
        context: ConversationContext::new("bad id"),
    };
    let v = validate(&m);
    for want in [Violation::BadConversationId, Violation::SelfAddressed, Violation::EmptyEdgeFilter, Violation::EmptySelector] {
        assert!(v.contains(&want), "{want:?} missing from {v:?}");
    }

    let r = ResultBody {
        confidence: vec![1.5],
        paths: vec![PathSpec { start: NodeId::lit("A:a"), hops: vec![] }],
        ..ResultBody::empty(ReturnFormat::Leaves)
    };
    let m = Message {
        sender: AgentId::lit("A_D"),
        receiver: AgentId::lit("Dispatcher"),
        performative: Performative::Inform,
        operation: OperationPayload::Result(r),
        context: ConversationContext::new("c1"),
    };
    let v = validate(&m);
    assert!(v.contains(&Violation::ConfidenceMisaligned { nodes: 0, confidence: 1 }));
    assert!(v.contains(&Violation::ValueOutOfRange { field: "confidence", value: 1.5 }));
    assert!(v.contains(&Violation::PathsOutsidePathsResult));
}

#[test]
fn attribute_map_order_is_canonical() {
    let attrs: BTreeMap<String, AttrValue> = [("z".to_string(), AttrValue::Int(1)), ("a".to_string(), AttrValue::Bool(true))].into();
    let op = UpdateOp {
        base: Some(3),
        delta: GraphDelta {
            add_nodes: vec![NodeSpec { id: NodeId::lit("T:x"), type_label: Label::new("T"), name: "x".into(), attrs }],
            ..GraphDelta::default()
        },
    };
    let m = Message {
        sender: AgentId::lit("A_H"),
        receiver: AgentId::lit("Dispatcher"),
        performative: Performative::Update,
        operation: OperationPayload::Update(op),
        context: ConversationContext::new("c1"),
    };
    let text = serialize(&m);
    assert!(text.contains("    BASE: 3\n    ADD_NODE: {id: T:x, type: T, name: \"x\", attrs: {a: true, z: 1}}\n"), "{text}");
}

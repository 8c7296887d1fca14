//! Recursive-descent parser for the wire syntax. Every production is
//! selected by its leading keyword, so one line of lookahead suffices.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    validate, AgentId, ConversationContext, Depth, ErrorBody, ErrorCode, Message, OperationPayload, PathSpec, Performative, ProtocolError,
    ResultBody, ReturnFormat, TraverseOp, UpdateOp,
};
use crate::graph::selector::Cursor;
use crate::graph::{is_ident_char, AttrValue, EdgeId, EdgeRef, Label, NodeId, NodeSelector, Predicate};
use crate::update::{EdgeSpec, GraphDelta, NodeSpec};

type Field<T> = Result<T, String>;

struct Lines<'a> {
    lines: Vec<&'a str>,
    idx: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, column: usize, expected: &[&str], found: &str) -> ProtocolError {
        ProtocolError::Parse {
            line: self.idx + 1,
            column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: found.to_string(),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.idx).copied()
    }

    /// Consumes a line starting with `prefix` and returns the remainder.
    fn field(&mut self, prefix: &str) -> Result<&'a str, ProtocolError> {
        match self.peek() {
            Some(l) if l.starts_with(prefix) => {
                self.idx += 1;
                Ok(&l[prefix.len()..])
            }
            other => Err(self.err(1, &[prefix], other.unwrap_or("end of message"))),
        }
    }

    fn optional(&mut self, prefix: &str) -> Option<&'a str> {
        let l = self.peek()?;
        let rest = l.strip_prefix(prefix)?;
        self.idx += 1;
        Some(rest)
    }

    /// Runs a field sub-parser on the value of the previous line.
    fn value<T>(&self, prefix: &str, raw: &str, f: impl FnOnce(&str) -> Field<T>) -> Result<T, ProtocolError> {
        f(raw).map_err(|reason| ProtocolError::Parse {
            line: self.idx,
            column: prefix.len() + 1,
            expected: vec![reason],
            found: raw.to_string(),
        })
    }
}

pub fn parse(text: &str) -> Result<Message, ProtocolError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut p = Lines { lines: body.split('\n').collect(), idx: 0 };
    if let Some(i) = p.lines.iter().position(|l| l.contains('\r')) {
        p.idx = i;
        return Err(p.err(1, &["LF line ending"], "CR"));
    }

    let header = p.field("")?;
    let (sender, receiver) = p.value("", header, |h| {
        let (a, b) = h.split_once(" TO ").ok_or("<agent> TO <agent>")?;
        Ok((AgentId::new(a)?, AgentId::new(b)?))
    })?;

    let perf = p.field("PERFORMATIVE: ")?;
    let performative: Performative = perf.parse().map_err(|_| {
        let all: Vec<&str> = Performative::ALL.iter().map(|x| x.as_str()).collect();
        ProtocolError::Parse { line: p.idx, column: 15, expected: all.iter().map(|s| s.to_string()).collect(), found: perf.into() }
    })?;

    let conv = p.field("CONVERSATION: ")?;
    p.value("CONVERSATION: ", conv, |c| {
        if !c.is_empty() && c.chars().all(is_ident_char) {
            Ok(())
        } else {
            Err("conversation identifier".into())
        }
    })?;
    let mut context = ConversationContext::new(conv);
    if let Some(f) = p.optional("FOCUS: ") {
        context.focus = p.value("FOCUS: ", f, |s| node_set(s).map(|v| v.into_iter().collect()))?;
    }
    let rest = p.field("OPERATION:")?;
    if !rest.is_empty() {
        p.idx -= 1;
        return Err(p.err(11, &["end of line"], rest));
    }

    let operation = operation(&mut p)?;

    let msg = Message { sender, receiver, performative, operation, context };
    let violations = validate(&msg);
    if violations.is_empty() {
        Ok(msg)
    } else {
        Err(ProtocolError::Compatibility(violations))
    }
}

/// Parses a bare operation block (the lines after `OPERATION:`) without
/// compatibility checks.
pub fn parse_operation(text: &str) -> Result<OperationPayload, ProtocolError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut p = Lines { lines: body.split('\n').collect(), idx: 0 };
    operation(&mut p)
}

fn operation(p: &mut Lines<'_>) -> Result<OperationPayload, ProtocolError> {
    let head = p.field("  ")?;
    let operation = match head {
        "TRAVERSE" => OperationPayload::Traverse(traverse(p)?),
        "UPDATE APPLY" => OperationPayload::Update(update(p)?),
        h if h.starts_with("RESULT ") => OperationPayload::Result(result(p, h)?),
        h if h.starts_with("ERROR ") => OperationPayload::Error(error(p, h)?),
        other => {
            p.idx -= 1;
            return Err(p.err(3, &["TRAVERSE", "UPDATE APPLY", "RESULT", "ERROR"], other));
        }
    };
    if let Some(extra) = p.peek() {
        return Err(p.err(1, &["end of message"], extra));
    }
    Ok(operation)
}

fn traverse(p: &mut Lines<'_>) -> Result<TraverseOp, ProtocolError> {
    let raw = p.field("    FROM: ")?;
    let source = p.value("    FROM: ", raw, selector)?;
    let raw = p.field("    VIA: ")?;
    let via = p.value("    VIA: ", raw, |s| Ok(label_set(s)?.into_iter().collect()))?;
    let raw = p.field("    DEPTH: ")?;
    let depth = p.value("    DEPTH: ", raw, |s| match s {
        "UNBOUNDED" => Ok(Depth::Unbounded),
        _ if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) => {
            s.parse().map(Depth::Finite).map_err(|_| "depth within range".into())
        }
        _ => Err("non-negative integer | UNBOUNDED".into()),
    })?;
    let raw = p.field("    RETURN: ")?;
    let ret = p.value("    RETURN: ", raw, |s| s.parse::<ReturnFormat>().map_err(|_| "SUBGRAPH | PATHS | LEAVES".into()))?;
    let constraints = match p.optional("    CONSTRAINTS: ") {
        Some(raw) => Some(p.value("    CONSTRAINTS: ", raw, Predicate::parse)?),
        None => None,
    };
    Ok(TraverseOp { source, via, depth, ret, constraints })
}

fn update(p: &mut Lines<'_>) -> Result<UpdateOp, ProtocolError> {
    let base = match p.optional("    BASE: ") {
        Some(raw) => Some(p.value("    BASE: ", raw, |s| s.parse::<u64>().map_err(|_| "version number".into()))?),
        None => None,
    };
    let mut delta = GraphDelta::default();
    while p.peek().is_some() {
        if let Some(raw) = p.optional("    ADD_NODE: ") {
            delta.add_nodes.push(p.value("    ADD_NODE: ", raw, node_spec)?);
        } else if let Some(raw) = p.optional("    ADD_EDGE: ") {
            delta.add_edges.push(p.value("    ADD_EDGE: ", raw, edge_spec)?);
        } else if let Some(raw) = p.optional("    DEL_EDGE: ") {
            delta.del_edges.push(p.value("    DEL_EDGE: ", raw, |s| s.parse::<u64>().map(EdgeId).map_err(|_| "edge id".into()))?);
        } else if let Some(raw) = p.optional("    DEL_NODE: ") {
            delta.del_nodes.push(p.value("    DEL_NODE: ", raw, node_id)?);
        } else {
            let found = p.peek().unwrap_or_default();
            return Err(p.err(5, &["ADD_NODE:", "ADD_EDGE:", "DEL_EDGE:", "DEL_NODE:"], found));
        }
    }
    Ok(UpdateOp { base, delta })
}

fn result(p: &mut Lines<'_>, head: &str) -> Result<ResultBody, ProtocolError> {
    let format = head
        .strip_prefix("RESULT ")
        .and_then(|r| r.strip_suffix(':'))
        .and_then(|r| r.parse::<ReturnFormat>().ok())
        .ok_or_else(|| p.err(3, &["RESULT SUBGRAPH:", "RESULT PATHS:", "RESULT LEAVES:"], head))?;
    let raw = p.field("    Nodes: ")?;
    let nodes = p.value("    Nodes: ", raw, node_set)?;
    let raw = p.field("    Edges: ")?;
    let edges = p.value("    Edges: ", raw, |s| braced_items(s)?.into_iter().map(edge_ref).collect())?;
    let mut body = ResultBody { format, nodes, edges, ..ResultBody::empty(format) };
    if let Some(raw) = p.optional("    Paths: ") {
        body.paths = p.value("    Paths: ", raw, |s| braced_items(s)?.into_iter().map(path).collect())?;
    }
    if let Some(raw) = p.optional("    Confidence: ") {
        body.confidence = p.value("    Confidence: ", raw, float_list)?;
    }
    if let Some(raw) = p.optional("    Truncated: ") {
        p.value("    Truncated: ", raw, |s| if s == "true" { Ok(()) } else { Err("true".into()) })?;
        body.truncated = true;
    }
    Ok(body)
}

fn error(p: &mut Lines<'_>, head: &str) -> Result<ErrorBody, ProtocolError> {
    let code = head.strip_prefix("ERROR ").and_then(|c| c.parse::<ErrorCode>().ok()).ok_or_else(|| {
        let all: Vec<&str> = ErrorCode::ALL.iter().map(|c| c.as_str()).collect();
        p.err(9, &all, head)
    })?;
    let raw = p.field("    DETAIL: ")?;
    let detail = p.value("    DETAIL: ", raw, |s| {
        let mut c = Cursor::new(s);
        let d = c.quoted()?;
        if c.at_end() {
            Ok(d)
        } else {
            Err("end of line after string".into())
        }
    })?;
    let reference = match p.optional("    REF: ") {
        Some(raw) => Some(p.value("    REF: ", raw, |s| {
            if !s.is_empty() && s.bytes().all(|b| b.is_ascii_hexdigit()) {
                Ok(s.to_string())
            } else {
                Err("hex digest".into())
            }
        })?),
        None => None,
    };
    Ok(ErrorBody { code, detail, reference })
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

fn label(s: &str) -> Field<Label> {
    if !s.is_empty() && s.chars().all(is_label_char) {
        Ok(Label::new(s))
    } else {
        Err(format!("type label, found {s:?}"))
    }
}

fn node_id(s: &str) -> Field<NodeId> {
    NodeId::new(s).map_err(|e| e.to_string())
}

/// Splits `{a, b, c}` into its items; `{}` is empty.
fn braced_items(s: &str) -> Field<Vec<&str>> {
    let inner = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')).ok_or("{...}")?;
    if inner.is_empty() {
        return Ok(vec![]);
    }
    Ok(inner.split(", ").collect())
}

fn node_set(s: &str) -> Field<Vec<NodeId>> {
    braced_items(s)?.into_iter().map(node_id).collect()
}

fn label_set(s: &str) -> Field<Vec<Label>> {
    braced_items(s)?.into_iter().map(label).collect()
}

fn float_list(s: &str) -> Field<Vec<f64>> {
    let inner = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or("[...]")?;
    if inner.is_empty() {
        return Ok(vec![]);
    }
    inner.split(", ").map(|x| x.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("number, found {x:?}"))).collect()
}

fn edge_ref(s: &str) -> Field<EdgeRef> {
    let p = path(s)?;
    match p.hops.as_slice() {
        [(t, to)] => Ok(EdgeRef { from: p.start, edge_type: t.clone(), to: to.clone() }),
        _ => Err("<from> -[<type>]-> <to>".into()),
    }
}

fn path(s: &str) -> Field<PathSpec> {
    let mut c = Cursor::new(s);
    let start = node_id(c.take_while(is_ident_char))?;
    let mut hops = Vec::new();
    while c.eat(" -[") {
        let t = label(c.take_while(is_label_char))?;
        c.expect("]-> ")?;
        hops.push((t, node_id(c.take_while(is_ident_char))?));
    }
    if !c.at_end() {
        return Err(format!("path hop, found {:?}", c.rest()));
    }
    Ok(PathSpec { start, hops })
}

fn selector(s: &str) -> Field<NodeSelector> {
    let inner = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')).ok_or("{selector}")?;
    if inner.starts_with('"') {
        let mut c = Cursor::new(inner);
        let mut names = vec![c.quoted()?];
        while c.eat(", ") {
            names.push(c.quoted()?);
        }
        if !c.at_end() {
            return Err("\", \" or \"}\"".into());
        }
        return Ok(NodeSelector::ByName(names));
    }
    if let Some((ty, pred)) = inner.split_once(" WHERE ") {
        return Ok(NodeSelector::PropertyFilter { node_type: label(ty)?, predicate: Predicate::parse(pred)? });
    }
    let items = braced_items(s)?;
    if items.is_empty() {
        return Err("nonempty selector".into());
    }
    if items.iter().all(|i| i.starts_with("type:")) {
        let types: Field<BTreeSet<Label>> = items.iter().map(|i| label(&i["type:".len()..])).collect();
        return Ok(NodeSelector::ByType(types?));
    }
    if items.iter().all(|i| i.contains(':')) {
        return Ok(NodeSelector::ExplicitIds(items.into_iter().map(node_id).collect::<Field<_>>()?));
    }
    match items.as_slice() {
        [sym] if sym.chars().all(|c| c.is_ascii_uppercase() || c == '_') => Ok(NodeSelector::ContextRef(sym.to_string())),
        _ => Err("node ids, type:<T> list, \"names\", <T> WHERE <predicate>, or a context symbol".into()),
    }
}

fn float(c: &mut Cursor<'_>) -> Field<f64> {
    let raw = c.take_while(|ch| ch.is_ascii_alphanumeric() || matches!(ch, '-' | '+' | '.'));
    raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("number, found {raw:?}"))
}

fn node_spec(s: &str) -> Field<NodeSpec> {
    let mut c = Cursor::new(s);
    c.expect("{id: ")?;
    let id = node_id(c.take_while(is_ident_char))?;
    c.expect(", type: ")?;
    let type_label = label(c.take_while(is_label_char))?;
    c.expect(", name: ")?;
    let name = c.quoted()?;
    c.expect(", attrs: {")?;
    let mut attrs = BTreeMap::new();
    if !c.eat("}") {
        loop {
            let key = c.take_while(|ch| ch.is_ascii_alphanumeric() || ch == '_');
            if key.is_empty() {
                return Err("attribute key".into());
            }
            c.expect(": ")?;
            let v: AttrValue = c.literal()?;
            attrs.insert(key.to_string(), v);
            if c.eat("}") {
                break;
            }
            c.expect(", ")?;
        }
    }
    c.expect("}")?;
    if !c.at_end() {
        return Err("end of record".into());
    }
    Ok(NodeSpec { id, type_label, name, attrs })
}

fn edge_spec(s: &str) -> Field<EdgeSpec> {
    let mut c = Cursor::new(s);
    c.expect("{from: ")?;
    let from = node_id(c.take_while(is_ident_char))?;
    c.expect(", to: ")?;
    let to = node_id(c.take_while(is_ident_char))?;
    c.expect(", type: ")?;
    let edge_type = label(c.take_while(is_label_char))?;
    let mut spec = EdgeSpec { from, to, edge_type, weight: None, timestamp: None, confidence: None };
    if c.eat(", weight: ") {
        spec.weight = Some(float(&mut c)?);
    }
    if c.eat(", ts: ") {
        match c.literal()? {
            AttrValue::Time(t) => spec.timestamp = Some(t),
            _ => return Err("@<timestamp>".into()),
        }
    }
    if c.eat(", confidence: ") {
        spec.confidence = Some(float(&mut c)?);
    }
    c.expect("}")?;
    if !c.at_end() {
        return Err("end of record".into());
    }
    Ok(spec)
}

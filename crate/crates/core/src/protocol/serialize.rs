use std::fmt::Write;

use super::{ErrorBody, Message, OperationPayload, PathSpec, ResultBody, TraverseOp, UpdateOp};
use crate::graph::selector::{write_quoted, LiteralFmt};
use crate::graph::NodeSelector;

/// Canonical wire text. Infallible; callers validate first.
pub fn serialize(m: &Message) -> String {
    let mut s = String::new();
    let _ = write_message(&mut s, m);
    s
}

/// The indented payload block of a result, used for digests.
pub fn serialize_result(r: &ResultBody) -> String {
    let mut s = String::new();
    let _ = write_result(&mut s, r);
    s
}

/// The indented operation block that follows `OPERATION:`.
pub fn serialize_operation(op: &OperationPayload) -> String {
    let mut s = String::new();
    let _ = write_operation(&mut s, op);
    s
}

fn write_operation(s: &mut String, op: &OperationPayload) -> std::fmt::Result {
    match op {
        OperationPayload::Traverse(t) => write_traverse(s, t),
        OperationPayload::Update(u) => write_update(s, u),
        OperationPayload::Result(r) => write_result(s, r),
        OperationPayload::Error(e) => write_error(s, e),
    }
}

fn write_message(s: &mut String, m: &Message) -> std::fmt::Result {
    writeln!(s, "{} TO {}", m.sender, m.receiver)?;
    writeln!(s, "PERFORMATIVE: {}", m.performative)?;
    writeln!(s, "CONVERSATION: {}", m.context.conversation_id)?;
    if !m.context.focus.is_empty() {
        writeln!(s, "FOCUS: {{{}}}", join(m.context.focus.iter()))?;
    }
    writeln!(s, "OPERATION:")?;
    write_operation(s, &m.operation)
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for (i, x) in items.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{x}");
    }
    out
}

pub(crate) fn selector_text(sel: &NodeSelector) -> String {
    let inner = match sel {
        NodeSelector::ExplicitIds(ids) => join(ids.iter()),
        NodeSelector::ByType(ts) => join(ts.iter().map(|t| format!("type:{t}"))),
        NodeSelector::PropertyFilter { node_type, predicate } => format!("{node_type} WHERE {predicate}"),
        NodeSelector::ContextRef(sym) => sym.clone(),
        NodeSelector::ByName(names) => {
            let mut out = String::new();
            for (i, n) in names.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write_quoted(&mut out, n);
            }
            out
        }
    };
    format!("{{{inner}}}")
}

fn write_traverse(s: &mut String, t: &TraverseOp) -> std::fmt::Result {
    writeln!(s, "  TRAVERSE")?;
    writeln!(s, "    FROM: {}", selector_text(&t.source))?;
    writeln!(s, "    VIA: {{{}}}", join(t.via.iter()))?;
    writeln!(s, "    DEPTH: {}", t.depth)?;
    writeln!(s, "    RETURN: {}", t.ret)?;
    if let Some(p) = &t.constraints {
        writeln!(s, "    CONSTRAINTS: {p}")?;
    }
    Ok(())
}

fn write_update(s: &mut String, u: &UpdateOp) -> std::fmt::Result {
    writeln!(s, "  UPDATE APPLY")?;
    if let Some(b) = u.base {
        writeln!(s, "    BASE: {b}")?;
    }
    let d = &u.delta;
    for n in &d.add_nodes {
        write!(s, "    ADD_NODE: {{id: {}, type: {}, name: ", n.id, n.type_label)?;
        write_quoted(s, &n.name)?;
        write!(s, ", attrs: {{")?;
        for (i, (k, v)) in n.attrs.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            write!(s, "{k}: {}", LiteralFmt(v))?;
        }
        writeln!(s, "}}}}")?;
    }
    for e in &d.add_edges {
        write!(s, "    ADD_EDGE: {{from: {}, to: {}, type: {}", e.from, e.to, e.edge_type)?;
        if let Some(w) = e.weight {
            write!(s, ", weight: {w:?}")?;
        }
        if let Some(t) = &e.timestamp {
            write!(s, ", ts: {}", LiteralFmt(&crate::graph::AttrValue::Time(*t)))?;
        }
        if let Some(c) = e.confidence {
            write!(s, ", confidence: {c:?}")?;
        }
        writeln!(s, "}}")?;
    }
    for id in &d.del_edges {
        writeln!(s, "    DEL_EDGE: {id}")?;
    }
    for id in &d.del_nodes {
        writeln!(s, "    DEL_NODE: {id}")?;
    }
    Ok(())
}

pub(crate) fn path_text(p: &PathSpec) -> String {
    let mut out = p.start.to_string();
    for (t, n) in &p.hops {
        let _ = write!(out, " -[{t}]-> {n}");
    }
    out
}

fn write_result(s: &mut String, r: &ResultBody) -> std::fmt::Result {
    writeln!(s, "  RESULT {}:", r.format)?;
    writeln!(s, "    Nodes: {{{}}}", join(r.nodes.iter()))?;
    writeln!(s, "    Edges: {{{}}}", join(r.edges.iter()))?;
    if !r.paths.is_empty() {
        writeln!(s, "    Paths: {{{}}}", join(r.paths.iter().map(path_text)))?;
    }
    if !r.confidence.is_empty() {
        writeln!(s, "    Confidence: [{}]", join(r.confidence.iter()))?;
    }
    if r.truncated {
        writeln!(s, "    Truncated: true")?;
    }
    Ok(())
}

fn write_error(s: &mut String, e: &ErrorBody) -> std::fmt::Result {
    writeln!(s, "  ERROR {}", e.code)?;
    write!(s, "    DETAIL: ")?;
    write_quoted(s, &e.detail)?;
    s.push('\n');
    if let Some(r) = &e.reference {
        writeln!(s, "    REF: {r}")?;
    }
    Ok(())
}

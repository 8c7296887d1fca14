//! Node selectors and the attribute predicate language.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};

use super::{cosine, AttrValue, GraphError, KnowledgeGraph, Label, Node, NodeId};
use crate::protocol::ConversationContext;

/// Entity-linking similarity threshold (inclusive).
pub const LINK_THRESHOLD: f64 = 0.85;

/// The only context symbol the runtime binds: the conversation focus set.
pub const CURRENT_FOCUS: &str = "CURRENT_FOCUS";

#[derive(Clone, Debug, PartialEq)]
pub enum NodeSelector {
    ExplicitIds(BTreeSet<NodeId>),
    ByType(BTreeSet<Label>),
    PropertyFilter { node_type: Label, predicate: Predicate },
    ContextRef(String),
    ByName(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Gt => ord == Greater,
            CmpOp::Le => ord != Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

/// Pure comparison tree over node attributes.
///
/// The canonical text form joins children with ` AND ` / ` OR ` and
/// parenthesizes any compound child, so `And`/`Or` nodes should carry at
/// least two children to round-trip exactly.
#[derive(Clone, Debug, PartialEq)]
pub enum Predicate {
    Cmp { key: String, op: CmpOp, value: AttrValue },
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

fn compare(a: &AttrValue, b: &AttrValue) -> Option<std::cmp::Ordering> {
    use AttrValue::*;
    match (a, b) {
        (Str(x), Str(y)) => Some(x.cmp(y)),
        (Bool(x), Bool(y)) => Some(x.cmp(y)),
        (Int(x), Int(y)) => Some(x.cmp(y)),
        (Time(x), Time(y)) => Some(x.cmp(y)),
        _ => a.as_f64()?.partial_cmp(&b.as_f64()?),
    }
}

impl Predicate {
    /// Missing attributes and type mismatches evaluate to false.
    pub fn eval(&self, node: &Node) -> bool {
        match self {
            Predicate::Cmp { key, op, value } => node.attributes.get(key).and_then(|a| compare(a, value)).is_some_and(|o| op.holds(o)),
            Predicate::And(ps) => ps.iter().all(|p| p.eval(node)),
            Predicate::Or(ps) => ps.iter().any(|p| p.eval(node)),
        }
    }

    pub fn parse(text: &str) -> Result<Predicate, String> {
        let mut cur = Cursor::new(text);
        let p = parse_or(&mut cur)?;
        cur.skip_ws();
        if !cur.at_end() {
            return Err(format!("unexpected input at column {}", cur.pos + 1));
        }
        Ok(p)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (ps, sep) = match self {
            Predicate::Cmp { key, op, value } => {
                return write!(f, "{key}{}{}", op.symbol(), LiteralFmt(value));
            }
            Predicate::And(ps) => (ps, " AND "),
            Predicate::Or(ps) => (ps, " OR "),
        };
        for (i, p) in ps.iter().enumerate() {
            if i > 0 {
                f.write_str(sep)?;
            }
            match p {
                Predicate::Cmp { .. } => write!(f, "{p}")?,
                _ => write!(f, "({p})")?,
            }
        }
        Ok(())
    }
}

/// Canonical literal rendering shared with the wire format.
pub(crate) struct LiteralFmt<'a>(pub &'a AttrValue);

impl fmt::Display for LiteralFmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            AttrValue::Str(s) => write_quoted(f, s),
            AttrValue::Int(i) => write!(f, "{i}"),
            AttrValue::Float(x) => write!(f, "{x:?}"),
            AttrValue::Bool(b) => write!(f, "{b}"),
            AttrValue::Time(t) => write!(f, "@{}", t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)),
        }
    }
}

pub(crate) fn write_quoted(f: &mut impl fmt::Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

/// Byte cursor over a single line of wire text.
pub(crate) struct Cursor<'a> {
    pub src: &'a str,
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    pub fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    pub fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub fn skip_ws(&mut self) {
        while self.peek() == Some(' ') {
            self.pos += 1;
        }
    }

    pub fn eat(&mut self, s: &str) -> bool {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, s: &str) -> Result<(), String> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(format!("expected {s:?} at column {}", self.pos + 1))
        }
    }

    /// Consumes a maximal run of characters satisfying `pred`.
    pub fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    pub fn quoted(&mut self) -> Result<String, String> {
        self.expect("\"")?;
        let mut out = String::new();
        loop {
            let c = self.peek().ok_or("unterminated string")?;
            self.pos += c.len_utf8();
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let e = self.peek().ok_or("unterminated escape")?;
                    self.pos += e.len_utf8();
                    out.push(match e {
                        '"' => '"',
                        '\\' => '\\',
                        'n' => '\n',
                        'r' => '\r',
                        't' => '\t',
                        _ => return Err(format!("bad escape \\{e}")),
                    });
                }
                c => out.push(c),
            }
        }
    }

    pub fn literal(&mut self) -> Result<AttrValue, String> {
        match self.peek() {
            Some('"') => Ok(AttrValue::Str(self.quoted()?)),
            Some('@') => {
                self.pos += 1;
                let raw = self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, ':' | '-' | '+' | '.'));
                DateTime::parse_from_rfc3339(raw)
                    .map(|t| AttrValue::Time(t.with_timezone(&Utc)))
                    .map_err(|e| format!("bad timestamp {raw:?}: {e}"))
            }
            Some(c) if c.is_ascii_digit() || c == '-' => {
                let raw = self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '+' | '.'));
                if raw.contains(['.', 'e', 'E']) {
                    raw.parse::<f64>().ok().filter(|x| x.is_finite()).map(AttrValue::Float).ok_or_else(|| format!("bad number {raw:?}"))
                } else {
                    raw.parse::<i64>().map(AttrValue::Int).map_err(|_| format!("bad number {raw:?}"))
                }
            }
            _ => {
                if self.eat("true") {
                    Ok(AttrValue::Bool(true))
                } else if self.eat("false") {
                    Ok(AttrValue::Bool(false))
                } else {
                    Err(format!("expected literal at column {}", self.pos + 1))
                }
            }
        }
    }
}

fn parse_or(cur: &mut Cursor<'_>) -> Result<Predicate, String> {
    let mut items = vec![parse_and(cur)?];
    while cur.eat(" OR ") {
        items.push(parse_and(cur)?);
    }
    Ok(if items.len() == 1 { items.pop().unwrap() } else { Predicate::Or(items) })
}

fn parse_and(cur: &mut Cursor<'_>) -> Result<Predicate, String> {
    let mut items = vec![parse_primary(cur)?];
    while cur.eat(" AND ") {
        items.push(parse_primary(cur)?);
    }
    Ok(if items.len() == 1 { items.pop().unwrap() } else { Predicate::And(items) })
}

fn parse_primary(cur: &mut Cursor<'_>) -> Result<Predicate, String> {
    if cur.eat("(") {
        let p = parse_or(cur)?;
        cur.expect(")")?;
        return Ok(p);
    }
    let key = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
    if key.is_empty() {
        return Err(format!("expected attribute name at column {}", cur.pos + 1));
    }
    // two-character operators first so "<=" is not read as "<"
    let op = [("!=", CmpOp::Ne), ("<=", CmpOp::Le), (">=", CmpOp::Ge), ("=", CmpOp::Eq), ("<", CmpOp::Lt), (">", CmpOp::Gt)]
        .into_iter()
        .find(|(s, _)| cur.eat(s))
        .map(|(_, op)| op)
        .ok_or_else(|| format!("expected one of = != < > <= >= at column {}", cur.pos + 1))?;
    let value = cur.literal()?;
    Ok(Predicate::Cmp { key: key.to_string(), op, value })
}

/// Links each free-text name to its most similar node; a name is kept only
/// if that best similarity reaches `threshold`. Ties go to the smallest id.
pub fn resolve_by_name(names: &[String], graph: &KnowledgeGraph, threshold: f64) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for name in names {
        if name.trim().is_empty() {
            continue;
        }
        let q = graph.embedder().embed(name);
        let mut best: Option<(f64, &NodeId)> = None;
        // nodes() iterates in id order, so strict > keeps the smallest id on ties
        for node in graph.nodes() {
            let s = cosine(&q, &node.embedding);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, &node.id));
            }
        }
        if let Some((s, id)) = best {
            if s >= threshold {
                out.insert(id.clone());
            }
        }
    }
    out
}

pub fn resolve_selector(
    selector: &NodeSelector,
    graph: &KnowledgeGraph,
    context: &ConversationContext,
) -> Result<BTreeSet<NodeId>, GraphError> {
    match selector {
        NodeSelector::ExplicitIds(ids) => {
            if let Some(missing) = ids.iter().find(|id| !graph.contains_node(id.as_str())) {
                return Err(GraphError::UnknownNodeId(missing.clone()));
            }
            Ok(ids.clone())
        }
        NodeSelector::ByType(types) => Ok(graph.nodes().filter(|n| types.contains(&n.type_label)).map(|n| n.id.clone()).collect()),
        NodeSelector::PropertyFilter { node_type, predicate } => {
            Ok(graph.nodes().filter(|n| &n.type_label == node_type && predicate.eval(n)).map(|n| n.id.clone()).collect())
        }
        NodeSelector::ContextRef(sym) => {
            if sym != CURRENT_FOCUS || context.focus.is_empty() {
                return Err(GraphError::UnknownContextSymbol(sym.clone()));
            }
            if let Some(missing) = context.focus.iter().find(|id| !graph.contains_node(id.as_str())) {
                return Err(GraphError::UnknownNodeId(missing.clone()));
            }
            Ok(context.focus.clone())
        }
        NodeSelector::ByName(names) => Ok(resolve_by_name(names, graph, LINK_THRESHOLD)),
    }
}

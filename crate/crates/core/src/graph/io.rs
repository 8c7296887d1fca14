//! Line-delimited JSON graph files.
//!
//! Record kinds:
//!
//! ```text
//! {"kind":"schema","node_types":[..],"edge_types":[..],"signatures":[[src,edge,dst],..],"required":{..}}
//! {"kind":"node","id":"Part:B-4521","type":"Part","name":"Bearing B-4521","attrs":{..}}
//! {"kind":"edge","from":..,"to":..,"type":..,"weight":0.9,"ts":"2024-01-01T00:00:00Z"}
//! ```
//!
//! The schema record is optional and must come first; without it the schema
//! is inferred from the node and edge records. Edges may carry an explicit
//! `id` and a `prov` object; files written by [`write_graph`] always do.
//! Attribute strings that parse as RFC 3339 instants load as timestamps.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AttrValue, Edge, EdgeId, GraphError, GraphSchema, KnowledgeGraph, Label, NodeId, ProvenanceTag};
use crate::protocol::AgentId;

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Schema(SchemaRec),
    Node(NodeRec),
    Edge(EdgeRec),
}

#[derive(Serialize, Deserialize, Default)]
struct SchemaRec {
    node_types: Vec<String>,
    edge_types: Vec<String>,
    signatures: Vec<(String, String, String)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    required: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct NodeRec {
    id: String,
    #[serde(rename = "type")]
    type_label: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    attrs: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    from: String,
    to: String,
    #[serde(rename = "type")]
    type_label: String,
    weight: f64,
    ts: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prov: Option<ProvRec>,
}

#[derive(Serialize, Deserialize)]
struct ProvRec {
    author: String,
    ts: String,
    msg: String,
    confidence: f64,
}

fn fmt_time(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc))
}

fn attr_from_json(v: &Value) -> Option<AttrValue> {
    Some(match v {
        Value::String(s) => parse_time(s).map(AttrValue::Time).unwrap_or_else(|| AttrValue::Str(s.clone())),
        Value::Bool(b) => AttrValue::Bool(*b),
        Value::Number(n) if n.is_i64() => AttrValue::Int(n.as_i64()?),
        Value::Number(n) => AttrValue::Float(n.as_f64()?),
        _ => return None,
    })
}

fn attr_to_json(v: &AttrValue) -> Value {
    match v {
        AttrValue::Str(s) => Value::String(s.clone()),
        AttrValue::Int(i) => Value::from(*i),
        AttrValue::Float(f) => Value::from(*f),
        AttrValue::Bool(b) => Value::Bool(*b),
        AttrValue::Time(t) => Value::String(fmt_time(t)),
    }
}

pub fn load_graph_str(text: &str) -> Result<KnowledgeGraph, GraphError> {
    load_graph(text.as_bytes())
}

pub fn load_graph(reader: impl BufRead) -> Result<KnowledgeGraph, GraphError> {
    let mut records = Vec::new();
    let mut schema_rec = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| GraphError::ParseError { line: line_no, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| GraphError::ParseError { line: line_no, reason: e.to_string() })?;
        match rec {
            Record::Schema(s) if records.is_empty() && schema_rec.is_none() => schema_rec = Some(s),
            Record::Schema(_) => {
                return Err(GraphError::ParseError { line: line_no, reason: "schema record must be the first record".into() })
            }
            r => records.push((line_no, r)),
        }
    }

    let schema = match schema_rec {
        Some(s) => schema_from_rec(s),
        None => infer_schema(&records),
    };
    let mut g = KnowledgeGraph::new(schema);
    for (line, rec) in records {
        match rec {
            Record::Node(n) => {
                let id = NodeId::new(&n.id).map_err(|e| GraphError::ParseError { line, reason: e.to_string() })?;
                let mut attrs = BTreeMap::new();
                for (k, v) in &n.attrs {
                    let a = attr_from_json(v)
                        .ok_or_else(|| GraphError::ParseError { line, reason: format!("attribute {k} is not a scalar") })?;
                    attrs.insert(k.clone(), a);
                }
                let node = g.make_node(id, Label::from(n.type_label), &n.name, attrs);
                if let Some(v) = g.schema().check_node(&node).into_iter().next() {
                    return Err(v);
                }
                g.insert_node(node)?;
            }
            Record::Edge(e) => {
                let edge = edge_from_rec(&g, e, line)?;
                let id = edge.id;
                if g.edge(id).is_some() {
                    return Err(GraphError::ParseError { line, reason: format!("duplicate edge id {id}") });
                }
                g.insert_edge(edge, Some(id))?;
            }
            Record::Schema(_) => unreachable!(),
        }
    }
    Ok(g)
}

fn edge_from_rec(g: &KnowledgeGraph, e: EdgeRec, line: usize) -> Result<Edge, GraphError> {
    let parse_err = |reason: String| GraphError::ParseError { line, reason };
    let from = NodeId::new(&e.from).map_err(|x| parse_err(x.to_string()))?;
    let to = NodeId::new(&e.to).map_err(|x| parse_err(x.to_string()))?;
    let id = EdgeId(e.id.unwrap_or(g.next_edge_id().0));
    let (Some(a), Some(b)) = (g.node(from.as_str()), g.node(to.as_str())) else {
        return Err(GraphError::DanglingEdge(id.to_string()));
    };
    let edge_type = Label::from(e.type_label);
    g.schema().check_edge(&a.type_label, &edge_type, &b.type_label, &id.to_string())?;
    if !(0.0..=1.0).contains(&e.weight) {
        return Err(GraphError::SchemaViolation { entity: format!("edge {id}"), rule: "weight outside [0,1]".into() });
    }
    let timestamp = parse_time(&e.ts).ok_or_else(|| parse_err(format!("bad timestamp {:?}", e.ts)))?;
    let provenance = match e.prov {
        None => None,
        Some(p) => Some(ProvenanceTag {
            author: AgentId::new(&p.author).map_err(parse_err)?,
            timestamp: parse_time(&p.ts).ok_or_else(|| parse_err(format!("bad timestamp {:?}", p.ts)))?,
            source_message: p.msg,
            confidence: p.confidence,
        }),
    };
    Ok(Edge { id, from, to, edge_type, weight: e.weight, timestamp, provenance })
}

fn schema_from_rec(s: SchemaRec) -> GraphSchema {
    let mut schema = GraphSchema::default();
    schema.node_types.extend(s.node_types.into_iter().map(Label::from));
    schema.edge_types.extend(s.edge_types.into_iter().map(Label::from));
    for (a, e, b) in s.signatures {
        schema.signatures.insert((a.into(), e.into(), b.into()));
    }
    for (t, keys) in s.required {
        schema.required_attributes.insert(t.into(), keys.into_iter().collect());
    }
    schema
}

fn infer_schema(records: &[(usize, Record)]) -> GraphSchema {
    let mut schema = GraphSchema::default();
    let mut types: BTreeMap<&str, &str> = BTreeMap::new();
    for (_, r) in records {
        if let Record::Node(n) = r {
            schema.node_types.insert(n.type_label.as_str().into());
            types.insert(&n.id, &n.type_label);
        }
    }
    for (_, r) in records {
        if let Record::Edge(e) = r {
            schema.edge_types.insert(e.type_label.as_str().into());
            if let (Some(a), Some(b)) = (types.get(e.from.as_str()), types.get(e.to.as_str())) {
                schema.signatures.insert(((*a).into(), e.type_label.as_str().into(), (*b).into()));
            }
        }
    }
    schema
}

/// Canonical serialization: schema, nodes by id, edges by id.
pub fn write_graph(graph: &KnowledgeGraph, mut w: impl Write) -> std::io::Result<()> {
    write_canonical(graph, &mut w)
}

pub(crate) fn write_canonical(graph: &KnowledgeGraph, w: &mut impl Write) -> std::io::Result<()> {
    let s = graph.schema();
    let schema = SchemaRec {
        node_types: s.node_types.iter().map(|l| l.to_string()).collect(),
        edge_types: s.edge_types.iter().map(|l| l.to_string()).collect(),
        signatures: s.signatures.iter().map(|(a, e, b)| (a.to_string(), e.to_string(), b.to_string())).collect(),
        required: s
            .required_attributes
            .iter()
            .map(|(t, k)| (t.to_string(), k.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()))
            .collect(),
    };
    writeln!(w, "{}", serde_json::to_string(&Record::Schema(schema))?)?;
    for n in graph.nodes() {
        let rec = NodeRec {
            id: n.id.to_string(),
            type_label: n.type_label.to_string(),
            name: n.display_name.clone(),
            attrs: n.attributes.iter().map(|(k, v)| (k.clone(), attr_to_json(v))).collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&Record::Node(rec))?)?;
    }
    for e in graph.edges() {
        let rec = EdgeRec {
            id: Some(e.id.0),
            from: e.from.to_string(),
            to: e.to.to_string(),
            type_label: e.edge_type.to_string(),
            weight: e.weight,
            ts: fmt_time(&e.timestamp),
            prov: e.provenance.as_ref().map(|p| ProvRec {
                author: p.author.to_string(),
                ts: fmt_time(&p.timestamp),
                msg: p.source_message.clone(),
                confidence: p.confidence,
            }),
        };
        writeln!(w, "{}", serde_json::to_string(&Record::Edge(rec))?)?;
    }
    Ok(())
}

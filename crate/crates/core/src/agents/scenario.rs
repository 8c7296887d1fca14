//! Scenario files: a graph, a user query and what the run must produce.
//!
//! ```json
//! {
//!   "name": "worked_example",
//!   "category": "diagnostic",
//!   "graph": "../hydraulic_plant.jsonl",
//!   "conversation": "conv_042",
//!   "query": "What causes pressure drops in hydraulic circuit HC-3?",
//!   "ftma_transcript": "../ftma/worked_example.txt",
//!   "expect": { "messages": 5, "top_fault": "Fault:seal_degradation" }
//! }
//! ```
//!
//! Relative paths resolve against the scenario file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::audit::Claim;
use crate::graph::{load_graph, GraphError, KnowledgeGraph, NodeId};
use crate::protocol::{parse, token_count, ErrorCode, Message, OperationPayload, Performative};

use super::{Harness, HarnessConfig, LanguagePort, SelectError, Selection, StubPort, DIAGNOSTIC, USER};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Graph { path: PathBuf, source: GraphError },
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Inter-agent message count.
    pub messages: Option<usize>,
    pub top_fault: Option<String>,
    /// Nodes the final claim must contain.
    #[serde(default)]
    pub claim_nodes: Vec<String>,
    /// Expected error code when the query cannot be linked.
    pub reject: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub category: String,
    pub graph: PathBuf,
    pub conversation: String,
    pub query: String,
    /// Run the historian's pattern discovery after the query.
    #[serde(default)]
    pub synthesize: bool,
    pub ftma_transcript: Option<PathBuf>,
    #[serde(default)]
    pub expect: Expectation,
}

impl Scenario {
    /// Token count of the free-text baseline transcript, if one is attached.
    pub fn ftma_tokens(&self) -> Result<Option<usize>, ScenarioError> {
        let Some(p) = &self.ftma_transcript else { return Ok(None) };
        let text = fs::read_to_string(p).map_err(|source| ScenarioError::Io { path: p.clone(), source })?;
        Ok(Some(token_count(&text)))
    }
}

/// Reads a scenario and its graph, resolving relative paths.
pub fn load_scenario(path: &Path) -> Result<(Scenario, KnowledgeGraph), ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    let mut sc: Scenario = serde_json::from_str(&text).map_err(|source| ScenarioError::Json { path: path.into(), source })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    sc.graph = dir.join(&sc.graph);
    sc.ftma_transcript = sc.ftma_transcript.map(|p| dir.join(p));
    let file = fs::File::open(&sc.graph).map_err(|source| ScenarioError::Io { path: sc.graph.clone(), source })?;
    let graph = load_graph(std::io::BufReader::new(file)).map_err(|source| ScenarioError::Graph { path: sc.graph.clone(), source })?;
    Ok((sc, graph))
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TokenReport {
    /// (audit seq, performative, tokens) per inter-agent message.
    pub per_message: Vec<(u64, Performative, usize)>,
    pub total: usize,
    /// Natural-language text at the boundary, reported but not counted.
    pub excluded_query_tokens: usize,
    pub excluded_response_tokens: usize,
}

pub struct ScenarioOutcome {
    pub harness: Harness,
    pub selection: Result<Selection, SelectError>,
    pub claims: Claim,
    pub response: String,
    pub tokens: TokenReport,
}

impl ScenarioOutcome {
    pub fn inter_agent_messages(&self) -> usize {
        self.tokens.per_message.len()
    }

    /// Decoded messages of the run, in delivery order.
    pub fn messages(&self) -> Vec<Message> {
        self.harness.transcript().iter().filter_map(|t| parse(&t.body).ok()).collect()
    }

    /// The first node of the diagnostic agent's first ranked result.
    pub fn top_fault(&self) -> Option<NodeId> {
        self.messages().into_iter().find_map(|m| match m.operation {
            OperationPayload::Result(r) if m.sender.as_str() == DIAGNOSTIC && m.performative == Performative::Inform => {
                r.nodes.first().cloned()
            }
            _ => None,
        })
    }

    /// Error code of the dispatcher's refusal to the user, if any.
    pub fn user_rejection(&self) -> Option<ErrorCode> {
        self.messages().into_iter().find_map(|m| match m.operation {
            OperationPayload::Error(e) if m.receiver.as_str() == USER && m.performative == Performative::Reject => Some(e.code),
            _ => None,
        })
    }

    /// One line per declared expectation; empty when none are declared.
    pub fn check(&self, expect: &Expectation) -> Vec<Check> {
        let mut out = Vec::new();
        if let Some(n) = expect.messages {
            out.push(Check::new("messages", n.to_string(), self.inter_agent_messages().to_string()));
        }
        if let Some(f) = &expect.top_fault {
            let got = self.top_fault().map(|n| n.to_string()).unwrap_or_else(|| "-".into());
            out.push(Check::new("top_fault", f.clone(), got));
        }
        for n in &expect.claim_nodes {
            let present = self.claims.nodes.iter().any(|c| c.as_str() == n);
            out.push(Check::new("claim_node", n.clone(), if present { n.clone() } else { "-".into() }));
        }
        if let Some(code) = &expect.reject {
            let got = self.user_rejection().map(|c| c.as_str().to_string()).unwrap_or_else(|| "-".into());
            out.push(Check::new("reject", code.clone(), got));
        }
        out
    }
}

/// An expected value next to what the run produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub what: &'static str,
    pub expected: String,
    pub actual: String,
}

impl Check {
    fn new(what: &'static str, expected: String, actual: String) -> Self {
        Check { what, expected, actual }
    }

    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }
}

pub fn run_scenario(sc: &Scenario, graph: &KnowledgeGraph, cfg: HarnessConfig) -> ScenarioOutcome {
    let port = StubPort::new(graph);
    let mut h = Harness::new(graph.clone(), cfg);
    let selection = h.ask(&sc.conversation, &sc.query, &port);
    h.run();
    if sc.synthesize {
        h.synthesize(&sc.conversation);
        h.run();
    }
    h.finish();
    let claims = h.claims(&sc.conversation);
    let response = port.render_answer(&claims, h.store().head());
    let per_message: Vec<(u64, Performative, usize)> = h
        .transcript()
        .iter()
        .filter(|t| t.is_inter_agent() && t.conversation == sc.conversation)
        .map(|t| (t.seq, t.performative, t.tokens))
        .collect();
    let tokens = TokenReport {
        total: per_message.iter().map(|(_, _, n)| n).sum(),
        per_message,
        excluded_query_tokens: token_count(&sc.query),
        excluded_response_tokens: token_count(&response),
    };
    ScenarioOutcome { harness: h, selection, claims, response, tokens }
}

//! The natural-language boundary. Only the dispatcher calls a port, once on
//! the way in and once on the way out; no inter-agent message carries
//! free text.

use crate::audit::Claim;
use crate::graph::KnowledgeGraph;

use super::Intent;

pub trait LanguagePort {
    /// Surface names of graph entities mentioned in `text`.
    fn extract_entities(&self, text: &str) -> Vec<String>;
    fn classify_intent(&self, text: &str) -> Intent;
    /// Traversal depth for a query with the given intent and entity count.
    fn estimate_depth(&self, intent: Intent, n_entities: usize) -> u32;
    /// Final user-facing answer; never part of inter-agent traffic.
    fn render_answer(&self, claim: &Claim, graph: &KnowledgeGraph) -> String;
}

/// Keyword rules checked in order; the first intent with a hit wins.
const INTENT_KEYWORDS: &[(Intent, &[&str])] = &[
    (Intent::Predictive, &["predict", "likely", "at risk", "forecast", "next"]),
    (Intent::Diagnostic, &["what's wrong", "why", "cause", "diagnose", "fault", "wrong"]),
    (Intent::Procedural, &["how do i", "procedure", "replace", "fix"]),
];

/// Shortest alias taken from a node's local name; shorter ones collide with words.
const MIN_ALIAS_LEN: usize = 3;

/// Deterministic port: dictionary longest-match over node names and
/// keyword intent rules.
#[derive(Clone, Debug)]
pub struct StubPort {
    /// (lowercased surface form, display name), longest surface first.
    dictionary: Vec<(String, String)>,
}

impl StubPort {
    /// Builds the dictionary from every node's display name and its local
    /// name with underscores read as spaces.
    pub fn new(graph: &KnowledgeGraph) -> Self {
        let mut dictionary = Vec::new();
        for node in graph.nodes() {
            let display = if node.display_name.trim().is_empty() { node.id.local_name() } else { &node.display_name };
            dictionary.push((display.to_lowercase(), display.to_string()));
            let alias = node.id.local_name().replace('_', " ").to_lowercase();
            if alias.chars().count() >= MIN_ALIAS_LEN && alias != display.to_lowercase() {
                dictionary.push((alias, display.to_string()));
            }
        }
        // stable: equal-length surfaces keep node-id order
        dictionary.sort_by_key(|(name, _)| std::cmp::Reverse(name.len()));
        dictionary.retain(|(s, _)| !s.trim().is_empty());
        StubPort { dictionary }
    }
}

fn normalize(text: &str) -> String {
    text.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase()
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

impl LanguagePort for StubPort {
    fn extract_entities(&self, text: &str) -> Vec<String> {
        let q = normalize(text);
        let mut out: Vec<String> = Vec::new();
        let mut i = 0;
        while i < q.len() {
            let at_boundary = q[..i].chars().next_back().is_none_or(|c| !is_word(c));
            let hit = at_boundary
                .then(|| {
                    self.dictionary
                        .iter()
                        .find(|(s, _)| q[i..].starts_with(s.as_str()) && q[i + s.len()..].chars().next().is_none_or(|c| !is_word(c)))
                })
                .flatten();
            match hit {
                Some((s, display)) => {
                    if !out.contains(display) {
                        out.push(display.clone());
                    }
                    i += s.len();
                }
                None => i += q[i..].chars().next().map_or(1, char::len_utf8),
            }
        }
        out
    }

    fn classify_intent(&self, text: &str) -> Intent {
        let q = normalize(text);
        INTENT_KEYWORDS.iter().find(|(_, kws)| kws.iter().any(|k| q.contains(k))).map(|(intent, _)| *intent).unwrap_or(Intent::Factoid)
    }

    fn estimate_depth(&self, intent: Intent, _n_entities: usize) -> u32 {
        match intent {
            Intent::Factoid => 1,
            Intent::Diagnostic | Intent::Procedural => 2,
            Intent::Predictive => 3,
        }
    }

    fn render_answer(&self, claim: &Claim, graph: &KnowledgeGraph) -> String {
        if claim.is_empty() {
            return "No grounded answer: the query did not link to any graph entity.".into();
        }
        let names: Vec<String> =
            claim.nodes.iter().map(|n| graph.node(n.as_str()).map_or_else(|| n.to_string(), |x| x.display_name.clone())).collect();
        let mut s = format!("Grounded findings: {}.", names.join("; "));
        for e in &claim.edges {
            s.push_str(&format!("\n- {e}"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_graph_str;

    fn port() -> StubPort {
        let g = load_graph_str(
            r#"{"kind":"node","id":"Component:HC-3","type":"Component","name":"Hydraulic Circuit HC-3"}
{"kind":"node","id":"Symptom:pressure_drop","type":"Symptom","name":"Pressure drop"}
{"kind":"node","id":"Part:X","type":"Part","name":"Part X"}"#,
        )
        .unwrap();
        StubPort::new(&g)
    }

    #[test]
    fn longest_match_with_word_boundaries() {
        let p = port();
        assert_eq!(p.extract_entities("What causes pressure drops in hydraulic circuit HC-3?"), ["Hydraulic Circuit HC-3"]);
        assert_eq!(p.extract_entities("pressure drop on HC-3"), ["Pressure drop", "Hydraulic Circuit HC-3"]);
        assert!(p.extract_entities("x marks nothing").is_empty());
    }

    #[test]
    fn intent_rules_are_ordered() {
        let p = port();
        assert_eq!(p.classify_intent("Predict next likely failure for pump P-101"), Intent::Predictive);
        assert_eq!(p.classify_intent("What\u{2019}s wrong and how do I fix it?"), Intent::Diagnostic);
        assert_eq!(p.classify_intent("How do I replace bearing B-4521?"), Intent::Procedural);
        assert_eq!(p.classify_intent("What is the rated pressure of pump P-101?"), Intent::Factoid);
    }
}

//! The five-agent runtime: a dispatcher at the language boundary and four
//! graph specialists that exchange nothing but typed traversal messages.
//!
//! | agent        | role                                            |
//! |--------------|-------------------------------------------------|
//! | `Dispatcher` | links the user query, routes, collects claims   |
//! | `A_D`        | diagnostics: symptoms to ranked faults          |
//! | `A_P`        | procedures, parts and safety protocols          |
//! | `A_S`        | maintenance history and pattern discovery       |
//! | `A_I`        | ingestion: the only agent that applies updates  |

mod bus;
mod harness;
mod port;
mod rank;
mod scenario;
mod select;
mod synthesis;

use std::collections::BTreeSet;

use crate::graph::Label;
use crate::protocol::AgentId;
use crate::security::{Action, AgentIdentity, Permission, Policy, Roster, Scope};

pub use bus::{priority_class, Bus};
pub use harness::{Harness, HarnessConfig, HarnessEvent, TranscriptEntry};
pub use port::{LanguagePort, StubPort};
pub use rank::{rank_faults, RankedFault, Ranking};
pub use scenario::{load_scenario, run_scenario, Check, Expectation, Scenario, ScenarioError, ScenarioOutcome, TokenReport};
pub use select::{select_operation, SelectError, Selection};
pub use synthesis::{discover_patterns, Proposal, SynthesisConfig};

pub const DISPATCHER: &str = "Dispatcher";
pub const DIAGNOSTIC: &str = "A_D";
pub const PROCEDURAL: &str = "A_P";
pub const HISTORIAN: &str = "A_S";
pub const INGESTION: &str = "A_I";
/// The human side of the language boundary; receives only rejections.
pub const USER: &str = "User";

pub const AGENTS: [&str; 6] = [DISPATCHER, DIAGNOSTIC, PROCEDURAL, HISTORIAN, INGESTION, USER];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Intent {
    Factoid,
    Diagnostic,
    Procedural,
    Predictive,
}

impl Intent {
    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Factoid => "factoid",
            Intent::Diagnostic => "diagnostic",
            Intent::Procedural => "procedural",
            Intent::Predictive => "predictive",
        }
    }

    /// Edge types a query of this intent may follow.
    pub fn edge_map(self) -> &'static [&'static str] {
        match self {
            Intent::Diagnostic => &["causes", "indicates"],
            Intent::Procedural => &["addressed_by", "requires", "requires_part", "has_safety_protocol"],
            Intent::Predictive => &["occurred_in", "failed_after"],
            Intent::Factoid => &["has_spec", "has_sensor", "has_part"],
        }
    }

    /// Specialist that executes the first traversal.
    pub fn route(self) -> &'static str {
        match self {
            Intent::Diagnostic => DIAGNOSTIC,
            Intent::Procedural | Intent::Factoid => PROCEDURAL,
            Intent::Predictive => HISTORIAN,
        }
    }
}

pub(crate) fn labels(xs: &[&str]) -> BTreeSet<Label> {
    xs.iter().map(|x| Label::new(x)).collect()
}

/// The default grant table.
///
/// The dispatcher may traverse anything; each specialist only its own edge
/// vocabulary. `A_S` holds a narrow update grant so that discovered
/// correlations can be proposed as deltas; `A_I` may update anything.
pub fn default_policy() -> Policy {
    let traverse = |nodes: Scope, edges: &[&str]| Permission { action: Action::Traverse, node_types: nodes, edge_types: Scope::of(edges) };
    let mut p = Policy::default();
    p.grant(AgentId::lit(DISPATCHER), Permission { action: Action::Traverse, node_types: Scope::All, edge_types: Scope::All });
    p.grant(AgentId::lit(DIAGNOSTIC), traverse(Scope::All, &["causes", "indicates", "has_symptom", "correlates_with"]));
    p.grant(
        AgentId::lit(PROCEDURAL),
        traverse(Scope::All, &["addressed_by", "requires", "requires_part", "has_safety_protocol", "precedes", "occurred_in"]),
    );
    p.grant(AgentId::lit(HISTORIAN), traverse(Scope::All, &["occurred_in", "replaced_in", "failed_after"]));
    p.grant(
        AgentId::lit(HISTORIAN),
        Permission {
            action: Action::Update,
            node_types: Scope::of(&["Fault", "Sensor", "Condition", "Part"]),
            edge_types: Scope::of(&["correlates_with", "risk_indicator"]),
        },
    );
    p.grant(AgentId::lit(INGESTION), Permission { action: Action::Update, node_types: Scope::All, edge_types: Scope::All });
    p
}

/// Public keys of every role, derived from `seed` exactly as [`Harness`] does.
/// Lets a verifier holding only the seed check a harness-produced log.
pub fn roster(seed: u64) -> Roster {
    let mut r = Roster::default();
    for name in AGENTS {
        r.register(&AgentIdentity::from_seed(AgentId::lit(name), seed));
    }
    r
}

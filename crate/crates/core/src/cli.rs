//! Command-line surface: load, run, replay, verify, bench.
//!
//! Reports are line-oriented. `--format plain` (the default) prints
//! tab-separated rows under `# section` headers; `--format table` pads
//! columns for reading. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage error |
//! | 2 | input missing or unparsable |
//! | 3 | verification failure (MISMATCH, Fabricated, bound exceeded) |
//! | 4 | scenario expectation failed |
//!
//! Relative paths that do not exist are retried under `G2CP_FIXTURE_DIR`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::agents::{self, default_policy, load_scenario, run_scenario, HarnessConfig};
use crate::audit::{replay, verify_claim, AuditLog, Claim, ClaimVerdict, Verdict};
use crate::graph::{load_graph, EdgeRef, KnowledgeGraph, NodeId};
use crate::stats::{bench_traversal, compute_stats, Diameter};
use crate::traversal::ExecutionLimits;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_SCENARIO: i32 = 4;

pub const FIXTURE_DIR_VAR: &str = "G2CP_FIXTURE_DIR";

#[derive(Parser, Debug)]
#[command(name = "g2cp", version, about = "Graph-grounded agent communication runtime")]
pub struct Cli {
    /// Seed for agent key derivation and benchmark layout.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Wall-clock budget per traversal.
    #[arg(long, global = true)]
    pub limits_timeout_ms: Option<u64>,
    /// Largest node count a single result may hold.
    #[arg(long, global = true)]
    pub limits_max_nodes: Option<usize>,
    /// Most nodes admitted per hop.
    #[arg(long, global = true)]
    pub limits_frontier_cap: Option<usize>,
    /// Tab-separated sections or aligned tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Plain)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Plain,
    Table,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a graph file and print its statistics.
    Load {
        /// Graph file (JSONL).
        graph: PathBuf,
    },
    /// Run a scenario and check its expectations.
    Run {
        /// Scenario file (JSON).
        scenario: PathBuf,
        /// Write the audit log (JSONL) here.
        #[arg(long)]
        audit_out: Option<PathBuf>,
        /// Write the commitment ledger (JSONL) here.
        #[arg(long)]
        ledger_out: Option<PathBuf>,
        /// Write the final claim set (JSON) here.
        #[arg(long)]
        claims_out: Option<PathBuf>,
    },
    /// Re-execute every entry of an audit log against its initial graph.
    Replay {
        /// Audit log (JSONL).
        log: PathBuf,
        /// The graph the log started from.
        graph: PathBuf,
    },
    /// Check a claim file against the conversation trace in a log.
    Verify {
        /// Claim file (JSON) naming a conversation, nodes and edges.
        claim: PathBuf,
        /// Audit log (JSONL).
        log: PathBuf,
        /// The graph the log started from.
        graph: PathBuf,
    },
    /// Expanded-node counts on regular synthetic graphs.
    Bench {
        /// Node counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 10_000, 100_000])]
        sizes: Vec<usize>,
        /// Out-degrees.
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8])]
        degrees: Vec<usize>,
        /// Traversal depths.
        #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3])]
        depths: Vec<u32>,
    },
}

/// On-disk claim: the conversation whose trace supports it, plus elements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimFile {
    pub conversation: String,
    pub nodes: Vec<String>,
    /// Edges in `from -[type]-> to` form.
    pub edges: Vec<String>,
}

impl ClaimFile {
    pub fn new(conversation: &str, claim: &Claim) -> Self {
        ClaimFile {
            conversation: conversation.to_string(),
            nodes: claim.nodes.iter().map(|n| n.to_string()).collect(),
            edges: claim.edges.iter().map(|e| e.to_string()).collect(),
        }
    }

    pub fn claim(&self) -> Result<Claim, String> {
        let nodes = self.nodes.iter().map(|n| NodeId::new(n).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
        let edges = self.edges.iter().map(|e| e.parse::<EdgeRef>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
        Ok(Claim { nodes, edges })
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("write failed: {0}")]
    Output(#[from] io::Error),
}

type Outcome = Result<i32, CliError>;

/// Parses `args` (including the program name) and executes the command.
pub fn main_with(args: impl IntoIterator<Item = OsString>, fixture_dir: Option<PathBuf>, out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(out, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, fixture_dir.as_deref(), out) {
        Ok(code) => code,
        Err(CliError::Input(msg)) => {
            let _ = writeln!(out, "error: {msg}");
            EXIT_INPUT
        }
        Err(e @ CliError::Output(_)) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let dir = std::env::var_os(FIXTURE_DIR_VAR).map(PathBuf::from);
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    main_with(std::env::args_os(), dir, &mut lock)
}

fn execute(cli: &Cli, fixture_dir: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let resolve = |p: &Path| resolve_path(p, fixture_dir);
    let mut w = Report { out, format: cli.format };
    match &cli.command {
        Command::Load { graph } => load_cmd(&mut w, &resolve(graph)?),
        Command::Run { scenario, audit_out, ledger_out, claims_out } => {
            let outputs = Outputs { audit: audit_out.as_deref(), ledger: ledger_out.as_deref(), claims: claims_out.as_deref() };
            run_cmd(&mut w, cli, &resolve(scenario)?, outputs)
        }
        Command::Replay { log, graph } => replay_cmd(&mut w, cli.seed, &resolve(log)?, &resolve(graph)?),
        Command::Verify { claim, log, graph } => verify_cmd(&mut w, cli.seed, &resolve(claim)?, &resolve(log)?, &resolve(graph)?),
        Command::Bench { sizes, degrees, depths } => bench_cmd(&mut w, sizes, degrees, depths, cli.seed),
    }
}

fn resolve_path(p: &Path, fixture_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    if p.exists() {
        return Ok(p.to_path_buf());
    }
    if let Some(dir) = fixture_dir.filter(|_| p.is_relative()) {
        let q = dir.join(p);
        if q.exists() {
            return Ok(q);
        }
    }
    Err(CliError::Input(format!("{}: no such file", p.display())))
}

fn read_graph(p: &Path) -> Result<KnowledgeGraph, CliError> {
    let f = fs::File::open(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    load_graph(io::BufReader::new(f)).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

fn read_log(p: &Path) -> Result<AuditLog, CliError> {
    let f = fs::File::open(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    AuditLog::read_jsonl(io::BufReader::new(f)).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

fn limits(cli: &Cli) -> ExecutionLimits {
    let mut l = ExecutionLimits::default();
    if let Some(t) = cli.limits_timeout_ms {
        l.timeout_ms = t;
    }
    if let Some(n) = cli.limits_max_nodes {
        l.max_result_nodes = n;
    }
    if let Some(c) = cli.limits_frontier_cap {
        l.frontier_cap = c;
    }
    l
}

/// Writes sections of rows in the selected format.
struct Report<'a> {
    out: &'a mut dyn Write,
    format: Format,
}

impl Report<'_> {
    fn section(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        writeln!(self.out, "# {name}")?;
        match self.format {
            Format::Plain => {
                writeln!(self.out, "{}", header.join("\t"))?;
                for r in rows {
                    writeln!(self.out, "{}", r.join("\t"))?;
                }
            }
            Format::Table => {
                let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
                for r in rows {
                    for (w, c) in widths.iter_mut().zip(r) {
                        *w = (*w).max(c.chars().count());
                    }
                }
                let line = |cells: Vec<&str>| {
                    let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                    padded.join("  ").trim_end().to_string()
                };
                writeln!(self.out, "{}", line(header.to_vec()))?;
                writeln!(
                    self.out,
                    "{}",
                    line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect())
                )?;
                for r in rows {
                    writeln!(self.out, "{}", line(r.iter().map(|s| s.as_str()).collect()))?;
                }
            }
        }
        Ok(())
    }

    fn pairs(&mut self, name: &str, pairs: &[(&str, String)]) -> io::Result<()> {
        let rows: Vec<Vec<String>> = pairs.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
        self.section(name, &["key", "value"], &rows)
    }
}

fn load_cmd(w: &mut Report<'_>, path: &Path) -> Outcome {
    let g = read_graph(path)?;
    let mut pairs = vec![("nodes", g.node_count().to_string()), ("edges", g.edge_count().to_string())];
    if let Ok(s) = compute_stats(&g) {
        let diameter = match s.diameter {
            Diameter::Finite(d) => d.to_string(),
            Diameter::Unreached(d) => format!("UNREACHED({d})"),
        };
        pairs.extend([
            ("avg_degree", format!("{:.4}", s.avg_degree)),
            ("avg_total_degree", format!("{:.4}", s.avg_total_degree)),
            ("density", format!("{:.6}", s.density)),
            ("diameter", diameter),
        ]);
    }
    pairs.push(("digest", g.digest()));
    w.pairs("graph", &pairs)?;
    Ok(EXIT_OK)
}

struct Outputs<'a> {
    audit: Option<&'a Path>,
    ledger: Option<&'a Path>,
    claims: Option<&'a Path>,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn run_cmd(w: &mut Report<'_>, cli: &Cli, path: &Path, outputs: Outputs<'_>) -> Outcome {
    let (sc, graph) = load_scenario(path).map_err(|e| CliError::Input(e.to_string()))?;
    let cfg = HarnessConfig { seed: cli.seed, limits: limits(cli), ..HarnessConfig::default() };
    let run = run_scenario(&sc, &graph, cfg);
    let h = &run.harness;

    let rows: Vec<Vec<String>> = h
        .transcript()
        .iter()
        .map(|t| {
            let kind = if t.is_inter_agent() { "agent" } else { "boundary" };
            vec![
                t.seq.to_string(),
                t.sender.to_string(),
                t.receiver.to_string(),
                t.performative.to_string(),
                t.tokens.to_string(),
                kind.into(),
            ]
        })
        .collect();
    w.section("transcript", &["seq", "sender", "receiver", "performative", "tokens", "kind"], &rows)?;

    let mut pairs = vec![
        ("inter_agent_messages", run.inter_agent_messages().to_string()),
        ("total_tokens", run.tokens.total.to_string()),
        ("excluded_query_tokens", run.tokens.excluded_query_tokens.to_string()),
        ("excluded_response_tokens", run.tokens.excluded_response_tokens.to_string()),
    ];
    if let Some(ftma) = sc.ftma_tokens().map_err(|e| CliError::Input(e.to_string()))? {
        pairs.push(("ftma_tokens", ftma.to_string()));
        pairs.push(("ratio", format!("{:.4}", run.tokens.total as f64 / ftma as f64)));
    }
    w.pairs("tokens", &pairs)?;

    let rows: Vec<Vec<String>> = h
        .ledger()
        .commitments()
        .iter()
        .map(|c| {
            vec![
                c.id.to_string(),
                c.debtor.clone(),
                c.creditor.clone(),
                serde_json::to_value(c.condition).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                c.state.to_string(),
                c.created_by.to_string(),
                c.resolved_by.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    w.section("ledger", &["id", "debtor", "creditor", "condition", "state", "created_by", "resolved_by"], &rows)?;

    let mut rows: Vec<Vec<String>> = run.claims.nodes.iter().map(|n| vec!["node".into(), n.to_string()]).collect();
    rows.extend(run.claims.edges.iter().map(|e| vec!["edge".into(), e.to_string()]));
    w.section("claims", &["kind", "element"], &rows)?;

    let checks = run.check(&sc.expect);
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.what.into(), c.expected.clone(), c.actual.clone(), if c.passed() { "ok" } else { "FAIL" }.into()])
        .collect();
    w.section("expectations", &["check", "expected", "actual", "status"], &rows)?;

    if let Some(p) = outputs.audit {
        write_file(p, &h.log().to_jsonl())?;
    }
    if let Some(p) = outputs.ledger {
        write_file(p, &h.ledger().to_jsonl())?;
    }
    if let Some(p) = outputs.claims {
        let file = ClaimFile::new(&sc.conversation, &run.claims);
        write_file(p, &(serde_json::to_string_pretty(&file).expect("claim serializes") + "\n"))?;
    }
    Ok(if checks.iter().all(|c| c.passed()) { EXIT_OK } else { EXIT_SCENARIO })
}

fn replay_cmd(w: &mut Report<'_>, seed: u64, log_path: &Path, graph_path: &Path) -> Outcome {
    let log = read_log(log_path)?;
    let graph = read_graph(graph_path)?;
    let report = match replay(&log, &graph, &agents::roster(seed), &default_policy()) {
        Ok(r) => r,
        Err(e) => {
            w.pairs("replay", &[("error", e.to_string())])?;
            return Ok(EXIT_VERIFY);
        }
    };
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            let reasons = match &e.verdict {
                Verdict::Match => String::new(),
                Verdict::Mismatch(r) => r.join("; "),
            };
            vec![e.seq.to_string(), e.verdict.to_string(), reasons]
        })
        .collect();
    w.section("replay", &["seq", "verdict", "reasons"], &rows)?;
    w.pairs(
        "summary",
        &[
            ("entries", report.entries.len().to_string()),
            ("mismatched", report.mismatched().len().to_string()),
            ("final_version", report.final_version.to_string()),
            ("final_digest", report.final_digest.clone()),
        ],
    )?;
    Ok(if report.all_match() { EXIT_OK } else { EXIT_VERIFY })
}

fn verify_cmd(w: &mut Report<'_>, seed: u64, claim_path: &Path, log_path: &Path, graph_path: &Path) -> Outcome {
    let text = fs::read_to_string(claim_path).map_err(|e| CliError::Input(format!("{}: {e}", claim_path.display())))?;
    let file: ClaimFile = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", claim_path.display())))?;
    let claim = file.claim().map_err(|e| CliError::Input(format!("{}: {e}", claim_path.display())))?;
    let log = read_log(log_path)?;
    let graph = read_graph(graph_path)?;
    let trace = log.trace(&file.conversation);
    let verdict =
        verify_claim(&claim, &trace, &log, &graph, &agents::roster(seed), &default_policy()).map_err(|e| CliError::Input(e.to_string()))?;
    let mut pairs = vec![("conversation", file.conversation.clone()), ("trace_entries", trace.len().to_string())];
    let code = match &verdict {
        ClaimVerdict::Grounded => {
            pairs.push(("verdict", "Grounded".into()));
            EXIT_OK
        }
        ClaimVerdict::Fabricated(missing) => {
            pairs.push(("verdict", "Fabricated".into()));
            let elements: BTreeSet<String> =
                missing.nodes.iter().map(|n| n.to_string()).chain(missing.edges.iter().map(|e| e.to_string())).collect();
            pairs.extend(elements.into_iter().map(|e| ("missing", e)));
            EXIT_VERIFY
        }
        ClaimVerdict::FalsifiedTrace(seq) => {
            pairs.push(("verdict", "FalsifiedTrace".into()));
            pairs.push(("entry", seq.to_string()));
            EXIT_VERIFY
        }
    };
    w.pairs("verify", &pairs)?;
    Ok(code)
}

fn bench_cmd(w: &mut Report<'_>, sizes: &[usize], degrees: &[usize], depths: &[u32], seed: u64) -> Outcome {
    let rows = bench_traversal(sizes, degrees, depths, seed);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.r.to_string(),
                r.h.to_string(),
                r.expanded_nodes.to_string(),
                r.bound.to_string(),
                if r.within_bound() { "ok" } else { "EXCEEDED" }.into(),
                r.elapsed_ms.to_string(),
            ]
        })
        .collect();
    w.section("bench", &["n", "r", "h", "expanded_nodes", "bound", "status", "elapsed_ms"], &table)?;
    Ok(if rows.iter().all(|r| r.within_bound()) { EXIT_OK } else { EXIT_VERIFY })
}

//! Fault ranking over an evidence edge set.
//!
//! Faults are ordered by how many distinct sources reach them, then by the
//! best product of edge weights along any evidence path, then by id.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{EdgeRef, NodeId};

#[derive(Clone, Debug, PartialEq)]
pub struct RankedFault {
    pub id: NodeId,
    pub convergence: usize,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Ranking {
    pub faults: Vec<RankedFault>,
    /// Evidence edges lying on some source-to-fault route.
    pub support: BTreeSet<EdgeRef>,
}

fn reach(starts: &BTreeSet<NodeId>, adj: &BTreeMap<&NodeId, Vec<&NodeId>>) -> BTreeSet<NodeId> {
    let mut seen = starts.clone();
    let mut stack: Vec<NodeId> = starts.iter().cloned().collect();
    while let Some(u) = stack.pop() {
        for v in adj.get(&u).into_iter().flatten() {
            if seen.insert((*v).clone()) {
                stack.push((*v).clone());
            }
        }
    }
    seen
}

/// Best path product from `s` to every node it reaches.
fn best_products(s: &NodeId, evidence: &[(EdgeRef, f64)]) -> BTreeMap<NodeId, f64> {
    let mut best = BTreeMap::from([(s.clone(), 1.0)]);
    // weights lie in [0, 1], so improving a node never needs a cycle and
    // |evidence| + 1 rounds reach the fixpoint
    for _ in 0..=evidence.len() {
        let mut changed = false;
        for (e, w) in evidence {
            let Some(&bu) = best.get(&e.from) else { continue };
            let cand = bu * w;
            let slot = best.entry(e.to.clone()).or_insert(-1.0);
            if cand > *slot {
                *slot = cand;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    best
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn rank_faults(sources: &BTreeSet<NodeId>, evidence: &[(EdgeRef, f64)], is_fault: impl Fn(&NodeId) -> bool) -> Ranking {
    let mut stats: BTreeMap<NodeId, (usize, f64)> = BTreeMap::new();
    for s in sources {
        for (n, p) in best_products(s, evidence) {
            if sources.contains(&n) || !is_fault(&n) {
                continue;
            }
            let slot = stats.entry(n).or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 = slot.1.max(p);
        }
    }
    let mut faults: Vec<RankedFault> =
        stats.into_iter().map(|(id, (convergence, c))| RankedFault { id, convergence, confidence: round4(c) }).collect();
    faults.sort_by(|a, b| b.convergence.cmp(&a.convergence).then(b.confidence.total_cmp(&a.confidence)).then(a.id.cmp(&b.id)));

    let mut fwd: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    let mut back: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for (e, _) in evidence {
        fwd.entry(&e.from).or_default().push(&e.to);
        back.entry(&e.to).or_default().push(&e.from);
    }
    let forward = reach(sources, &fwd);
    let targets: BTreeSet<NodeId> = faults.iter().map(|f| f.id.clone()).collect();
    let backward = reach(&targets, &back);
    let support = evidence.iter().filter(|(e, _)| forward.contains(&e.from) && backward.contains(&e.to)).map(|(e, _)| e.clone()).collect();
    Ranking { faults, support }
}

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use super::{NodeId, NodeState, Origin, ReasoningGraph};

const CONFIDENCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DanglingEdge { parent: NodeId, child: NodeId },
    Cycle,
    MultipleParents(NodeId),
    Orphan(NodeId),
    RootHasParent(NodeId),
    RootMissing(NodeId),
    RootAbsent,
    FrontierMissing(NodeId),
    FrontierFlagged(NodeId),
    KeyMismatch(NodeId),
    EmptyText(NodeId),
    OriginMismatch(NodeId),
    ConfidenceMismatch { node: NodeId, confidence: Option<f64>, mean: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingEdge { parent, child } => {
                write!(f, "dangling edge {parent} -> {child}")
            }
            Violation::Cycle => f.write_str("cycle"),
            Violation::MultipleParents(id) => write!(f, "{id} has more than one parent"),
            Violation::Orphan(id) => write!(f, "{id} is not the root but has no parent"),
            Violation::RootHasParent(id) => write!(f, "root {id} has a parent"),
            Violation::RootMissing(id) => write!(f, "root {id} is not in the graph"),
            Violation::RootAbsent => f.write_str("non-empty graph without a root"),
            Violation::FrontierMissing(id) => write!(f, "frontier {id} is not in the graph"),
            Violation::FrontierFlagged(id) => write!(f, "frontier {id} is flagged"),
            Violation::KeyMismatch(id) => write!(f, "node stored under {id} has another id"),
            Violation::EmptyText(id) => write!(f, "{id} has empty text"),
            Violation::OriginMismatch(id) => {
                write!(f, "{id}: USER origin and USER_PROVIDED state disagree")
            }
            Violation::ConfidenceMismatch { node, confidence, mean } => write!(
                f,
                "{node}: confidence {confidence:?} differs from token mean {mean}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvariantReport {
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), Vec<Violation>> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(self.violations)
        }
    }
}

impl fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks structure from the raw edge set, not the parent index, so that
/// hand-assembled graphs are judged on what they actually contain.
pub(super) fn check(graph: &ReasoningGraph) -> InvariantReport {
    let mut violations = Vec::new();

    let mut in_degree: BTreeMap<NodeId, usize> = graph.nodes.keys().map(|&id| (id, 0)).collect();
    let mut out: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &(parent, child) in &graph.edges {
        if !graph.nodes.contains_key(&parent) || !graph.nodes.contains_key(&child) {
            violations.push(Violation::DanglingEdge { parent, child });
            continue;
        }
        *in_degree.entry(child).or_default() += 1;
        out.entry(parent).or_default().push(child);
    }

    // Kahn: every node is consumed iff the edge set is acyclic
    let mut indeg = in_degree.clone();
    let mut queue: VecDeque<NodeId> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| id).collect();
    let mut consumed = 0usize;
    while let Some(id) = queue.pop_front() {
        consumed += 1;
        for &c in out.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indeg.get_mut(&c).expect("edge endpoints checked");
            *d -= 1;
            if *d == 0 {
                queue.push_back(c);
            }
        }
    }
    if consumed != graph.nodes.len() {
        violations.push(Violation::Cycle);
    }

    match graph.root {
        None if !graph.nodes.is_empty() => violations.push(Violation::RootAbsent),
        None => {}
        Some(root) if !graph.nodes.contains_key(&root) => violations.push(Violation::RootMissing(root)),
        Some(root) => {
            if in_degree.get(&root).copied().unwrap_or(0) > 0 {
                violations.push(Violation::RootHasParent(root));
            }
        }
    }
    for (&id, &d) in &in_degree {
        if d > 1 {
            violations.push(Violation::MultipleParents(id));
        } else if d == 0 && graph.root != Some(id) {
            violations.push(Violation::Orphan(id));
        }
    }

    if let Some(f) = graph.frontier {
        match graph.nodes.get(&f) {
            None => violations.push(Violation::FrontierMissing(f)),
            Some(n) if n.state == NodeState::Flagged => violations.push(Violation::FrontierFlagged(f)),
            Some(_) => {}
        }
    }

    for (&key, node) in &graph.nodes {
        if node.id != key {
            violations.push(Violation::KeyMismatch(key));
        }
        if node.text.trim().is_empty() {
            violations.push(Violation::EmptyText(key));
        }
        let user_origin = node.origin == Origin::User;
        // a USER node may have been flagged since, so only the MODEL side is strict
        if (!user_origin && node.state == NodeState::UserProvided)
            || (user_origin && node.state == NodeState::Valid)
        {
            violations.push(Violation::OriginMismatch(key));
        }
        if let Some(lps) = node.token_logprobs.as_ref().filter(|l| !l.is_empty()) {
            let mean = lps.iter().sum::<f64>() / lps.len() as f64;
            let ok = node
                .confidence
                .is_some_and(|c| (c - mean).abs() <= CONFIDENCE_TOLERANCE);
            if !ok {
                violations.push(Violation::ConfidenceMismatch {
                    node: key,
                    confidence: node.confidence,
                    mean,
                });
            }
        }
    }

    InvariantReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeType, ReasoningNode};

    fn node(n: u64) -> ReasoningNode {
        ReasoningNode {
            id: NodeId::new(n),
            text: format!("step {n}"),
            confidence: None,
            state: NodeState::Valid,
            node_type: NodeType::Inference,
            origin: Origin::Model,
            token_logprobs: None,
        }
    }

    fn v(n: u64) -> NodeId {
        NodeId::new(n)
    }

    #[test]
    fn dangling_edge_reported() {
        let g = ReasoningGraph::from_parts(
            vec![node(1), node(2)],
            [(v(1), v(2)), (v(2), v(3))],
            Some(v(1)),
            Some(v(2)),
            None,
        );
        let report = g.check_invariants();
        assert!(!report.is_ok());
        assert!(report.to_string().contains("dangling edge"));
    }

    #[test]
    fn cycle_and_multiple_parents_reported() {
        let g = ReasoningGraph::from_parts(
            vec![node(1), node(2), node(3)],
            [(v(1), v(2)), (v(2), v(3)), (v(3), v(2))],
            Some(v(1)),
            None,
            None,
        );
        let report = g.check_invariants();
        assert!(report.violations.contains(&Violation::Cycle));
        assert!(report.violations.contains(&Violation::MultipleParents(v(2))));
    }

    #[test]
    fn frontier_and_root_checks() {
        let mut flagged = node(2);
        flagged.state = NodeState::Flagged;
        let g = ReasoningGraph::from_parts(vec![node(1), flagged], [(v(1), v(2))], None, Some(v(2)), None);
        let report = g.check_invariants();
        assert!(report.violations.contains(&Violation::RootAbsent));
        assert!(report.violations.contains(&Violation::Orphan(v(1))));
        assert!(report.violations.contains(&Violation::FrontierFlagged(v(2))));
    }

    #[test]
    fn confidence_must_match_tokens() {
        let mut n = node(1);
        n.token_logprobs = Some(vec![-0.5, -1.5]);
        n.confidence = Some(-1.0);
        let ok = ReasoningGraph::from_parts(vec![n.clone()], [], Some(v(1)), Some(v(1)), None);
        assert!(ok.check_invariants().is_ok());
        n.confidence = Some(-0.9);
        let bad = ReasoningGraph::from_parts(vec![n], [], Some(v(1)), Some(v(1)), None);
        assert!(matches!(
            bad.check_invariants().violations[..],
            [Violation::ConfidenceMismatch { .. }]
        ));
    }
}

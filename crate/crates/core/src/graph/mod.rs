//! Rooted single-parent reasoning graph and the flag / prune / graft
//! interventions.
//!
//! Every node except the root has exactly one parent, so the path from the
//! root to any node is unique. Mutating methods validate their arguments
//! before touching any state: an `Err` leaves the graph exactly as it was.

mod dot;
mod invariants;
pub mod json;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::answer;
use crate::parser::{classify_step, StepSeed};

pub use invariants::{InvariantReport, Violation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("node {0} not found")]
    NodeNotFound(NodeId),
    #[error("node {0} is flagged and cannot be a graft parent")]
    InvalidParent(NodeId),
    #[error("node {0} is flagged")]
    FlaggedTarget(NodeId),
    #[error("step text is empty")]
    EmptyText,
    #[error("chain has no steps")]
    EmptyChain,
    #[error("graph already has a root")]
    NotEmpty,
    #[error("no answer can be extracted")]
    NoAnswer,
}

/// Node identifier. Assigned from a per-graph counter and never reused,
/// even after the node is pruned.
///
/// Serializes as a bare integer; deserializes from an integer, `"8"` or `"v8"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u64);

impl NodeId {
    pub const fn new(raw: u64) -> Self {
        Self(raw)
    }

    pub const fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid node id {0:?}")]
pub struct ParseNodeIdError(String);

impl FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t.strip_prefix('v').or_else(|| t.strip_prefix('V')).unwrap_or(t);
        digits
            .parse::<u64>()
            .map(NodeId)
            .map_err(|_| ParseNodeIdError(s.to_string()))
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u64(self.0)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(n) => Ok(NodeId(n)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeState {
    Valid,
    Flagged,
    UserProvided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeType {
    Premise,
    Inference,
    Conclusion,
}

impl NodeType {
    pub fn short(self) -> char {
        match self {
            NodeType::Premise => 'P',
            NodeType::Inference => 'I',
            NodeType::Conclusion => 'C',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Origin {
    Model,
    User,
}

/// One reasoning step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningNode {
    pub id: NodeId,
    pub text: String,
    /// Mean token log-probability; absent for user text or when the backend
    /// returned no log-probabilities.
    pub confidence: Option<f64>,
    pub state: NodeState,
    pub node_type: NodeType,
    pub origin: Origin,
    pub token_logprobs: Option<Vec<f64>>,
}

/// A user edit to the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Intervention {
    Flag { node: NodeId },
    Prune { node: NodeId },
    Graft { parent: NodeId, text: String },
}

/// What an intervention did, for callers that need more than the new graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    Flagged,
    Pruned(BTreeSet<NodeId>),
    Grafted(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningGraph {
    nodes: BTreeMap<NodeId, ReasoningNode>,
    edges: BTreeSet<(NodeId, NodeId)>,
    /// child -> parent, derived from `edges`
    parents: BTreeMap<NodeId, NodeId>,
    root: Option<NodeId>,
    frontier: Option<NodeId>,
    next_id: u64,
}

impl Default for ReasoningGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl ReasoningGraph {
    pub fn new() -> Self {
        Self {
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            parents: BTreeMap::new(),
            root: None,
            frontier: None,
            next_id: 1,
        }
    }

    /// Builds the linear chain v1 -> v2 -> ... -> vn from parsed steps.
    pub fn build_linear(steps: &[StepSeed]) -> Result<Self, GraphError> {
        let mut graph = Self::new();
        graph.start_chain(steps)?;
        Ok(graph)
    }

    /// Assembles a graph from raw parts without checking anything. Used for
    /// deserialization and for constructing counterexamples; run
    /// [`check_invariants`](Self::check_invariants) on the result.
    pub fn from_parts(
        nodes: Vec<ReasoningNode>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        root: Option<NodeId>,
        frontier: Option<NodeId>,
        next_id: Option<u64>,
    ) -> Self {
        let max_id = nodes.iter().map(|n| n.id.0).max().unwrap_or(0);
        let edges: BTreeSet<_> = edges.into_iter().collect();
        let parents = edges.iter().map(|&(p, c)| (c, p)).collect();
        Self {
            nodes: nodes.into_iter().map(|n| (n.id, n)).collect(),
            edges,
            parents,
            root,
            frontier,
            next_id: next_id.unwrap_or(0).max(max_id + 1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn frontier(&self) -> Option<NodeId> {
        self.frontier
    }

    /// The id the next created node will receive.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn node(&self, id: NodeId) -> Option<&ReasoningNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ReasoningNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents.get(&id).copied()
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges
            .range((id, NodeId(0))..=(id, NodeId(u64::MAX)))
            .map(|&(_, c)| c)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    fn require(&self, id: NodeId) -> Result<&ReasoningNode, GraphError> {
        self.nodes.get(&id).ok_or(GraphError::NodeNotFound(id))
    }

    fn is_flagged(&self, id: NodeId) -> bool {
        self.nodes
            .get(&id)
            .is_some_and(|n| n.state == NodeState::Flagged)
    }

    /// Walks from `start` towards the root and returns the first node that
    /// is not flagged.
    fn nearest_unflagged(&self, start: Option<NodeId>) -> Option<NodeId> {
        let mut cur = start;
        while let Some(id) = cur {
            if !self.is_flagged(id) {
                return Some(id);
            }
            cur = self.parent(id);
        }
        None
    }

    fn alloc_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn model_node(&mut self, seed: &StepSeed) -> ReasoningNode {
        ReasoningNode {
            id: self.alloc_id(),
            text: seed.text.trim().to_string(),
            confidence: seed.confidence,
            state: NodeState::Valid,
            node_type: seed.node_type,
            origin: Origin::Model,
            token_logprobs: seed
                .token_logprobs
                .as_ref()
                .map(|t| t.iter().map(|t| t.logprob).collect()),
        }
    }

    fn check_seeds(steps: &[StepSeed]) -> Result<(), GraphError> {
        if steps.is_empty() {
            return Err(GraphError::EmptyChain);
        }
        if steps.iter().any(|s| s.text.trim().is_empty()) {
            return Err(GraphError::EmptyText);
        }
        Ok(())
    }

    fn push_chain(&mut self, mut prev: Option<NodeId>, steps: &[StepSeed]) -> Vec<NodeId> {
        let mut added = Vec::with_capacity(steps.len());
        for seed in steps {
            let node = self.model_node(seed);
            let id = node.id;
            self.nodes.insert(id, node);
            match prev {
                Some(p) => {
                    self.edges.insert((p, id));
                    self.parents.insert(id, p);
                }
                None => self.root = Some(id),
            }
            prev = Some(id);
            added.push(id);
        }
        self.frontier = prev;
        added
    }

    /// Seeds an empty graph with a linear chain. Unlike
    /// [`build_linear`](Self::build_linear) this keeps the id counter, so a
    /// graph emptied by pruning its root never hands out an old id again.
    pub fn start_chain(&mut self, steps: &[StepSeed]) -> Result<Vec<NodeId>, GraphError> {
        if !self.is_empty() {
            return Err(GraphError::NotEmpty);
        }
        Self::check_seeds(steps)?;
        Ok(self.push_chain(None, steps))
    }

    /// Marks a node FLAGGED. Idempotent. If the node was the frontier, the
    /// frontier moves to its nearest unflagged ancestor.
    pub fn flag(&mut self, id: NodeId) -> Result<(), GraphError> {
        self.require(id)?;
        if let Some(node) = self.nodes.get_mut(&id) {
            node.state = NodeState::Flagged;
        }
        if self.frontier == Some(id) {
            self.frontier = self.nearest_unflagged(self.parent(id));
        }
        Ok(())
    }

    /// `id` together with everything reachable from it.
    pub fn reachable_set(&self, id: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        self.require(id)?;
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            if seen.insert(cur) {
                stack.extend(self.children(cur));
            }
        }
        Ok(seen)
    }

    /// Removes `id` and its whole subtree. The frontier moves to the parent
    /// of `id` (or its nearest unflagged ancestor); pruning the root empties
    /// the graph.
    pub fn prune(&mut self, id: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        let removed = self.reachable_set(id)?;
        let parent = self.parent(id);
        for r in &removed {
            self.nodes.remove(r);
            self.parents.remove(r);
        }
        self.edges
            .retain(|(p, c)| !removed.contains(p) && !removed.contains(c));
        if self.root.is_some_and(|r| removed.contains(&r)) {
            self.root = None;
        }
        self.frontier = self.nearest_unflagged(parent);
        Ok(removed)
    }

    /// Attaches user-written text as a new child of `parent`, classified
    /// with the default keyword table.
    pub fn graft(&mut self, parent: NodeId, text: &str) -> Result<NodeId, GraphError> {
        let node_type = classify_step(text);
        self.graft_as(parent, text, node_type)
    }

    /// [`graft`](Self::graft) with an explicit node type.
    pub fn graft_as(
        &mut self,
        parent: NodeId,
        text: &str,
        node_type: NodeType,
    ) -> Result<NodeId, GraphError> {
        if self.require(parent)?.state == NodeState::Flagged {
            return Err(GraphError::InvalidParent(parent));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(GraphError::EmptyText);
        }
        let id = self.alloc_id();
        self.nodes.insert(
            id,
            ReasoningNode {
                id,
                text: text.to_string(),
                confidence: None,
                state: NodeState::UserProvided,
                node_type,
                origin: Origin::User,
                token_logprobs: None,
            },
        );
        self.edges.insert((parent, id));
        self.parents.insert(id, parent);
        self.frontier = Some(id);
        Ok(id)
    }

    pub fn apply(&mut self, intervention: &Intervention) -> Result<Applied, GraphError> {
        match intervention {
            Intervention::Flag { node } => self.flag(*node).map(|_| Applied::Flagged),
            Intervention::Prune { node } => self.prune(*node).map(Applied::Pruned),
            Intervention::Graft { parent, text } => self.graft(*parent, text).map(Applied::Grafted),
        }
    }

    /// Root-to-`target` path in root-first order, including flagged nodes.
    pub fn path_to(&self, target: NodeId) -> Result<Vec<&ReasoningNode>, GraphError> {
        self.require(target)?;
        let mut path = Vec::new();
        let mut cur = Some(target);
        while let Some(id) = cur {
            match self.nodes.get(&id) {
                Some(node) => path.push(node),
                None => break,
            }
            // a malformed graph could loop; a path never exceeds |V|
            if path.len() > self.nodes.len() {
                break;
            }
            cur = self.parent(id);
        }
        path.reverse();
        Ok(path)
    }

    /// The root-to-`target` path with FLAGGED nodes dropped.
    pub fn validated_path(&self, target: NodeId) -> Result<Vec<&ReasoningNode>, GraphError> {
        if self.require(target)?.state == NodeState::Flagged {
            return Err(GraphError::FlaggedTarget(target));
        }
        let mut path = self.path_to(target)?;
        path.retain(|n| n.state != NodeState::Flagged);
        Ok(path)
    }

    /// Hangs `steps` off `frontier` as a linear chain; the last step becomes
    /// the new frontier.
    pub fn append_chain(
        &mut self,
        frontier: NodeId,
        steps: &[StepSeed],
    ) -> Result<Vec<NodeId>, GraphError> {
        if self.require(frontier)?.state == NodeState::Flagged {
            return Err(GraphError::FlaggedTarget(frontier));
        }
        Self::check_seeds(steps)?;
        Ok(self.push_chain(Some(frontier), steps))
    }

    /// Answer text from the validated path ending at the frontier: the
    /// deepest CONCLUSION step, else the last step. When the step contains
    /// a number the last number is returned.
    pub fn extract_final_answer(&self) -> Result<String, GraphError> {
        let frontier = self.frontier.ok_or(GraphError::NoAnswer)?;
        let path = self
            .validated_path(frontier)
            .map_err(|_| GraphError::NoAnswer)?;
        let step = path
            .iter()
            .rev()
            .find(|n| n.node_type == NodeType::Conclusion)
            .or_else(|| path.last())
            .ok_or(GraphError::NoAnswer)?;
        answer::extract(&step.text).ok_or(GraphError::NoAnswer)
    }

    pub fn check_invariants(&self) -> InvariantReport {
        invariants::check(self)
    }

    pub fn to_dot(&self) -> String {
        dot::render(self)
    }
}

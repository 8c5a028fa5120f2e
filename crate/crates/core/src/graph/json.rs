//! Versioned JSON form of a reasoning graph.
//!
//! ```json
//! {"schema_version":1,"root":1,"frontier":7,"next_id":10,
//!  "nodes":[{"id":1,"text":"...","confidence":null,"state":"VALID",
//!            "node_type":"PREMISE","origin":"MODEL"}],
//!  "edges":[[1,2]]}
//! ```
//!
//! Nodes are ordered by id and edges lexicographically, so serialization is
//! byte-stable. Token log-probabilities are not part of the document.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{NodeId, NodeState, NodeType, Origin, ReasoningGraph, ReasoningNode};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub id: NodeId,
    pub text: String,
    pub confidence: Option<f64>,
    pub state: NodeState,
    pub node_type: NodeType,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub schema_version: u32,
    pub root: Option<NodeId>,
    pub frontier: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_id: Option<u64>,
    pub nodes: Vec<NodeDocument>,
    pub edges: Vec<[NodeId; 2]>,
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("unsupported schema_version {0}")]
    Version(u32),
    #[error("invalid graph document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("graph document fails validation: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

impl From<&ReasoningGraph> for GraphDocument {
    fn from(graph: &ReasoningGraph) -> Self {
        GraphDocument {
            schema_version: SCHEMA_VERSION,
            root: graph.root(),
            frontier: graph.frontier(),
            next_id: Some(graph.next_id()),
            nodes: graph
                .nodes()
                .map(|n| NodeDocument {
                    id: n.id,
                    text: n.text.clone(),
                    confidence: n.confidence,
                    state: n.state,
                    node_type: n.node_type,
                    origin: n.origin,
                })
                .collect(),
            edges: graph.edges().map(|(p, c)| [p, c]).collect(),
        }
    }
}

impl GraphDocument {
    pub fn into_graph(self) -> Result<ReasoningGraph, SchemaError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SchemaError::Version(self.schema_version));
        }
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| ReasoningNode {
                id: n.id,
                text: n.text,
                confidence: n.confidence,
                state: n.state,
                node_type: n.node_type,
                origin: n.origin,
                token_logprobs: None,
            })
            .collect();
        Ok(ReasoningGraph::from_parts(
            nodes,
            self.edges.into_iter().map(|[p, c]| (p, c)),
            self.root,
            self.frontier,
            self.next_id,
        ))
    }
}

impl ReasoningGraph {
    pub fn to_document(&self) -> GraphDocument {
        GraphDocument::from(self)
    }

    /// Pretty-printed document with a trailing newline; the on-disk
    /// `graph.json` format.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document())
            .expect("graph document always serializes");
        s.push('\n');
        s
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self.to_document()).expect("graph document always serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self, SchemaError> {
        serde_json::from_str::<GraphDocument>(s)?.into_graph()
    }
}

/// Structural schema check of an untyped JSON value, as a client would see
/// it. Does not check graph invariants.
pub fn validate(value: &Value) -> Result<(), SchemaError> {
    let mut errs = Vec::new();
    let Some(obj) = value.as_object() else {
        return Err(SchemaError::Invalid(vec!["not an object".into()]));
    };
    if obj.get("schema_version").and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
        errs.push("schema_version must be 1".to_string());
    }
    for key in ["root", "frontier"] {
        match obj.get(key) {
            Some(v) if v.is_null() || v.is_u64() => {}
            _ => errs.push(format!("{key} must be an id or null")),
        }
    }
    match obj.get("nodes").and_then(Value::as_array) {
        None => errs.push("nodes must be an array".into()),
        Some(nodes) => {
            for (i, n) in nodes.iter().enumerate() {
                let field = |k: &str| n.get(k);
                let is_one_of = |k: &str, opts: &[&str]| {
                    field(k).and_then(Value::as_str).is_some_and(|s| opts.contains(&s))
                };
                if !field("id").is_some_and(Value::is_u64) {
                    errs.push(format!("nodes[{i}].id must be an integer"));
                }
                if !field("text").is_some_and(Value::is_string) {
                    errs.push(format!("nodes[{i}].text must be a string"));
                }
                if !field("confidence").is_some_and(|c| c.is_null() || c.is_number()) {
                    errs.push(format!("nodes[{i}].confidence must be a number or null"));
                }
                if !is_one_of("state", &["VALID", "FLAGGED", "USER_PROVIDED"]) {
                    errs.push(format!("nodes[{i}].state invalid"));
                }
                if !is_one_of("node_type", &["PREMISE", "INFERENCE", "CONCLUSION"]) {
                    errs.push(format!("nodes[{i}].node_type invalid"));
                }
                if !is_one_of("origin", &["MODEL", "USER"]) {
                    errs.push(format!("nodes[{i}].origin invalid"));
                }
            }
        }
    }
    match obj.get("edges").and_then(Value::as_array) {
        None => errs.push("edges must be an array".into()),
        Some(edges) => {
            for (i, e) in edges.iter().enumerate() {
                let pair = e
                    .as_array()
                    .is_some_and(|a| a.len() == 2 && a.iter().all(Value::is_u64));
                if !pair {
                    errs.push(format!("edges[{i}] must be [parent, child]"));
                }
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(SchemaError::Invalid(errs))
    }
}

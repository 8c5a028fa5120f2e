//! Prompt construction for the first generation and for continuations
//! after the user has edited the graph.
//!
//! Templates are plain text with `{query}`, `{steps}` and `{new_step}`
//! placeholders, substituted in a single pass so that braces inside the
//! query or step texts are never re-expanded.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::{GraphError, NodeId, NodeState, ReasoningGraph};

const SYSTEM: &str = include_str!("../templates/system.v1.txt");
const INITIAL: &str = include_str!("../templates/initial.v1.txt");
const FEEDBACK: &str = include_str!("../templates/feedback.v1.txt");
const ZERO_SHOT: &str = include_str!("../templates/zero_shot.v1.txt");

/// Suffix that marks a user-written step in the rendered step list.
pub const USER_STEP_SUFFIX: &str = " (added by the reviewer)";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("graph has steps but no frontier to continue from")]
    NoFrontier,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A backend-neutral prompt: a system turn plus the rendered user turn,
/// along with the parts the user turn was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub system: String,
    pub query: String,
    pub valid_texts: Vec<String>,
    pub new_step: Option<String>,
    pub rendered: String,
}

impl PromptContext {
    /// Hex SHA-256 of the serialized `{system, user}` pair. Fixtures are
    /// keyed by this, so it does not depend on any backend's wire format.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Neutral<'a> {
            system: &'a str,
            user: &'a str,
        }
        let bytes = serde_json::to_vec(&Neutral { system: &self.system, user: &self.rendered })
            .expect("strings always serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub system: String,
    pub initial: String,
    pub feedback: String,
    pub zero_shot: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            system: SYSTEM.to_string(),
            initial: INITIAL.to_string(),
            feedback: FEEDBACK.to_string(),
            zero_shot: ZERO_SHOT.to_string(),
        }
    }
}

impl Templates {
    /// Loads `system.v1.txt`, `initial.v1.txt`, `feedback.v1.txt` and
    /// `zero_shot.v1.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Ok(Self {
            system: read("system.v1.txt")?,
            initial: read("initial.v1.txt")?,
            feedback: read("feedback.v1.txt")?,
            zero_shot: read("zero_shot.v1.txt")?,
        })
    }
}

fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (*v, close))
        });
        match hit {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn numbered(texts: &[String]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Default)]
pub struct PromptBuilder {
    templates: Templates,
}

impl PromptBuilder {
    pub fn new(templates: Templates) -> Self {
        Self { templates }
    }

    fn checked_query(query: &str) -> Result<&str, PromptError> {
        let q = query.trim();
        if q.is_empty() {
            Err(PromptError::EmptyQuery)
        } else {
            Ok(q)
        }
    }

    pub fn initial(&self, query: &str) -> Result<PromptContext, PromptError> {
        let query = Self::checked_query(query)?;
        Ok(PromptContext {
            system: self.templates.system.clone(),
            query: query.to_string(),
            valid_texts: Vec::new(),
            new_step: None,
            rendered: fill(&self.templates.initial, &[("query", query)]),
        })
    }

    /// Answer-only prompt used by the zero-shot baseline.
    pub fn zero_shot(&self, query: &str) -> Result<PromptContext, PromptError> {
        let query = Self::checked_query(query)?;
        Ok(PromptContext {
            system: self.templates.system.clone(),
            query: query.to_string(),
            valid_texts: Vec::new(),
            new_step: None,
            rendered: fill(&self.templates.zero_shot, &[("query", query)]),
        })
    }

    /// Continuation prompt built from the validated path to `frontier`.
    ///
    /// A user-provided frontier is rendered as the last step, after the
    /// validated path to its parent. With no frontier and an empty graph
    /// the initial prompt is returned.
    pub fn feedback(
        &self,
        graph: &ReasoningGraph,
        frontier: Option<NodeId>,
        query: &str,
    ) -> Result<PromptContext, PromptError> {
        let query = Self::checked_query(query)?;
        let Some(frontier) = frontier else {
            return if graph.is_empty() {
                self.initial(query)
            } else {
                Err(PromptError::NoFrontier)
            };
        };
        let node = graph.node(frontier).ok_or(GraphError::NodeNotFound(frontier))?;
        let (valid_texts, new_step) = match node.state {
            NodeState::Flagged => return Err(GraphError::FlaggedTarget(frontier).into()),
            NodeState::UserProvided => {
                let path = graph.validated_path(frontier)?;
                let before = &path[..path.len() - 1];
                (
                    before.iter().map(|n| n.text.clone()).collect::<Vec<_>>(),
                    Some(node.text.clone()),
                )
            }
            NodeState::Valid => (
                graph
                    .validated_path(frontier)?
                    .iter()
                    .map(|n| n.text.clone())
                    .collect(),
                None,
            ),
        };

        let steps = numbered(&valid_texts);
        let new_line = match &new_step {
            Some(text) => {
                let sep = if steps.is_empty() { "" } else { "\n" };
                format!("{sep}{}. {text}{USER_STEP_SUFFIX}", valid_texts.len() + 1)
            }
            None => String::new(),
        };
        let rendered = fill(
            &self.templates.feedback,
            &[("query", query), ("steps", &steps), ("new_step", &new_line)],
        );
        Ok(PromptContext {
            system: self.templates.system.clone(),
            query: query.to_string(),
            valid_texts,
            new_step,
            rendered,
        })
    }
}

pub fn format_initial_prompt(query: &str) -> Result<PromptContext, PromptError> {
    PromptBuilder::default().initial(query)
}

pub fn format_feedback_prompt(
    graph: &ReasoningGraph,
    frontier: Option<NodeId>,
    query: &str,
) -> Result<PromptContext, PromptError> {
    PromptBuilder::default().feedback(graph, frontier, query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FARMER_QUERY, FARMER_TRACE};
    use crate::parser::{parse_cot, StepSeed};

    fn id(n: u64) -> NodeId {
        NodeId::new(n)
    }

    fn chain(texts: &[&str]) -> ReasoningGraph {
        let seeds: Vec<_> = texts.iter().map(|t| StepSeed::new(*t)).collect();
        ReasoningGraph::build_linear(&seeds).unwrap()
    }

    #[test]
    fn initial_prompt() {
        let p = format_initial_prompt(FARMER_QUERY).unwrap();
        assert!(p.rendered.contains(FARMER_QUERY));
        assert!(p.rendered.contains("numbered"));
        assert_eq!(p, format_initial_prompt(FARMER_QUERY).unwrap());
        assert_eq!(p.hash(), format_initial_prompt(FARMER_QUERY).unwrap().hash());
        assert!(matches!(format_initial_prompt("  "), Err(PromptError::EmptyQuery)));
    }

    #[test]
    fn feedback_skips_flagged() {
        let mut g = chain(&["s1", "s2", "s3", "s4"]);
        g.flag(id(2)).unwrap();
        let p = format_feedback_prompt(&g, g.frontier(), "q?").unwrap();
        assert_eq!(p.valid_texts, ["s1", "s3", "s4"]);
        assert_eq!(p.new_step, None);
        assert!(!p.rendered.contains("s2"));
        assert!(p.rendered.contains("1. s1\n2. s3\n3. s4\n"));
        assert!(p.rendered.trim_end().ends_with("follow on from the last step above."));
    }

    #[test]
    fn feedback_after_graft() {
        let mut g = ReasoningGraph::build_linear(&parse_cot(FARMER_TRACE, None).unwrap()).unwrap();
        g.prune(id(8)).unwrap();
        let text = "Only the animals' legs are counted.";
        let new = g.graft(id(7), text).unwrap();
        let p = format_feedback_prompt(&g, Some(new), FARMER_QUERY).unwrap();
        assert_eq!(p.valid_texts.len(), 7);
        assert_eq!(p.valid_texts[6], "The total number of legs is 36 + 62 = 98 legs.");
        assert_eq!(p.new_step.as_deref(), Some(text));
        assert!(p.rendered.contains(&format!("8. {text}{USER_STEP_SUFFIX}")));
    }

    #[test]
    fn feedback_degenerate_cases() {
        let mut g = chain(&["a", "b"]);
        g.prune(id(1)).unwrap();
        let p = format_feedback_prompt(&g, None, "q?").unwrap();
        assert_eq!(p, format_initial_prompt("q?").unwrap());

        let mut g = chain(&["a"]);
        g.flag(id(1)).unwrap();
        assert!(matches!(format_feedback_prompt(&g, None, "q?"), Err(PromptError::NoFrontier)));
        assert!(matches!(
            format_feedback_prompt(&g, Some(id(1)), "q?"),
            Err(PromptError::Graph(GraphError::FlaggedTarget(_)))
        ));
        assert!(matches!(
            format_feedback_prompt(&g, Some(id(9)), "q?"),
            Err(PromptError::Graph(GraphError::NodeNotFound(_)))
        ));
    }

    #[test]
    fn placeholders_are_not_re_expanded() {
        let p = format_initial_prompt("what is {steps} and {query}?").unwrap();
        assert!(p.rendered.contains("Question: what is {steps} and {query}?"));
        assert_eq!(fill("{a}{b}{", &[("a", "{b}"), ("b", "x")]), "{b}x{");
    }

    #[test]
    fn new_step_is_distinguishable_from_valid_step() {
        let with_graft = {
            let mut g = chain(&["a"]);
            let n = g.graft(id(1), "b").unwrap();
            format_feedback_prompt(&g, Some(n), "q").unwrap()
        };
        let plain = format_feedback_prompt(&chain(&["a", "b"]), Some(id(2)), "q").unwrap();
        assert_ne!(plain.rendered, with_graft.rendered);
        assert_ne!(plain.hash(), with_graft.hash());
    }
}

//! Interactive chain-of-thought reasoning: parse a model's step-by-step
//! output into a reasoning graph, let a user flag, prune and graft steps,
//! and rebuild the prompt from the surviving path for the next generation.

pub mod answer;
pub mod corpus;
pub mod eval;
pub mod graph;
pub mod llm;
pub mod parser;
pub mod prompt;
pub mod session;

pub use graph::{
    Applied, GraphError, Intervention, NodeId, NodeState, NodeType, Origin, ReasoningGraph,
    ReasoningNode,
};
pub use parser::{parse_cot, CotParser, ParseError, StepSeed, TokenLogprob};
pub use llm::{Backend, BackendError, GenerationRequest, GenerationResult};
pub use prompt::{PromptBuilder, PromptContext, PromptError};
pub use session::{Engine, Session, SessionError, SessionEvent, SessionStatus};

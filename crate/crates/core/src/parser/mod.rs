//! Splitting raw chain-of-thought text into typed steps.
//!
//! Delimiters are tried in order:
//!
//! 1. step markers at the start of a line: `1.`, `1)`, `Step 1:`;
//! 2. blank-line separated paragraphs (only when there are at least two);
//! 3. the whole text as a single step.
//!
//! When token log-probabilities are supplied, each token is assigned to the
//! step whose region contains the token's first byte and the step's
//! confidence is the mean of its tokens' log-probabilities.

mod classify;

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::graph::NodeType;

pub use classify::{classify_step, KeywordTable, KeywordTableError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("chain-of-thought text is empty")]
    EmptyInput,
    #[error("no tokens to average")]
    EmptyTokens,
    #[error("tokens do not reconstruct the generated text")]
    TokenTextMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

impl TokenLogprob {
    pub fn new(token: impl Into<String>, logprob: f64) -> Self {
        Self { token: token.into(), logprob }
    }
}

/// A parsed step, ready to become a graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSeed {
    pub text: String,
    pub node_type: NodeType,
    pub confidence: Option<f64>,
    pub token_logprobs: Option<Vec<TokenLogprob>>,
}

impl StepSeed {
    /// A seed without log-probabilities, typed with the built-in table.
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            node_type: classify_step(&text),
            text,
            confidence: None,
            token_logprobs: None,
        }
    }
}

/// A step located in the raw text. `region` covers the step and the
/// whitespace around it, up to the next delimiter; `text` is its trimmed
/// content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSpan {
    pub text: String,
    pub region: Range<usize>,
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?mi)^[ \t]*(step[ \t]+\d+[ \t]*[:.)]|\d+[.)])(?:[ \t]+|$)")
            .expect("static regex")
    })
}

fn blank_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t\r]*\n\s*").expect("static regex"))
}

fn push_span(out: &mut Vec<StepSpan>, raw: &str, region: Range<usize>) {
    let text = raw[region.clone()].trim();
    if !text.is_empty() {
        out.push(StepSpan { text: text.to_string(), region });
    }
}

/// Locates the steps in `raw` without typing them.
pub fn split_steps(raw: &str) -> Vec<StepSpan> {
    let mut out = Vec::new();

    // (start of the whole match, end of the marker itself); whitespace after
    // the marker belongs to the step region so a leading-space token counts
    let markers: Vec<(usize, usize)> = marker_regex()
        .captures_iter(raw)
        .map(|c| (c.get(0).map_or(0, |m| m.start()), c.get(1).map_or(0, |m| m.end())))
        .collect();
    if !markers.is_empty() {
        // text before the first marker is kept as its own step
        push_span(&mut out, raw, 0..markers[0].0);
        for (i, &(_, body_start)) in markers.iter().enumerate() {
            let end = markers.get(i + 1).map_or(raw.len(), |n| n.0);
            push_span(&mut out, raw, body_start..end);
        }
        return out;
    }

    let mut start = 0;
    for sep in blank_line_regex().find_iter(raw) {
        push_span(&mut out, raw, start..sep.start());
        start = sep.end();
    }
    push_span(&mut out, raw, start..raw.len());
    if out.len() >= 2 {
        return out;
    }

    out.clear();
    push_span(&mut out, raw, 0..raw.len());
    out
}

/// Arithmetic mean of the tokens' log-probabilities.
pub fn compute_confidence(tokens: &[TokenLogprob]) -> Result<f64, ParseError> {
    if tokens.is_empty() {
        return Err(ParseError::EmptyTokens);
    }
    // Mean of deviations from the first value, summed with Neumaier
    // compensation. A constant sequence returns its value exactly.
    let pivot = tokens[0].logprob;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in tokens {
        let x = t.logprob - pivot;
        let s = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - s) + x;
        } else {
            comp += (x - s) + sum;
        }
        sum = s;
    }
    Ok(pivot + (sum + comp) / tokens.len() as f64)
}

/// Splits `tokens` into per-span slices by each token's starting byte
/// offset in `raw`. Tokens starting outside every span are dropped.
pub fn align_logprobs(
    raw: &str,
    tokens: &[TokenLogprob],
    spans: &[Range<usize>],
) -> Result<Vec<Vec<TokenLogprob>>, ParseError> {
    let total: usize = tokens.iter().map(|t| t.token.len()).sum();
    if total != raw.len() {
        return Err(ParseError::TokenTextMismatch);
    }
    let mut slices = vec![Vec::new(); spans.len()];
    let mut offset = 0;
    let mut span_idx = 0;
    for token in tokens {
        if !raw[offset..].starts_with(token.token.as_str()) {
            return Err(ParseError::TokenTextMismatch);
        }
        while span_idx < spans.len() && spans[span_idx].end <= offset {
            span_idx += 1;
        }
        if let Some(span) = spans.get(span_idx) {
            if span.contains(&offset) {
                slices[span_idx].push(token.clone());
            }
        }
        offset += token.token.len();
    }
    Ok(slices)
}

/// Parser bound to a keyword table.
#[derive(Debug, Clone, Default)]
pub struct CotParser {
    table: KeywordTable,
}

impl CotParser {
    pub fn new(table: KeywordTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &KeywordTable {
        &self.table
    }

    pub fn parse(
        &self,
        raw: &str,
        logprobs: Option<&[TokenLogprob]>,
    ) -> Result<Vec<StepSeed>, ParseError> {
        if raw.trim().is_empty() {
            return Err(ParseError::EmptyInput);
        }
        let spans = split_steps(raw);
        let slices = match logprobs {
            Some(tokens) => {
                let regions: Vec<_> = spans.iter().map(|s| s.region.clone()).collect();
                Some(align_logprobs(raw, tokens, &regions)?)
            }
            None => None,
        };
        let mut seeds = Vec::with_capacity(spans.len());
        for (i, span) in spans.into_iter().enumerate() {
            let tokens = slices
                .as_ref()
                .map(|s| s[i].clone())
                .filter(|t| !t.is_empty());
            let confidence = tokens.as_deref().map(compute_confidence).transpose()?;
            seeds.push(StepSeed {
                node_type: self.table.classify(&span.text),
                text: span.text,
                confidence,
                token_logprobs: tokens,
            });
        }
        Ok(seeds)
    }
}

/// Parses with the built-in keyword table.
pub fn parse_cot(raw: &str, logprobs: Option<&[TokenLogprob]>) -> Result<Vec<StepSeed>, ParseError> {
    static PARSER: OnceLock<CotParser> = OnceLock::new();
    PARSER.get_or_init(CotParser::default).parse(raw, logprobs)
}

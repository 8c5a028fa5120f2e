use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::graph::NodeType;

const DEFAULT_TABLE: &str = include_str!("../../data/keywords.txt");

#[derive(Debug, thiserror::Error)]
pub enum KeywordTableError {
    #[error("reading keyword table: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: cue outside of a [conclusion] or [premise] section")]
    NoSection { line: usize },
    #[error("line {line}: unknown section {name:?}")]
    UnknownSection { line: usize, name: String },
}

/// Cue phrases for typing steps, loaded from a sectioned text file.
#[derive(Debug, Clone)]
pub struct KeywordTable {
    conclusion: Vec<Regex>,
    premise: Vec<Regex>,
    arithmetic: Regex,
}

fn cue_regex(cue: &str) -> Regex {
    let words: Vec<String> = cue
        .split_whitespace()
        .map(|w| {
            if w == "N" {
                r"\d+(?:[.,]\d+)*".to_string()
            } else {
                regex::escape(w)
            }
        })
        .collect();
    Regex::new(&format!(r"(?i)\b{}\b", words.join(r"\s+"))).expect("escaped cue is a valid regex")
}

impl KeywordTable {
    pub fn parse(source: &str) -> Result<Self, KeywordTableError> {
        enum Section {
            Conclusion,
            Premise,
        }
        let mut section = None;
        let mut conclusion = Vec::new();
        let mut premise = Vec::new();
        for (i, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "conclusion" => Section::Conclusion,
                    "premise" => Section::Premise,
                    other => {
                        return Err(KeywordTableError::UnknownSection {
                            line: i + 1,
                            name: other.to_string(),
                        })
                    }
                });
                continue;
            }
            match section {
                Some(Section::Conclusion) => conclusion.push(cue_regex(line)),
                Some(Section::Premise) => premise.push(cue_regex(line)),
                None => return Err(KeywordTableError::NoSection { line: i + 1 }),
            }
        }
        Ok(Self {
            conclusion,
            premise,
            arithmetic: Regex::new(r"=|\d\s*[-+*/×÷]\s*\d").expect("static regex"),
        })
    }

    pub fn load(path: &Path) -> Result<Self, KeywordTableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The table shipped in `data/keywords.txt`.
    pub fn builtin() -> &'static KeywordTable {
        static TABLE: OnceLock<KeywordTable> = OnceLock::new();
        TABLE.get_or_init(|| KeywordTable::parse(DEFAULT_TABLE).expect("built-in keyword table parses"))
    }

    pub fn classify(&self, text: &str) -> NodeType {
        if self.conclusion.iter().any(|r| r.is_match(text)) {
            NodeType::Conclusion
        } else if self.premise.iter().any(|r| r.is_match(text)) && !self.arithmetic.is_match(text) {
            NodeType::Premise
        } else {
            NodeType::Inference
        }
    }
}

impl Default for KeywordTable {
    fn default() -> Self {
        Self::builtin().clone()
    }
}

/// Types a step with the built-in keyword table.
pub fn classify_step(text: &str) -> NodeType {
    KeywordTable::builtin().classify(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn farmer_examples() {
        assert_eq!(
            classify_step("So the total legs on the farm are 98 + 2 = 100."),
            NodeType::Conclusion
        );
        assert_eq!(classify_step("The farmer starts with 15 cows."), NodeType::Premise);
        assert_eq!(
            classify_step("He sells 6 cows, so he has 15 - 6 = 9 cows left."),
            NodeType::Inference
        );
        assert_eq!(
            classify_step("The total number of legs is 36 + 62 = 98 legs."),
            NodeType::Inference
        );
    }

    #[test]
    fn matching_is_case_insensitive_and_word_bounded() {
        assert_eq!(classify_step("THEREFORE it rains."), NodeType::Conclusion);
        assert_eq!(classify_step("His enthusiasm was high."), NodeType::Inference);
        assert_eq!(classify_step("A farmer has 15 cows."), NodeType::Premise);
        assert_eq!(classify_step("A farmer has cows."), NodeType::Inference);
    }

    #[test]
    fn custom_table() {
        let table = KeywordTable::parse("[conclusion]\nergo\n[premise]\nassume\n").unwrap();
        assert_eq!(table.classify("Ergo, done."), NodeType::Conclusion);
        assert_eq!(table.classify("Assume x."), NodeType::Premise);
        assert_eq!(table.classify("Therefore y."), NodeType::Inference);
    }

    #[test]
    fn table_errors() {
        assert!(matches!(
            KeywordTable::parse("orphan cue"),
            Err(KeywordTableError::NoSection { line: 1 })
        ));
        assert!(matches!(
            KeywordTable::parse("[other]\n"),
            Err(KeywordTableError::UnknownSection { .. })
        ));
    }
}

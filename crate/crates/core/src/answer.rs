//! Pulling a final answer out of a step's text.

use std::sync::OnceLock;

use regex::Regex;

fn marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)(?:final answer|the answer is)\s*(?:is)?\s*[:\-]?\s*(.*)$").expect("static regex")
    })
}

fn number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d[\d,]*(?:\.\d+)?").expect("static regex"))
}

fn strip_trailing_punct(s: &str) -> &str {
    s.trim().trim_end_matches(['.', ',', '!', '?', ';', ':']).trim_end()
}

/// The last number in the text (after an explicit answer marker, if one is
/// present), with thousands separators removed. Falls back to the text
/// itself, minus trailing punctuation.
pub fn extract(text: &str) -> Option<String> {
    let tail = marker()
        .captures(text)
        .and_then(|c| c.get(1))
        .map(|m| m.as_str())
        .filter(|t| !t.trim().is_empty())
        .unwrap_or(text);
    if let Some(m) = number().find_iter(tail).last() {
        let n = m.as_str().trim_end_matches(',').replace(',', "");
        return Some(n);
    }
    let plain = strip_trailing_punct(tail);
    (!plain.is_empty()).then(|| plain.to_string())
}

/// Canonical form used for answer comparison: trimmed, lowercase, trailing
/// punctuation removed, and numbers written without separators, sign noise
/// or redundant zeros (`"1,000.50"` → `"1000.5"`).
pub fn normalize(answer: &str) -> String {
    let s = strip_trailing_punct(answer).to_lowercase();
    let numeric = s.trim_start_matches('$').replace(',', "");
    match canonical_number(&numeric) {
        Some(n) => n,
        None => s,
    }
}

fn canonical_number(s: &str) -> Option<String> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let int = int.trim_start_matches('0');
    let frac = frac.trim_end_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let mut out = String::new();
    if neg && !(int == "0" && frac.is_empty()) {
        out.push('-');
    }
    out.push_str(int);
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_number_wins() {
        assert_eq!(extract("So the total legs on the farm are 98 + 2 = 100.").as_deref(), Some("100"));
        assert_eq!(extract("The total number of legs is 36 + 62 = 98 legs.").as_deref(), Some("98"));
        assert_eq!(extract("...so he has 31 chickens.").as_deref(), Some("31"));
        assert_eq!(extract("It costs 1,250 dollars.").as_deref(), Some("1250"));
        assert_eq!(extract("Temperature fell to -3.5 degrees").as_deref(), Some("-3.5"));
    }

    #[test]
    fn answer_marker_and_text_answers() {
        assert_eq!(extract("7 steps later. Final answer: 42").as_deref(), Some("42"));
        assert_eq!(extract("So the answer is yes.").as_deref(), Some("yes"));
        assert_eq!(extract("No, it cannot.").as_deref(), Some("No, it cannot"));
        assert_eq!(extract("..."), None);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize(" 98. "), "98");
        assert_eq!(normalize("98.0"), "98");
        assert_eq!(normalize("$1,000.50"), "1000.5");
        assert_eq!(normalize("007"), "7");
        assert_eq!(normalize("-0"), "0");
        assert_eq!(normalize("Yes!"), "yes");
        assert_eq!(normalize("."), "");
    }
}

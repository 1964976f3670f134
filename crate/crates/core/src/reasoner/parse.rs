use thiserror::Error;

use super::{Answer, ReasonerResponse};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no valid answer in response: {raw:?}")]
pub struct ParseError {
    pub raw: String,
}

const ANSWER_MARKER: &str = "answer:";
const RATIONALE_MARKER: &str = "rationale:";

/// Extracts `(answer, rationale)` from a completion in the
/// `Answer: ... / Rationale: ...` format.
///
/// Tolerates markdown fences and emphasis, leading whitespace, and
/// parenthesized or bracketed indices such as `Answer: (2)`.
pub fn parse_response(
    raw: &str,
    n_choices: usize,
    allow_abstain: bool,
) -> Result<ReasonerResponse, ParseError> {
    let fail = || ParseError {
        raw: raw.to_string(),
    };

    let cleaned: String = raw
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    // ASCII lowercasing keeps byte offsets aligned with `cleaned`.
    let lower = cleaned.to_ascii_lowercase();

    let mut offset = 0;
    let mut found = None;
    for line in lower.split('\n') {
        let stripped = line.trim_start().trim_start_matches(['*', '#', '-', ' ']);
        if let Some(rest) = stripped.strip_prefix(ANSWER_MARKER) {
            let value_start = offset + (line.len() - rest.len());
            found = Some((value_start, offset + line.len()));
            break;
        }
        offset += line.len() + 1;
    }
    let (value_start, line_end) = found.ok_or_else(fail)?;
    let value = &cleaned[value_start..line_end];
    // "Answer: 2 Rationale: ..." on a single line
    let value = match value.to_ascii_lowercase().find(RATIONALE_MARKER) {
        Some(i) => &value[..i],
        None => value,
    };

    let answer = interpret_answer(value, n_choices, allow_abstain).ok_or_else(fail)?;

    let rationale = match lower.find(RATIONALE_MARKER) {
        Some(i) => cleaned[i + RATIONALE_MARKER.len()..].trim(),
        None => cleaned.get(line_end + 1..).unwrap_or("").trim(),
    };
    let rationale = rationale.trim_start_matches('*').trim().to_string();

    Ok(ReasonerResponse {
        answer,
        rationale,
        raw_text: raw.to_string(),
    })
}

fn interpret_answer(value: &str, n_choices: usize, allow_abstain: bool) -> Option<Answer> {
    let lower = value.to_ascii_lowercase();
    if lower.contains("none of the above") {
        return allow_abstain.then_some(Answer::NoneOfTheAbove);
    }
    let token = value
        .trim()
        .trim_start_matches(['*', '(', '[', '"', '\'', ' ']);
    let digits: String = token.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    (index < n_choices).then_some(Answer::Index(index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_format() {
        let r = parse_response("Answer: 2\nRationale: because water boils.", 3, false).unwrap();
        assert_eq!(r.answer, Answer::Index(2));
        assert_eq!(r.rationale, "because water boils.");
        assert_eq!(r.raw_text, "Answer: 2\nRationale: because water boils.");
    }

    #[test]
    fn none_of_the_above() {
        let raw = "Answer: none of the above\nRationale: X";
        let r = parse_response(raw, 4, true).unwrap();
        assert_eq!(r.answer, Answer::NoneOfTheAbove);
        assert_eq!(r.rationale, "X");
        assert!(parse_response(raw, 4, false).is_err());
        let quoted = parse_response("Answer: 'None of the Above'\nRationale: Y", 4, true).unwrap();
        assert_eq!(quoted.answer, Answer::NoneOfTheAbove);
    }

    #[test]
    fn no_marker() {
        let err = parse_response("I think the answer might be B", 4, true).unwrap_err();
        assert_eq!(err.raw, "I think the answer might be B");
    }

    #[test]
    fn out_of_range_and_non_numeric() {
        assert!(parse_response("Answer: 4\nRationale: r", 4, false).is_err());
        assert!(parse_response("Answer: B\nRationale: r", 4, false).is_err());
        assert!(parse_response("Answer:\nRationale: r", 4, false).is_err());
    }

    #[test]
    fn tolerant_forms() {
        let fenced = "```\nAnswer: (2)\nRationale: fenced\n```";
        let r = parse_response(fenced, 3, false).unwrap();
        assert_eq!(r.answer, Answer::Index(2));
        assert_eq!(r.rationale, "fenced");

        let r = parse_response("  answer: [1]\n  RATIONALE:  spaced  ", 3, false).unwrap();
        assert_eq!(r.answer, Answer::Index(1));
        assert_eq!(r.rationale, "spaced");

        let r = parse_response("**Answer:** 0\n**Rationale:** bold", 3, false).unwrap();
        assert_eq!(r.answer, Answer::Index(0));
        assert_eq!(r.rationale, "bold");

        let r = parse_response("Answer: 1. Rationale: inline", 3, false).unwrap();
        assert_eq!(r.answer, Answer::Index(1));
        assert_eq!(r.rationale, "inline");
    }

    #[test]
    fn rationale_defaults_to_remainder() {
        let r = parse_response(
            "Some preamble\nAnswer: 1\nIt is the second one.\nReally.",
            2,
            false,
        )
        .unwrap();
        assert_eq!(r.answer, Answer::Index(1));
        assert_eq!(r.rationale, "It is the second one.\nReally.");

        let r = parse_response("Answer: 1", 2, false).unwrap();
        assert_eq!(r.rationale, "");
    }

    #[test]
    fn first_answer_line_wins() {
        let r = parse_response("Answer: 0\nAnswer: 1\nRationale: r", 2, false).unwrap();
        assert_eq!(r.answer, Answer::Index(0));
    }

    #[test]
    fn multibyte_text_survives() {
        let r = parse_response("Answer: 1\nRationale: café · naïve", 2, false).unwrap();
        assert_eq!(r.rationale, "café · naïve");
    }

    proptest! {
        #[test]
        fn any_valid_index_parses(n in 2usize..20, pick in 0usize..20, text in "[a-zA-Z .,]{0,40}") {
            let idx = pick % n;
            let raw = format!("Answer: {idx}\nRationale: {text}");
            let r = parse_response(&raw, n, false).unwrap();
            prop_assert_eq!(r.answer, Answer::Index(idx));
            prop_assert_eq!(r.rationale, text.trim().to_string());
        }

        #[test]
        fn never_panics(raw in "\\PC{0,80}", n in 1usize..6, allow in any::<bool>()) {
            let _ = parse_response(&raw, n, allow);
        }
    }
}

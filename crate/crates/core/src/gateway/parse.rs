//! Extraction of a binary prediction from a completion.
//!
//! The completion is split into word tokens (`[A-Za-z0-9_]+` optionally
//! followed by `.digits` or `,digits` groups, so `0.5` and `1,000` are single
//! tokens). The first token that is exactly `0` or `1` is the prediction.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::label::Label;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("no standalone 0/1 in completion {completion:?}")]
pub struct ClassificationParseError {
    pub completion: String,
}

fn token_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"[A-Za-z0-9_]+(?:[.,][0-9]+)*").expect("valid regex"))
}

pub fn parse_prediction(completion: &str) -> Result<Label, ClassificationParseError> {
    token_pattern()
        .find_iter(completion)
        .find_map(|m| match m.as_str() {
            "0" => Some(Label::Fair),
            "1" => Some(Label::Unfair),
            _ => None,
        })
        .ok_or_else(|| ClassificationParseError {
            completion: completion.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Character-scanner formulation of the same rule, independent of the regex.
    fn scan_oracle(s: &str) -> Option<Label> {
        let chars: Vec<char> = s.chars().collect();
        let word = |c: char| c.is_ascii_alphanumeric() || c == '_';
        let mut i = 0;
        while i < chars.len() {
            if !word(chars[i]) {
                i += 1;
                continue;
            }
            let start = i;
            while i < chars.len() && word(chars[i]) {
                i += 1;
            }
            // absorb `.digits` / `,digits` groups
            while i + 1 < chars.len() && (chars[i] == '.' || chars[i] == ',') && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let token: String = chars[start..i].iter().collect();
            match token.as_str() {
                "0" => return Some(Label::Fair),
                "1" => return Some(Label::Unfair),
                _ => {}
            }
        }
        None
    }

    #[test]
    fn examples() {
        assert_eq!(parse_prediction("The answer is: 0."), Ok(Label::Fair));
        assert_eq!(parse_prediction("1"), Ok(Label::Unfair));
        assert_eq!(parse_prediction("Label: 1 (unfair)"), Ok(Label::Unfair));
        assert_eq!(parse_prediction("fair (0)"), Ok(Label::Fair));
        assert!(parse_prediction("fair").is_err());
        assert!(parse_prediction("10 or 0.5 or 1,5").is_err());
        assert!(parse_prediction("").is_err());
        assert_eq!(parse_prediction("score 0.5 so 1"), Ok(Label::Unfair));
    }

    #[test]
    fn exhaustive_short_strings_match_scanner() {
        let alphabet = ['0', '1', '2', 'a', '.', ',', ' ', '_'];
        let mut buf = Vec::new();
        fn rec(buf: &mut Vec<char>, depth: usize, alphabet: &[char], check: &dyn Fn(&str)) {
            check(&buf.iter().collect::<String>());
            if depth == 0 {
                return;
            }
            for c in alphabet {
                buf.push(*c);
                rec(buf, depth - 1, alphabet, check);
                buf.pop();
            }
        }
        rec(&mut buf, 5, &alphabet, &|s| {
            assert_eq!(parse_prediction(s).ok(), scan_oracle(s), "input {s:?}");
        });
    }

    proptest::proptest! {
        #[test]
        fn total_over_arbitrary_strings(s in ".*") {
            match parse_prediction(&s) {
                Ok(l) => proptest::prop_assert!(matches!(l, Label::Fair | Label::Unfair)),
                Err(e) => proptest::prop_assert_eq!(e.completion, s),
            }
        }
    }
}

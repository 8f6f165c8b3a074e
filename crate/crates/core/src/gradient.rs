//! Prompt expansion with textual gradients.
//!
//! One expansion: classify the gradient set under the current prompt, turn the
//! misclassified clauses into a natural-language critique (the gradient), then
//! ask for `k` rewrites that address it. On the success path that is exactly
//! `|gradient set| + 2` gateway calls.

use std::collections::HashSet;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BatchKind, Clause, ClauseBatch};
use crate::digest::sha256_hex;
use crate::gateway::templates::bind;
use crate::gateway::{Gateway, GatewayError, MetaPromptSet};
use crate::label::Label;
use crate::ledger::Phase;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("expected a {expected:?} batch, got {actual:?}")]
    WrongBatchKind { expected: BatchKind, actual: BatchKind },
    #[error("prompt made no errors on the gradient set; nothing to improve")]
    NoGradient,
    #[error("edit completion contained no usable candidate prompt")]
    NoCandidates { completion: String },
    #[error("candidate count k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorExample {
    pub clause: Clause,
    pub gold: Label,
    pub predicted: Label,
    /// The completion was unparseable; `predicted` is set to the wrong label.
    #[serde(default)]
    pub parse_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextualGradient {
    pub text: String,
    pub source_prompt_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub parent_prompt: String,
    pub candidates: Vec<String>,
    pub gradient: TextualGradient,
}

/// Audit record for one expansion, written as a JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub parent_hash: String,
    pub gradient: String,
    pub candidates: Vec<String>,
}

impl From<&CandidateSet> for CandidateTrace {
    fn from(set: &CandidateSet) -> Self {
        Self {
            parent_hash: sha256_hex(&set.parent_prompt),
            gradient: set.gradient.text.clone(),
            candidates: set.candidates.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub candidates: CandidateSet,
    pub error_count: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineOptions {
    /// Characters of clause text kept per error example in the gradient request.
    pub error_char_budget: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { error_char_budget: 600 }
    }
}

fn truncate(text: &str, budget: usize) -> String {
    match text.char_indices().nth(budget) {
        Some((cut, _)) => format!("{}...", &text[..cut]),
        None => text.to_string(),
    }
}

pub fn render_errors(errors: &[ErrorExample], budget: usize) -> String {
    errors
        .iter()
        .enumerate()
        .map(|(i, e)| {
            format!(
                "{}. Clause: \"{}\"\n   Gold label: {}, predicted label: {}",
                i + 1,
                truncate(&e.clause.text, budget),
                e.gold,
                e.predicted
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn item_marker() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"^\s*(?:[*>#-]\s*)*\**\(?\d{1,2}[.):]\**\s+(.*)$").expect("valid regex")
    })
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')] {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

/// Items of the first numbered list in `text`.
///
/// An item starts at a line like `1. ...`, `2)` or `**3.**` and continues over
/// the following unnumbered lines up to a blank line. Text before the first
/// item and after a blank line that follows an item is ignored.
pub fn parse_numbered_list(text: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut open = false;
    for line in text.lines() {
        if let Some(c) = item_marker().captures(line) {
            items.push(c[1].trim().to_string());
            open = true;
        } else if line.trim().is_empty() {
            open = false;
        } else if open {
            let last = items.last_mut().expect("open item");
            last.push('\n');
            last.push_str(line.trim());
        }
    }
    items
        .iter()
        .map(|s| strip_quotes(s).to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradientEngine {
    gateway: Arc<Gateway>,
    meta: Arc<MetaPromptSet>,
    options: EngineOptions,
}

impl GradientEngine {
    pub fn new(gateway: Arc<Gateway>, meta: Arc<MetaPromptSet>, options: EngineOptions) -> Self {
        Self { gateway, meta, options }
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn meta(&self) -> &Arc<MetaPromptSet> {
        &self.meta
    }

    /// Misclassified clauses of a gradient set, in batch order.
    pub fn collect_errors(&self, prompt: &str, batch: &ClauseBatch) -> Result<Vec<ErrorExample>, EngineError> {
        if batch.kind != BatchKind::GradientSet {
            return Err(EngineError::WrongBatchKind {
                expected: BatchKind::GradientSet,
                actual: batch.kind,
            });
        }
        let predictions = self
            .gateway
            .classify_all(&self.meta, prompt, &batch.clauses, Phase::GradientEval);
        let mut errors = Vec::new();
        for (clause, prediction) in batch.clauses.iter().zip(predictions) {
            let (predicted, parse_failure) = match prediction {
                Ok(label) => (label, false),
                Err(GatewayError::Parse(_)) => (clause.fairness.flipped(), true),
                Err(e) => return Err(e.into()),
            };
            if predicted != clause.fairness {
                errors.push(ErrorExample {
                    clause: clause.clone(),
                    gold: clause.fairness,
                    predicted,
                    parse_failure,
                });
            }
        }
        Ok(errors)
    }

    /// One gradient call summarizing the prompt's weaknesses.
    pub fn generate_gradient(&self, prompt: &str, errors: &[ErrorExample]) -> Result<TextualGradient, EngineError> {
        if errors.is_empty() {
            return Err(EngineError::NoGradient);
        }
        let rendered = render_errors(errors, self.options.error_char_budget);
        let request = self
            .gateway
            .request(
                Phase::GradientGen,
                "gradient",
                &self.meta.gradient_template,
                Some(&self.meta.context),
                bind([("prompt", prompt), ("errors", rendered.as_str())]),
            )
            .map_err(GatewayError::from)?;
        let text = self.gateway.complete(&request)?.trim().to_string();
        if text.is_empty() {
            return Err(EngineError::NoCandidates { completion: text });
        }
        Ok(TextualGradient {
            text,
            source_prompt_hash: sha256_hex(prompt),
        })
    }

    /// One edit call asking for `k` rewrites. Returns candidates and warnings.
    pub fn apply_gradient(
        &self,
        prompt: &str,
        gradient: &TextualGradient,
        k: usize,
    ) -> Result<(Vec<String>, Vec<String>), EngineError> {
        if k == 0 {
            return Err(EngineError::InvalidK);
        }
        let k_text = k.to_string();
        let request = self
            .gateway
            .request(
                Phase::GradientApply,
                "edit",
                &self.meta.edit_template,
                Some(&self.meta.context),
                bind([
                    ("prompt", prompt),
                    ("gradient", gradient.text.as_str()),
                    ("k", k_text.as_str()),
                ]),
            )
            .map_err(GatewayError::from)?;
        let completion = self.gateway.complete(&request)?;
        let parent = prompt.trim();
        let mut seen = HashSet::new();
        let candidates: Vec<String> = parse_numbered_list(&completion)
            .into_iter()
            .filter(|c| c != parent && seen.insert(c.clone()))
            .take(k)
            .collect();
        if candidates.is_empty() {
            return Err(EngineError::NoCandidates { completion });
        }
        let mut warnings = Vec::new();
        if candidates.len() < k {
            warnings.push(format!("requested {k} candidates, parsed {}", candidates.len()));
            log::warn!("{}", warnings[0]);
        }
        Ok((candidates, warnings))
    }

    /// Errors, gradient and rewrites for one prompt.
    pub fn expand_prompt(&self, prompt: &str, batch: &ClauseBatch, k: usize) -> Result<Expansion, EngineError> {
        if k == 0 {
            return Err(EngineError::InvalidK);
        }
        let errors = self.collect_errors(prompt, batch)?;
        let gradient = self.generate_gradient(prompt, &errors)?;
        let (candidates, warnings) = self.apply_gradient(prompt, &gradient, k)?;
        Ok(Expansion {
            candidates: CandidateSet {
                parent_prompt: prompt.to_string(),
                candidates,
                gradient,
            },
            error_count: errors.len(),
            warnings,
        })
    }
}

//! Reward functions for scoring candidate prompts.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{BatchKind, ClauseBatch};
use crate::digest::stable_unit;
use crate::gateway::{Gateway, GatewayError, MetaPromptSet};
use crate::ledger::Phase;
use crate::metrics::{compute_metrics, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    MacroF1,
    Accuracy,
    Random,
    Proxy,
}

impl RewardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::MacroF1 => "macro-f1",
            RewardKind::Accuracy => "accuracy",
            RewardKind::Random => "random",
            RewardKind::Proxy => "proxy",
        }
    }

    /// Whether scoring a candidate costs zero gateway calls.
    pub fn is_call_free(self) -> bool {
        matches!(self, RewardKind::Random | RewardKind::Proxy)
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "macro-f1" | "f1" => Ok(RewardKind::MacroF1),
            "accuracy" | "acc" => Ok(RewardKind::Accuracy),
            "random" => Ok(RewardKind::Random),
            "proxy" => Ok(RewardKind::Proxy),
            other => Err(format!("unknown reward kind {other:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("reward configuration: {0}")]
    Config(String),
    #[error("proxy scoring failed: {0}")]
    Proxy(String),
    #[error("reward {0} outside [0, 1]")]
    OutOfRange(f64),
}

pub trait PromptScorer: Send + Sync {
    fn kind(&self) -> RewardKind;

    fn score(&self, prompt: &str) -> Result<f64, RewardError>;

    /// Clauses a full LLM evaluation of one prompt would classify.
    fn score_set_size(&self) -> u64;
}

/// Score `prompt`, checking the result is a finite value in [0, 1].
pub fn evaluate_reward(prompt: &str, scorer: &dyn PromptScorer) -> Result<f64, RewardError> {
    let r = scorer.score(prompt)?;
    if !(0.0..=1.0).contains(&r) {
        return Err(RewardError::OutOfRange(r));
    }
    Ok(r)
}

/// Classifies the whole score set through the gateway and reports a metric.
#[derive(Debug, Clone)]
pub struct LlmScorer {
    gateway: Arc<Gateway>,
    meta: Arc<MetaPromptSet>,
    score_set: ClauseBatch,
    kind: RewardKind,
}

impl LlmScorer {
    pub fn new(
        gateway: Arc<Gateway>,
        meta: Arc<MetaPromptSet>,
        score_set: ClauseBatch,
        kind: RewardKind,
    ) -> Result<Self, RewardError> {
        if !matches!(kind, RewardKind::MacroF1 | RewardKind::Accuracy) {
            return Err(RewardError::Config(format!("{kind} is not an LLM metric")));
        }
        if score_set.kind != BatchKind::ScoreSet {
            return Err(RewardError::Config(format!(
                "expected a score set, got {:?}",
                score_set.kind
            )));
        }
        if score_set.is_empty() {
            return Err(RewardError::Config("empty score set".into()));
        }
        Ok(Self {
            gateway,
            meta,
            score_set,
            kind,
        })
    }

    pub fn score_set(&self) -> &ClauseBatch {
        &self.score_set
    }

    /// Full metric report; unparseable completions count as wrong.
    pub fn report(&self, prompt: &str) -> Result<MetricReport, RewardError> {
        let results = self
            .gateway
            .classify_all(&self.meta, prompt, &self.score_set.clauses, Phase::ScoreEval);
        let mut predictions = Vec::with_capacity(results.len());
        let mut failures = 0;
        for (clause, r) in self.score_set.clauses.iter().zip(results) {
            match r {
                Ok(label) => predictions.push(label),
                Err(GatewayError::Parse(_)) => {
                    failures += 1;
                    predictions.push(clause.fairness.flipped());
                }
                Err(e) => return Err(e.into()),
            }
        }
        let report = compute_metrics(&predictions, &self.score_set.golds())
            .map_err(|e| RewardError::Config(e.to_string()))?;
        Ok(report.with_parse_failures(failures))
    }
}

impl PromptScorer for LlmScorer {
    fn kind(&self) -> RewardKind {
        self.kind
    }

    fn score(&self, prompt: &str) -> Result<f64, RewardError> {
        let report = self.report(prompt)?;
        Ok(match self.kind {
            RewardKind::Accuracy => report.accuracy,
            _ => report.macro_f1,
        })
    }

    fn score_set_size(&self) -> u64 {
        self.score_set.len() as u64
    }
}

/// Seeded uniform draw per prompt text; ignores predictions entirely.
#[derive(Debug, Clone)]
pub struct RandomScorer {
    pub seed: u64,
    pub score_set_size: u64,
}

impl RandomScorer {
    pub fn new(seed: u64, score_set_size: u64) -> Self {
        Self { seed, score_set_size }
    }
}

impl PromptScorer for RandomScorer {
    fn kind(&self) -> RewardKind {
        RewardKind::Random
    }

    fn score(&self, prompt: &str) -> Result<f64, RewardError> {
        Ok(stable_unit(self.seed, &["reward", prompt]))
    }

    fn score_set_size(&self) -> u64 {
        self.score_set_size
    }
}

/// Deterministic reward from an arbitrary function of the prompt text.
pub struct FnScorer<F> {
    pub kind: RewardKind,
    pub score_set_size: u64,
    pub f: F,
}

impl<F> PromptScorer for FnScorer<F>
where
    F: Fn(&str) -> f64 + Send + Sync,
{
    fn kind(&self) -> RewardKind {
        self.kind
    }

    fn score(&self, prompt: &str) -> Result<f64, RewardError> {
        Ok((self.f)(prompt))
    }

    fn score_set_size(&self) -> u64 {
        self.score_set_size
    }
}

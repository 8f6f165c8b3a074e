//! LLM call accounting.
//!
//! Two books are kept side by side. `actual` counts every gateway invocation
//! as it happens. `model` counts calls under the per-candidate accounting used
//! for cost comparisons: each of the `k` candidates of an expansion is charged
//! its own gradient-set pass, one gradient call, one edit call and (for
//! LLM-scored search) one full score-set pass, even though the engine batches
//! the `k` rewrites into a single edit call.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// What a gateway call is for. Each phase has its own default temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    GradientEval,
    GradientGen,
    GradientApply,
    ScoreEval,
    CorrectnessBuild,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::GradientEval,
        Phase::GradientGen,
        Phase::GradientApply,
        Phase::ScoreEval,
        Phase::CorrectnessBuild,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::GradientEval => "gradient-eval",
            Phase::GradientGen => "gradient-gen",
            Phase::GradientApply => "gradient-apply",
            Phase::ScoreEval => "score-eval",
            Phase::CorrectnessBuild => "correctness-build",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Default)]
pub struct CostLedger {
    actual: [AtomicU64; 5],
    model: [AtomicU64; 5],
    failed: AtomicU64,
    remote: AtomicU64,
    expansions: AtomicU64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// One gateway invocation, successful or not.
    pub fn record_call(&self, phase: Phase, remote: bool, succeeded: bool) {
        self.actual[phase.slot()].fetch_add(1, Ordering::SeqCst);
        if remote {
            self.remote.fetch_add(1, Ordering::SeqCst);
        }
        if !succeeded {
            self.failed.fetch_add(1, Ordering::SeqCst);
        }
    }

    /// Add `n` calls to the accounting-model book.
    pub fn charge_model(&self, phase: Phase, n: u64) {
        self.model[phase.slot()].fetch_add(n, Ordering::SeqCst);
    }

    /// Charge one expansion under the per-candidate model.
    pub fn charge_expansion(&self, charge: &ExpansionCharge) {
        let k = charge.candidates;
        self.charge_model(Phase::GradientEval, charge.gradient_size * k);
        self.charge_model(Phase::GradientGen, k);
        self.charge_model(Phase::GradientApply, k);
        if !charge.proxy {
            self.charge_model(Phase::ScoreEval, charge.score_size * k);
        }
        self.expansions.fetch_add(1, Ordering::SeqCst);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let read = |book: &[AtomicU64; 5]| {
            Phase::ALL
                .iter()
                .map(|p| (*p, book[p.slot()].load(Ordering::SeqCst)))
                .collect::<BTreeMap<_, _>>()
        };
        LedgerSnapshot {
            actual: read(&self.actual),
            model: read(&self.model),
            failed: self.failed.load(Ordering::SeqCst),
            remote: self.remote.load(Ordering::SeqCst),
            expansions: self.expansions.load(Ordering::SeqCst),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub actual: BTreeMap<Phase, u64>,
    pub model: BTreeMap<Phase, u64>,
    pub failed: u64,
    pub remote: u64,
    pub expansions: u64,
}

impl LedgerSnapshot {
    pub fn actual_total(&self) -> u64 {
        self.actual.values().sum()
    }

    pub fn model_total(&self) -> u64 {
        self.model.values().sum()
    }

    pub fn actual_for(&self, phase: Phase) -> u64 {
        self.actual.get(&phase).copied().unwrap_or(0)
    }

    pub fn model_for(&self, phase: Phase) -> u64 {
        self.model.get(&phase).copied().unwrap_or(0)
    }

    /// Per-phase difference `self - earlier`, saturating at zero.
    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        let diff = |a: &BTreeMap<Phase, u64>, b: &BTreeMap<Phase, u64>| {
            a.iter()
                .map(|(p, v)| (*p, v.saturating_sub(b.get(p).copied().unwrap_or(0))))
                .collect()
        };
        LedgerSnapshot {
            actual: diff(&self.actual, &earlier.actual),
            model: diff(&self.model, &earlier.model),
            failed: self.failed.saturating_sub(earlier.failed),
            remote: self.remote.saturating_sub(earlier.remote),
            expansions: self.expansions.saturating_sub(earlier.expansions),
        }
    }
}

/// Sizes that determine the model cost of one expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpansionCharge {
    pub gradient_size: u64,
    pub score_size: u64,
    pub candidates: u64,
    pub proxy: bool,
}

/// Gradient-set pass plus gradient and edit calls, once per candidate.
pub const META_CALLS_PER_CANDIDATE: u64 = 2;

/// Model LLM calls for one expansion step.
pub fn expansion_cost(gradient_size: u64, meta_calls: u64, score_size: u64, k: u64, proxy: bool) -> u64 {
    let scoring = if proxy { 0 } else { score_size };
    (gradient_size + meta_calls + scoring) * k
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no break-even: standard expansion cost {standard} does not exceed proxy cost {proxy}")]
pub struct NoBreakEven {
    pub standard: u64,
    pub proxy: u64,
}

/// Smallest number of expansions whose savings cover building the correctness dataset.
pub fn break_even(
    dataset_prompts: u64,
    dataset_clauses: u64,
    standard_cost: u64,
    proxy_cost: u64,
) -> Result<u64, NoBreakEven> {
    if standard_cost <= proxy_cost {
        return Err(NoBreakEven {
            standard: standard_cost,
            proxy: proxy_cost,
        });
    }
    let build = dataset_prompts * dataset_clauses;
    Ok(build.div_ceil(standard_cost - proxy_cost))
}

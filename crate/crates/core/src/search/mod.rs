//! Prompt search: MCTS over textual-gradient expansions plus greedy and beam baselines.

mod driver;
pub mod landscape;
pub mod reward;
pub mod trace;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusError, GRADIENT_SET_SIZE, SCORE_SET_SIZE};
use crate::gradient::{EngineError, GradientEngine};
use crate::ledger::LedgerSnapshot;

pub use driver::Searcher;
pub use reward::{evaluate_reward, FnScorer, LlmScorer, PromptScorer, RandomScorer, RewardError, RewardKind};
pub use trace::{ChildRecord, Trace, TraceError, TraceEvent, TraceKind};
pub use tree::{uct, EarlyStop, NodeId, PromptNode, SearchTree};

pub const DEFAULT_INITIAL_PROMPT: &str = "Is this clause fair (0) or unfair (1) to the consumer?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub initial_prompt: String,
    pub iterations: u32,
    pub candidates_per_expansion: usize,
    pub depth_limit: u32,
    pub patience: u32,
    pub exploration_weight: f64,
    pub reward_kind: RewardKind,
    pub beam_width: usize,
    pub gradient_set_size: usize,
    pub score_set_size: usize,
    pub sampling_seed: u64,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            initial_prompt: DEFAULT_INITIAL_PROMPT.to_string(),
            iterations: 12,
            candidates_per_expansion: 4,
            depth_limit: 8,
            patience: 5,
            exploration_weight: 2.5,
            reward_kind: RewardKind::MacroF1,
            beam_width: 2,
            gradient_set_size: GRADIENT_SET_SIZE,
            score_set_size: SCORE_SET_SIZE,
            sampling_seed: 0,
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let counts = [
            ("iterations", self.iterations as u64),
            ("candidates_per_expansion", self.candidates_per_expansion as u64),
            ("depth_limit", self.depth_limit as u64),
            ("patience", self.patience as u64),
            ("beam_width", self.beam_width as u64),
            ("gradient_set_size", self.gradient_set_size as u64),
            ("score_set_size", self.score_set_size as u64),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(SearchError::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.exploration_weight.is_finite() || self.exploration_weight < 0.0 {
            return Err(SearchError::Config(format!(
                "exploration_weight must be finite and non-negative, got {}",
                self.exploration_weight
            )));
        }
        if self.initial_prompt.trim().is_empty() {
            return Err(SearchError::Config("initial prompt is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("search configuration: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Mcts,
    Greedy,
    Beam,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Mcts => "mcts",
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Iterations,
    EarlyStop,
    Exhausted,
    Aborted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Iterations => "iterations",
            StopReason::EarlyStop => "early-stop",
            StopReason::Exhausted => "exhausted",
            StopReason::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub strategy: Strategy,
    pub best_node: NodeId,
    pub best_prompt: String,
    pub best_reward: f64,
    pub best_depth: u32,
    pub stop_reason: StopReason,
    pub iterations_run: u32,
    pub expansions: u64,
    pub config: SearchConfig,
    pub backend: String,
    pub ledger: LedgerSnapshot,
    pub tree: Vec<PromptNode>,
    #[serde(skip)]
    pub trace: Trace,
}

impl SearchResult {
    /// Writes `result.json` and `trace.jsonl` under `dir`.
    pub fn persist(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("result.json"), json + "\n")?;
        self.trace
            .write_jsonl(&dir.join("trace.jsonl"))
            .map_err(std::io::Error::other)
    }
}

/// A failed run; `partial` holds whatever was built before the error.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SearchAbort {
    #[source]
    pub error: SearchError,
    pub partial: Option<Box<SearchResult>>,
}

impl From<SearchError> for SearchAbort {
    fn from(error: SearchError) -> Self {
        Self { error, partial: None }
    }
}

pub fn run_mcts(
    config: &SearchConfig,
    corpus: &Corpus,
    engine: &GradientEngine,
    scorer: &dyn PromptScorer,
) -> Result<SearchResult, SearchAbort> {
    let mut s = Searcher::new(config, corpus, engine, scorer, Strategy::Mcts)?;
    let outcome = s.run_mcts_loop();
    s.finish(outcome)
}

pub fn run_greedy(
    config: &SearchConfig,
    corpus: &Corpus,
    engine: &GradientEngine,
    scorer: &dyn PromptScorer,
) -> Result<SearchResult, SearchAbort> {
    let mut s = Searcher::new(config, corpus, engine, scorer, Strategy::Greedy)?;
    let outcome = s.run_beam_loop(1);
    s.finish(outcome)
}

pub fn run_beam(
    config: &SearchConfig,
    corpus: &Corpus,
    engine: &GradientEngine,
    scorer: &dyn PromptScorer,
) -> Result<SearchResult, SearchAbort> {
    let strategy = if config.beam_width == 1 {
        Strategy::Greedy
    } else {
        Strategy::Beam
    };
    let mut s = Searcher::new(config, corpus, engine, scorer, strategy)?;
    let outcome = s.run_beam_loop(config.beam_width);
    s.finish(outcome)
}

pub fn run_strategy(
    strategy: Strategy,
    config: &SearchConfig,
    corpus: &Corpus,
    engine: &GradientEngine,
    scorer: &dyn PromptScorer,
) -> Result<SearchResult, SearchAbort> {
    match strategy {
        Strategy::Mcts => run_mcts(config, corpus, engine, scorer),
        Strategy::Greedy => run_greedy(config, corpus, engine, scorer),
        Strategy::Beam => run_beam(config, corpus, engine, scorer),
    }
}

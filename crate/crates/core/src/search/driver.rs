use rayon::prelude::*;

use super::reward::{evaluate_reward, PromptScorer};
use super::trace::{ChildRecord, Trace, TraceKind};
use super::tree::{EarlyStop, NodeId, SearchTree};
use super::{SearchAbort, SearchConfig, SearchError, SearchResult, StopReason, Strategy};
use crate::corpus::{sample_gradient_set_sized, Corpus};
use crate::gradient::{EngineError, GradientEngine};
use crate::ledger::{ExpansionCharge, LedgerSnapshot};
use crate::rng::derive_seed;

/// Single-writer search state shared by every strategy.
pub struct Searcher<'a> {
    config: &'a SearchConfig,
    corpus: &'a Corpus,
    engine: &'a GradientEngine,
    scorer: &'a dyn PromptScorer,
    strategy: Strategy,
    tree: SearchTree,
    trace: Trace,
    expansions: u64,
    iterations_run: u32,
    stop: EarlyStop,
    ledger_start: LedgerSnapshot,
}

impl<'a> Searcher<'a> {
    /// Validates the config and evaluates the root prompt.
    pub fn new(
        config: &'a SearchConfig,
        corpus: &'a Corpus,
        engine: &'a GradientEngine,
        scorer: &'a dyn PromptScorer,
        strategy: Strategy,
    ) -> Result<Self, SearchError> {
        config.validate()?;
        if scorer.kind() != config.reward_kind {
            return Err(SearchError::Config(format!(
                "scorer computes {}, config asks for {}",
                scorer.kind(),
                config.reward_kind
            )));
        }
        let ledger_start = engine.gateway().ledger().snapshot();
        let mut trace = Trace::new();
        trace.push(TraceKind::Start {
            strategy: strategy.as_str().to_string(),
            sampling_seed: config.sampling_seed,
            rng_seed: config.rng_seed,
            reward_kind: config.reward_kind.to_string(),
            backend: engine.gateway().backend().id(),
        });
        let prompt = config.initial_prompt.trim().to_string();
        let reward = evaluate_reward(&prompt, scorer)?;
        trace.push(TraceKind::Root {
            prompt: prompt.clone(),
            reward,
        });
        Ok(Self {
            config,
            corpus,
            engine,
            scorer,
            strategy,
            tree: SearchTree::new(prompt, reward),
            trace,
            expansions: 0,
            iterations_run: 0,
            stop: EarlyStop::new(config.patience, reward),
            ledger_start,
        })
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Expand `node` with a freshly sampled gradient set and score each child.
    /// Returns no children when the prompt made no errors (node becomes terminal).
    pub fn expand(&mut self, node: NodeId) -> Result<Vec<NodeId>, SearchError> {
        let (prompt, depth) = {
            let n = self.tree.node(node);
            (n.prompt.clone(), n.depth)
        };
        if depth >= self.config.depth_limit {
            return Err(SearchError::Precondition(format!(
                "node {node} at depth {depth} cannot be expanded (limit {})",
                self.config.depth_limit
            )));
        }
        let expansion = self.expansions;
        self.expansions += 1;
        let gradient_seed = derive_seed(self.config.sampling_seed, expansion);
        let batch = sample_gradient_set_sized(self.corpus, gradient_seed, self.config.gradient_set_size)?;
        let k = self.config.candidates_per_expansion;
        self.engine.gateway().ledger().charge_expansion(&ExpansionCharge {
            gradient_size: batch.len() as u64,
            score_size: self.scorer.score_set_size(),
            candidates: k as u64,
            proxy: self.config.reward_kind.is_call_free(),
        });
        let expanded = match self.engine.expand_prompt(&prompt, &batch, k) {
            Ok(e) => e,
            Err(EngineError::NoGradient) => {
                self.tree.mark_terminal(node);
                self.trace.push(TraceKind::Expand {
                    node,
                    expansion,
                    gradient_seed,
                    gradient: None,
                    children: Vec::new(),
                    terminal: true,
                    warnings: Vec::new(),
                });
                return Ok(Vec::new());
            }
            Err(e) => return Err(e.into()),
        };
        let candidates = expanded.candidates.candidates;
        let scorer = self.scorer;
        let rewards: Vec<f64> = candidates
            .par_iter()
            .map(|c| evaluate_reward(c, scorer))
            .collect::<Result<_, _>>()?;
        let mut children = Vec::with_capacity(candidates.len());
        let mut records = Vec::with_capacity(candidates.len());
        for (prompt, reward) in candidates.into_iter().zip(rewards) {
            let id = self.tree.add_child(node, prompt.clone(), reward);
            children.push(id);
            records.push(ChildRecord { id, prompt, reward });
        }
        self.trace.push(TraceKind::Expand {
            node,
            expansion,
            gradient_seed,
            gradient: Some(expanded.candidates.gradient.text),
            children: records,
            terminal: false,
            warnings: expanded.warnings,
        });
        Ok(children)
    }

    /// Greedy rollout from `node` to the depth limit; returns the best reward
    /// seen (including `node` itself) and the nodes descended into.
    pub fn simulate(&mut self, node: NodeId) -> Result<(f64, Vec<NodeId>), SearchError> {
        let mut best = self.tree.node(node).last_reward;
        let mut current = node;
        let mut rollout = Vec::new();
        loop {
            let n = self.tree.node(current);
            if n.depth >= self.config.depth_limit || n.terminal {
                break;
            }
            if n.children.is_empty() && self.expand(current)?.is_empty() {
                break;
            }
            let Some(next) = self.tree.best_child(current) else { break };
            best = best.max(self.tree.node(next).last_reward);
            rollout.push(next);
            current = next;
        }
        self.trace.push(TraceKind::Simulate {
            start: node,
            rollout: rollout.clone(),
            reward: best,
        });
        Ok((best, rollout))
    }

    /// Backpropagate and update the early-stop counter; true means stop.
    pub fn backpropagate(&mut self, path: &[NodeId], reward: f64) -> bool {
        self.tree.backpropagate(path, reward);
        let global_best = self.tree.best_node().last_reward;
        let halt = self.stop.observe(global_best);
        self.trace.push(TraceKind::Backprop {
            path: path.to_vec(),
            reward,
            global_best,
            stale: self.stop.stale,
        });
        halt
    }

    /// One select, expand, simulate, backpropagate round.
    fn mcts_iteration(&mut self) -> Result<bool, SearchError> {
        let mut path = self.tree.select(self.config.exploration_weight, self.config.depth_limit);
        self.trace.push(TraceKind::Select { path: path.clone() });
        let leaf = *path.last().expect("path contains the root");
        let n = self.tree.node(leaf);
        if n.depth < self.config.depth_limit && !n.terminal && n.children.is_empty() {
            self.expand(leaf)?;
            if let Some(best) = self.tree.best_child(leaf) {
                path.push(best);
            }
        }
        let start = *path.last().expect("nonempty");
        let (reward, rollout) = self.simulate(start)?;
        path.extend(rollout);
        Ok(self.backpropagate(&path, reward))
    }

    pub(super) fn run_mcts_loop(&mut self) -> Result<StopReason, SearchError> {
        for _ in 0..self.config.iterations {
            let n = self.tree.root();
            if n.terminal && n.children.is_empty() {
                return Ok(StopReason::Exhausted);
            }
            self.iterations_run += 1;
            if self.mcts_iteration()? {
                return Ok(StopReason::EarlyStop);
            }
        }
        Ok(StopReason::Iterations)
    }

    pub(super) fn run_beam_loop(&mut self, width: usize) -> Result<StopReason, SearchError> {
        if width == 0 {
            return Err(SearchError::Config("beam_width must be at least 1".into()));
        }
        let mut beam = vec![0];
        for round in 0..self.config.iterations {
            let expandable: Vec<NodeId> = beam
                .iter()
                .copied()
                .filter(|&id| {
                    let n = self.tree.node(id);
                    n.depth < self.config.depth_limit && !n.terminal
                })
                .collect();
            if expandable.is_empty() {
                return Ok(StopReason::Exhausted);
            }
            self.iterations_run += 1;
            let mut pool = Vec::new();
            for id in expandable {
                pool.extend(self.expand(id)?);
            }
            if pool.is_empty() {
                return Ok(StopReason::Exhausted);
            }
            pool.sort_by(|&a, &b| {
                let (ra, rb) = (self.tree.node(a).last_reward, self.tree.node(b).last_reward);
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            pool.truncate(width);
            beam = pool;
            let global_best = self.tree.best_node().last_reward;
            let halt = self.stop.observe(global_best);
            self.trace.push(TraceKind::Beam {
                round,
                members: beam.clone(),
                global_best,
                stale: self.stop.stale,
            });
            if halt {
                return Ok(StopReason::EarlyStop);
            }
        }
        Ok(StopReason::Iterations)
    }

    fn result(&self, stop_reason: StopReason) -> SearchResult {
        let best = self.tree.best_node();
        SearchResult {
            strategy: self.strategy,
            best_node: best.id,
            best_prompt: best.prompt.clone(),
            best_reward: best.last_reward,
            best_depth: best.depth,
            stop_reason,
            iterations_run: self.iterations_run,
            expansions: self.expansions,
            config: self.config.clone(),
            backend: self.engine.gateway().backend().id(),
            ledger: self.engine.gateway().ledger().snapshot().since(&self.ledger_start),
            tree: self.tree.nodes().to_vec(),
            trace: self.trace.clone(),
        }
    }

    pub(super) fn finish(mut self, outcome: Result<StopReason, SearchError>) -> Result<SearchResult, SearchAbort> {
        match outcome {
            Ok(reason) => {
                self.trace.push(TraceKind::Stop {
                    reason: reason.as_str().to_string(),
                    iterations: self.iterations_run,
                });
                Ok(self.result(reason))
            }
            Err(error) => {
                self.trace.push(TraceKind::Stop {
                    reason: format!("aborted: {error}"),
                    iterations: self.iterations_run,
                });
                Err(SearchAbort {
                    error,
                    partial: Some(Box::new(self.result(StopReason::Aborted))),
                })
            }
        }
    }
}

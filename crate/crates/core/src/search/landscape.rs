//! Synthetic reward landscapes over prompt trees, for exercising search
//! strategies with a mock backend and no real model.
//!
//! A prompt carries its tree position as a marker like `[path:1.0.2]`. The
//! matching rulebook always answers `0` when classifying (so every gradient
//! set has errors), and its rewrite step emits `k` children whose markers
//! extend the parent's path by one index.

use std::sync::Arc;

use crate::gateway::mock::{ByPhase, Fixed};
use crate::gateway::{Gateway, GatewayConfig, LlmBackend, LlmRequest, MetaPromptSet, MockBackend};
use crate::gradient::{EngineOptions, GradientEngine};
use crate::ledger::Phase;

use super::reward::{PromptScorer, RewardError, RewardKind};

pub fn marker_prompt(path: &[usize]) -> String {
    let joined: Vec<String> = path.iter().map(|i| i.to_string()).collect();
    format!("Decide whether the clause is fair (0) or unfair (1). [path:{}]", joined.join("."))
}

/// Tree position encoded in `prompt`, if it carries a marker.
pub fn parse_marker(prompt: &str) -> Option<Vec<usize>> {
    let start = prompt.find("[path:")? + "[path:".len();
    let rest = &prompt[start..];
    let body = &rest[..rest.find(']')?];
    if body.is_empty() {
        return Some(Vec::new());
    }
    body.split('.').map(|p| p.parse().ok()).collect()
}

fn rewrite(request: &LlmRequest, k: usize) -> Result<String, String> {
    let parent = request.slots.get("prompt").ok_or("missing prompt slot")?;
    let path = parse_marker(parent).ok_or("prompt has no path marker")?;
    let mut out = String::new();
    for i in 0..k {
        let mut child = path.clone();
        child.push(i);
        out.push_str(&format!("{}. {}\n", i + 1, marker_prompt(&child)));
    }
    Ok(out)
}

/// Mock gateway and engine whose rewrites follow the marker scheme.
pub fn landscape_engine(k: usize) -> GradientEngine {
    let rules = ByPhase::new(Fixed("0".into()))
        .on(Phase::GradientGen, Fixed("The prompt misses unfair clauses.".into()))
        .on(Phase::GradientApply, move |req: &LlmRequest, _| rewrite(req, k));
    let gateway = Gateway::new(
        LlmBackend::Mock(MockBackend::new("landscape", rules, 0)),
        GatewayConfig::default(),
    );
    GradientEngine::new(
        Arc::new(gateway),
        Arc::new(MetaPromptSet::default()),
        EngineOptions::default(),
    )
}

/// Scores prompts by their marker path.
pub struct LandscapeScorer {
    pub kind: RewardKind,
    pub score_set_size: u64,
    pub reward: fn(&[usize]) -> f64,
}

impl LandscapeScorer {
    pub fn new(reward: fn(&[usize]) -> f64) -> Self {
        Self {
            kind: RewardKind::MacroF1,
            score_set_size: 200,
            reward,
        }
    }
}

impl PromptScorer for LandscapeScorer {
    fn kind(&self) -> RewardKind {
        self.kind
    }

    fn score(&self, prompt: &str) -> Result<f64, RewardError> {
        let path = parse_marker(prompt).ok_or_else(|| RewardError::Config(format!("no marker in {prompt:?}")))?;
        Ok((self.reward)(&path))
    }

    fn score_set_size(&self) -> u64 {
        self.score_set_size
    }
}

/// Reward grows by 0.1 per level.
pub fn monotone(path: &[usize]) -> f64 {
    path.len() as f64 / 10.0
}

/// The best-looking first step (index 0) leads into a trap whose all-zero
/// spine tops out at 0.6. Its sibling (index 1) looks slightly worse at
/// depth 1 and 2 but reaches 0.9 from depth 3 on along its zero spine.
pub fn deceptive(path: &[usize]) -> f64 {
    let depth = path.len();
    match path.first() {
        None => 0.1,
        Some(0) => {
            if path.iter().all(|&i| i == 0) {
                (0.5 + 0.05 * (depth as f64 - 1.0)).min(0.6)
            } else {
                0.3
            }
        }
        Some(1) => {
            if path[1..].iter().all(|&i| i == 0) {
                match depth {
                    1 => 0.4,
                    2 => 0.45,
                    _ => 0.9,
                }
            } else {
                0.2
            }
        }
        Some(2) if depth == 1 => 0.2,
        Some(_) if depth == 1 => 0.1,
        Some(_) => 0.15,
    }
}

pub fn root_prompt() -> String {
    marker_prompt(&[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_round_trip() {
        for path in [vec![], vec![0], vec![1, 0, 3]] {
            assert_eq!(parse_marker(&marker_prompt(&path)), Some(path));
        }
        assert_eq!(parse_marker("plain"), None);
    }

    #[test]
    fn greedy_path_is_capped() {
        let mut path = Vec::new();
        let mut best: f64 = deceptive(&path);
        for _ in 0..8 {
            let next = (0..4)
                .map(|i| {
                    let mut p = path.clone();
                    p.push(i);
                    p
                })
                .max_by(|a, b| deceptive(a).total_cmp(&deceptive(b)).then(b.cmp(a)))
                .unwrap();
            best = best.max(deceptive(&next));
            path = next;
        }
        assert!(path.iter().all(|&i| i == 0));
        assert!((best - 0.6).abs() < 1e-12);
    }
}

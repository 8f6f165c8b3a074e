//! Deterministic offline backend.
//!
//! A mock answers from a [`Rulebook`]: a pure function of the request and the
//! mock's seed. Rulebooks read the template slot bindings carried on the
//! request (`prompt`, `clause`, `errors`, `gradient`, `k`) rather than parsing
//! rendered text.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::corpus::synthetic::{triggered_categories, LEXICON};
use crate::corpus::Corpus;
use crate::digest::{stable_u64, stable_unit};
use crate::label::Label;
use crate::ledger::Phase;

use super::LlmRequest;

/// Maps a request to a completion, or to a simulated transport failure.
pub trait Rulebook: Send + Sync {
    fn respond(&self, request: &LlmRequest, seed: u64) -> Result<String, String>;
}

impl<F> Rulebook for F
where
    F: Fn(&LlmRequest, u64) -> Result<String, String> + Send + Sync,
{
    fn respond(&self, request: &LlmRequest, seed: u64) -> Result<String, String> {
        self(request, seed)
    }
}

#[derive(Clone)]
pub struct MockBackend {
    pub name: String,
    pub rulebook: Arc<dyn Rulebook>,
    pub seed: u64,
}

impl fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockBackend")
            .field("name", &self.name)
            .field("seed", &self.seed)
            .finish()
    }
}

impl MockBackend {
    pub fn new(name: impl Into<String>, rulebook: impl Rulebook + 'static, seed: u64) -> Self {
        Self {
            name: name.into(),
            rulebook: Arc::new(rulebook),
            seed,
        }
    }

    pub fn respond(&self, request: &LlmRequest) -> Result<String, String> {
        self.rulebook.respond(request, self.seed)
    }
}

fn slot<'a>(request: &'a LlmRequest, name: &str) -> &'a str {
    request.slots.get(name).map(String::as_str).unwrap_or("")
}

/// Returns the rendered request text.
pub struct Echo;

impl Rulebook for Echo {
    fn respond(&self, request: &LlmRequest, _: u64) -> Result<String, String> {
        Ok(request.text.clone())
    }
}

/// Always returns the same completion.
pub struct Fixed(pub String);

impl Rulebook for Fixed {
    fn respond(&self, _: &LlmRequest, _: u64) -> Result<String, String> {
        Ok(self.0.clone())
    }
}

/// Predicts `1` iff the clause contains `phrase` (case-insensitive).
pub struct PhraseClassifier {
    pub phrase: String,
}

impl Rulebook for PhraseClassifier {
    fn respond(&self, request: &LlmRequest, _: u64) -> Result<String, String> {
        let hit = slot(request, "clause").to_lowercase().contains(&self.phrase.to_lowercase());
        Ok(if hit { "1" } else { "0" }.into())
    }
}

/// Classifies clauses by their gold label, wrong with probability `error_rate`.
///
/// Whether a given (prompt, clause) pair is answered wrongly is a hash of the
/// seed, the prompt and the clause, so it is fixed per pair and varies across
/// prompts. Clauses missing from the table get an unparseable answer.
pub struct GoldOracle {
    labels: Arc<HashMap<String, Label>>,
    pub error_rate: f64,
}

impl GoldOracle {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let labels = corpus
            .clauses()
            .map(|(_, c)| (c.text.clone(), c.fairness))
            .collect();
        Self {
            labels: Arc::new(labels),
            error_rate: 0.0,
        }
    }

    pub fn with_error_rate(mut self, error_rate: f64) -> Self {
        self.error_rate = error_rate;
        self
    }
}

impl Rulebook for GoldOracle {
    fn respond(&self, request: &LlmRequest, seed: u64) -> Result<String, String> {
        let prompt = slot(request, "prompt");
        let clause = slot(request, "clause");
        let Some(gold) = self.labels.get(clause) else {
            return Ok("unknown clause".into());
        };
        let wrong = stable_unit(seed, &[prompt, clause]) < self.error_rate;
        let label = if wrong { gold.flipped() } else { *gold };
        Ok(format!("The answer is: {label}."))
    }
}

/// Dispatch on request phase, with a fallback for unlisted phases.
pub struct ByPhase {
    rules: HashMap<Phase, Arc<dyn Rulebook>>,
    fallback: Arc<dyn Rulebook>,
}

impl ByPhase {
    pub fn new(fallback: impl Rulebook + 'static) -> Self {
        Self {
            rules: HashMap::new(),
            fallback: Arc::new(fallback),
        }
    }

    pub fn on(mut self, phase: Phase, rule: impl Rulebook + 'static) -> Self {
        self.rules.insert(phase, Arc::new(rule));
        self
    }

    /// Same rule for the gradient-eval, score-eval and correctness-build phases.
    pub fn on_classify(self, rule: impl Rulebook + 'static) -> Self {
        let rule: Arc<dyn Rulebook> = Arc::new(rule);
        let mut s = self;
        for phase in [Phase::GradientEval, Phase::ScoreEval, Phase::CorrectnessBuild] {
            s.rules.insert(phase, Arc::clone(&rule));
        }
        s
    }
}

impl Rulebook for ByPhase {
    fn respond(&self, request: &LlmRequest, seed: u64) -> Result<String, String> {
        self.rules
            .get(&request.phase)
            .unwrap_or(&self.fallback)
            .respond(request, seed)
    }
}

/// A prompt-sensitive stand-in for a real model on the synthetic corpus.
///
/// * classify: answers `1` iff the clause contains the trigger phrase of a
///   category whose cue the prompt mentions;
/// * gradient: names the categories of the misclassified unfair clauses;
/// * edit: returns `k` rewrites, each adding a different subset of the
///   categories named in the gradient, ordered by a seeded hash.
pub struct LegalHeuristic;

fn mentioned(prompt: &str, cue: &str) -> bool {
    prompt.to_lowercase().contains(cue)
}

impl LegalHeuristic {
    fn classify(prompt: &str, clause: &str) -> Label {
        let hit = triggered_categories(clause)
            .iter()
            .any(|c| mentioned(prompt, c.cue));
        if hit {
            Label::Unfair
        } else {
            Label::Fair
        }
    }

    fn critique(prompt: &str, errors: &str) -> String {
        let missed: Vec<&str> = LEXICON
            .iter()
            .filter(|c| !mentioned(prompt, c.cue) && errors.to_lowercase().contains(c.trigger))
            .map(|c| c.cue)
            .collect();
        if missed.is_empty() {
            "The prompt is too vague about what makes a clause unfair.".into()
        } else {
            format!(
                "The prompt never explains that clauses about {} are unfair to consumers, so such clauses are labeled fair.",
                missed.join(", ")
            )
        }
    }

    fn rewrite(prompt: &str, gradient: &str, k: usize, seed: u64) -> String {
        let mut cues: Vec<&str> = LEXICON
            .iter()
            .map(|c| c.cue)
            .filter(|cue| gradient.contains(cue) && !mentioned(prompt, cue))
            .collect();
        cues.sort_by_key(|cue| stable_u64(seed, &[prompt, cue]));
        let mut out = String::from("Here are the improved prompts:\n\n");
        for j in 0..k {
            let added: Vec<&str> = if cues.is_empty() {
                Vec::new()
            } else {
                // candidate j adds a window of j+1 cues starting at offset j
                (0..=j).map(|o| cues[(j + o) % cues.len()]).collect::<Vec<_>>()
            };
            let mut added = added;
            added.sort_unstable();
            added.dedup();
            let text = if added.is_empty() {
                format!("{prompt} Think carefully about consumer rights (variant {}).", j + 1)
            } else {
                format!("{prompt} Clauses about {} are unfair.", added.join(" and "))
            };
            out.push_str(&format!("{}. {}\n", j + 1, text));
        }
        out
    }
}

impl Rulebook for LegalHeuristic {
    fn respond(&self, request: &LlmRequest, seed: u64) -> Result<String, String> {
        let prompt = slot(request, "prompt");
        Ok(match request.phase {
            Phase::GradientEval | Phase::ScoreEval | Phase::CorrectnessBuild => {
                Self::classify(prompt, slot(request, "clause")).to_string()
            }
            Phase::GradientGen => Self::critique(prompt, slot(request, "errors")),
            Phase::GradientApply => {
                let k = slot(request, "k").parse().unwrap_or(1);
                Self::rewrite(prompt, slot(request, "gradient"), k, seed)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::templates::bind;

    fn req(phase: Phase, slots: std::collections::BTreeMap<String, String>) -> LlmRequest {
        LlmRequest {
            system: None,
            text: "X".into(),
            temperature: 0.0,
            phase,
            max_tokens: 16,
            slots,
        }
    }

    #[test]
    fn echo_returns_input() {
        let m = MockBackend::new("echo", Echo, 0);
        assert_eq!(m.respond(&req(Phase::ScoreEval, bind([]))).unwrap(), "X");
    }

    #[test]
    fn phrase_classifier() {
        let m = MockBackend::new("kw", PhraseClassifier { phrase: "sole discretion".into() }, 0);
        let r = req(
            Phase::ScoreEval,
            bind([("clause", "We may remove content at our sole discretion.")]),
        );
        assert_eq!(m.respond(&r).unwrap(), "1");
    }

    #[test]
    fn heuristic_rewrites_add_missing_cues() {
        let r = req(
            Phase::GradientApply,
            bind([
                ("prompt", "Is this clause unfair?"),
                ("gradient", "clauses about arbitration, jurisdiction are unfair"),
                ("k", "4"),
            ]),
        );
        let out = LegalHeuristic.respond(&r, 1).unwrap();
        assert_eq!(out.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 4);
        assert!(out.contains("arbitration"));
    }

    #[test]
    fn deterministic_across_calls() {
        let r = req(
            Phase::GradientApply,
            bind([("prompt", "p"), ("gradient", "arbitration privacy liability"), ("k", "3")]),
        );
        assert_eq!(LegalHeuristic.respond(&r, 9), LegalHeuristic.respond(&r, 9));
    }
}

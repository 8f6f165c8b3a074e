//! The single path for chat-completion traffic.
//!
//! Every [`Gateway::complete`] invocation is recorded once in the cost ledger
//! under its request phase, whatever the number of transport attempts.

pub mod mock;
mod parse;
pub mod remote;
pub mod templates;

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Clause;
use crate::label::Label;
use crate::ledger::{CostLedger, Phase};
pub use mock::{MockBackend, Rulebook};
pub use parse::{parse_prediction, ClassificationParseError};
pub use remote::{RemoteBackend, RemoteSettings};
pub use templates::{MetaPromptSet, TemplateError, TemplatePaths};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{phase} call failed after {attempts} attempt(s): {message}")]
    Transport {
        phase: Phase,
        attempts: u32,
        message: String,
    },
    #[error(transparent)]
    Parse(#[from] ClassificationParseError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system: Option<String>,
    pub text: String,
    pub temperature: f64,
    pub phase: Phase,
    pub max_tokens: u32,
    /// Template slot bindings the text was rendered from.
    pub slots: BTreeMap<String, String>,
}

/// Per-phase sampling temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Temperatures {
    pub gradient_eval: f64,
    pub gradient_gen: f64,
    pub gradient_apply: f64,
    pub score_eval: f64,
    pub correctness_build: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Self {
            gradient_eval: 0.0,
            gradient_gen: 1.0,
            gradient_apply: 1.0,
            score_eval: 0.0,
            correctness_build: 0.0,
        }
    }
}

impl Temperatures {
    pub fn for_phase(&self, phase: Phase) -> f64 {
        match phase {
            Phase::GradientEval => self.gradient_eval,
            Phase::GradientGen => self.gradient_gen,
            Phase::GradientApply => self.gradient_apply,
            Phase::ScoreEval => self.score_eval,
            Phase::CorrectnessBuild => self.correctness_build,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Transport attempts per invocation, including the first.
    pub retry_cap: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub max_concurrent: usize,
    /// Extra classification calls after an unparseable completion.
    pub parse_retries: u32,
    pub classify_max_tokens: u32,
    pub generate_max_tokens: u32,
    pub temperatures: Temperatures,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            retry_cap: 4,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
            max_concurrent: 8,
            parse_retries: 0,
            classify_max_tokens: 16,
            generate_max_tokens: 1024,
            temperatures: Temperatures::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum LlmBackend {
    Remote(RemoteBackend),
    Mock(MockBackend),
}

impl LlmBackend {
    pub fn id(&self) -> String {
        match self {
            LlmBackend::Remote(r) => format!("remote:{}", r.settings().model),
            LlmBackend::Mock(m) => format!("mock:{}:{}", m.name, m.seed),
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, LlmBackend::Remote(_))
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.released.wait(free).expect("permit lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.released.notify_one();
    }
}

#[derive(Debug)]
pub struct Gateway {
    backend: LlmBackend,
    config: GatewayConfig,
    ledger: Arc<CostLedger>,
    permits: Permits,
}

impl Gateway {
    pub fn new(backend: LlmBackend, config: GatewayConfig) -> Self {
        Self::with_ledger(backend, config, Arc::new(CostLedger::new()))
    }

    pub fn with_ledger(backend: LlmBackend, config: GatewayConfig, ledger: Arc<CostLedger>) -> Self {
        let permits = Permits::new(config.max_concurrent);
        Self {
            backend,
            config,
            ledger,
            permits,
        }
    }

    pub fn mock(backend: MockBackend) -> Self {
        Self::new(LlmBackend::Mock(backend), GatewayConfig::default())
    }

    pub fn backend(&self) -> &LlmBackend {
        &self.backend
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn ledger(&self) -> &Arc<CostLedger> {
        &self.ledger
    }

    /// Render `template` with `slots` into a request carrying the phase defaults.
    pub fn request(
        &self,
        phase: Phase,
        template_name: &str,
        template: &str,
        system: Option<&str>,
        slots: BTreeMap<String, String>,
    ) -> Result<LlmRequest, TemplateError> {
        let text = templates::render(template_name, template, &slots)?;
        let max_tokens = match phase {
            Phase::GradientGen | Phase::GradientApply => self.config.generate_max_tokens,
            _ => self.config.classify_max_tokens,
        };
        Ok(LlmRequest {
            system: system.map(str::to_string),
            text,
            temperature: self.config.temperatures.for_phase(phase),
            phase,
            max_tokens,
            slots,
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(20);
        Duration::from_millis(
            self.config
                .backoff_base_ms
                .saturating_mul(factor)
                .min(self.config.backoff_max_ms),
        )
    }

    /// Raw completion text, retrying transport failures with exponential backoff.
    pub fn complete(&self, request: &LlmRequest) -> Result<String, GatewayError> {
        let result = match &self.backend {
            LlmBackend::Mock(m) => m.respond(request).map_err(|message| GatewayError::Transport {
                phase: request.phase,
                attempts: 1,
                message,
            }),
            LlmBackend::Remote(r) => {
                let _permit = self.permits.acquire();
                let cap = self.config.retry_cap.max(1);
                let mut attempt = 0;
                loop {
                    attempt += 1;
                    match r.call(request) {
                        Ok(text) => break Ok(text),
                        Err(f) if f.retryable && attempt < cap => {
                            log::warn!("{} attempt {attempt} failed: {}", request.phase, f.message);
                            std::thread::sleep(self.backoff(attempt - 1));
                        }
                        Err(f) => {
                            break Err(GatewayError::Transport {
                                phase: request.phase,
                                attempts: attempt,
                                message: f.message,
                            })
                        }
                    }
                }
            }
        };
        self.ledger
            .record_call(request.phase, self.backend.is_remote(), result.is_ok());
        result
    }

    /// Classify one clause under `prompt` with the classify meta-prompt.
    pub fn classify_clause(
        &self,
        meta: &MetaPromptSet,
        prompt: &str,
        clause: &Clause,
        phase: Phase,
    ) -> Result<Label, GatewayError> {
        let request = self.request(
            phase,
            "classify",
            &meta.classify_template,
            None,
            templates::bind([("prompt", prompt), ("clause", clause.text.as_str())]),
        )?;
        let mut last = None;
        for _ in 0..=self.config.parse_retries {
            let completion = self.complete(&request)?;
            match parse_prediction(&completion) {
                Ok(label) => return Ok(label),
                Err(e) => last = Some(e),
            }
        }
        Err(GatewayError::Parse(last.expect("at least one attempt")))
    }

    /// Classify clauses concurrently; results follow input order.
    pub fn classify_all(
        &self,
        meta: &MetaPromptSet,
        prompt: &str,
        clauses: &[Clause],
        phase: Phase,
    ) -> Vec<Result<Label, GatewayError>> {
        clauses
            .par_iter()
            .map(|c| self.classify_clause(meta, prompt, c, phase))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{Echo, Fixed, PhraseClassifier};
    use super::*;
    use crate::gateway::templates::bind;

    #[test]
    fn complete_echo_and_ledger() {
        let gw = Gateway::mock(MockBackend::new("echo", Echo, 0));
        let req = gw
            .request(Phase::GradientGen, "t", "{{x}}", None, bind([("x", "X")]))
            .unwrap();
        assert_eq!(req.temperature, 1.0);
        assert_eq!(gw.complete(&req).unwrap(), "X");
        let snap = gw.ledger().snapshot();
        assert_eq!(snap.actual_for(Phase::GradientGen), 1);
        assert_eq!(snap.actual_total(), 1);
        assert_eq!(snap.remote, 0);
    }

    #[test]
    fn classify_with_phrase_rule() {
        let gw = Gateway::mock(MockBackend::new("kw", PhraseClassifier { phrase: "sole discretion".into() }, 0));
        let meta = MetaPromptSet::default();
        let clause = Clause::new("c", "We may remove content at our sole discretion.", Label::Unfair);
        assert_eq!(
            gw.classify_clause(&meta, "Is it unfair?", &clause, Phase::ScoreEval).unwrap(),
            Label::Unfair
        );
    }

    #[test]
    fn unparseable_completion_is_a_typed_error() {
        let gw = Gateway::mock(MockBackend::new("fair", Fixed("fair".into()), 0));
        let clause = Clause::new("c", "text", Label::Fair);
        let err = gw
            .classify_clause(&MetaPromptSet::default(), "p", &clause, Phase::ScoreEval)
            .unwrap_err();
        assert!(matches!(err, GatewayError::Parse(_)));
        assert_eq!(gw.ledger().snapshot().actual_total(), 1);
    }

    #[test]
    fn dead_endpoint_exhausts_retries() {
        let backend = RemoteBackend::new(RemoteSettings {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "m".into(),
            auth_token_env: None,
            timeout_secs: 2,
        })
        .unwrap();
        let config = GatewayConfig {
            retry_cap: 3,
            backoff_base_ms: 1,
            backoff_max_ms: 2,
            ..GatewayConfig::default()
        };
        let gw = Gateway::new(LlmBackend::Remote(backend), config);
        let req = gw
            .request(Phase::ScoreEval, "t", "hello", None, BTreeMap::new())
            .unwrap();
        match gw.complete(&req) {
            Err(GatewayError::Transport { phase, attempts, .. }) => {
                assert_eq!(phase, Phase::ScoreEval);
                assert_eq!(attempts, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        let snap = gw.ledger().snapshot();
        assert_eq!(snap.actual_total(), 1);
        assert_eq!(snap.failed, 1);
        assert_eq!(snap.remote, 1);
    }

    #[test]
    fn missing_token_env_is_reported() {
        let err = RemoteBackend::new(RemoteSettings {
            endpoint: "http://localhost".into(),
            model: "m".into(),
            auth_token_env: Some("CLAUSEOPT_SURELY_UNSET_VAR".into()),
            timeout_secs: 1,
        })
        .unwrap_err();
        assert!(err.contains("CLAUSEOPT_SURELY_UNSET_VAR"));
    }
}

//! Declarative run configuration (TOML).
//!
//! Relative paths are resolved against the directory of the config file.
//! Secrets never appear in the file; remote sections name the environment
//! variable that holds the token instead.

use std::fmt;
use std::path::{Path, PathBuf};

use clauseopt::corpus::synthetic::SyntheticSpec;
use clauseopt::corpus::{CorpusFormat, Split};
use clauseopt::embed::RemoteEmbeddingSettings;
use clauseopt::gateway::{GatewayConfig, RemoteSettings, TemplatePaths};
use clauseopt::proxy::TrainConfig;
use clauseopt::search::{RewardKind, SearchConfig, Strategy};
use serde::{Deserialize, Serialize};

/// Problems found before any work starts. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn invalid<T>(message: impl Into<String>) -> anyhow::Result<T> {
    Err(ConfigError(message.into()).into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every per-stage seed when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub templates: TemplatePaths,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub proxy: ProxySection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_strategy() -> Strategy {
    Strategy::Mcts
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// One file with a split column. Takes precedence over `splits`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Inferred from the extension when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitFiles>,
    /// Used when neither `path` nor `splits` is given.
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFiles {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub unfair_fraction: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let d = SyntheticSpec::default();
        Self {
            seed: d.seed,
            train: d.train,
            val: d.val,
            test: d.test,
            unfair_fraction: d.unfair_fraction,
        }
    }
}

impl SyntheticSection {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.seed,
            train: self.train,
            val: self.val,
            test: self.test,
            unfair_fraction: self.unfair_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockRulebook {
    /// Keyword classifier that reacts to category cues in the prompt.
    LegalHeuristic,
    /// Gold labels with a per-(prompt, clause) seeded error rate.
    Gold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub rulebook: MockRulebook,
    /// Only read by the `gold` rulebook.
    pub error_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteSettings>,
    pub gateway: GatewayConfig,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            rulebook: MockRulebook::LegalHeuristic,
            error_rate: 0.1,
            remote: None,
            gateway: GatewayConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    Hash,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: EmbeddingKind,
    /// Hash projection width.
    pub dim: usize,
    pub seed: u64,
    /// Persistent vector cache shared across runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteEmbeddingSettings>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            provider: EmbeddingKind::Hash,
            dim: 256,
            seed: 0,
            cache: None,
            remote: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub dir: PathBuf,
    pub prompts: usize,
    pub clauses: usize,
    /// Unseen validation-split clauses classified under the same prompts; 0 disables.
    pub validation_clauses: usize,
    /// Take prompts from a finished optimize run instead of running a collection search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_run: Option<PathBuf>,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("dataset"),
            prompts: 30,
            clauses: 500,
            validation_clauses: 0,
            source_run: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub threshold: f64,
    pub train: TrainConfig,
}

impl Default for ProxySection {
    fn default() -> Self {
        Self {
            model: None,
            threshold: clauseopt::proxy::DEFAULT_THRESHOLD,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Score the initial and best prompts on `split` after optimizing.
    pub enabled: bool,
    pub split: Split,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            enabled: true,
            split: Split::Test,
        }
    }
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn resolve_opt(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        resolve(base, p);
    }
}

fn resolve_str(base: &Path, path: &mut Option<String>) {
    if let Some(p) = path {
        if Path::new(p).is_relative() {
            *p = base.join(&*p).to_string_lossy().into_owned();
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")).into())
    }

    /// Parse, resolve paths against the file's directory and validate.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        resolve_opt(base, &mut self.corpus.path);
        if let Some(s) = &mut self.corpus.splits {
            resolve(base, &mut s.train);
            resolve(base, &mut s.val);
            resolve(base, &mut s.test);
        }
        let t = &mut self.templates;
        for p in [&mut t.context, &mut t.classify, &mut t.gradient, &mut t.edit] {
            resolve_str(base, p);
        }
        resolve_opt(base, &mut self.embedding.cache);
        resolve(base, &mut self.dataset.dir);
        resolve_opt(base, &mut self.dataset.source_run);
        resolve_opt(base, &mut self.proxy.model);
    }

    /// Push the global seed into every stage that draws randomness.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.search.sampling_seed = seed;
        self.search.rng_seed = seed;
        self.dataset.seed = seed;
        self.proxy.train.seed = seed;
    }

    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.search.sampling_seed)
    }

    /// Checks shared by every subcommand. Nothing here touches the network.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.search
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        self.proxy
            .train
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        if !(self.proxy.threshold > 0.0 && self.proxy.threshold < 1.0) {
            return invalid(format!("proxy.threshold must lie in (0, 1), got {}", self.proxy.threshold));
        }
        if !(0.0..=1.0).contains(&self.backend.error_rate) {
            return invalid("backend.error_rate must lie in [0, 1]");
        }
        if self.dataset.prompts == 0 || self.dataset.clauses < 2 {
            return invalid("dataset needs at least one prompt and two clauses");
        }
        match (&self.corpus.path, &self.corpus.splits) {
            (Some(p), _) => {
                if !p.is_file() {
                    return invalid(format!("corpus file {} does not exist", p.display()));
                }
            }
            (None, Some(s)) => {
                for p in [&s.train, &s.val, &s.test] {
                    if !p.is_file() {
                        return invalid(format!("corpus file {} does not exist", p.display()));
                    }
                }
            }
            (None, None) => {
                let s = &self.corpus.synthetic;
                if s.train + s.val + s.test == 0 || !(0.0..=1.0).contains(&s.unfair_fraction) {
                    return invalid("corpus.synthetic needs clauses and an unfair_fraction in [0, 1]");
                }
            }
        }
        if self.backend.kind == BackendKind::Remote {
            let Some(remote) = &self.backend.remote else {
                return invalid("backend.kind = \"remote\" needs a [backend.remote] section");
            };
            check_env(remote.auth_token_env.as_deref())?;
        }
        match self.embedding.provider {
            EmbeddingKind::Hash => {
                if self.embedding.dim == 0 {
                    return invalid("embedding.dim must be positive");
                }
            }
            EmbeddingKind::Remote => {
                let Some(remote) = &self.embedding.remote else {
                    return invalid("embedding.provider = \"remote\" needs an [embedding.remote] section");
                };
                check_env(remote.auth_token_env.as_deref())?;
            }
        }
        if self.search.reward_kind == RewardKind::Proxy {
            self.proxy_model_path()?;
        }
        Ok(())
    }

    /// The trained model path, required for proxy scoring.
    pub fn proxy_model_path(&self) -> anyhow::Result<&Path> {
        match &self.proxy.model {
            Some(p) => Ok(p),
            None => invalid("reward_kind = \"proxy\" needs proxy.model to name a trained model"),
        }
    }
}

fn check_env(var: Option<&str>) -> anyhow::Result<()> {
    match var {
        Some(v) if std::env::var_os(v).is_none() => invalid(format!("environment variable {v} is not set")),
        _ => Ok(()),
    }
}

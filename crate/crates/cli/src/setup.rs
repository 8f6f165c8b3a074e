//! Builds the corpus, gateway and embedder a run config describes.

use std::sync::Arc;

use anyhow::Context;
use clauseopt::corpus::synthetic::generate;
use clauseopt::corpus::{load_corpus, load_split_files, Corpus, CorpusFormat, Split};
use clauseopt::embed::{Embedder, EmbeddingCache, EmbeddingProvider, HashProjection, RemoteEmbedding};
use clauseopt::gateway::mock::{ByPhase, GoldOracle, LegalHeuristic};
use clauseopt::gateway::{Gateway, LlmBackend, MetaPromptSet, MockBackend, RemoteBackend};
use clauseopt::ledger::CostLedger;

use crate::config::{BackendKind, EmbeddingKind, MockRulebook, RunConfig};

pub fn corpus(config: &RunConfig) -> anyhow::Result<Corpus> {
    let c = &config.corpus;
    let format = |path: &std::path::Path| match c.format {
        Some(f) => Ok(f),
        None => CorpusFormat::from_path(path),
    };
    if let Some(path) = &c.path {
        return Ok(load_corpus(path, format(path)?)?);
    }
    if let Some(s) = &c.splits {
        let files = [
            (Split::Train, s.train.as_path()),
            (Split::Val, s.val.as_path()),
            (Split::Test, s.test.as_path()),
        ];
        return Ok(load_split_files(&files, format(&s.train)?)?);
    }
    Ok(generate(&c.synthetic.spec()))
}

pub fn meta(config: &RunConfig) -> anyhow::Result<Arc<MetaPromptSet>> {
    Ok(Arc::new(MetaPromptSet::load(&config.templates)?))
}

pub fn backend(config: &RunConfig, corpus: &Corpus) -> anyhow::Result<LlmBackend> {
    let b = &config.backend;
    let seed = config.effective_seed();
    Ok(match b.kind {
        BackendKind::Mock => LlmBackend::Mock(match b.rulebook {
            MockRulebook::LegalHeuristic => MockBackend::new("legal-heuristic", LegalHeuristic, seed),
            MockRulebook::Gold => {
                let oracle = GoldOracle::from_corpus(corpus).with_error_rate(b.error_rate);
                MockBackend::new("gold", ByPhase::new(LegalHeuristic).on_classify(oracle), seed)
            }
        }),
        BackendKind::Remote => {
            let settings = b.remote.clone().context("missing [backend.remote]")?;
            LlmBackend::Remote(RemoteBackend::new(settings).map_err(anyhow::Error::msg)?)
        }
    })
}

/// A gateway with its own ledger.
pub fn gateway(config: &RunConfig, backend: LlmBackend) -> Arc<Gateway> {
    Arc::new(Gateway::with_ledger(
        backend,
        config.backend.gateway.clone(),
        Arc::new(CostLedger::new()),
    ))
}

pub fn embedder(config: &RunConfig) -> anyhow::Result<Embedder> {
    let e = &config.embedding;
    let provider: Arc<dyn EmbeddingProvider> = match e.provider {
        EmbeddingKind::Hash => Arc::new(HashProjection::new(e.dim, e.seed)),
        EmbeddingKind::Remote => {
            let settings = e.remote.clone().context("missing [embedding.remote]")?;
            Arc::new(RemoteEmbedding::new(settings)?)
        }
    };
    let cache = match &e.cache {
        Some(path) => EmbeddingCache::open(path)?,
        None => EmbeddingCache::in_memory(),
    };
    Ok(Embedder::new(provider, Arc::new(cache)))
}

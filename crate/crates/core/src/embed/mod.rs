//! Text embeddings, a persistent cache, and proxy feature assembly.

mod cache;
mod provider;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Clause;
use crate::Label;

pub use cache::EmbeddingCache;
pub use provider::{EmbeddingProvider, HashProjection, RemoteEmbedding, RemoteEmbeddingSettings};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("embedding integrity: {0}")]
    Integrity(String),
    #[error("embedding cache {path}: {message}")]
    Io { path: String, message: String },
    #[error("embedding cache format: {0}")]
    CacheFormat(String),
    #[error("embedding configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub provider_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn one_hot(label: Label) -> [f64; 2] {
    match label {
        Label::Fair => [1.0, 0.0],
        Label::Unfair => [0.0, 1.0],
    }
}

/// Block sizes of a feature vector: prompt embedding, clause embedding, label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub prompt_dim: usize,
    pub clause_dim: usize,
    pub label_dim: usize,
}

impl FeatureLayout {
    pub fn new(prompt_dim: usize, clause_dim: usize) -> Self {
        Self {
            prompt_dim,
            clause_dim,
            label_dim: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.prompt_dim + self.clause_dim + self.label_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureVector {
    pub fn assemble(prompt: &[f32], clause: &[f32], label: Label) -> Self {
        let mut values = Vec::with_capacity(prompt.len() + clause.len() + 2);
        values.extend(prompt.iter().map(|&v| v as f64));
        values.extend(clause.iter().map(|&v| v as f64));
        values.extend(one_hot(label));
        Self {
            values,
            layout: FeatureLayout::new(prompt.len(), clause.len()),
        }
    }
}

/// A provider paired with a cache. Cloning shares both.
#[derive(Clone)]
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    cache: Arc<EmbeddingCache>,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("provider", &self.provider.id())
            .field("cached", &self.cache.len())
            .finish()
    }
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>, cache: Arc<EmbeddingCache>) -> Self {
        Self { provider, cache }
    }

    pub fn provider_id(&self) -> String {
        self.provider.id()
    }

    pub fn dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn cache(&self) -> &Arc<EmbeddingCache> {
        &self.cache
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.dim(), self.dim())
    }

    pub fn embed(&self, text: &str) -> Result<Arc<EmbeddingVector>, EmbedError> {
        Ok(self.embed_many(&[text])?.remove(0))
    }

    /// Embed several texts, sending only cache misses to the provider in one batch.
    pub fn embed_many(&self, texts: &[&str]) -> Result<Vec<Arc<EmbeddingVector>>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let id = self.provider.id();
        let mut out: Vec<Option<Arc<EmbeddingVector>>> = texts.iter().map(|t| self.cache.get(&id, t)).collect();
        let mut missing: Vec<&str> = Vec::new();
        for (t, slot) in texts.iter().zip(&out) {
            if slot.is_none() && !missing.contains(t) {
                missing.push(t);
            }
        }
        if !missing.is_empty() {
            let vectors = self.provider.embed_batch(&missing)?;
            if vectors.len() != missing.len() {
                return Err(EmbedError::Integrity(format!(
                    "provider {id} returned {} vectors for {} texts",
                    vectors.len(),
                    missing.len()
                )));
            }
            for (text, values) in missing.iter().zip(vectors) {
                if values.len() != self.provider.dim() {
                    return Err(EmbedError::Integrity(format!(
                        "provider {id} promised dimension {}, returned {}",
                        self.provider.dim(),
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(EmbedError::Integrity(format!("provider {id} returned a non-finite value")));
                }
                let stored = self.cache.insert(
                    text,
                    EmbeddingVector {
                        values,
                        provider_id: id.clone(),
                    },
                )?;
                for (t, slot) in texts.iter().zip(out.iter_mut()) {
                    if slot.is_none() && t == text {
                        *slot = Some(Arc::clone(&stored));
                    }
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }

    pub fn featurize(&self, prompt: &str, clause: &Clause, label: Label) -> Result<FeatureVector, EmbedError> {
        let vs = self.embed_many(&[prompt, &clause.text])?;
        Ok(FeatureVector::assemble(&vs[0].values, &vs[1].values, label))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    struct Counting {
        inner: HashProjection,
        calls: AtomicUsize,
        texts: AtomicUsize,
    }

    impl EmbeddingProvider for Counting {
        fn id(&self) -> String {
            self.inner.id()
        }
        fn dim(&self) -> usize {
            self.inner.dim
        }
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.texts.fetch_add(texts.len(), Ordering::SeqCst);
            self.inner.embed_batch(texts)
        }
    }

    struct Liar;

    impl EmbeddingProvider for Liar {
        fn id(&self) -> String {
            "liar".into()
        }
        fn dim(&self) -> usize {
            8
        }
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
            Ok(texts.iter().map(|_| vec![0.5; 7]).collect())
        }
    }

    fn counting(dim: usize) -> Arc<Counting> {
        Arc::new(Counting {
            inner: HashProjection::new(dim, 1),
            calls: AtomicUsize::new(0),
            texts: AtomicUsize::new(0),
        })
    }

    #[test]
    fn cache_hit_skips_provider() {
        let p = counting(16);
        let e = Embedder::new(p.clone(), Arc::new(EmbeddingCache::in_memory()));
        let a = e.embed("abc").unwrap();
        let b = e.embed("abc").unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        assert_eq!(a.values, b.values);
        e.embed_many(&["abc", "new", "new"]).unwrap();
        assert_eq!(p.texts.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn hash_provider_unit_and_deterministic() {
        let h = HashProjection::new(16, 7);
        let v = h.embed_one("abc");
        assert_eq!(v.len(), 16);
        let norm: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(v, HashProjection::new(16, 7).embed_one("abc"));
        assert_ne!(v, HashProjection::new(16, 8).embed_one("abc"));
        let punct = h.embed_one("?!");
        assert!((punct.iter().map(|x| x * x).sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn one_hot_encoding() {
        assert_eq!(one_hot(Label::Fair), [1.0, 0.0]);
        assert_eq!(one_hot(Label::Unfair), [0.0, 1.0]);
    }

    #[test]
    fn feature_lengths() {
        let clause = Clause::new("c1", "We may terminate your account at any time.", Label::Unfair);
        let e = Embedder::new(Arc::new(HashProjection::new(16, 0)), Arc::new(EmbeddingCache::in_memory()));
        let f = e.featurize("Is it fair?", &clause, Label::Unfair).unwrap();
        assert_eq!(f.values.len(), 34);
        assert_eq!(f.layout, FeatureLayout::new(16, 16));
        assert_eq!(&f.values[32..], &[0.0, 1.0]);
        assert_eq!(f, e.featurize("Is it fair?", &clause, Label::Unfair).unwrap());
        let general = Embedder::new(Arc::new(HashProjection::new(384, 0)), Arc::new(EmbeddingCache::in_memory()));
        assert_eq!(general.featurize("p", &clause, Label::Fair).unwrap().values.len(), 770);
    }

    #[test]
    fn dimension_contract_enforced() {
        let e = Embedder::new(Arc::new(Liar), Arc::new(EmbeddingCache::in_memory()));
        assert!(matches!(e.embed("x"), Err(EmbedError::Integrity(_))));
        assert!(matches!(e.embed("  "), Err(EmbedError::EmptyText)));
    }

    #[test]
    fn presets_have_expected_dims() {
        assert_eq!(RemoteEmbeddingSettings::general("http://x").dim, 384);
        assert_eq!(RemoteEmbeddingSettings::legal("http://x").dim, 768);
    }

    #[test]
    fn persistent_cache_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let texts = ["alpha clause", "beta clause", "gamma"];
        let first: Vec<Vec<f32>> = {
            let e = Embedder::new(
                Arc::new(HashProjection::new(32, 3)),
                Arc::new(EmbeddingCache::open(&path).unwrap()),
            );
            e.embed_many(&texts).unwrap().iter().map(|v| v.values.clone()).collect()
        };
        let p = counting(32);
        let p_id = p.id();
        assert_eq!(p_id, HashProjection::new(32, 1).id());
        // same provider id as the writer
        let reopened = Arc::new(EmbeddingCache::open(&path).unwrap());
        assert_eq!(reopened.len(), 3);
        let writer_id = HashProjection::new(32, 3).id();
        for (t, v) in texts.iter().zip(&first) {
            let got = reopened.get(&writer_id, t).unwrap();
            let bits: Vec<u32> = got.values.iter().map(|x| x.to_bits()).collect();
            let want: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits, want);
        }
        // a different provider never sees these entries
        assert!(reopened.get(&p_id, texts[0]).is_none());
        drop(reopened);

        let len = std::fs::metadata(&path).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 5).unwrap();
        drop(f);
        let healed = EmbeddingCache::open(&path).unwrap();
        assert_eq!(healed.len(), 2);
        let e = Embedder::new(Arc::new(HashProjection::new(32, 3)), Arc::new(healed));
        e.embed("gamma").unwrap();
        assert_eq!(EmbeddingCache::open(&path).unwrap().len(), 3);
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a cache at all").unwrap();
        assert!(matches!(EmbeddingCache::open(&path), Err(EmbedError::CacheFormat(_))));
    }
}

//! Prompt scoring without backend calls: the proxy's correctness estimate
//! either keeps or flips each gold label.

use std::sync::Arc;

use ndarray::Array2;

use super::model::ProxyModel;
use super::ProxyError;
use crate::corpus::ClauseBatch;
use crate::embed::{Embedder, FeatureVector};
use crate::metrics::{compute_metrics, MetricReport};
use crate::search::{PromptScorer, RewardError, RewardKind};
use crate::Label;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Keep the gold label where `p >= threshold`, flip it otherwise.
pub fn flip_rule(golds: &[Label], probabilities: &[f64], threshold: f64) -> Vec<Label> {
    golds
        .iter()
        .zip(probabilities)
        .map(|(&g, &p)| if p >= threshold { g } else { g.flipped() })
        .collect()
}

pub fn flip_rule_score(golds: &[Label], probabilities: &[f64], threshold: f64) -> Result<MetricReport, ProxyError> {
    if golds.len() != probabilities.len() {
        return Err(ProxyError::Integrity(format!(
            "{} golds but {} probabilities",
            golds.len(),
            probabilities.len()
        )));
    }
    compute_metrics(&flip_rule(golds, probabilities, threshold), golds).map_err(|e| ProxyError::Integrity(e.to_string()))
}

/// Estimated metrics of `prompt` on `batch`.
pub fn proxy_score(
    model: &ProxyModel,
    prompt: &str,
    batch: &ClauseBatch,
    embedder: &Embedder,
    threshold: f64,
) -> Result<MetricReport, ProxyError> {
    model.ensure_compatible(embedder.layout(), &embedder.provider_id())?;
    let mut texts = vec![prompt];
    texts.extend(batch.clauses.iter().map(|c| c.text.as_str()));
    let vectors = embedder.embed_many(&texts)?;
    let width = model.layout.len();
    let mut x = Array2::zeros((batch.len(), width));
    for (i, clause) in batch.clauses.iter().enumerate() {
        let f = FeatureVector::assemble(&vectors[0].values, &vectors[i + 1].values, clause.fairness);
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&f.values));
    }
    let probs = model.predict_rows(x.view())?;
    flip_rule_score(&batch.golds(), probs.as_slice().expect("contiguous"), threshold)
}

/// Search reward backed by a trained proxy; macro F1 of the flipped labels.
pub struct ProxyScorer {
    model: Arc<ProxyModel>,
    embedder: Embedder,
    batch: ClauseBatch,
    threshold: f64,
}

impl ProxyScorer {
    pub fn new(model: Arc<ProxyModel>, embedder: Embedder, batch: ClauseBatch, threshold: f64) -> Result<Self, ProxyError> {
        model.ensure_compatible(embedder.layout(), &embedder.provider_id())?;
        if batch.is_empty() {
            return Err(ProxyError::Config("proxy score set is empty".into()));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ProxyError::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        let texts: Vec<&str> = batch.clauses.iter().map(|c| c.text.as_str()).collect();
        embedder.embed_many(&texts)?;
        Ok(Self {
            model,
            embedder,
            batch,
            threshold,
        })
    }

    pub fn report(&self, prompt: &str) -> Result<MetricReport, ProxyError> {
        proxy_score(&self.model, prompt, &self.batch, &self.embedder, self.threshold)
    }
}

impl PromptScorer for ProxyScorer {
    fn kind(&self) -> RewardKind {
        RewardKind::Proxy
    }

    fn score(&self, prompt: &str) -> Result<f64, RewardError> {
        self.report(prompt)
            .map(|r| r.macro_f1)
            .map_err(|e| RewardError::Proxy(e.to_string()))
    }

    fn score_set_size(&self) -> u64 {
        self.batch.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fair as F, Unfair as U};

    #[test]
    fn flip_rule_example() {
        let golds = [U, F, F, U];
        let preds = flip_rule(&golds, &[0.9, 0.2, 0.8, 0.7], 0.5);
        assert_eq!(preds, vec![U, U, F, U]);
        let r = flip_rule_score(&golds, &[0.9, 0.2, 0.8, 0.7], 0.5).unwrap();
        assert!((r.accuracy - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_correct_and_all_flipped() {
        let golds = [U, F, F, U, F];
        let r = flip_rule_score(&golds, &[1.0; 5], 0.5).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        let fair = [F; 4];
        let r = flip_rule_score(&fair, &[0.0; 4], 0.5).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.per_class[0].f1, 0.0);
        assert_eq!(r.macro_f1, 0.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(flip_rule(&[U], &[0.5], 0.5), vec![U]);
    }
}

//! Proxy prompt evaluator: predicts from embeddings whether the backend would
//! classify a clause correctly under a prompt, so candidates can be scored
//! without backend calls.

mod dataset;
mod linear;
mod mlp;
mod model;
mod score;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::embed::{EmbedError, Embedder};

pub use dataset::{
    build_correctness_dataset, prompt_id, sample_prompts_by_depth, BuildOptions, ClauseEntry, CorrectnessDataset,
    CorrectnessRecord, Provenance,
};
pub use linear::{linear_loss_and_grad, train_linear, train_linear_design, BlockDesign, Design, LinearModel};
pub use mlp::{holdout_split, train_mlp, Mlp, MlpConfig};
pub use model::{ProxyModel, ProxyNet};
pub use score::{flip_rule, flip_rule_score, proxy_score, ProxyScorer, DEFAULT_THRESHOLD};

#[derive(Debug, thiserror::Error)]
pub enum ProxyError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("proxy integrity: {0}")]
    Integrity(String),
    #[error("proxy training: {0}")]
    Training(String),
    #[error("proxy configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("proxy file format: {0}")]
    Format(String),
}

impl ProxyError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid kept strictly inside (0, 1) so a finite model never claims certainty.
pub fn probability(logit: f64) -> f64 {
    const EDGE: f64 = 1e-15;
    sigmoid(logit).clamp(EDGE, 1.0 - EDGE)
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Linear,
    Multilayer,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Linear => "linear",
            Variant::Multilayer => "multilayer",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "logreg" | "logistic" => Ok(Variant::Linear),
            "multilayer" | "mlp" => Ok(Variant::Multilayer),
            other => Err(format!("unknown proxy variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub variant: String,
    pub iterations: u64,
    pub converged: bool,
    pub loss_curve: Vec<f64>,
    #[serde(default)]
    pub val_loss_curve: Vec<f64>,
    pub final_grad_norm: Option<f64>,
    pub best_epoch: Option<u32>,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    #[serde(default)]
    pub train_records: usize,
    #[serde(default)]
    pub val_records: usize,
}

impl TrainingReport {
    pub fn new(variant: &str) -> Self {
        Self {
            variant: variant.to_string(),
            iterations: 0,
            converged: false,
            loss_curve: Vec::new(),
            val_loss_curve: Vec::new(),
            final_grad_norm: None,
            best_epoch: None,
            train_accuracy: None,
            val_accuracy: None,
            train_records: 0,
            val_records: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub max_iter: u64,
    pub c: f64,
    pub tolerance: f64,
    pub mlp: MlpConfig,
    /// Share of training records held out when no validation set is given.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Linear,
            max_iter: 1000,
            c: 1.0,
            tolerance: 1e-6,
            mlp: MlpConfig::default(),
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ProxyError> {
        let m = &self.mlp;
        let ok = self.max_iter > 0
            && self.c > 0.0
            && self.tolerance > 0.0
            && m.learning_rate > 0.0
            && (0.0..1.0).contains(&m.dropout)
            && m.batch_size > 0
            && m.patience > 0
            && m.weight_decay >= 0.0
            && m.max_epochs > 0
            && !m.hidden.is_empty()
            && m.hidden.iter().all(|&h| h > 0)
            && self.holdout_fraction > 0.0
            && self.holdout_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(ProxyError::Config(format!("invalid training config {self:?}")))
        }
    }
}

fn accuracy(p: &Array1<f64>, y: &Array1<f64>) -> f64 {
    let hits = p.iter().zip(y).filter(|(&p, &t)| (p >= 0.5) == (t >= 0.5)).count();
    hits as f64 / y.len().max(1) as f64
}

/// Train on dataset records; evaluate on `validation` if given, else on a
/// seeded holdout of the training records.
pub fn train_proxy(
    dataset: &CorrectnessDataset,
    config: &TrainConfig,
    embedder: &Embedder,
    validation: Option<&CorrectnessDataset>,
) -> Result<ProxyModel, ProxyError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ProxyError::Training("correctness dataset is empty".into()));
    }
    let (design, y) = dataset.block_features(embedder)?;
    let (train_x, train_y, val_x, val_y) = match validation {
        Some(v) if !v.is_empty() => {
            let (vx, vy) = v.block_features(embedder)?;
            (design, y, vx, vy)
        }
        _ => {
            if design.nrows() < 2 {
                return Err(ProxyError::Training("need at least two records to hold out a validation split".into()));
            }
            let (t, v) = holdout_split(design.nrows(), config.holdout_fraction, config.seed);
            (design.select(&t), y.select(Axis(0), &t), design.select(&v), y.select(Axis(0), &v))
        }
    };
    let layout = embedder.layout();
    let (net, mut report) = match config.variant {
        Variant::Linear => {
            let (m, mut report) = train_linear_design(&train_x, train_y.view(), config.c, config.max_iter, config.tolerance)?;
            let predict = |x: &BlockDesign| -> Array1<f64> {
                let w = ndarray::ArrayView1::from(&m.weights);
                x.matvec(w).mapv(|z| probability(z + m.bias))
            };
            report.train_accuracy = Some(accuracy(&predict(&train_x), &train_y));
            report.val_accuracy = Some(accuracy(&predict(&val_x), &val_y));
            (ProxyNet::Linear(m), report)
        }
        Variant::Multilayer => {
            let mlp_config = MlpConfig {
                seed: config.seed,
                ..config.mlp.clone()
            };
            let (tx, vx): (Array2<f64>, Array2<f64>) = (train_x.to_dense(), val_x.to_dense());
            let (m, report) = train_mlp(tx.view(), train_y.view(), (vx.view(), val_y.view()), &mlp_config)?;
            (ProxyNet::Multilayer(m), report)
        }
    };
    report.train_records = train_x.nrows();
    report.val_records = val_x.nrows();
    Ok(ProxyModel {
        net,
        layout,
        provider_id: embedder.provider_id(),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(1000.0).is_finite());
        assert!((softplus(-50.0) - (-50f64).exp()).abs() < 1e-30);
        assert!(probability(800.0) < 1.0 && probability(-800.0) > 0.0);
    }

    #[test]
    fn variant_names() {
        assert_eq!("mlp".parse::<Variant>().unwrap(), Variant::Multilayer);
        assert_eq!("linear".parse::<Variant>().unwrap(), Variant::Linear);
    }
}

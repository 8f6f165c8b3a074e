//! Trained proxy models and their on-disk format.
//!
//! File layout: magic `PROXYMDL`, u32 LE format version, u32 LE header
//! length, a JSON header, then every parameter as f64 LE.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linear::LinearModel;
use super::mlp::Mlp;
use super::{ProxyError, TrainingReport, Variant};
use crate::embed::{FeatureLayout, FeatureVector};

const MAGIC: &[u8; 8] = b"PROXYMDL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ProxyNet {
    Linear(LinearModel),
    Multilayer(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    pub net: ProxyNet,
    pub layout: FeatureLayout,
    pub provider_id: String,
    pub report: TrainingReport,
}

#[derive(Serialize, Deserialize)]
struct Header {
    variant: Variant,
    layout: FeatureLayout,
    provider_id: String,
    dims: Vec<usize>,
    dropout: f64,
    c: f64,
    param_count: usize,
    report: TrainingReport,
}

impl ProxyModel {
    pub fn variant(&self) -> Variant {
        match self.net {
            ProxyNet::Linear(_) => Variant::Linear,
            ProxyNet::Multilayer(_) => Variant::Multilayer,
        }
    }

    fn params(&self) -> Vec<f64> {
        match &self.net {
            ProxyNet::Linear(m) => m.params(),
            ProxyNet::Multilayer(m) => m.params(),
        }
    }

    pub fn ensure_compatible(&self, layout: FeatureLayout, provider_id: &str) -> Result<(), ProxyError> {
        if layout != self.layout {
            return Err(ProxyError::Integrity(format!(
                "model expects layout {:?}, got {layout:?}",
                self.layout
            )));
        }
        if provider_id != self.provider_id {
            return Err(ProxyError::Integrity(format!(
                "model was trained on embeddings from {}, not {provider_id}",
                self.provider_id
            )));
        }
        Ok(())
    }

    /// Probability that the backend classifies this (prompt, clause) correctly.
    pub fn predict_correctness(&self, z: &FeatureVector) -> Result<f64, ProxyError> {
        if z.layout != self.layout || z.values.len() != self.layout.len() {
            return Err(ProxyError::Integrity(format!(
                "feature layout {:?} does not match model layout {:?}",
                z.layout, self.layout
            )));
        }
        Ok(self.predict_row(&z.values))
    }

    fn predict_row(&self, z: &[f64]) -> f64 {
        match &self.net {
            ProxyNet::Linear(m) => m.predict(z),
            ProxyNet::Multilayer(m) => m.predict(z),
        }
    }

    pub fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, ProxyError> {
        if x.ncols() != self.layout.len() {
            return Err(ProxyError::Integrity(format!(
                "feature width {} does not match model layout width {}",
                x.ncols(),
                self.layout.len()
            )));
        }
        Ok(match &self.net {
            ProxyNet::Linear(m) => x.rows().into_iter().map(|r| m.predict(r.as_slice().expect("standard layout"))).collect(),
            ProxyNet::Multilayer(m) => m.predict_batch(x),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ProxyError> {
        let params = self.params();
        let (dims, dropout, c) = match &self.net {
            ProxyNet::Linear(m) => (vec![m.dim(), 1], 0.0, m.c),
            ProxyNet::Multilayer(m) => (m.dims.clone(), m.dropout, 0.0),
        };
        let header = Header {
            variant: self.variant(),
            layout: self.layout,
            provider_id: self.provider_id.clone(),
            dims,
            dropout,
            c,
            param_count: params.len(),
            report: self.report.clone(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| ProxyError::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * params.len());
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        out.extend((header.len() as u32).to_le_bytes());
        out.extend(&header);
        for p in params {
            out.extend(p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProxyError> {
        let bad = |m: &str| ProxyError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a proxy model file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(ProxyError::Format(format!("unsupported model version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let header_bytes = bytes.get(16..16 + header_len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(header_bytes).map_err(|e| ProxyError::Format(e.to_string()))?;
        let body = &bytes[16 + header_len..];
        if body.len() != 8 * header.param_count {
            return Err(ProxyError::Format(format!(
                "expected {} parameters, file holds {} bytes",
                header.param_count,
                body.len()
            )));
        }
        let params: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if header.dims.first() != Some(&header.layout.len()) {
            return Err(bad("input width does not match the recorded feature layout"));
        }
        let net = match header.variant {
            Variant::Linear => {
                if params.len() != header.layout.len() + 1 {
                    return Err(bad("linear parameter count mismatch"));
                }
                ProxyNet::Linear(LinearModel::from_params(&params, header.c))
            }
            Variant::Multilayer => {
                let dims = &header.dims;
                if dims.len() < 2 || dims.last() != Some(&1) {
                    return Err(bad("malformed layer dims"));
                }
                let mut m = Mlp {
                    dims: dims.clone(),
                    dropout: header.dropout,
                    weights: dims.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
                    biases: dims[1..].iter().map(|&d| Array1::zeros(d)).collect(),
                };
                if m.param_count() != params.len() {
                    return Err(bad("multilayer parameter count mismatch"));
                }
                m.set_params(&params);
                ProxyNet::Multilayer(m)
            }
        };
        Ok(Self {
            net,
            layout: header.layout,
            provider_id: header.provider_id,
            report: header.report,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ProxyError> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| ProxyError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ProxyError> {
        let bytes = std::fs::read(path).map_err(|e| ProxyError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

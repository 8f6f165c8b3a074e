//! Feed-forward correctness classifier: ReLU hidden layers, inverted
//! dropout, sigmoid output, trained with Adam on mean BCE.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::{probability, sigmoid, softplus, ProxyError, TrainingReport};
use crate::rng::SampleRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths from input to the single output unit.
    pub dims: Vec<usize>,
    pub dropout: f64,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub patience: u32,
    pub weight_decay: f64,
    pub max_epochs: u32,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 256, 128],
            learning_rate: 1e-3,
            dropout: 0.3,
            batch_size: 32,
            patience: 10,
            weight_decay: 1e-4,
            max_epochs: 200,
            seed: 0,
        }
    }
}

struct Cache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    logits: Array1<f64>,
}

impl Mlp {
    /// Fan-in scaled uniform initialization; ReLU layers use the He bound.
    pub fn new(input: usize, hidden: &[usize], dropout: f64, seed: u64) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut rng = SampleRng::new(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let output_layer = l == dims.len() - 2;
            let bound = if output_layer {
                (1.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| rng.uniform(-bound, bound)));
            biases.push(Array1::zeros(fan_out));
        }
        Self {
            dims,
            dropout,
            weights,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// All parameters, layer by layer: weights (row-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = params[pos];
                pos += 1;
            }
            for v in b.iter_mut() {
                *v = params[pos];
                pos += 1;
            }
        }
    }

    fn forward(&self, x: ArrayView2<f64>, mut rng: Option<&mut SampleRng>) -> Cache {
        let depth = self.weights.len();
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth - 1);
        let mut masks = Vec::with_capacity(depth - 1);
        let mut a = x.to_owned();
        for l in 0..depth - 1 {
            let z = a.dot(&self.weights[l]) + &self.biases[l];
            let mut h = z.mapv(|v| v.max(0.0));
            let mask = match rng.as_deref_mut() {
                Some(r) if self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    let m = Array2::from_shape_fn(h.raw_dim(), |_| if r.unit() < keep { 1.0 / keep } else { 0.0 });
                    h *= &m;
                    Some(m)
                }
                _ => None,
            };
            inputs.push(a);
            pre.push(z);
            masks.push(mask);
            a = h;
        }
        let logits = a.dot(&self.weights[depth - 1]).column(0).to_owned() + self.biases[depth - 1][0];
        inputs.push(a);
        Cache {
            inputs,
            pre,
            masks,
            logits,
        }
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.forward(x, None).logits.mapv(probability)
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        let x = ArrayView2::from_shape((1, z.len()), z).expect("row vector");
        self.predict_batch(x)[0]
    }

    /// Mean BCE and per-layer gradients `(dW, db)`.
    fn backward(&self, cache: &Cache, y: ArrayView1<f64>) -> (f64, Vec<Array2<f64>>, Vec<Array1<f64>>) {
        let n = y.len() as f64;
        let depth = self.weights.len();
        let mut loss = 0.0;
        let mut d_logit = Array1::zeros(y.len());
        for i in 0..y.len() {
            let z = cache.logits[i];
            loss += softplus(z) - y[i] * z;
            d_logit[i] = (sigmoid(z) - y[i]) / n;
        }
        let mut dws = vec![Array2::zeros((0, 0)); depth];
        let mut dbs = vec![Array1::zeros(0); depth];
        let mut delta = d_logit.insert_axis(Axis(1));
        for l in (0..depth).rev() {
            dws[l] = cache.inputs[l].t().dot(&delta);
            dbs[l] = delta.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let mut da = delta.dot(&self.weights[l].t());
            if let Some(m) = &cache.masks[l - 1] {
                da *= m;
            }
            Zip::from(&mut da).and(&cache.pre[l - 1]).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = da;
        }
        (loss / n, dws, dbs)
    }

    /// Mean BCE over `(x, y)` with dropout off, and the flat gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Vec<f64>) {
        let cache = self.forward(x, None);
        let (loss, dws, dbs) = self.backward(&cache, y);
        let mut grad = Vec::with_capacity(self.param_count());
        for (dw, db) in dws.iter().zip(&dbs) {
            grad.extend(dw.iter());
            grad.extend(db.iter());
        }
        (loss, grad)
    }

    pub fn mean_loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
        let logits = self.forward(x, None).logits;
        logits.iter().zip(y).map(|(&z, &t)| softplus(z) - t * z).sum::<f64>() / y.len() as f64
    }
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &Mlp) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Mlp, mut dws: Vec<Array2<f64>>, dbs: Vec<Array1<f64>>, lr: f64, decay: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for l in 0..model.weights.len() {
            dws[l].scaled_add(decay, &model.weights[l]);
            Zip::from(&mut model.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .and(&dws[l])
                .for_each(|p, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                });
            Zip::from(&mut model.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .and(&dbs[l])
                .for_each(|p, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                });
        }
    }
}

fn accuracy(model: &Mlp, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let p = model.predict_batch(x);
    let hits = p.iter().zip(y).filter(|(&p, &t)| (p >= 0.5) == (t >= 0.5)).count();
    hits as f64 / y.len() as f64
}

fn gather(x: ArrayView2<f64>, y: ArrayView1<f64>, rows: &[usize]) -> (Array2<f64>, Array1<f64>) {
    (x.select(Axis(0), rows), y.select(Axis(0), rows))
}

/// Mini-batch Adam with early stopping on validation loss. The weights with
/// the lowest validation loss are returned.
pub fn train_mlp(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    val: (ArrayView2<f64>, ArrayView1<f64>),
    config: &MlpConfig,
) -> Result<(Mlp, TrainingReport), ProxyError> {
    if x.nrows() == 0 || val.0.nrows() == 0 {
        return Err(ProxyError::Training("training and validation sets must be nonempty".into()));
    }
    if config.batch_size == 0 || config.learning_rate <= 0.0 || !(0.0..1.0).contains(&config.dropout) {
        return Err(ProxyError::Training(format!("invalid multilayer config {config:?}")));
    }
    let mut model = Mlp::new(x.ncols(), &config.hidden, config.dropout, config.seed);
    let mut adam = Adam::new(&model);
    let mut rng = SampleRng::new(config.seed ^ 0x5eed_0fd0);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut report = TrainingReport::new("multilayer");
    let mut best = (f64::INFINITY, model.clone(), 0u32);
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (bx, by) = gather(x, y, chunk);
            let cache = model.forward(bx.view(), Some(&mut rng));
            let (loss, dws, dbs) = model.backward(&cache, by.view());
            if !loss.is_finite() {
                return Err(ProxyError::Training(format!(
                    "non-finite loss at epoch {epoch}; last finite epoch loss {:?}",
                    report.loss_curve.last()
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut model, dws, dbs, config.learning_rate, config.weight_decay);
        }
        report.loss_curve.push(epoch_loss / x.nrows() as f64);
        let val_loss = model.mean_loss(val.0, val.1);
        report.val_loss_curve.push(val_loss);
        report.iterations = epoch as u64 + 1;
        if val_loss < best.0 {
            best = (val_loss, model.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                report.converged = true;
                break;
            }
        }
    }
    let model = best.1;
    report.best_epoch = Some(best.2);
    report.train_accuracy = Some(accuracy(&model, x, y));
    report.val_accuracy = Some(accuracy(&model, val.0, val.1));
    Ok((model, report))
}

/// Split off the last `fraction` of a seeded shuffle as a holdout.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    SampleRng::new(seed).shuffle(&mut idx);
    let held = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let train = idx[..n - held].to_vec();
    let val = idx[n - held..].to_vec();
    (train, val)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture() {
        let m = Mlp::new(770, &MlpConfig::default().hidden, 0.3, 0);
        assert_eq!(m.dims, vec![770, 512, 256, 128, 1]);
        let p = m.predict(&vec![0.1; 770]);
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p, m.predict(&vec![0.1; 770]));
    }

    #[test]
    fn params_round_trip() {
        let mut m = Mlp::new(4, &[3, 2], 0.0, 1);
        let p = m.params();
        let mut q = p.clone();
        q[0] += 1.0;
        m.set_params(&q);
        assert_eq!(m.params()[0], p[0] + 1.0);
        assert_eq!(m.params().len(), 4 * 3 + 3 + 3 * 2 + 2 + 2 + 1);
    }

    #[test]
    fn holdout_sizes() {
        let (t, v) = holdout_split(100, 0.1, 3);
        assert_eq!((t.len(), v.len()), (90, 10));
    }
}

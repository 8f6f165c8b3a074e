//! L2-regularized logistic regression fitted with L-BFGS.

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use std::sync::Mutex;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{probability, sigmoid, softplus, ProxyError, TrainingReport};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Inverse regularization strength used in training.
    pub c: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize, c: f64) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, z: &[f64]) -> f64 {
        self.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        probability(self.logit(z))
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn from_params(params: &[f64], c: f64) -> Self {
        let (w, b) = params.split_at(params.len() - 1);
        Self {
            weights: w.to_vec(),
            bias: b[0],
            c,
        }
    }
}

/// Row-major matrix with the two products the objective needs.
pub trait Design: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `X w`
    fn matvec(&self, w: ArrayView1<f64>) -> Array1<f64>;
    /// `Xᵀ r`
    fn t_matvec(&self, r: ArrayView1<f64>) -> Array1<f64>;
}

/// Dense rows, with a transposed copy kept contiguous for `Xᵀ r`.
struct Dense<'a> {
    x: ArrayView2<'a, f64>,
    xt: Option<Array2<f64>>,
}

impl Design for Dense<'_> {
    fn nrows(&self) -> usize {
        self.x.nrows()
    }

    fn ncols(&self) -> usize {
        self.x.ncols()
    }

    fn matvec(&self, w: ArrayView1<f64>) -> Array1<f64> {
        self.x.dot(&w)
    }

    fn t_matvec(&self, r: ArrayView1<f64>) -> Array1<f64> {
        match &self.xt {
            Some(xt) => xt.dot(&r),
            None => self.x.t().dot(&r),
        }
    }
}

/// Rows built from shared blocks: row `i` is the concatenation of
/// `blocks[b].row(index[b][i])` over `b`. Products cost O(distinct block
/// rows) instead of O(rows), which matters when many records share a
/// prompt or clause embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDesign {
    blocks: Vec<Array2<f64>>,
    index: Vec<Vec<usize>>,
}

impl BlockDesign {
    pub fn new(blocks: Vec<Array2<f64>>, index: Vec<Vec<usize>>) -> Result<Self, ProxyError> {
        if blocks.is_empty() || blocks.len() != index.len() {
            return Err(ProxyError::Integrity("need one row index per block".into()));
        }
        let n = index[0].len();
        for (b, (block, idx)) in blocks.iter().zip(&index).enumerate() {
            if idx.len() != n {
                return Err(ProxyError::Integrity(format!("block {b} indexes {} rows, expected {n}", idx.len())));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= block.nrows()) {
                return Err(ProxyError::Integrity(format!("block {b} has no row {bad}")));
            }
        }
        Ok(Self { blocks, index })
    }

    /// Keep the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            blocks: self.blocks.clone(),
            index: self.index.iter().map(|idx| rows.iter().map(|&r| idx[r]).collect()).collect(),
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ncols());
        for (block, idx) in self.blocks.iter().zip(&self.index) {
            out.extend(block.row(idx[i]).iter());
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.nrows(), self.ncols()));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            row.assign(&Array1::from(self.row(i)));
        }
        x
    }
}

impl Design for BlockDesign {
    fn nrows(&self) -> usize {
        self.index[0].len()
    }

    fn ncols(&self) -> usize {
        self.blocks.iter().map(|b| b.ncols()).sum()
    }

    fn matvec(&self, w: ArrayView1<f64>) -> Array1<f64> {
        let mut z = Array1::zeros(self.nrows());
        let mut offset = 0;
        for (block, idx) in self.blocks.iter().zip(&self.index) {
            let d = block.ncols();
            let u = block.dot(&w.slice(ndarray::s![offset..offset + d]));
            for (zi, &k) in z.iter_mut().zip(idx) {
                *zi += u[k];
            }
            offset += d;
        }
        z
    }

    fn t_matvec(&self, r: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.ncols());
        for (block, idx) in self.blocks.iter().zip(&self.index) {
            let mut summed = Array1::zeros(block.nrows());
            for (&ri, &k) in r.iter().zip(idx) {
                summed[k] += ri;
            }
            out.extend(block.t().dot(&summed));
        }
        Array1::from(out)
    }
}

/// Summed BCE plus `||w||² / (2C)` over parameters `[w; b]`, with its gradient.
pub fn linear_loss_and_grad(params: &[f64], x: ArrayView2<f64>, y: ArrayView1<f64>, c: f64) -> (f64, Vec<f64>) {
    loss_and_grad(&Dense { x, xt: None }, params, y, c)
}

fn loss_and_grad(design: &dyn Design, params: &[f64], y: ArrayView1<f64>, c: f64) -> (f64, Vec<f64>) {
    let d = design.ncols();
    let w = ArrayView1::from(&params[..d]);
    let b = params[d];
    let z = design.matvec(w) + b;
    let mut loss = 0.0;
    let mut residual = Array1::zeros(z.len());
    for i in 0..z.len() {
        loss += softplus(z[i]) - y[i] * z[i];
        residual[i] = sigmoid(z[i]) - y[i];
    }
    let penalty = 1.0 / c;
    loss += 0.5 * penalty * w.dot(&w);
    let gw = design.t_matvec(residual.view()) + &w * penalty;
    let mut grad = gw.to_vec();
    grad.push(residual.sum());
    (loss, grad)
}

type Evaluation = (Vec<f64>, f64, Vec<f64>);

struct Objective<'a> {
    design: &'a dyn Design,
    y: ArrayView1<'a, f64>,
    c: f64,
    /// The solver asks for cost and gradient at the same point separately.
    last: Mutex<Option<Evaluation>>,
}

impl Objective<'_> {
    fn eval(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let mut last = self.last.lock().expect("objective cache");
        if let Some((q, loss, grad)) = last.as_ref() {
            if q.as_slice() == p {
                return (*loss, grad.clone());
            }
        }
        let (loss, grad) = loss_and_grad(self.design, p, self.y, self.c);
        *last = Some((p.to_vec(), loss, grad.clone()));
        (loss, grad)
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self.eval(p).0)
    }
}

impl Gradient for Objective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Vec<f64>) -> Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(p).1)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Minimize until the gradient norm reaches `tol` or `max_iter` iterations pass.
pub fn train_linear(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    c: f64,
    max_iter: u64,
    tol: f64,
) -> Result<(LinearModel, TrainingReport), ProxyError> {
    let dense = Dense {
        x,
        xt: Some(x.t().as_standard_layout().into_owned()),
    };
    train_linear_design(&dense, y, c, max_iter, tol)
}

/// [`train_linear`] over any [`Design`].
pub fn train_linear_design(
    design: &dyn Design,
    y: ArrayView1<f64>,
    c: f64,
    max_iter: u64,
    tol: f64,
) -> Result<(LinearModel, TrainingReport), ProxyError> {
    if design.nrows() == 0 {
        return Err(ProxyError::Training("empty training set".into()));
    }
    if design.nrows() != y.len() {
        return Err(ProxyError::Training(format!("{} rows but {} targets", design.nrows(), y.len())));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(ProxyError::Training(format!("C must be positive, got {c}")));
    }
    let objective = Objective {
        design,
        y,
        c,
        last: Mutex::new(None),
    };
    let init = vec![0.0; design.ncols() + 1];
    let (init_loss, init_grad) = objective.eval(&init);
    let mut report = TrainingReport::new("linear");
    report.loss_curve.push(init_loss);
    if norm(&init_grad) <= tol {
        report.converged = true;
        report.final_grad_norm = Some(norm(&init_grad));
        return Ok((LinearModel::from_params(&init, c), report));
    }
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
        .with_tolerance_grad(tol)
        .and_then(|s| s.with_tolerance_cost(0.0))
        .map_err(|e| ProxyError::Training(e.to_string()))?;
    let result = Executor::new(objective, solver)
        .configure(|s| s.param(init).max_iters(max_iter))
        .run()
        .map_err(|e| ProxyError::Training(format!("optimizer failed: {e}")))?;
    let state = result.state();
    let params = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| ProxyError::Training("optimizer produced no parameters".into()))?;
    let (loss, grad) = loss_and_grad(design, &params, y, c);
    if !loss.is_finite() {
        return Err(ProxyError::Training(format!(
            "non-finite loss {loss} after {} iterations",
            state.get_iter()
        )));
    }
    report.loss_curve.push(loss);
    report.iterations = state.get_iter();
    report.final_grad_norm = Some(norm(&grad));
    report.converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    ) || norm(&grad) <= tol;
    Ok((LinearModel::from_params(&params, c), report))
}

#![allow(dead_code)]

use clauseopt::rng::SampleRng;
use ndarray::{Array1, Array2};

/// Relative error `|a - b| / max(|a| + |b|, floor)` between two gradients.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn gaussian_matrix(rng: &mut SampleRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.normal())
}

/// Target is the sign of feature 0; points within `margin` of the boundary are resampled.
pub fn separable(n: usize, dim: usize, margin: f64, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = SampleRng::new(seed);
    let mut x = gaussian_matrix(&mut rng, n, dim);
    for i in 0..n {
        while x[[i, 0]].abs() < margin {
            x[[i, 0]] = rng.normal();
        }
    }
    let y = x.column(0).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    (x, y)
}

/// Two informative coordinates at the XOR corners (±1, ±1), in equal
/// numbers, followed by `noise` independent Gaussian coordinates. The
/// target is 1 when the two signs agree.
pub fn xor(n_per_corner: usize, noise: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = SampleRng::new(seed);
    let corners = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
    let n = 4 * n_per_corner;
    let mut x = Array2::zeros((n, 2 + noise));
    let mut y = Array1::zeros(n);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    for (k, &row) in order.iter().enumerate() {
        let (a, b) = corners[k % 4];
        x[[row, 0]] = a;
        x[[row, 1]] = b;
        for j in 0..noise {
            x[[row, 2 + j]] = 0.5 * rng.normal();
        }
        y[row] = if a * b > 0.0 { 1.0 } else { 0.0 };
    }
    (x, y)
}

/// Best accuracy of any half-plane over the first two coordinates, by
/// exhaustive sweep of directions and offsets.
pub fn best_linear_accuracy_2d(x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let mut best: f64 = 0.0;
    for deg in 0..360 {
        let t = (deg as f64).to_radians();
        let (c, s) = (t.cos(), t.sin());
        for k in -300..=300 {
            let b = k as f64 / 100.0;
            let hits = (0..x.nrows())
                .filter(|&i| (c * x[[i, 0]] + s * x[[i, 1]] + b > 0.0) == (y[i] > 0.5))
                .count();
            best = best.max(hits as f64 / x.nrows() as f64);
        }
    }
    best
}

pub fn accuracy(p: &[f64], y: &Array1<f64>) -> f64 {
    let hits = p.iter().zip(y).filter(|(&p, &t)| (p >= 0.5) == (t >= 0.5)).count();
    hits as f64 / y.len() as f64
}

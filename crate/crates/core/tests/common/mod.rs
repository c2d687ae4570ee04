//! Helpers shared by the integration tests: random instances and dense
//! reference computations that do not go through the Gram-matrix route.

#![allow(dead_code)]

use std::path::PathBuf;

use fisens::classifier::{Activation, ClassifierModel, LabeledDataset};
use fisens::numerics::DenseMatrix;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random MLP with non-zero biases. `widths` includes input and class count.
pub fn random_model(widths: &[usize], hidden: Activation, rng: &mut ChaCha8Rng) -> ClassifierModel {
    let base = ClassifierModel::random(widths, hidden, rng.gen()).unwrap();
    let params: Vec<f64> = base
        .flatten()
        .iter()
        .map(|v| v + rng.gen_range(-0.3..0.3))
        .collect();
    base.with_params(&params).unwrap()
}

pub fn random_input(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Cyclic Jacobi eigendecomposition of a dense symmetric matrix.
/// Returns eigenvalues and the eigenvectors as columns of `v` (row-major).
pub fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let total: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// `gᵀ (L Lᵀ)† g` from a Jacobi eigendecomposition of the dense `p × p`
/// metric, dropping eigenvalues at or below `rel_tol · λ_max`.
pub fn dense_fi(l0: &DenseMatrix, grad: &[f64], rel_tol: f64) -> f64 {
    let (p, k) = (l0.rows(), l0.cols());
    let mut g = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            g[i * p + j] = (0..k).map(|y| l0[(i, y)] * l0[(j, y)]).sum();
        }
    }
    let (values, vectors) = jacobi_eigen(g, p);
    let top = values.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0.0;
    }
    (0..p)
        .filter(|&i| values[i] > rel_tol * top)
        .map(|i| {
            let proj: f64 = (0..p).map(|r| vectors[r * p + i] * grad[r]).sum();
            proj * proj / values[i]
        })
        .sum()
}

/// Eigenvalues of the dense metric `L Lᵀ`, descending.
pub fn dense_metric_eigenvalues(l0: &DenseMatrix) -> Vec<f64> {
    let (p, k) = (l0.rows(), l0.cols());
    let mut g = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            g[i * p + j] = (0..k).map(|y| l0[(i, y)] * l0[(j, y)]).sum();
        }
    }
    let mut values = jacobi_eigen(g, p).0;
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// A `p × p` matrix `Q₁ diag(s) Q₂` with singular values log-uniform in
/// `[1, cond]`, so its condition number is at most `cond`.
pub fn random_reparameterization(p: usize, cond: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let gaussian = |rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(p, p, |_, _| {
            // Box-Muller
            let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
    };
    let q1 = gaussian(rng).qr().q();
    let q2 = gaussian(rng).qr().q();
    let mut s: Vec<f64> = (0..p).map(|_| cond.powf(rng.gen::<f64>())).collect();
    s[0] = 1.0;
    if p > 1 {
        s[1] = cond;
    }
    let a = q1 * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * q2;
    DenseMatrix::from_fn(p, p, |i, j| a[(i, j)])
}

pub fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-sample")
}

pub fn mnist_train() -> LabeledDataset {
    let d = mnist_dir();
    fisens::io::read_idx(d.join("train-images-idx3-ubyte.gz"), d.join("train-labels-idx1-ubyte.gz")).unwrap()
}

pub fn mnist_test() -> LabeledDataset {
    let d = mnist_dir();
    fisens::io::read_idx(d.join("t10k-images-idx3-ubyte.gz"), d.join("t10k-labels-idx1-ubyte.gz")).unwrap()
}

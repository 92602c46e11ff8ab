//! One-dimensional Gauss rules and the tensor Gauss–Hermite rule on ℝ³.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::hermite::normalized_hermite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    TensorGaussHermite,
    RadialSpherical,
}

/// Nodes and weights on ℝ³ for integrals `∫ p(v) e^{-|v|²/2} dv`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly (per axis for tensor rules).
    pub degree: usize,
}

impl QuadratureRule {
    /// Tensor product of `n`-point Gauss–Hermite rules; exact through degree `2n-1` per axis.
    pub fn tensor_gauss_hermite(n: usize) -> Self {
        let (x, w) = gauss_hermite(n);
        let scale = (2.0 * std::f64::consts::PI).sqrt();
        let mut nodes = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    nodes.push([x[a], x[b], x[c]]);
                    weights.push(w[a] * w[b] * w[c] * scale.powi(3));
                }
            }
        }
        QuadratureRule {
            kind: RuleKind::TensorGaussHermite,
            nodes,
            weights,
            degree: 2 * n - 1,
        }
    }

    /// `Σ w_k f(v_k)`.
    pub fn integrate<F: Fn([f64; 3]) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * f(*v))
            .sum()
    }
}

/// Probabilists' Gauss–Hermite rule: `Σ w_k p(x_k) = E[p(Z)]`, `Z ~ N(0,1)`, weights sum to 1.
///
/// Golub–Welsch for the nodes, one Newton polish on the normalized recurrence,
/// Christoffel weights `1 / Σ_{k<n} Ĥe_k(x)²`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let offdiag: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let mut x = jacobi_eigenvalues(&vec![0.0; n], &offdiag);
    for xi in x.iter_mut() {
        for _ in 0..3 {
            // He_n/sqrt(n!) and its derivative sqrt(n) He_{n-1}/sqrt((n-1)!)
            let h = normalized_hermite(*xi, n);
            let p = h[n];
            let dp = (n as f64).sqrt() * h[n - 1];
            if dp == 0.0 {
                break;
            }
            *xi -= p / dp;
        }
    }
    let w: Vec<f64> = x
        .iter()
        .map(|&xi| {
            let h = normalized_hermite(xi, n - 1);
            1.0 / h.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    let total: f64 = w.iter().sum();
    let w = w.into_iter().map(|v| v / total).collect();
    (x, w)
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Gauss–Jacobi rule on `[-1, 1]` for the weight `(1-x)^a (1+x)^b`, `a, b > -1`.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1 && a > -1.0 && b > -1.0);
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        diag[k] = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if k + 1 < n {
            let k1 = kf + 1.0;
            let s1 = 2.0 * k1 + a + b;
            off[k] = (4.0 * k1 * (k1 + a) * (k1 + b) * (k1 + a + b) / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0)))
                .sqrt();
        }
    }
    let mu0 = (a + b + 1.0) * 2f64.ln() + libm::lgamma(a + 1.0) + libm::lgamma(b + 1.0)
        - libm::lgamma(a + b + 2.0);
    let mu0 = mu0.exp();
    let t = tridiagonal(&diag, &off);
    let eig = SymmetricEigen::new(t);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

/// Rule for `∫_0^1 t^p F(t) dt`, `p > -1`.
pub fn gauss_jacobi_unit(n: usize, p: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_jacobi(n, 0.0, p);
    let scale = 2f64.powf(-(p + 1.0));
    x.into_iter()
        .zip(w)
        .map(|(xi, wi)| (0.5 * (1.0 + xi), wi * scale))
        .unzip()
}

fn tridiagonal(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
    let n = diag.len();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = diag[i];
        if i + 1 < n {
            t[(i, i + 1)] = off[i];
            t[(i + 1, i)] = off[i];
        }
    }
    t
}

fn jacobi_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(tridiagonal(diag, off))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    e.sort_by(f64::total_cmp);
    e
}

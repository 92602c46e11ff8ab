//! Tensor Gauss–Hermite grid with sum-factorized transforms between Hermite
//! coefficients and nodal values.
//!
//! A function `u = sqrt(μ) û` is represented on the grid by the values of the
//! polynomial factor `û(z) = Σ u_α Ĥe_α(z)`, where `Ĥe_n = He_n / sqrt(n!)`.
//! Then `∫ a u w dv = E[a û ŵ]` over `Z ~ N(0, I)`, which the grid evaluates
//! exactly for polynomial integrands of per-axis degree `< 2n`.

use crate::hermite::{level_offset, CoeffTensor, MultiIndex};
use crate::quadrature::gauss_hermite;

#[derive(Debug, Clone)]
pub struct HermiteGrid {
    n: usize,
    kmax: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `basis[a * (kmax+1) + k] = Ĥe_k(z_a)`.
    basis: Vec<f64>,
    point_weights: Vec<f64>,
}

impl HermiteGrid {
    /// `n` nodes per axis, transforms available up to degree `kmax`.
    pub fn new(n: usize, kmax: usize) -> Self {
        let (nodes, weights) = gauss_hermite(n);
        let mut basis = Vec::with_capacity(n * (kmax + 1));
        for &z in &nodes {
            basis.extend(crate::hermite::normalized_hermite(z, kmax));
        }
        let mut point_weights = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    point_weights.push(weights[a] * weights[b] * weights[c]);
                }
            }
        }
        HermiteGrid {
            n,
            kmax,
            nodes,
            weights,
            basis,
            point_weights,
        }
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> usize {
        self.kmax
    }

    pub fn num_points(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn axis_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Probability weights of the grid points (sum to 1).
    pub fn point_weights(&self) -> &[f64] {
        &self.point_weights
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        [
            self.nodes[idx / (n * n)],
            self.nodes[(idx / n) % n],
            self.nodes[idx % n],
        ]
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.num_points()).map(|i| self.point(i)).collect()
    }

    #[inline]
    fn b(&self, a: usize, k: usize) -> f64 {
        self.basis[a * (self.kmax + 1) + k]
    }

    /// `E[values]` over the grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.point_weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    /// `E[a b]` over the grid.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.point_weights)
            .map(|((x, y), w)| x * y * w)
            .sum()
    }

    /// `E[a b c]` over the grid.
    pub fn inner3(&self, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i] * c[i] * self.point_weights[i];
        }
        s
    }

    /// Values of `û` at the grid points.
    pub fn evaluate(&self, g: &CoeffTensor) -> Vec<f64> {
        let n = self.n;
        let deg = match g.support_degree() {
            Some(d) => d,
            None => return vec![0.0; self.num_points()],
        };
        assert!(
            deg <= self.kmax,
            "tensor of degree {deg} exceeds grid transform degree {}",
            self.kmax
        );
        let vals = g.values();
        let l = deg;
        // s1[(a1, a2), c] = Σ_{a3} g_{a1 a2 a3} B[c][a3]
        let pairs = (l + 1) * (l + 2) / 2;
        let pair_index = |a1: usize, a2: usize| a1 * (2 * l + 3 - a1) / 2 + a2;
        let mut s1 = vec![0.0; pairs * n];
        for a1 in 0..=l {
            for a2 in 0..=(l - a1) {
                let row = pair_index(a1, a2);
                let out = &mut s1[row * n..(row + 1) * n];
                for a3 in 0..=(l - a1 - a2) {
                    let coef = vals[MultiIndex([a1, a2, a3]).index()];
                    if coef == 0.0 {
                        continue;
                    }
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += coef * self.b(c, a3);
                    }
                }
            }
        }
        // s2[a1, b, c] = Σ_{a2} s1[(a1,a2), c] B[b][a2]
        let mut s2 = vec![0.0; (l + 1) * n * n];
        for a1 in 0..=l {
            for a2 in 0..=(l - a1) {
                let row = pair_index(a1, a2);
                let src = &s1[row * n..(row + 1) * n];
                for bb in 0..n {
                    let f = self.b(bb, a2);
                    let dst = &mut s2[(a1 * n + bb) * n..(a1 * n + bb + 1) * n];
                    for c in 0..n {
                        dst[c] += f * src[c];
                    }
                }
            }
        }
        // out[a, b, c] = Σ_{a1} s2[a1, b, c] B[a][a1]
        let mut out = vec![0.0; n * n * n];
        let plane = n * n;
        for a1 in 0..=l {
            let src = &s2[a1 * plane..(a1 + 1) * plane];
            for a in 0..n {
                let f = self.b(a, a1);
                let dst = &mut out[a * plane..(a + 1) * plane];
                for i in 0..plane {
                    dst[i] += f * src[i];
                }
            }
        }
        out
    }

    /// Hermite coefficients `E[F Ĥe_α]` for `|α| ≤ degree` of nodal values `F`.
    pub fn project(&self, values: &[f64], degree: usize) -> CoeffTensor {
        assert!(degree <= self.kmax);
        assert_eq!(values.len(), self.num_points());
        let n = self.n;
        let l = degree;
        let plane = n * n;
        // t1[a1, b, c] = Σ_a w_a B[a][a1] F[a,b,c]
        let mut t1 = vec![0.0; (l + 1) * plane];
        for a in 0..n {
            let src = &values[a * plane..(a + 1) * plane];
            for a1 in 0..=l {
                let f = self.weights[a] * self.b(a, a1);
                let dst = &mut t1[a1 * plane..(a1 + 1) * plane];
                for i in 0..plane {
                    dst[i] += f * src[i];
                }
            }
        }
        // t2[(a1,a2), c] = Σ_b w_b B[b][a2] t1[a1, b, c]
        let pairs = (l + 1) * (l + 2) / 2;
        let mut t2 = vec![0.0; pairs * n];
        let mut row = 0;
        let mut rows = vec![0usize; (l + 1) * (l + 1)];
        for a1 in 0..=l {
            for a2 in 0..=(l - a1) {
                rows[a1 * (l + 1) + a2] = row;
                let dst_start = row * n;
                for bb in 0..n {
                    let f = self.weights[bb] * self.b(bb, a2);
                    let src = &t1[(a1 * n + bb) * n..(a1 * n + bb + 1) * n];
                    let dst = &mut t2[dst_start..dst_start + n];
                    for c in 0..n {
                        dst[c] += f * src[c];
                    }
                }
                row += 1;
            }
        }
        let mut out = CoeffTensor::zeros(degree);
        let ov = out.values_mut();
        for a1 in 0..=l {
            for a2 in 0..=(l - a1) {
                let src = &t2[rows[a1 * (l + 1) + a2] * n..(rows[a1 * (l + 1) + a2] + 1) * n];
                for a3 in 0..=(l - a1 - a2) {
                    let mut s = 0.0;
                    for c in 0..n {
                        s += self.weights[c] * self.b(c, a3) * src[c];
                    }
                    ov[MultiIndex([a1, a2, a3]).index()] = s;
                }
            }
        }
        debug_assert_eq!(ov.len(), level_offset(degree + 1));
        out
    }
}

//! Collision kernel `φ(u) = |u|^γ (|u|² I − u⊗u)` and its Gaussian convolutions.
//!
//! The central quantity is `c_β^{ij}(v) = (φ^{ij} ∗ (sqrt(μ) ψ_β))(v)
//! = E_W[φ^{ij}(v − W) Ĥe_β(W)]`, `W ~ N(0, I)`. With `β = 0` this is
//! `σ^{ij} = φ^{ij} ∗ μ`; in general `c_β = (−1)^{|β|} ∂^β σ / sqrt(β!)`.
//!
//! Kernels of the form `|u|^γ P(u)` with `P` a polynomial are handled by one
//! engine. For even `γ` the integrand is polynomial and the expectation factors
//! over axes exactly. Otherwise `|u|^γ P = |u|^{-λ} |u|^{2k} P` with
//! `λ = 2k − γ ∈ [1, 3)` and
//!
//! ```text
//! |u|^{-λ} = Γ(λ/2)^{-1} ∫_0^∞ t^{λ/2-1} e^{-t|u|²} dt,
//! ```
//!
//! so for each `t` the expectation again factors into one-dimensional Gaussian
//! integrals, each computed exactly by a small Gauss–Hermite rule. The
//! `t`-integral is split at 1: Gauss–Jacobi on `[0,1]`, and on `[1,∞)` the
//! substitution `t = 1/s` with Gauss–Jacobi in `s`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::hermite::{level_offset, CoeffTensor, MultiIndex};
use crate::nodal::HermiteGrid;
use crate::quadrature::{gauss_hermite, gauss_jacobi_unit, gauss_legendre};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KernelError {
    #[error("potential exponent must be finite and non-negative, got {0}")]
    BadGamma(f64),
    #[error("gamma = 0 self-check failed: max deviation {0:.3e} from the closed form")]
    SelfCheck(f64),
}

/// Hard-potential exponent `γ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Potential {
    pub gamma: f64,
}

impl Potential {
    pub fn new(gamma: f64) -> Result<Self, KernelError> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(KernelError::BadGamma(gamma));
        }
        Ok(Potential { gamma })
    }

    pub fn maxwell() -> Self {
        Potential { gamma: 0.0 }
    }

    /// `Some(q)` when `γ = 2q`, i.e. the kernel is a polynomial.
    pub fn even_power(&self) -> Option<usize> {
        let h = self.gamma / 2.0;
        if (h - h.round()).abs() < 1e-12 {
            Some(h.round() as usize)
        } else {
            None
        }
    }
}

/// The six independent entries `(i, j)`, `i ≤ j`, of a symmetric 3×3 field.
pub const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

pub fn pair_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match (i, j) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

fn norm_sq(v: [f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// `φ(v) = (|v|² I − v⊗v) |v|^γ`.
pub fn phi_matrix(v: [f64; 3], pot: Potential) -> [[f64; 3]; 3] {
    let r2 = norm_sq(v);
    let scale = if r2 == 0.0 {
        0.0
    } else {
        r2.powf(pot.gamma / 2.0)
    };
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let d = if i == j { r2 } else { 0.0 };
            m[i][j] = (d - v[i] * v[j]) * scale;
        }
    }
    m
}

/// `σ^{ij}(v)` for `γ = 0`: `(|v|² + 2) δ_ij − v_i v_j`.
pub fn sigma_gamma0_closed_form(v: [f64; 3]) -> [[f64; 3]; 3] {
    let r2 = norm_sq(v);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let d = if i == j { r2 + 2.0 } else { 0.0 };
            m[i][j] = d - v[i] * v[j];
        }
    }
    m
}

/// Polynomial in `u ∈ ℝ³`, stored as monomial exponents → coefficient.
type Poly = BTreeMap<[usize; 3], f64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out.retain(|_, c| *c != 0.0);
    out
}

fn radius_sq_poly() -> Poly {
    [([2, 0, 0], 1.0), ([0, 2, 0], 1.0), ([0, 0, 2], 1.0)]
        .into_iter()
        .collect()
}

/// A kernel `K(u) = |u|^γ P(u)` with polynomial `P`.
#[derive(Debug, Clone)]
pub struct RadialPolyKernel {
    pub gamma: f64,
    terms: Vec<([usize; 3], f64)>,
}

impl RadialPolyKernel {
    fn from_poly(gamma: f64, p: Poly) -> Self {
        RadialPolyKernel {
            gamma,
            terms: p.into_iter().collect(),
        }
    }

    /// `φ^{ij}(u) = |u|^γ (|u|² δ_ij − u_i u_j)`.
    pub fn phi(pot: Potential, i: usize, j: usize) -> Self {
        let mut p = if i == j { radius_sq_poly() } else { Poly::new() };
        let mut e = [0; 3];
        e[i] += 1;
        e[j] += 1;
        *p.entry(e).or_insert(0.0) -= 1.0;
        p.retain(|_, c| *c != 0.0);
        Self::from_poly(pot.gamma, p)
    }

    /// `|u|^γ u_j`.
    pub fn radial_vector(pot: Potential, j: usize) -> Self {
        let mut e = [0; 3];
        e[j] = 1;
        Self::from_poly(pot.gamma, [(e, 1.0)].into_iter().collect())
    }

    pub fn eval(&self, u: [f64; 3]) -> f64 {
        let r2 = norm_sq(u);
        let radial = if self.gamma == 0.0 {
            1.0
        } else if r2 == 0.0 {
            0.0
        } else {
            r2.powf(self.gamma / 2.0)
        };
        let p: f64 = self
            .terms
            .iter()
            .map(|(e, c)| c * u[0].powi(e[0] as i32) * u[1].powi(e[1] as i32) * u[2].powi(e[2] as i32))
            .sum();
        radial * p
    }

    fn poly(&self) -> Poly {
        self.terms.iter().copied().collect()
    }
}

/// Settings of the subordination integral for non-even `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SubordinationRule {
    /// Gauss–Jacobi nodes on each half of the `t`-axis.
    pub nodes_per_half: usize,
}

impl Default for SubordinationRule {
    fn default() -> Self {
        SubordinationRule { nodes_per_half: 40 }
    }
}

/// A kernel reduced to a sum over `t`-nodes of Gaussian-times-monomial terms.
struct Reduced {
    /// `(t, weight)`; a single `(0, 1)` node for polynomial kernels.
    tnodes: Vec<(f64, f64)>,
    terms: Vec<([usize; 3], f64)>,
    pmax: usize,
    /// For polynomial kernels `c_β = 0` once `|β|` exceeds the polynomial degree.
    poly_degree: Option<usize>,
}

impl Reduced {
    fn new(kernel: &RadialPolyKernel, rule: SubordinationRule) -> Self {
        let pot = Potential {
            gamma: kernel.gamma,
        };
        let (tnodes, extra) = match pot.even_power() {
            Some(q) => (vec![(0.0, 1.0)], q),
            None => {
                let k = ((kernel.gamma + 1.0) / 2.0).ceil() as usize;
                let lambda = 2.0 * k as f64 - kernel.gamma;
                let norm = 1.0 / libm::tgamma(lambda / 2.0);
                let n = rule.nodes_per_half;
                let mut nodes = Vec::with_capacity(2 * n);
                let (t, w) = gauss_jacobi_unit(n, lambda / 2.0 - 1.0);
                nodes.extend(t.into_iter().zip(w).map(|(t, w)| (t, w * norm)));
                let (s, w) = gauss_jacobi_unit(n, (1.0 - lambda) / 2.0);
                nodes.extend(
                    s.into_iter()
                        .zip(w)
                        .map(|(s, w)| (1.0 / s, w * s.powf(-1.5) * norm)),
                );
                (nodes, k)
            }
        };
        let mut p = kernel.poly();
        let r2 = radius_sq_poly();
        for _ in 0..extra {
            p = poly_mul(&p, &r2);
        }
        let terms: Vec<_> = p.into_iter().collect();
        let pmax = terms
            .iter()
            .flat_map(|(e, _)| e.iter().copied())
            .max()
            .unwrap_or(0);
        let poly_degree = pot
            .even_power()
            .map(|_| terms.iter().map(|(e, _)| e[0] + e[1] + e[2]).max().unwrap_or(0));
        Reduced {
            tnodes,
            terms,
            pmax,
            poly_degree,
        }
    }

    /// Per-axis factors `E_{n,p}(x,t) = E_W[e^{-t(x-W)²} (x-W)^p Ĥe_n(W)]`, laid out `[q][n][p]`.
    fn axis_factors(&self, x: f64, nmax: usize) -> Vec<f64> {
        let pw = self.pmax + 1;
        let nq = (nmax + self.pmax) / 2 + 1;
        let rule = gh_cached(nq);
        let (z, w) = (&rule.0, &rule.1);
        let mut out = vec![0.0; self.tnodes.len() * (nmax + 1) * pw];
        let mut pows = vec![0.0; pw];
        for (qi, &(t, _)) in self.tnodes.iter().enumerate() {
            let s = 1.0 + 2.0 * t;
            let kappa = t / s;
            let mean = 2.0 * t * x / s;
            let sd = 1.0 / s.sqrt();
            let pref = (-kappa * x * x).exp() / s.sqrt();
            let block = &mut out[qi * (nmax + 1) * pw..(qi + 1) * (nmax + 1) * pw];
            for (zk, wk) in z.iter().zip(w.iter()) {
                let y = mean + sd * zk;
                let d = x - y;
                pows[0] = 1.0;
                for p in 1..pw {
                    pows[p] = pows[p - 1] * d;
                }
                let he = crate::hermite::normalized_hermite(y, nmax);
                for n in 0..=nmax {
                    let f = wk * he[n];
                    for p in 0..pw {
                        block[n * pw + p] += f * pows[p];
                    }
                }
            }
            for v in block.iter_mut() {
                *v *= pref;
            }
        }
        out
    }
}

fn gh_cached(n: usize) -> std::rc::Rc<(Vec<f64>, Vec<f64>)> {
    thread_local! {
        static CACHE: std::cell::RefCell<BTreeMap<usize, std::rc::Rc<(Vec<f64>, Vec<f64>)>>> =
            const { std::cell::RefCell::new(BTreeMap::new()) };
    }
    CACHE.with(|c| {
        c.borrow_mut()
            .entry(n)
            .or_insert_with(|| std::rc::Rc::new(gauss_hermite(n)))
            .clone()
    })
}

/// Pointwise convolutions `(K ∗ (sqrt(μ) f))(v)` for a fixed kernel.
pub struct PointConvolver {
    reduced: Reduced,
}

impl PointConvolver {
    pub fn new(kernel: &RadialPolyKernel, rule: SubordinationRule) -> Self {
        PointConvolver {
            reduced: Reduced::new(kernel, rule),
        }
    }

    /// `(K ∗ (sqrt(μ) f))(v)`.
    pub fn eval(&self, f: &CoeffTensor, v: [f64; 3]) -> f64 {
        let deg = match f.support_degree() {
            Some(d) => d,
            None => return 0.0,
        };
        let r = &self.reduced;
        let pw = r.pmax + 1;
        let ax: Vec<Vec<f64>> = v.iter().map(|&x| r.axis_factors(x, deg)).collect();
        let stride = (deg + 1) * pw;
        let mut total = 0.0;
        for (i, &fb) in f.values().iter().enumerate() {
            if fb == 0.0 {
                continue;
            }
            let b = MultiIndex::from_index_fast(i);
            if let Some(pd) = r.poly_degree {
                if b.order() > pd {
                    continue;
                }
            }
            let mut acc = 0.0;
            for (q, &(_, wq)) in r.tnodes.iter().enumerate() {
                let mut s = 0.0;
                for (e, c) in &r.terms {
                    s += c
                        * ax[0][q * stride + b.0[0] * pw + e[0]]
                        * ax[1][q * stride + b.0[1] * pw + e[1]]
                        * ax[2][q * stride + b.0[2] * pw + e[2]];
                }
                acc += wq * s;
            }
            total += fb * acc;
        }
        total
    }
}

/// `σ^{ij}(v) = (φ^{ij} ∗ μ)(v)`.
pub fn sigma_matrix(v: [f64; 3], pot: Potential) -> [[f64; 3]; 3] {
    let g = CoeffTensor::ground(0);
    let mut m = [[0.0; 3]; 3];
    for &(i, j) in &PAIRS {
        let k = RadialPolyKernel::phi(pot, i, j);
        let val = PointConvolver::new(&k, SubordinationRule::default()).eval(&g, v);
        m[i][j] = val;
        m[j][i] = val;
    }
    m
}

/// `σ^i(v) = Σ_j (φ^{ij} ∗ (v_j μ))(v) = Σ_j σ^{ij}(v) v_j`.
pub fn sigma_vector(v: [f64; 3], pot: Potential) -> [f64; 3] {
    let s = sigma_matrix(v, pot);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = (0..3).map(|j| s[i][j] * v[j]).sum();
    }
    out
}

/// `(φ^{ij} ∗ (sqrt(μ) f))(v_k)` at each point.
pub fn conv_sqrtmu(f: &CoeffTensor, i: usize, j: usize, points: &[[f64; 3]], pot: Potential) -> Vec<f64> {
    let c = PointConvolver::new(&RadialPolyKernel::phi(pot, i, j), SubordinationRule::default());
    points.iter().map(|&v| c.eval(f, v)).collect()
}

/// Independent reference evaluation of `(K ∗ (sqrt(μ) f))(v)` by a radial–spherical
/// product rule centred at `v`: Gauss–Legendre in `r ∈ [0, |v| + 12]` and in `cos θ`,
/// trapezoid in the azimuth.
pub fn conv_reference(
    kernel: &RadialPolyKernel,
    f: &CoeffTensor,
    v: [f64; 3],
    nr: usize,
    nang: usize,
) -> f64 {
    let rmax = norm_sq(v).sqrt() + 12.0;
    let (xr, wr) = gauss_legendre(nr);
    let (xc, wc) = gauss_legendre(nang);
    let nphi = 2 * nang;
    let mu_norm = (2.0 * std::f64::consts::PI).powf(-1.5);
    let mut total = 0.0;
    for (x, wx) in xr.iter().zip(&wr) {
        let r = 0.5 * rmax * (x + 1.0);
        let wrad = 0.5 * rmax * wx * r * r;
        for (ct, wct) in xc.iter().zip(&wc) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for k in 0..nphi {
                let ph = 2.0 * std::f64::consts::PI * k as f64 / nphi as f64;
                let u = [r * st * ph.cos(), r * st * ph.sin(), r * ct];
                let w = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
                // sqrt(μ) ψ-expansion of f at w equals μ(w) f̂(w)
                let mu = mu_norm * (-norm_sq(w) / 2.0).exp();
                if mu < 1e-300 {
                    continue;
                }
                let fhat = f.eval_point(w) / mu.sqrt();
                total += wrad * wct * (2.0 * std::f64::consts::PI / nphi as f64)
                    * kernel.eval(u)
                    * mu
                    * fhat;
            }
        }
    }
    total
}

/// Tables `c_β^{ij}` at every point of a [`HermiteGrid`] for `|β| ≤ degree`.
#[derive(Debug, Clone)]
pub struct ConvolutionTables {
    pub gamma: f64,
    /// Requested maximal `|β|`.
    pub degree: usize,
    /// Levels actually stored; higher levels vanish identically for polynomial kernels.
    pub stored_degree: usize,
    npts: usize,
    /// Layout `[pair][mode][point]`.
    data: Vec<f64>,
}

impl ConvolutionTables {
    pub fn build(pot: Potential, grid: &HermiteGrid, degree: usize, rule: SubordinationRule) -> Self {
        let n = grid.points_per_axis();
        let npts = grid.num_points();
        let reduced: Vec<Reduced> = PAIRS
            .iter()
            .map(|&(i, j)| Reduced::new(&RadialPolyKernel::phi(pot, i, j), rule))
            .collect();
        let stored_degree = match reduced[0].poly_degree {
            Some(pd) => pd.min(degree),
            None => degree,
        };
        let modes = level_offset(stored_degree + 1);
        let mut data = vec![0.0; 6 * modes * npts];
        let nodes = grid.axis_nodes();
        for (pi, red) in reduced.iter().enumerate() {
            let pw = red.pmax + 1;
            let nt = red.tnodes.len();
            let stride = (stored_degree + 1) * pw;
            let ax: Vec<Vec<f64>> = nodes
                .iter()
                .map(|&x| red.axis_factors(x, stored_degree))
                .collect();
            let nterm = red.terms.len();
            let mut left = DMatrix::<f64>::zeros(n * n, nt * nterm);
            let mut right = DMatrix::<f64>::zeros(nt * nterm, n);
            for mode in 0..modes {
                let b = MultiIndex::from_index(mode);
                for (q, &(_, wq)) in red.tnodes.iter().enumerate() {
                    for (ti, (e, c)) in red.terms.iter().enumerate() {
                        let col = q * nterm + ti;
                        for a in 0..n {
                            let fa = wq * c * ax[a][q * stride + b.0[0] * pw + e[0]];
                            for bb in 0..n {
                                left[(a * n + bb, col)] = fa * ax[bb][q * stride + b.0[1] * pw + e[1]];
                            }
                        }
                        for cc in 0..n {
                            right[(col, cc)] = ax[cc][q * stride + b.0[2] * pw + e[2]];
                        }
                    }
                }
                let prod = &left * &right;
                let dst = &mut data[(pi * modes + mode) * npts..(pi * modes + mode + 1) * npts];
                for ab in 0..n * n {
                    for cc in 0..n {
                        dst[ab * n + cc] = prod[(ab, cc)];
                    }
                }
            }
        }
        ConvolutionTables {
            gamma: pot.gamma,
            degree,
            stored_degree,
            npts,
            data,
        }
    }

    pub fn from_raw(gamma: f64, degree: usize, stored_degree: usize, npts: usize, data: Vec<f64>) -> Option<Self> {
        if data.len() != 6 * level_offset(stored_degree + 1) * npts {
            return None;
        }
        Some(ConvolutionTables {
            gamma,
            degree,
            stored_degree,
            npts,
            data,
        })
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn num_points(&self) -> usize {
        self.npts
    }

    fn modes(&self) -> usize {
        level_offset(self.stored_degree + 1)
    }

    /// `c_β^{ij}` at the grid points, `None` when `|β|` exceeds the stored levels (then it vanishes).
    pub fn entry(&self, pair: usize, beta: MultiIndex) -> Option<&[f64]> {
        if beta.order() > self.stored_degree {
            return None;
        }
        let m = self.modes();
        let start = (pair * m + beta.index()) * self.npts;
        Some(&self.data[start..start + self.npts])
    }

    /// `(φ^{ij} ∗ (sqrt(μ) f))` at the grid points, one field per entry of [`PAIRS`].
    pub fn conv(&self, f: &CoeffTensor) -> Vec<Vec<f64>> {
        if let Some(d) = f.support_degree() {
            assert!(
                d <= self.degree,
                "convolution of a degree-{d} tensor needs tables of degree ≥ {d}, have {}",
                self.degree
            );
        }
        let m = self.modes();
        let mut out = vec![vec![0.0; self.npts]; 6];
        for (idx, &fb) in f.values().iter().enumerate().take(m) {
            if fb == 0.0 {
                continue;
            }
            for (pi, field) in out.iter_mut().enumerate() {
                let src = &self.data[(pi * m + idx) * self.npts..(pi * m + idx + 1) * self.npts];
                for (o, s) in field.iter_mut().zip(src) {
                    *o += fb * s;
                }
            }
        }
        out
    }

    /// `σ^{ij}` at the grid points.
    pub fn sigma(&self) -> Vec<Vec<f64>> {
        (0..6)
            .map(|p| self.entry(p, MultiIndex::ZERO).unwrap().to_vec())
            .collect()
    }

    /// `∂^β σ^{ij} = (−1)^{|β|} sqrt(β!) c_β^{ij}` at the grid points.
    pub fn d_sigma(&self, beta: MultiIndex) -> Vec<Vec<f64>> {
        let s = if beta.order() % 2 == 0 { 1.0 } else { -1.0 } * beta.factorial().sqrt();
        (0..6)
            .map(|p| match self.entry(p, beta) {
                Some(e) => e.iter().map(|x| s * x).collect(),
                None => vec![0.0; self.npts],
            })
            .collect()
    }

    /// Largest deviation of the stored `σ` from the `γ = 0` closed form.
    pub fn gamma0_self_check(&self, grid: &HermiteGrid) -> Result<f64, KernelError> {
        let sigma = self.sigma();
        let mut worst: f64 = 0.0;
        for k in 0..self.npts {
            let v = grid.point(k);
            let exact = sigma_gamma0_closed_form(v);
            for (p, &(i, j)) in PAIRS.iter().enumerate() {
                let scale = 1.0 + norm_sq(v);
                worst = worst.max((sigma[p][k] - exact[i][j]).abs() / scale);
            }
        }
        if worst > 1e-10 {
            return Err(KernelError::SelfCheck(worst));
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn phi_examples() {
        let m = phi_matrix([1.0, 0.0, 0.0], Potential::maxwell());
        assert_eq!(m, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let m = phi_matrix([1.0, 1.0, 0.0], Potential { gamma: 2.0 });
        let e = [[2.0, -2.0, 0.0], [-2.0, 2.0, 0.0], [0.0, 0.0, 4.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - e[i][j]).abs() < 1e-14);
            }
        }
        assert_eq!(phi_matrix([0.0; 3], Potential { gamma: 1.0 }), [[0.0; 3]; 3]);
    }

    #[test]
    fn phi_null_vector_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let m = phi_matrix(v, Potential { gamma: 1.3 });
            for i in 0..3 {
                let s: f64 = (0..3).map(|j| m[i][j] * v[j]).sum();
                assert!(s.abs() < 1e-12);
            }
            let x = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let q: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| x[i] * m[i][j] * x[j]).sum();
            assert!(q >= -1e-12);
        }
    }

    #[test]
    fn sigma_gamma0_values() {
        let s = sigma_matrix([0.0; 3], Potential::maxwell());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 0.0 };
                assert!((s[i][j] - e).abs() < 1e-13);
            }
        }
        let v = [0.4, -1.2, 2.1];
        let s = sigma_matrix(v, Potential::maxwell());
        let c = sigma_gamma0_closed_form(v);
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                assert!((s[i][j] - c[i][j]).abs() < 1e-12);
                quad += s[i][j] * v[i] * v[j];
            }
        }
        assert!((quad - 2.0 * norm_sq(v)).abs() < 1e-11);
        assert_eq!(sigma_vector([0.0; 3], Potential::maxwell()), [0.0; 3]);
    }

    #[test]
    fn subordination_matches_reference_rule() {
        let pot = Potential { gamma: 1.0 };
        let f = CoeffTensor::random_damped(&mut ChaCha8Rng::seed_from_u64(5), 3, 3);
        for &(i, j) in &[(0, 0), (0, 2)] {
            let k = RadialPolyKernel::phi(pot, i, j);
            let conv = PointConvolver::new(&k, SubordinationRule::default());
            for v in [[0.3, -0.2, 0.5], [1.5, 0.7, -2.0]] {
                let a = conv.eval(&f, v);
                let b = conv_reference(&k, &f, v, 80, 40);
                assert!(close(a, b, 1e-8), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn fractional_gamma_matches_reference_rule() {
        let pot = Potential { gamma: 0.5 };
        let f = CoeffTensor::ground(0);
        let k = RadialPolyKernel::phi(pot, 1, 1);
        let conv = PointConvolver::new(&k, SubordinationRule::default());
        let v = [0.9, -0.4, 1.1];
        let a = conv.eval(&f, v);
        let b = conv_reference(&k, &f, v, 80, 40);
        assert!(close(a, b, 1e-8), "{a} vs {b}");
    }

    #[test]
    fn divergence_identity_by_finite_differences() {
        // Σ_i ∂_i σ^i = −2 Σ_j (|u|^γ u_j) ∗ (v_j μ)
        for gamma in [0.0, 1.0] {
            let pot = Potential { gamma };
            let v = [0.4, 0.3, -0.8];
            let h = 1e-4;
            let mut div = 0.0;
            for i in 0..3 {
                let mut vp = v;
                let mut vm = v;
                vp[i] += h;
                vm[i] -= h;
                div += (sigma_vector(vp, pot)[i] - sigma_vector(vm, pot)[i]) / (2.0 * h);
            }
            let mut rhs = 0.0;
            for j in 0..3 {
                // v_j μ = sqrt(μ) ψ_{e_j}
                let f = CoeffTensor::basis(MultiIndex::unit(j), 1);
                let k = RadialPolyKernel::radial_vector(pot, j);
                rhs += -2.0 * PointConvolver::new(&k, SubordinationRule::default()).eval(&f, v);
            }
            assert!((div - rhs).abs() < 1e-6, "gamma={gamma}: {div} vs {rhs}");
            if gamma == 0.0 {
                assert!((div - 6.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sigma_growth_bounds() {
        for gamma in [0.0, 1.0] {
            let pot = Potential { gamma };
            let mut worst2: f64 = 0.0;
            let mut worst1: f64 = 0.0;
            for r in [0.0f64, 1.0, 3.0, 6.0, 10.0] {
                let v = [r * 0.6, -r * 0.8, 0.0];
                let bracket = (1.0 + r * r).sqrt();
                let s = sigma_matrix(v, pot);
                let sv = sigma_vector(v, pot);
                for i in 0..3 {
                    worst1 = worst1.max(sv[i].abs() / bracket.powf(gamma + 1.0));
                    for j in 0..3 {
                        worst2 = worst2.max(s[i][j].abs() / bracket.powf(gamma + 2.0));
                    }
                }
            }
            assert!(worst1.is_finite() && worst1 < 10.0);
            assert!(worst2.is_finite() && worst2 < 10.0);
        }
    }

    #[test]
    fn conv_of_ground_state_is_sigma_and_ladder_shift() {
        let pot = Potential::maxwell();
        let pts = [[0.0, 0.0, 0.0], [0.5, -1.0, 0.2]];
        let c = conv_sqrtmu(&CoeffTensor::ground(0), 1, 2, &pts, pot);
        for (k, v) in pts.iter().enumerate() {
            assert!((c[k] - sigma_gamma0_closed_form(*v)[1][2]).abs() < 1e-13);
        }
        assert_eq!(conv_sqrtmu(&CoeffTensor::zeros(2), 0, 0, &pts, pot), vec![0.0, 0.0]);
        // φ ∗ (sqrt(μ) A₊,1 ψ₀) = −∂₁ (φ ∗ μ)
        let e1 = CoeffTensor::ground(0).raise(0);
        let v = [0.7, 0.1, -0.3];
        let h = 1e-5;
        for pot in [Potential::maxwell(), Potential { gamma: 1.0 }] {
            let lhs = conv_sqrtmu(&e1, 1, 1, &[v], pot)[0];
            let fd = (sigma_matrix([v[0] + h, v[1], v[2]], pot)[1][1]
                - sigma_matrix([v[0] - h, v[1], v[2]], pot)[1][1])
                / (2.0 * h);
            assert!((lhs + fd).abs() < 1e-6);
        }
    }

    #[test]
    fn tables_match_pointwise_and_closed_form() {
        let grid = HermiteGrid::new(6, 4);
        let t0 = ConvolutionTables::build(Potential::maxwell(), &grid, 3, SubordinationRule::default());
        assert_eq!(t0.stored_degree, 2);
        assert!(t0.gamma0_self_check(&grid).unwrap() < 1e-12);
        // ∂₁∂₂σ^{12} = −1 for γ = 0
        let d = t0.d_sigma(MultiIndex::new(1, 1, 0));
        assert!(d[pair_index(0, 1)].iter().all(|x| (x + 1.0).abs() < 1e-12));

        let pot = Potential { gamma: 1.0 };
        let t1 = ConvolutionTables::build(pot, &grid, 2, SubordinationRule::default());
        let f = CoeffTensor::random_damped(&mut ChaCha8Rng::seed_from_u64(9), 2, 2);
        let fields = t1.conv(&f);
        let conv = PointConvolver::new(&RadialPolyKernel::phi(pot, 0, 1), SubordinationRule::default());
        for k in [0, 40, 150, 215] {
            let a = fields[1][k];
            let b = conv.eval(&f, grid.point(k));
            assert!(close(a, b, 1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn bad_gamma_rejected() {
        assert!(Potential::new(-0.5).is_err());
        assert!(Potential::new(f64::NAN).is_err());
        assert!(Potential::new(1.0).is_ok());
    }
}

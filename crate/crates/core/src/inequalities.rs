//! Numerical checks of the operator identities and inequalities: Leibniz rule
//! for `∇ᵐ_{𝓗₊}`, trilinear bounds, the coercivity decomposition of `𝓛₁` and
//! the ladder inequalities.
//!
//! Identities report a residual and count tolerance breaches; inequalities
//! report the measured constant (largest observed ratio of the two sides).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hermite::{factorial, level_indices, CoeffTensor, MultiIndex};
use crate::kernel::pair_index;
use crate::operators::LandauOperators;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum InequalityError {
    #[error("{what} has support degree {support}, but m = {m} at truncation {degree} allows at most {allowed}")]
    Support {
        what: &'static str,
        support: usize,
        m: usize,
        degree: usize,
        allowed: usize,
    },
    #[error("truncation degree {degree} leaves no interior modes for m = {m}")]
    NoInterior { degree: usize, m: usize },
    #[error("at least one sample is required")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SampleRecord {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    pub violations: usize,
    pub measured: BTreeMap<String, f64>,
    pub details: Vec<SampleRecord>,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>, seed: u64, tolerance: f64) -> Self {
        EstimateReport {
            name: name.into(),
            seed,
            samples: 0,
            tolerance,
            max_ratio: None,
            max_residual: None,
            violations: 0,
            measured: BTreeMap::new(),
            details: Vec::new(),
        }
    }

    /// Records an identity residual and counts it as a violation above tolerance.
    pub fn residual(&mut self, label: impl Into<String>, r: f64) {
        self.max_residual = Some(self.max_residual.map_or(r, |m| m.max(r)));
        if !(r <= self.tolerance) {
            self.violations += 1;
        }
        self.details.push(SampleRecord {
            label: label.into(),
            value: r,
        });
    }

    pub fn ratio(&mut self, label: impl Into<String>, r: f64) {
        self.max_ratio = Some(self.max_ratio.map_or(r, |m| m.max(r)));
        if !r.is_finite() {
            self.violations += 1;
        }
        self.details.push(SampleRecord {
            label: label.into(),
            value: r,
        });
    }

    /// Folds another report's counters and maxima into this one.
    pub fn merge(&mut self, other: &EstimateReport) {
        self.samples += other.samples;
        self.violations += other.violations;
        if let Some(r) = other.max_residual {
            self.max_residual = Some(self.max_residual.map_or(r, |m| m.max(r)));
        }
        if let Some(r) = other.max_ratio {
            self.max_ratio = Some(self.max_ratio.map_or(r, |m| m.max(r)));
        }
        for (k, v) in &other.measured {
            self.measured.insert(format!("{}.{}", other.name, k), *v);
        }
        self.details.extend(other.details.iter().cloned());
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Reproducible generator for sample `sample`, role `role` (e.g. f, g, h) of a run seeded `seed`.
///
/// Each `(sample, role)` has its own stream, so draws for different truncations nest.
pub fn sample_rng(seed: u64, sample: u64, role: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(sample * 8 + role);
    r
}

/// Random tensor at truncation `degree` supported on `|α| ≤ support`.
pub fn random_interior(seed: u64, sample: u64, role: u64, degree: usize, support: usize) -> CoeffTensor {
    CoeffTensor::random_damped(&mut sample_rng(seed, sample, role), degree, support)
}

fn interior_support(degree: usize, m: usize) -> Result<usize, InequalityError> {
    degree
        .checked_sub(m + 1)
        .ok_or(InequalityError::NoInterior { degree, m })
}

fn check_support(what: &'static str, g: &CoeffTensor, m: usize, degree: usize) -> Result<(), InequalityError> {
    let allowed = interior_support(degree, m)?;
    if let Some(s) = g.support_degree() {
        if s > allowed {
            return Err(InequalityError::Support {
                what,
                support: s,
                m,
                degree,
                allowed,
            });
        }
    }
    Ok(())
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn rel_diff(a: &CoeffTensor, b: &CoeffTensor) -> f64 {
    a.max_abs_diff(b) / a.max_abs().max(b.max_abs()).max(1.0)
}

/// Residuals of the Leibniz rules at order `m`:
///
/// * `A^α ℙ_{≤N−m} Γ(f,g) = Σ_{β≤α} C(α,β) ℙ_{≤N} Γ(A^β f, A^{α−β} g)`,
/// * `A^α ℙ_{≤N−m}(σ^{ij} G) = Σ_{β≤α} C(α,β) (−1)^{|β|} ℙ_{≤N}((∂^β σ^{ij}) A^{α−β} G)`,
///
/// maximised over `|α| = m` (and `(i,j)`), relative to the coefficient scale.
pub fn leibniz_residuals(
    ops: &LandauOperators,
    m: usize,
    f: &CoeffTensor,
    g: &CoeffTensor,
) -> Result<(f64, f64), InequalityError> {
    let n = ops.degree;
    check_support("f", f, m, n)?;
    check_support("g", g, m, n)?;
    let grid = ops.grid();
    let gamma_fg = ops.apply_gamma(f, g).with_degree(n - m);
    let ghat = grid.evaluate(g);
    let sigma: Vec<Vec<f64>> = (0..6).map(|p| ops.tables().d_sigma(MultiIndex::ZERO)[p].clone()).collect();
    let mut res_gamma: f64 = 0.0;
    let mut res_scalar: f64 = 0.0;
    for alpha in level_indices(m) {
        let lhs = gamma_fg.raise_multi(alpha).with_degree(n);
        let mut rhs = CoeffTensor::zeros(n);
        for beta in alpha.sub_indices() {
            let rest = alpha.checked_sub(&beta).unwrap();
            let term = ops.apply_gamma(&f.raise_multi(beta), &g.raise_multi(rest));
            rhs.axpy(alpha.binomial(&beta), &term);
        }
        res_gamma = res_gamma.max(rel_diff(&lhs, &rhs));

        for p in 0..6 {
            let prod: Vec<f64> = sigma[p].iter().zip(&ghat).map(|(s, x)| s * x).collect();
            let lhs = grid.project(&prod, n - m).raise_multi(alpha).with_degree(n);
            let mut rhs = CoeffTensor::zeros(n);
            for beta in alpha.sub_indices() {
                let rest = alpha.checked_sub(&beta).unwrap();
                let ds = &ops.tables().d_sigma(beta)[p];
                let h = grid.evaluate(&g.raise_multi(rest));
                let prod: Vec<f64> = ds.iter().zip(&h).map(|(s, x)| s * x).collect();
                rhs.axpy(alpha.binomial(&beta) * sign(beta.order()), &grid.project(&prod, n));
            }
            res_scalar = res_scalar.max(rel_diff(&lhs, &rhs));
        }
    }
    Ok((res_gamma, res_scalar))
}

pub fn verify_leibniz(
    ops: &LandauOperators,
    m: usize,
    f: &CoeffTensor,
    g: &CoeffTensor,
    tolerance: f64,
    seed: u64,
) -> Result<EstimateReport, InequalityError> {
    let (a, b) = leibniz_residuals(ops, m, f, g)?;
    let mut rep = EstimateReport::new(format!("leibniz_m{m}"), seed, tolerance);
    rep.samples = 1;
    rep.residual("gamma", a);
    rep.residual("sigma_product", b);
    Ok(rep)
}

/// Leibniz checks over `samples` random interior pairs.
pub fn verify_leibniz_random(
    ops: &LandauOperators,
    m: usize,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<EstimateReport, InequalityError> {
    let k = interior_support(ops.degree, m)?;
    let mut rep = EstimateReport::new(format!("leibniz_m{m}"), seed, tolerance);
    for s in 0..samples {
        let f = random_interior(seed, s as u64, 0, ops.degree, k);
        let g = random_interior(seed, s as u64, 1, ops.degree, k);
        let (a, b) = leibniz_residuals(ops, m, &f, &g)?;
        rep.residual(format!("sample{s}.gamma"), a);
        rep.residual(format!("sample{s}.sigma_product"), b);
        rep.samples += 1;
    }
    Ok(rep)
}

/// Quadratic-form helpers reused across samples.
pub struct NormKit<'a> {
    ops: &'a LandauOperators,
    gram: DMatrix<f64>,
}

impl<'a> NormKit<'a> {
    pub fn new(ops: &'a LandauOperators) -> Self {
        NormKit {
            ops,
            gram: ops.sigma_gram(),
        }
    }

    /// `‖|u|‖²_σ` for `u` supported on `|α| ≤ N`.
    pub fn sigma_sq(&self, u: &CoeffTensor) -> f64 {
        let x = DVector::from_column_slice(u.with_degree(self.ops.degree).values());
        (x.transpose() * &self.gram * &x)[(0, 0)]
    }

    /// `‖|∇ᵐ_{𝓗₊} g|‖²_σ = Σ_{|α|=m} (m!/α!) ‖|A₊^α g|‖²_σ`.
    pub fn grad_sigma_sq(&self, g: &CoeffTensor, m: usize) -> f64 {
        level_indices(m)
            .into_iter()
            .map(|a| factorial(m) / a.factorial() * self.sigma_sq(&g.raise_multi(a)))
            .sum()
    }
}

/// `h̃` with `⟨∇ᵐ_{𝓗₊} u, ∇ᵐ_{𝓗₊} h⟩ = ⟨u, h̃⟩`: `h̃_β = (|β|+m+2)!/(|β|+2)! h_β`.
pub fn grad_adjoint_weight(h: &CoeffTensor, m: usize) -> CoeffTensor {
    let mut out = h.clone();
    let d = h.degree();
    for k in 0..=d {
        let w: f64 = ((k + 3)..=(k + m + 2)).map(|x| x as f64).product();
        for x in &mut out.values_mut()[crate::hermite::level_offset(k)..crate::hermite::level_offset(k + 1)] {
            *x *= w;
        }
    }
    out
}

/// Matrix of `Σ_{|α|=r} (m!/α!) ‖|A₊^α g|‖²_σ` on the modes `|β| ≤ support`.
pub fn grad_sigma_form(kit: &NormKit<'_>, r: usize, support: usize) -> DMatrix<f64> {
    let n = kit.ops.degree;
    let k = crate::hermite::level_offset(support + 1);
    let full = kit.gram.nrows();
    let mut out = DMatrix::zeros(k, k);
    for alpha in level_indices(r) {
        let w = factorial(r) / alpha.factorial();
        let mut m = DMatrix::zeros(full, k);
        for col in 0..k {
            let e = CoeffTensor::basis(MultiIndex::from_index(col), support).raise_multi(alpha);
            for (row, v) in e.with_degree(n).values().iter().enumerate() {
                m[(row, col)] = *v;
            }
        }
        out += w * m.transpose() * &kit.gram * &m;
    }
    out
}

/// Quadratic forms on the interior span `|α| ≤ N − m − 1` shared by the trilinear maximizations.
struct TrilinearSpace<'a> {
    kit: &'a NormKit<'a>,
    m: usize,
    support: usize,
    k: usize,
    /// `forms[r]` is the matrix of `‖|∇ʳ g|‖²_σ`.
    forms: Vec<DMatrix<f64>>,
    gm_inv: DMatrix<f64>,
}

impl<'a> TrilinearSpace<'a> {
    fn new(kit: &'a NormKit<'a>, m: usize) -> Result<Self, InequalityError> {
        let support = interior_support(kit.ops.degree, m)?;
        let k = crate::hermite::level_offset(support + 1);
        let forms: Vec<DMatrix<f64>> = (0..=m).map(|r| grad_sigma_form(kit, r, support)).collect();
        let gm_inv = forms[m].clone().cholesky().expect("σ-form is positive definite").inverse();
        Ok(TrilinearSpace {
            kit,
            m,
            support,
            k,
            forms,
            gm_inv,
        })
    }

    fn tensor(&self, x: &DVector<f64>) -> CoeffTensor {
        CoeffTensor::from_values(self.support, x.as_slice().to_vec()).expect("interior length")
    }

    fn quad(&self, r: usize, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.forms[r] * x)[(0, 0)].max(0.0)
    }

    /// `[‖f‖, C(m,k) ‖∇^{k−1} f‖ for k = 1..=m]`.
    fn f_coefficients(&self, f: &CoeffTensor) -> Vec<f64> {
        (0..=self.m)
            .map(|kk| {
                if kk == 0 {
                    f.norm()
                } else {
                    crate::hermite::binomial(self.m, kk) * f.grad_hplus_norm_sq(kk - 1).sqrt()
                }
            })
            .collect()
    }

    /// `(ratio, g, y)` at the best `g` for this `f`, `y = G_m^{-1} B g` the optimal `h` direction.
    fn best_g(&self, f: &CoeffTensor) -> (f64, DVector<f64>, DVector<f64>) {
        let k = self.k;
        let left = self.kit.ops.gamma_left(f);
        let mut b = DMatrix::zeros(k, k);
        for col in 0..k {
            let e = CoeffTensor::basis(MultiIndex::from_index(col), self.support);
            let y = grad_adjoint_weight(&left.apply(&e), self.m);
            for row in 0..k {
                b[(row, col)] = y.values()[row];
            }
        }
        let coef = self.f_coefficients(f);
        let mut q = DMatrix::zeros(k, k);
        for (kk, c) in coef.iter().enumerate() {
            q += c * c * &self.forms[self.m - kk];
        }
        let zero = (0.0, DVector::zeros(k), DVector::zeros(k));
        let h = b.transpose() * &self.gm_inv * &b;
        let Some(chol) = q.cholesky() else {
            return zero;
        };
        let li = chol.l().try_inverse().expect("triangular factor is invertible");
        let c = &li * &h * li.transpose();
        let eig = (0.5 * (&c + c.transpose())).symmetric_eigen();
        let top = eig.eigenvalues.imax();
        let g = li.transpose() * eig.eigenvectors.column(top);
        let lhs = (g.transpose() * &h * &g)[(0, 0)].max(0.0).sqrt();
        let rhs: f64 = coef.iter().enumerate().map(|(kk, c)| c * self.quad(self.m - kk, &g).sqrt()).sum();
        if rhs <= 0.0 {
            return zero;
        }
        let y = &self.gm_inv * (&b * &g);
        (lhs / rhs, g, y)
    }

    /// Best `f` for fixed `g, h` (exact for the quadratic surrogate, where
    /// `‖∇ʳ f‖²` is diagonal with weights `(|β|+r+2)!/(|β|+2)!`).
    fn best_f(&self, g: &DVector<f64>, y: &DVector<f64>) -> CoeffTensor {
        let gt = self.tensor(g);
        let ht = grad_adjoint_weight(&self.tensor(y), self.m);
        let a: Vec<f64> = (0..=self.m)
            .map(|kk| {
                let c = if kk == 0 { 1.0 } else { crate::hermite::binomial(self.m, kk) };
                c * self.quad(self.m - kk, g).sqrt()
            })
            .collect();
        let mut f = CoeffTensor::zeros(self.support);
        for idx in 0..self.k {
            let beta = MultiIndex::from_index(idx);
            let e = CoeffTensor::basis(beta, self.support);
            let w = self.kit.ops.apply_gamma(&e, &gt).dot(&ht);
            let lvl = beta.order();
            let mut q = a[0] * a[0];
            for kk in 1..=self.m {
                let r = kk - 1;
                let d: f64 = ((lvl + 3)..=(lvl + r + 2)).map(|x| x as f64).product();
                q += a[kk] * a[kk] * d;
            }
            f.values_mut()[idx] = w / q;
        }
        f.with_degree(self.kit.ops.degree)
    }
}

/// Largest ratio of the gradient trilinear bound at order `m` found from the
/// starting point `f`, over `f, g, h` supported on `|α| ≤ N − m − 1`.
///
/// For fixed `f` the supremum in `h` is exact (dual norm) and `g` is the top
/// generalized eigenvector of the quadratic surrogate of the right-hand side,
/// where the true ratio is evaluated. `rounds` further alternations
/// re-optimize `f` for the current `g, h`. Every reported ratio is attained,
/// so the result is a lower bound for the discrete constant.
pub fn trilinear_sup(ops: &LandauOperators, f: &CoeffTensor, m: usize, rounds: usize) -> Result<f64, InequalityError> {
    let kit = NormKit::new(ops);
    let space = TrilinearSpace::new(&kit, m)?;
    Ok(alternate(&space, f, rounds))
}

fn alternate(space: &TrilinearSpace<'_>, f: &CoeffTensor, rounds: usize) -> f64 {
    let (mut best, mut g, mut y) = space.best_g(f);
    for _ in 0..rounds {
        let f = space.best_f(&g, &y);
        if f.norm() == 0.0 {
            break;
        }
        let (r, g2, y2) = space.best_g(&f);
        if r <= best * (1.0 + 1e-9) {
            best = best.max(r);
            break;
        }
        best = r;
        g = g2;
        y = y2;
    }
    best
}

/// Ratio of the two sides of the gradient trilinear bound for one triple;
/// `None` when the right-hand side vanishes.
pub fn trilinear_ratio(
    kit: &NormKit<'_>,
    f: &CoeffTensor,
    g: &CoeffTensor,
    h: &CoeffTensor,
    m: usize,
) -> Option<f64> {
    let lhs = kit.ops.apply_gamma(f, g).dot(&grad_adjoint_weight(h, m)).abs();
    let mut rhs = f.norm() * kit.grad_sigma_sq(g, m).sqrt();
    for kk in 1..=m {
        rhs += crate::hermite::binomial(m, kk) * f.grad_hplus_norm_sq(kk - 1).sqrt() * kit.grad_sigma_sq(g, m - kk).sqrt();
    }
    rhs *= kit.grad_sigma_sq(h, m).sqrt();
    (rhs > 0.0).then(|| lhs / rhs)
}

/// Measured constant of `|⟨Γ(f,g),h⟩| ≤ C ‖f‖ ‖|g|‖_σ ‖|h|‖_σ`.
pub fn estimate_trilinear(ops: &LandauOperators, samples: usize, seed: u64) -> Result<EstimateReport, InequalityError> {
    estimate_trilinear_grad(ops, &[0], samples, 0, seed)
}

/// Measured constants of the gradient trilinear bound, one per `m`:
///
/// ```text
/// |⟨∇ᵐΓ(f,g), ∇ᵐh⟩| ≤ C₀ (‖f‖ ‖|∇ᵐg|‖_σ + Σ_{k=1}^m C(m,k) ‖∇^{k−1}f‖ ‖|∇^{m−k}g|‖_σ) ‖|∇ᵐh|‖_σ
/// ```
///
/// Each sample draws `f` on `|α| ≤ N − m − 1` and takes the supremum over
/// `g, h` with `rounds` alternating refinements of `f` (see [`trilinear_sup`]). `measured["c0_m{m}"]` is the largest ratio
/// for that `m`; `measured["c0_spread"]` is max/min over `m`.
pub fn estimate_trilinear_grad(
    ops: &LandauOperators,
    ms: &[usize],
    samples: usize,
    rounds: usize,
    seed: u64,
) -> Result<EstimateReport, InequalityError> {
    if samples == 0 {
        return Err(InequalityError::NoSamples);
    }
    let name = if ms == [0] { "trilinear" } else { "trilinear_grad" };
    let mut rep = EstimateReport::new(name, seed, f64::INFINITY);
    let kit = NormKit::new(ops);
    let n = ops.degree;
    let mut consts = Vec::new();
    for &m in ms {
        let space = TrilinearSpace::new(&kit, m)?;
        let mut best: f64 = 0.0;
        for s in 0..samples {
            let f = random_interior(seed, s as u64, 0, n, space.support);
            let r = alternate(&space, &f, rounds);
            best = best.max(r);
            rep.ratio(format!("m{m}.sample{s}"), r);
        }
        rep.samples += samples;
        rep.measured.insert(format!("c0_m{m}"), best);
        consts.push(best);
    }
    if consts.len() > 1 {
        let lo = consts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = consts.iter().copied().fold(0.0, f64::max);
        rep.measured.insert("c0_spread".into(), hi / lo);
    }
    Ok(rep)
}

/// All terms of the decomposition
/// `⟨∇ᵐ𝓛₁g, ∇ᵐg⟩ = ‖|∇ᵐg|‖²_σ + 𝐑₀ + 𝐑₁ + 𝐑₂`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoercivityTerms {
    pub m: usize,
    pub lhs: f64,
    pub main: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    /// Part of `𝐑₂` from the commutator with no derivative on `σ`.
    pub r2_k0: f64,
    /// `Σ_α (m!/α!) Σ_{0<β≤α} C(α,β) ⟨Γ(A^β sqrt(μ), A^{α−β} g), A^α g⟩`.
    pub r1_gamma_form: f64,
    /// `|lhs − (main + r0 + r1 + r2)|`.
    pub residual: f64,
    /// `residual / max(1, |lhs|, main)`.
    pub relative_residual: f64,
    /// `‖∇ᵐg‖_{2,γ/2}`.
    pub weighted_grad_norm: f64,
}

/// Evaluates every term of the coercivity decomposition from its defining integral.
///
/// With `u = A^α g`, `w_α = m!/α!`:
///
/// ```text
/// main = Σ w ‖|u|‖²_σ
/// 𝐑₀   = Σ w Σ_i ∫ σ^i u ∂_i u
/// 𝐑₁   = Σ w Σ_{0<β≤α} C(α,β)(−1)^{|β|} Σ_ij ∫ ∂^βσ^{ij} A₋,j A^{α−β}g · A₋,i u
/// 𝐑₂   = −Σ w Σ_{β≤α} C(α,β)(−1)^{|β|} Σ_ij (α−β)_j ∫ ∂^βσ^{ij} A^{α−β−e_j}g · A₋,i u
/// ```
pub fn coercivity_terms(ops: &LandauOperators, m: usize, g: &CoeffTensor) -> Result<CoercivityTerms, InequalityError> {
    let n = ops.degree;
    check_support("g", g, m, n)?;
    let grid = ops.grid();
    let npts = grid.num_points();
    let mg = ops.apply_l1(g);
    let sigma_vec: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            (0..npts)
                .map(|k| {
                    let v = grid.point(k);
                    (0..3).map(|j| ops.sigma_at(i, j)[k] * v[j]).sum()
                })
                .collect()
        })
        .collect();
    let gamma = ops.pot.gamma;
    let mut t = CoercivityTerms {
        m,
        lhs: 0.0,
        main: 0.0,
        r0: 0.0,
        r1: 0.0,
        r2: 0.0,
        r2_k0: 0.0,
        r1_gamma_form: 0.0,
        residual: 0.0,
        relative_residual: 0.0,
        weighted_grad_norm: 0.0,
    };
    let mut wg = 0.0;
    for alpha in level_indices(m) {
        let w = factorial(m) / alpha.factorial();
        let u = g.raise_multi(alpha);
        t.lhs += w * mg.raise_multi(alpha).dot(&u);
        t.main += w * ops.sigma_norm_sq(&u).sigma_norm_sq;
        wg += w * ops.weighted_norm_sq(&u, gamma / 2.0);
        let uhat = grid.evaluate(&u);
        for i in 0..3 {
            let du = grid.evaluate(&u.diff_v(i));
            t.r0 += w * grid.inner3(&sigma_vec[i], &uhat, &du);
        }
        let ami: Vec<Vec<f64>> = (0..3).map(|i| grid.evaluate(&u.lower(i))).collect();
        for beta in alpha.sub_indices() {
            let c = alpha.binomial(&beta) * sign(beta.order());
            let ds = ops.tables().d_sigma(beta);
            let rest = alpha.checked_sub(&beta).unwrap();
            let h = g.raise_multi(rest);
            if beta != MultiIndex::ZERO {
                for j in 0..3 {
                    let hj = grid.evaluate(&h.lower(j));
                    for (i, ai) in ami.iter().enumerate() {
                        t.r1 += w * c * grid.inner3(&ds[pair_index(i, j)], &hj, ai);
                    }
                }
                let gf = ops.apply_gamma(&CoeffTensor::ground(0).raise_multi(beta), &h);
                t.r1_gamma_form += w * alpha.binomial(&beta) * gf.dot(&u);
            }
            for j in 0..3 {
                if rest.0[j] == 0 {
                    continue;
                }
                let low = g.raise_multi(rest.minus(j).unwrap());
                let lh = grid.evaluate(&low);
                let mut s = 0.0;
                for (i, ai) in ami.iter().enumerate() {
                    s += grid.inner3(&ds[pair_index(i, j)], &lh, ai);
                }
                let term = -w * c * rest.0[j] as f64 * s;
                t.r2 += term;
                if beta == MultiIndex::ZERO {
                    t.r2_k0 += term;
                }
            }
        }
    }
    t.weighted_grad_norm = wg.sqrt();
    t.residual = (t.lhs - (t.main + t.r0 + t.r1 + t.r2)).abs();
    t.relative_residual = t.residual / t.lhs.abs().max(t.main).max(1.0);
    Ok(t)
}

/// Coercivity identity check plus measured constants of the 𝐑₀, 𝐑₁, 𝐑₂ bounds.
pub fn verify_coercivity(
    ops: &LandauOperators,
    m: usize,
    g: &CoeffTensor,
    tolerance: f64,
    seed: u64,
) -> Result<(EstimateReport, CoercivityTerms), InequalityError> {
    let t = coercivity_terms(ops, m, g)?;
    let mut rep = EstimateReport::new(format!("coercivity_m{m}"), seed, tolerance);
    rep.samples = 1;
    rep.residual("identity", t.relative_residual);
    let kit = NormKit::new(ops);
    let top = kit.grad_sigma_sq(g, m).sqrt();
    for (k, v) in [
        ("lhs", t.lhs),
        ("main", t.main),
        ("r0", t.r0),
        ("r1", t.r1),
        ("r2", t.r2),
        ("r2_k0", t.r2_k0),
        ("r1_gamma_form", t.r1_gamma_form),
    ] {
        rep.measured.insert(k.into(), v);
    }
    if top > 0.0 {
        let b0 = t.weighted_grad_norm * top;
        if b0 > 0.0 {
            rep.measured.insert("r0_bound_ratio".into(), t.r0.abs() / b0);
        }
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for k in 1..=m {
            let c = k as f64 * crate::hermite::binomial(m, k) * factorial(k).sqrt();
            b1 += c * kit.grad_sigma_sq(g, m - k).sqrt();
            if k < m {
                b2 += c * (m - k) as f64 * kit.grad_sigma_sq(g, m - k - 1).sqrt();
            }
        }
        if b1 > 0.0 {
            rep.measured.insert("r1_bound_ratio".into(), t.r1.abs() / (b1 * top));
        }
        if b2 > 0.0 {
            rep.measured.insert("r2_bound_ratio".into(), (t.r2 - t.r2_k0).abs() / (b2 * top));
        }
    }
    Ok((rep, t))
}

/// Random-sample coercivity checks at order `m`.
pub fn verify_coercivity_random(
    ops: &LandauOperators,
    m: usize,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<EstimateReport, InequalityError> {
    let k = interior_support(ops.degree, m)?;
    let mut rep = EstimateReport::new(format!("coercivity_m{m}"), seed, tolerance);
    for s in 0..samples {
        let g = random_interior(seed, s as u64, 0, ops.degree, k);
        let (r, _) = verify_coercivity(ops, m, &g, tolerance, seed)?;
        rep.samples += 1;
        rep.violations += r.violations;
        let res = r.max_residual.unwrap_or(0.0);
        rep.max_residual = Some(rep.max_residual.map_or(res, |x: f64| x.max(res)));
        rep.details.push(SampleRecord {
            label: format!("sample{s}"),
            value: res,
        });
        for (key, v) in r.measured.iter().filter(|(k, _)| k.ends_with("_ratio")) {
            let e = rep.measured.entry(key.clone()).or_insert(0.0);
            *e = e.max(*v);
        }
    }
    Ok(rep)
}

/// Ladder inequalities on random tensors of degree `degree`:
/// `‖A₋,j u‖ ≤ ‖A₊,j u‖` (exact, zero tolerance) and
/// `‖𝓗^{m/2} g‖² ≤ ‖∇ᵐ_{𝓗₊} g‖²` for `m ≤ m_max` and `g` supported on `|α| ≤ N − m`.
/// Also checks `‖∇ᵏ sqrt(μ)‖² = (k+1)(k+2)k!/2` for `k ≤ 8`.
pub fn verify_ladder_bounds(samples: usize, degree: usize, m_max: usize, seed: u64) -> EstimateReport {
    let mut rep = EstimateReport::new("ladder", seed, 0.0);
    let mut min_gap = f64::INFINITY;
    let mut max_h_ratio: f64 = 0.0;
    for s in 0..samples {
        let u = random_interior(seed, s as u64, 0, degree, degree);
        for j in 0..3 {
            let lo = u.lower(j).norm_sq();
            let hi = u.raise(j).norm_sq();
            if lo > hi {
                rep.violations += 1;
            }
            min_gap = min_gap.min(hi - lo);
        }
        for m in 0..=m_max.min(degree) {
            let g = random_interior(seed, s as u64, 1 + m as u64, degree, degree - m);
            let h = g.harmonic_apply(m as u32).norm_sq();
            let grad = g.grad_hplus_norm_sq(m);
            if h > grad * (1.0 + 1e-14) {
                rep.violations += 1;
            }
            if grad > 0.0 {
                max_h_ratio = max_h_ratio.max(h / grad);
            }
        }
        rep.samples += 1;
    }
    let mut worst_count: f64 = 0.0;
    for k in 0..=8usize {
        let got = CoeffTensor::ground(0).grad_hplus_norm_sq(k);
        let exact = ((k + 1) * (k + 2)) as f64 * factorial(k) / 2.0;
        let r = (got - exact).abs() / exact;
        worst_count = worst_count.max(r);
        if r > 1e-14 {
            rep.violations += 1;
        }
    }
    rep.max_residual = Some(worst_count);
    rep.max_ratio = Some(max_h_ratio);
    rep.measured.insert("min_ladder_gap".into(), min_gap);
    rep.measured.insert("max_harmonic_over_grad".into(), max_h_ratio);
    rep.measured.insert("ground_state_count_error".into(), worst_count);
    rep
}

/// σ-norm consistency on random tensors: ladder and direct routes agree,
/// the Gram-matrix form agrees, and `‖|ψ₀|‖²_σ = 3` at `γ = 0`. Also records the
/// measured equivalence constants against `‖P_v ∇g‖²_{2,γ/2} + ‖(I−P_v)∇g‖²_{2,(γ+2)/2}`
/// computed on the ladder components.
pub fn verify_norms(ops: &LandauOperators, samples: usize, seed: u64, tolerance: f64) -> EstimateReport {
    let mut rep = EstimateReport::new("norms", seed, tolerance);
    let kit = NormKit::new(ops);
    let n = ops.degree;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for s in 0..samples {
        let g = random_interior(seed, s as u64, 0, n, n - 1);
        let r = ops.sigma_norm_sq(&g);
        let scale = r.sigma_norm_sq.abs().max(1e-300);
        rep.residual(format!("sample{s}.routes"), (r.sigma_norm_sq - r.sigma_norm_sq_direct).abs() / scale);
        rep.residual(format!("sample{s}.gram"), (kit.sigma_sq(&g) - r.sigma_norm_sq).abs() / scale);
        let other = r.parallel_sq + r.orthogonal_sq;
        if other > 0.0 {
            lo = lo.min(r.sigma_norm_sq / other);
            hi = hi.max(r.sigma_norm_sq / other);
        }
        rep.samples += 1;
    }
    if ops.pot.gamma == 0.0 {
        let p0 = ops.sigma_norm_sq(&CoeffTensor::ground(n)).sigma_norm_sq;
        rep.residual("ground_state", (p0 - 3.0).abs() / 3.0);
    }
    if lo.is_finite() {
        rep.measured.insert("equivalence_lower".into(), lo);
        rep.measured.insert("equivalence_upper".into(), hi);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Potential;

    fn ops(n: usize) -> LandauOperators {
        LandauOperators::new(Potential::maxwell(), n, Some(n + 4)).unwrap()
    }

    #[test]
    fn leibniz_small_cases() {
        let o = ops(5);
        let p0 = CoeffTensor::ground(5);
        let (a, b) = leibniz_residuals(&o, 0, &p0, &p0).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        let (a, b) = leibniz_residuals(&o, 1, &p0, &p0).unwrap();
        assert!(a < 1e-12 && b < 1e-12, "{a} {b}");
        let r = verify_leibniz_random(&o, 2, 2, 5, 1e-8).unwrap();
        assert!(r.passed(), "{:?}", r.max_residual);
    }

    #[test]
    fn leibniz_rejects_edge_support() {
        let o = ops(5);
        let g = CoeffTensor::basis(MultiIndex::new(4, 0, 0), 5);
        assert!(matches!(
            leibniz_residuals(&o, 1, &g, &g),
            Err(InequalityError::Support { .. })
        ));
    }

    #[test]
    fn coercivity_ground_state() {
        let o = ops(5);
        let t = coercivity_terms(&o, 0, &CoeffTensor::ground(5)).unwrap();
        assert!(t.lhs.abs() < 1e-12);
        assert!((t.main - 3.0).abs() < 1e-12);
        assert!((t.r0 + 3.0).abs() < 1e-12);
        assert_eq!((t.r1, t.r2), (0.0, 0.0));
        let t = coercivity_terms(&o, 1, &CoeffTensor::ground(5)).unwrap();
        assert!((t.main + t.r0 - 12.0).abs() < 1e-10, "{t:?}");
        assert!(t.residual < 1e-10, "{t:?}");
    }

    #[test]
    fn coercivity_random() {
        let o = ops(6);
        for m in 0..3 {
            let r = verify_coercivity_random(&o, m, 2, 3, 1e-9).unwrap();
            assert!(r.passed(), "m={m} {:?}", r.max_residual);
        }
    }

    #[test]
    fn coercivity_hard_potential_identity() {
        // integration by parts is exact only up to quadrature error for γ > 0
        let g = random_interior(1, 0, 0, 4, 2);
        let coarse = LandauOperators::new(Potential { gamma: 1.0 }, 4, Some(10)).unwrap();
        let fine = LandauOperators::new(Potential { gamma: 1.0 }, 4, Some(18)).unwrap();
        let a = coercivity_terms(&coarse, 1, &g).unwrap();
        let b = coercivity_terms(&fine, 1, &g).unwrap();
        assert!(b.relative_residual < 1e-7, "{b:?}");
        assert!(b.relative_residual < a.relative_residual, "{a:?} {b:?}");
    }

    #[test]
    fn trilinear_zero_cases() {
        let o = ops(4);
        let kit = NormKit::new(&o);
        let p0 = CoeffTensor::ground(4);
        assert!(trilinear_ratio(&kit, &p0, &p0, &p0, 0).unwrap() < 1e-14);
        let g = random_interior(2, 0, 1, 4, 3);
        assert_eq!(trilinear_ratio(&kit, &CoeffTensor::zeros(4), &g, &g, 0), None);
        let r = estimate_trilinear(&o, 2, 1).unwrap();
        assert!(r.max_ratio.unwrap().is_finite() && r.max_ratio.unwrap() > 0.0);
    }

    #[test]
    fn supremum_dominates_random_triples() {
        let o = ops(5);
        let kit = NormKit::new(&o);
        for m in 0..3 {
            let k = 5 - m - 1;
            let f = random_interior(8, 0, 0, 5, k);
            let sup = trilinear_sup(&o, &f, m, 0).unwrap();
            let refined = trilinear_sup(&o, &f, m, 2).unwrap();
            assert!(refined >= sup);
            for s in 0..10 {
                let g = random_interior(8, s, 1, 5, k);
                let h = random_interior(8, s, 2, 5, k);
                let r = trilinear_ratio(&kit, &f, &g, &h, m).unwrap();
                assert!(r <= sup * (1.0 + 1e-9), "m={m} {r} {sup}");
            }
        }
    }

    #[test]
    fn gradient_adjoint_weight_matches_components() {
        let u = random_interior(4, 0, 0, 5, 3);
        let h = random_interior(4, 0, 1, 5, 3);
        for m in 0..3 {
            let direct: f64 = level_indices(m)
                .iter()
                .map(|a| factorial(m) / a.factorial() * u.raise_multi(*a).dot(&h.raise_multi(*a)))
                .sum();
            let via = u.dot(&grad_adjoint_weight(&h, m));
            assert!((direct - via).abs() < 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn gamma_against_ground_state_is_minus_l2() {
        // g = sqrt(μ): ∇ᵐ Γ(f, sqrt(μ)) = −∇ᵐ 𝓛₂ f
        let o = ops(5);
        let f = random_interior(6, 0, 0, 5, 3);
        let h = random_interior(6, 0, 2, 5, 3);
        let a = o.apply_gamma(&f, &CoeffTensor::ground(5)).dot(&grad_adjoint_weight(&h, 1));
        let b = -o.apply_l2(&f).dot(&grad_adjoint_weight(&h, 1));
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn ladder_suite_small() {
        let r = verify_ladder_bounds(50, 8, 6, 3);
        assert!(r.passed());
        assert!(r.measured["max_harmonic_over_grad"] <= 1.0);
    }

    #[test]
    fn norms_suite() {
        let r = verify_norms(&ops(5), 3, 2, 1e-9);
        assert!(r.passed(), "{:?}", r.max_residual);
        assert!(r.measured["equivalence_lower"] > 0.0);
    }

    #[test]
    fn nested_draws_across_truncations() {
        let a = random_interior(9, 3, 1, 8, 7);
        let b = random_interior(9, 3, 1, 12, 11);
        let k = crate::hermite::level_offset(8);
        assert_eq!(&a.values()[..k], &b.values()[..k]);
    }
}

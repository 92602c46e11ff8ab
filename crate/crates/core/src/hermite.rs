//! Multi-index Hermite basis algebra in coefficient space.
//!
//! The basis is the scaled Hermite family `ψ_α(v) = φ_{α1}(v1) φ_{α2}(v2) φ_{α3}(v3)`
//! with `φ_n(x) = He_n(x) e^{-x²/4} / sqrt(n! sqrt(2π))`, orthonormal in `L²(ℝ³)`.
//! `ψ_0 = μ^{1/2}` where `μ` is the standard Maxwellian.
//!
//! Coefficients live in a flat array ordered graded-lexicographically: levels
//! `|α| = 0, 1, 2, ...` are contiguous, so the coefficients of a degree-`N`
//! tensor are a prefix of those of any degree-`M ≥ N` tensor. The on-disk
//! format depends on this ordering (see [`ORDERING_VERSION`]).

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

/// Version tag of the multi-index ordering used by the flat coefficient layout.
pub const ORDERING_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HermiteError {
    #[error("coefficient vector has length {got}, degree {degree} needs {expected}")]
    LengthMismatch {
        degree: usize,
        expected: usize,
        got: usize,
    },
    #[error("axis {0} out of range (expected 0, 1 or 2)")]
    BadAxis(usize),
}

/// A mode label `α ∈ ℕ³`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiIndex(pub [usize; 3]);

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0, 0]);

    pub fn new(a1: usize, a2: usize, a3: usize) -> Self {
        MultiIndex([a1, a2, a3])
    }

    /// Canonical unit vector `e_j` (0-based axis).
    pub fn unit(axis: usize) -> Self {
        let mut a = [0; 3];
        a[axis] = 1;
        MultiIndex(a)
    }

    /// `|α| = α1 + α2 + α3`.
    pub fn order(&self) -> usize {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// `α! = α1! α2! α3!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&n| factorial(n)).product()
    }

    pub fn plus(&self, axis: usize) -> Self {
        let mut a = self.0;
        a[axis] += 1;
        MultiIndex(a)
    }

    pub fn minus(&self, axis: usize) -> Option<Self> {
        let mut a = self.0;
        a[axis] = a[axis].checked_sub(1)?;
        Some(MultiIndex(a))
    }

    pub fn add(&self, other: &MultiIndex) -> Self {
        MultiIndex([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
        ])
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<Self> {
        Some(MultiIndex([
            self.0[0].checked_sub(other.0[0])?,
            self.0[1].checked_sub(other.0[1])?,
            self.0[2].checked_sub(other.0[2])?,
        ]))
    }

    /// Componentwise `β ≤ α`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        (0..3).all(|j| self.0[j] <= other.0[j])
    }

    /// Multi-index binomial `Π_j C(α_j, β_j)`.
    pub fn binomial(&self, sub: &MultiIndex) -> f64 {
        (0..3).map(|j| binomial(self.0[j], sub.0[j])).product()
    }

    /// Position in the graded-lexicographic flat layout.
    pub fn index(&self) -> usize {
        let r = self.0[1] + self.0[2];
        let k = self.0[0] + r;
        level_offset(k) + r * (r + 1) / 2 + self.0[2]
    }

    pub fn from_index(idx: usize) -> Self {
        let mut k = 0;
        while level_offset(k + 1) <= idx {
            k += 1;
        }
        let rem = idx - level_offset(k);
        let mut r = 0;
        while (r + 1) * (r + 2) / 2 <= rem {
            r += 1;
        }
        let a3 = rem - r * (r + 1) / 2;
        MultiIndex([k - r, r - a3, a3])
    }

    /// All `β ≤ α` componentwise.
    pub fn sub_indices(&self) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for b1 in 0..=self.0[0] {
            for b2 in 0..=self.0[1] {
                for b3 in 0..=self.0[2] {
                    out.push(MultiIndex([b1, b2, b3]));
                }
            }
        }
        out
    }
}

/// Number of modes with `|α| < k`.
pub fn level_offset(k: usize) -> usize {
    k * (k + 1) * (k + 2) / 6
}

/// Number of modes with `|α| = k`.
pub fn level_size(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// All multi-indices with `|α| = m`, in layout order.
pub fn level_indices(m: usize) -> Vec<MultiIndex> {
    (level_offset(m)..level_offset(m + 1))
        .map(MultiIndex::from_index)
        .collect()
}

/// Simplex truncation `|α| ≤ N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Truncation {
    pub degree: usize,
}

impl Truncation {
    pub fn new(degree: usize) -> Self {
        Truncation { degree }
    }

    /// `(N+1)(N+2)(N+3)/6`.
    pub fn num_modes(&self) -> usize {
        level_offset(self.degree + 1)
    }

    pub fn indices(&self) -> Vec<MultiIndex> {
        (0..self.num_modes()).map(MultiIndex::from_index).collect()
    }

    pub fn level_range(&self, k: usize) -> std::ops::Range<usize> {
        level_offset(k)..level_offset(k + 1)
    }
}

/// A truncated Hermite expansion `g = Σ_{|α| ≤ N} g_α ψ_α`.
#[derive(Clone, PartialEq)]
pub struct CoeffTensor {
    degree: usize,
    values: Vec<f64>,
}

impl fmt::Debug for CoeffTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoeffTensor")
            .field("degree", &self.degree)
            .field("norm", &self.norm())
            .finish()
    }
}

impl CoeffTensor {
    pub fn zeros(degree: usize) -> Self {
        CoeffTensor {
            degree,
            values: vec![0.0; level_offset(degree + 1)],
        }
    }

    pub fn from_values(degree: usize, values: Vec<f64>) -> Result<Self, HermiteError> {
        let expected = level_offset(degree + 1);
        if values.len() != expected {
            return Err(HermiteError::LengthMismatch {
                degree,
                expected,
                got: values.len(),
            });
        }
        Ok(CoeffTensor { degree, values })
    }

    /// `ψ_α` embedded in a degree-`degree` truncation (`degree ≥ |α|` is raised if needed).
    pub fn basis(alpha: MultiIndex, degree: usize) -> Self {
        let mut t = CoeffTensor::zeros(degree.max(alpha.order()));
        t.values[alpha.index()] = 1.0;
        t
    }

    /// `ψ_0 = sqrt(μ)`.
    pub fn ground(degree: usize) -> Self {
        CoeffTensor::basis(MultiIndex::ZERO, degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.degree)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, alpha: MultiIndex) -> f64 {
        self.values.get(alpha.index()).copied().unwrap_or(0.0)
    }

    /// Sets `g_α`, growing the truncation when `|α| > N`.
    pub fn set(&mut self, alpha: MultiIndex, value: f64) {
        if alpha.order() > self.degree {
            *self = self.with_degree(alpha.order());
        }
        self.values[alpha.index()] = value;
    }

    /// Re-truncates (or zero-extends) to `degree`.
    pub fn with_degree(&self, degree: usize) -> Self {
        let n = level_offset(degree + 1);
        let mut values = vec![0.0; n];
        let m = n.min(self.values.len());
        values[..m].copy_from_slice(&self.values[..m]);
        CoeffTensor { degree, values }
    }

    /// Highest level carrying a nonzero coefficient (`None` for the zero tensor).
    pub fn support_degree(&self) -> Option<usize> {
        let last = self.values.iter().rposition(|&x| x != 0.0)?;
        Some(MultiIndex::from_index(last).order())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `L²` inner product; tensors of different degree are zero-extended.
    pub fn dot(&self, other: &CoeffTensor) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        CoeffTensor {
            degree: self.degree,
            values: self.values.iter().map(|x| s * x).collect(),
        }
    }

    /// `self += s * other`, growing the truncation if `other` is larger.
    pub fn axpy(&mut self, s: f64, other: &CoeffTensor) {
        if other.degree > self.degree {
            *self = self.with_degree(other.degree);
        }
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &CoeffTensor) -> Self {
        let mut out = self.with_degree(self.degree.max(other.degree));
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &CoeffTensor) -> Self {
        let mut out = self.with_degree(self.degree.max(other.degree));
        out.axpy(-1.0, other);
        out
    }

    /// Largest absolute coefficient difference, zero-extending the shorter tensor.
    pub fn max_abs_diff(&self, other: &CoeffTensor) -> f64 {
        let n = self.values.len().max(other.values.len());
        (0..n)
            .map(|i| {
                let a = self.values.get(i).copied().unwrap_or(0.0);
                let b = other.values.get(i).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Creation operator `A_{+,j}`: `(A₊g)_{α+e_j} = sqrt(α_j+1) g_α`; output degree `N+1`.
    pub fn raise(&self, axis: usize) -> Self {
        let mut out = CoeffTensor::zeros(self.degree + 1);
        for (i, &g) in self.values.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let a = MultiIndex::from_index_fast(i);
            let t = a.plus(axis);
            out.values[t.index()] = ((a.0[axis] + 1) as f64).sqrt() * g;
        }
        out
    }

    /// Annihilation operator `A_{-,j}`: `(A₋g)_{α-e_j} = sqrt(α_j) g_α`; output keeps degree `N`.
    pub fn lower(&self, axis: usize) -> Self {
        let mut out = CoeffTensor::zeros(self.degree);
        for (i, &g) in self.values.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let a = MultiIndex::from_index_fast(i);
            if let Some(t) = a.minus(axis) {
                out.values[t.index()] = (a.0[axis] as f64).sqrt() * g;
            }
        }
        out
    }

    /// `A_+^α g`.
    pub fn raise_multi(&self, alpha: MultiIndex) -> Self {
        let mut out = self.clone();
        for axis in 0..3 {
            for _ in 0..alpha.0[axis] {
                out = out.raise(axis);
            }
        }
        out
    }

    /// `A_-^α g`.
    pub fn lower_multi(&self, alpha: MultiIndex) -> Self {
        let mut out = self.clone();
        for axis in 0..3 {
            for _ in 0..alpha.0[axis] {
                out = out.lower(axis);
            }
        }
        out
    }

    /// Multiplication by `v_j = A_{+,j} + A_{-,j}`; output degree `N+1`.
    pub fn mult_v(&self, axis: usize) -> Self {
        self.raise(axis).add(&self.lower(axis))
    }

    /// Differentiation `∂_j = (A_{-,j} - A_{+,j}) / 2`; output degree `N+1`.
    pub fn diff_v(&self, axis: usize) -> Self {
        self.lower(axis).sub(&self.raise(axis)).scaled(0.5)
    }

    /// `𝓗^{m/2} g` where `𝓗ψ_α = (|α| + 3/2) ψ_α` in three dimensions.
    pub fn harmonic_apply(&self, power_half: u32) -> Self {
        let mut out = self.clone();
        for k in 0..=self.degree {
            let s = (k as f64 + 1.5).powf(power_half as f64 / 2.0);
            for x in &mut out.values[level_offset(k)..level_offset(k + 1)] {
                *x *= s;
            }
        }
        out
    }

    /// Orthogonal projection `ℙ_k` onto the energy level `|α| = k`.
    pub fn project_level(&self, k: usize) -> Self {
        let mut out = CoeffTensor::zeros(self.degree);
        if k <= self.degree {
            let r = level_offset(k)..level_offset(k + 1);
            out.values[r.clone()].copy_from_slice(&self.values[r]);
        }
        out
    }

    /// `‖ℙ_k g‖²` for `k = 0..=N`.
    pub fn level_norms_sq(&self) -> Vec<f64> {
        (0..=self.degree)
            .map(|k| {
                self.values[level_offset(k)..level_offset(k + 1)]
                    .iter()
                    .map(|x| x * x)
                    .sum()
            })
            .collect()
    }

    /// `‖∇ᵐ_{𝓗₊} g‖²`, accumulated by `m` successive sweeps of the three raising operators.
    ///
    /// Only squared coefficients matter: the sweep carries
    /// `ρ_r(β) = Σ_τ ((∇^r g)_τ)_β²` over all ordered component tuples `τ`, with
    /// `ρ_{r+1}(β+e_k) += (β_k+1) ρ_r(β)`.
    pub fn grad_hplus_norm_sq(&self, m: usize) -> f64 {
        let (log_scale, rho) = self.grad_hplus_density(m);
        let s: f64 = rho.iter().sum();
        if log_scale == 0.0 {
            s
        } else {
            s * log_scale.exp()
        }
    }

    /// `ln ‖∇ᵐ_{𝓗₊} g‖²`, safe for large `m` (`-inf` for the zero tensor).
    pub fn grad_hplus_log_norm_sq(&self, m: usize) -> f64 {
        let (log_scale, rho) = self.grad_hplus_density(m);
        let s: f64 = rho.iter().sum();
        s.ln() + log_scale
    }

    fn grad_hplus_density(&self, m: usize) -> (f64, Vec<f64>) {
        let mut rho: Vec<f64> = self.values.iter().map(|x| x * x).collect();
        let mut log_scale = 0.0;
        for r in 0..m {
            let deg = self.degree + r;
            let mut next = vec![0.0; level_offset(deg + 2)];
            for (i, &p) in rho.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let b = MultiIndex::from_index_fast(i);
                for k in 0..3 {
                    next[b.plus(k).index()] += (b.0[k] + 1) as f64 * p;
                }
            }
            let peak = next.iter().fold(0.0f64, |a, &x| a.max(x));
            if peak > 1e200 {
                let inv = 1.0 / peak;
                next.iter_mut().for_each(|x| *x *= inv);
                log_scale += peak.ln();
            }
            rho = next;
        }
        (log_scale, rho)
    }

    /// The components `A_+^α g` of `∇ᵐ_{𝓗₊} g` with their multiplicities `m!/α!`.
    pub fn grad_hplus_components(&self, m: usize) -> Vec<(MultiIndex, f64, CoeffTensor)> {
        level_indices(m)
            .into_iter()
            .map(|alpha| {
                let w = factorial(m) / alpha.factorial();
                (alpha, w, self.raise_multi(alpha))
            })
            .collect()
    }

    /// Point value `Σ_α g_α ψ_α(v)`.
    pub fn eval_point(&self, v: [f64; 3]) -> f64 {
        let tables: Vec<Vec<f64>> = v
            .iter()
            .map(|&x| hermite_functions(x, self.degree))
            .collect();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 0.0)
            .map(|(i, g)| {
                let a = MultiIndex::from_index_fast(i);
                g * tables[0][a.0[0]] * tables[1][a.0[1]] * tables[2][a.0[2]]
            })
            .sum()
    }

    /// Independent standard-normal coefficients damped by `e^{-|α|/4}` on `|α| ≤ support`.
    ///
    /// Draws happen in layout order, so the same RNG state gives nested tensors
    /// for nested supports.
    pub fn random_damped<R: Rng + ?Sized>(rng: &mut R, degree: usize, support: usize) -> Self {
        Self::random_with_damping(rng, degree, support, 0.25)
    }

    /// As [`CoeffTensor::random_damped`] with coefficients damped by `e^{-rate |α|}`.
    pub fn random_with_damping<R: Rng + ?Sized>(
        rng: &mut R,
        degree: usize,
        support: usize,
        rate: f64,
    ) -> Self {
        let support = support.min(degree);
        let mut t = CoeffTensor::zeros(degree);
        for k in 0..=support {
            let damp = (-rate * k as f64).exp();
            for x in &mut t.values[level_offset(k)..level_offset(k + 1)] {
                let z: f64 = rng.sample(StandardNormal);
                *x = z * damp;
            }
        }
        t
    }
}

impl MultiIndex {
    /// `from_index` specialised for hot loops: cached table for small indices.
    #[inline]
    pub fn from_index_fast(idx: usize) -> Self {
        thread_local! {
            static TABLE: std::cell::RefCell<Vec<MultiIndex>> = const { std::cell::RefCell::new(Vec::new()) };
        }
        TABLE.with(|t| {
            let mut t = t.borrow_mut();
            if idx >= t.len() {
                let mut k = 0;
                while level_offset(k) <= idx {
                    k += 1;
                }
                let n = level_offset(k + 2);
                let start = t.len();
                t.extend((start..n).map(MultiIndex::from_index));
            }
            t[idx]
        })
    }
}

/// Normalized Hermite functions `φ_0..φ_n` at `x` by three-term recurrence.
pub fn hermite_functions(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push((2.0 * std::f64::consts::PI).powf(-0.25) * (-x * x / 4.0).exp());
    if n >= 1 {
        out.push(x * out[0]);
    }
    for k in 1..n {
        let next = (x * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

/// Normalized probabilists' Hermite polynomials `He_k(x)/sqrt(k!)` for `k = 0..=n`.
pub fn normalized_hermite(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 1..n {
        let next = (x * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn ordering_roundtrip_and_count() {
        let t = Truncation::new(9);
        assert_eq!(t.num_modes(), 10 * 11 * 12 / 6);
        for (i, a) in t.indices().iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(MultiIndex::from_index_fast(i), *a);
        }
        assert_eq!(MultiIndex::from_index(1), MultiIndex::new(1, 0, 0));
        assert_eq!(MultiIndex::from_index(3), MultiIndex::new(0, 0, 1));
        // levels are contiguous
        for k in 0..9 {
            for i in t.level_range(k) {
                assert_eq!(MultiIndex::from_index(i).order(), k);
            }
        }
    }

    #[test]
    fn raise_examples() {
        let g = CoeffTensor::ground(3).raise(0);
        assert_eq!(g.get(MultiIndex::new(1, 0, 0)), 1.0);
        assert_eq!(g.norm_sq(), 1.0);
        let h = CoeffTensor::basis(MultiIndex::new(1, 0, 0), 3).raise(0);
        assert!((h.get(MultiIndex::new(2, 0, 0)) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(CoeffTensor::zeros(4).raise(2).norm_sq(), 0.0);
        assert_eq!(h.degree(), 4);
    }

    #[test]
    fn lower_examples() {
        assert_eq!(CoeffTensor::ground(3).lower(0).norm_sq(), 0.0);
        let g = CoeffTensor::basis(MultiIndex::new(2, 0, 0), 3).lower(0);
        assert!((g.get(MultiIndex::new(1, 0, 0)) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn commutator_is_identity() {
        let mut r = rng();
        let g = CoeffTensor::random_damped(&mut r, 8, 8);
        for axis in 0..3 {
            let lr = g.raise(axis).lower(axis);
            let rl = g.lower(axis).raise(axis);
            let c = lr.sub(&rl);
            assert!(c.max_abs_diff(&g) < 1e-13);
        }
    }

    #[test]
    fn multiplication_and_derivative() {
        let p0 = CoeffTensor::ground(2);
        let v = p0.mult_v(0);
        assert!((v.get(MultiIndex::new(1, 0, 0)) - 1.0).abs() < 1e-15);
        let d = p0.diff_v(0);
        assert!((d.get(MultiIndex::new(1, 0, 0)) + 0.5).abs() < 1e-15);
        let vv = v.mult_v(0);
        assert!((vv.get(MultiIndex::ZERO) - 1.0).abs() < 1e-15);
        assert!((vv.get(MultiIndex::new(2, 0, 0)) - 2f64.sqrt()).abs() < 1e-15);

        let mut r = rng();
        let g = CoeffTensor::random_damped(&mut r, 6, 6);
        for axis in 0..3 {
            let via = g.mult_v(axis).scaled(0.5).sub(&g.diff_v(axis));
            assert!(via.max_abs_diff(&g.raise(axis)) < 1e-14);
        }
    }

    #[test]
    fn harmonic_oscillator_eigenvalues() {
        let p0 = CoeffTensor::ground(3);
        assert!((p0.harmonic_apply(2).get(MultiIndex::ZERO) - 1.5).abs() < 1e-15);
        let a = MultiIndex::new(1, 1, 0);
        let g = CoeffTensor::basis(a, 3);
        assert!((g.harmonic_apply(1).get(a) - 3.5f64.sqrt()).abs() < 1e-15);
        let mut r = rng();
        let g = CoeffTensor::random_damped(&mut r, 5, 5);
        assert_eq!(g.harmonic_apply(0), g);
    }

    #[test]
    fn level_projection_partition() {
        let g = CoeffTensor::ground(2).add(&CoeffTensor::basis(MultiIndex::unit(0), 2));
        assert_eq!(g.project_level(0), CoeffTensor::ground(2));
        let mut r = rng();
        let g = CoeffTensor::random_damped(&mut r, 7, 7);
        let p2 = g.project_level(2);
        let direct: f64 = level_indices(2).iter().map(|a| g.get(*a).powi(2)).sum();
        assert!((p2.norm_sq() - direct).abs() < 1e-15);
        let total: f64 = (0..=7).map(|k| g.project_level(k).norm_sq()).sum();
        assert!((total - g.norm_sq()).abs() < 1e-13);
        let mut acc = CoeffTensor::zeros(7);
        for k in 0..=7 {
            acc.axpy(1.0, &g.project_level(k));
        }
        assert_eq!(acc, g);
    }

    #[test]
    fn grad_norm_of_ground_state() {
        let p0 = CoeffTensor::ground(0);
        assert!((p0.grad_hplus_norm_sq(1) - 3.0).abs() < 1e-13);
        assert!((p0.grad_hplus_norm_sq(2) - 12.0).abs() < 1e-13);
        let mut r = rng();
        let g = CoeffTensor::random_damped(&mut r, 6, 6);
        assert!((g.grad_hplus_norm_sq(0) - g.norm_sq()).abs() < 1e-14);
    }

    #[test]
    fn grad_norm_matches_multinomial_sum() {
        // Σ_{|α|=m} (m!/α!) ‖A₊^α g‖² enumerated explicitly.
        let mut r = rng();
        let g = CoeffTensor::random_damped(&mut r, 5, 5);
        for m in 0..5 {
            let direct: f64 = g
                .grad_hplus_components(m)
                .iter()
                .map(|(_, w, t)| w * t.norm_sq())
                .sum();
            let sweep = g.grad_hplus_norm_sq(m);
            assert!((direct - sweep).abs() <= 1e-12 * direct, "m={m}");
        }
    }

    #[test]
    fn log_grad_norm_survives_large_m() {
        let p0 = CoeffTensor::ground(0);
        let l = p0.grad_hplus_log_norm_sq(200);
        // ‖∇^k sqrt(μ)‖² = (k+2)!/2
        let exact = libm::lgamma(203.0) - 2f64.ln();
        assert!((l - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn ground_state_point_value() {
        let p0 = CoeffTensor::ground(2);
        let expected = (2.0 * std::f64::consts::PI).powf(-0.75);
        assert!((p0.eval_point([0.0; 3]) - expected).abs() < 1e-15);
        assert!((expected - 0.25198).abs() < 1e-5);
        let e1 = CoeffTensor::basis(MultiIndex::unit(0), 2);
        assert_eq!(e1.eval_point([0.0; 3]), 0.0);
        let v = [0.3, -1.1, 0.7];
        let mu_half = expected * (-(0.09 + 1.21 + 0.49) / 4.0f64).exp();
        assert!((p0.eval_point(v) - mu_half).abs() < 1e-15);
    }

    #[test]
    fn ladder_power_of_ground_state() {
        // A₊^β ψ₀ = sqrt(β!) ψ_β
        for b in Truncation::new(5).indices() {
            let t = CoeffTensor::ground(0).raise_multi(b);
            let expected = b.factorial().sqrt();
            assert!((t.get(b) - expected).abs() < 1e-12 * expected);
            assert!((t.norm_sq() - b.factorial()).abs() < 1e-10 * b.factorial());
        }
    }

    #[test]
    fn nested_random_draws() {
        let a = CoeffTensor::random_damped(&mut ChaCha8Rng::seed_from_u64(3), 8, 4);
        let b = CoeffTensor::random_damped(&mut ChaCha8Rng::seed_from_u64(3), 12, 6);
        assert_eq!(a.values()[..level_offset(5)], b.values()[..level_offset(5)]);
        assert_eq!(a.support_degree(), Some(4));
    }
}

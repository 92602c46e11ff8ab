//! Galerkin operators `𝓛₁`, `𝓛₂`, `Γ` on the truncation `|α| ≤ N`, evaluated at
//! the tensor Gauss–Hermite grid through the weak forms
//!
//! ```text
//! ⟨𝓛₁g, ψ_α⟩   =  Σ_ij ⟨σ^{ij} A₋,j g, A₋,i ψ_α⟩
//! ⟨𝓛₂f, ψ_α⟩   = −Σ_ij ⟨sqrt(μ) (φ^{ij} ∗ sqrt(μ) A₋,j f), A₋,i ψ_α⟩
//! ⟨Γ(f,g), ψ_α⟩ =  Σ_ij ⟨(φ^{ij} ∗ sqrt(μ) f) A₊,j g − (φ^{ij} ∗ sqrt(μ) A₊,j f) g, A₋,i ψ_α⟩
//! ```
//!
//! Testing against `A₋,i ψ_α` is the same as projecting onto degree `N − 1`
//! and applying `A₊,i`, which is how the transforms are organised.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::hermite::{CoeffTensor, MultiIndex, Truncation};
use crate::kernel::{pair_index, ConvolutionTables, KernelError, Potential, SubordinationRule};
use crate::nodal::HermiteGrid;

#[derive(Debug, thiserror::Error)]
pub enum OperatorError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("tables of degree {have} cannot serve truncation degree {need}")]
    TableDegree { have: usize, need: usize },
    #[error("grid has {have} points per axis and transforms to degree {kmax}; truncation {degree} needs at least {need} points and degree {need_k}")]
    GridTooSmall {
        have: usize,
        kmax: usize,
        degree: usize,
        need: usize,
        need_k: usize,
    },
}

/// Tolerances echoed in every report.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub quadrature: f64,
    pub oracle: f64,
    pub eigen_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quadrature: 1e-9,
            oracle: 1e-8,
            eigen_floor: -1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    L1,
    L2,
    L1ClosedForm,
    GammaPartial,
    Linearized,
}

/// Dense matrix `M[α][β] = ⟨Op ψ_β, ψ_α⟩` over `|α|, |β| ≤ N`.
#[derive(Debug, Clone)]
pub struct GalerkinOperator {
    pub trunc: Truncation,
    pub tag: OperatorTag,
    pub matrix: DMatrix<f64>,
}

impl GalerkinOperator {
    /// Builds the matrix column by column from a matrix-free action.
    pub fn from_action<F: Fn(&CoeffTensor) -> CoeffTensor>(trunc: Truncation, tag: OperatorTag, op: F) -> Self {
        let n = trunc.num_modes();
        let mut matrix = DMatrix::zeros(n, n);
        for col in 0..n {
            let e = CoeffTensor::basis(MultiIndex::from_index(col), trunc.degree);
            let out = op(&e).with_degree(trunc.degree);
            for (row, v) in out.values().iter().enumerate() {
                matrix[(row, col)] = *v;
            }
        }
        GalerkinOperator { trunc, tag, matrix }
    }

    pub fn apply(&self, g: &CoeffTensor) -> CoeffTensor {
        let x = DVector::from_column_slice(g.with_degree(self.trunc.degree).values());
        let y = &self.matrix * x;
        CoeffTensor::from_values(self.trunc.degree, y.as_slice().to_vec()).expect("matrix dimension")
    }

    pub fn max_abs_diff(&self, other: &GalerkinOperator) -> f64 {
        (&self.matrix - &other.matrix).amax()
    }

    /// `max |M − Mᵀ|`.
    pub fn symmetry_residual(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn symmetrized(&self) -> DMatrix<f64> {
        (&self.matrix + self.matrix.transpose()) * 0.5
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.symmetrized()).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// `⟨M g, g⟩ / ⟨g, g⟩`.
    pub fn rayleigh_quotient(&self, g: &CoeffTensor) -> f64 {
        self.apply(g).dot(g) / g.norm_sq()
    }

    pub fn add(&self, other: &GalerkinOperator, tag: OperatorTag) -> GalerkinOperator {
        GalerkinOperator {
            trunc: self.trunc,
            tag,
            matrix: &self.matrix + &other.matrix,
        }
    }
}

/// The `γ = 0` linear operator `2(𝓗 − 3/2) − Δ_{S²}`, with
/// `Δ_{S²} = Σ_{i<j} L_ij²` and `L_ij = v_i∂_j − v_j∂_i = A₊,i A₋,j − A₊,j A₋,i`.
pub fn closed_form_l1_gamma0(trunc: Truncation) -> GalerkinOperator {
    GalerkinOperator::from_action(trunc, OperatorTag::L1ClosedForm, |g| {
        let n = trunc.degree;
        let rot = |u: &CoeffTensor, i: usize, j: usize| -> CoeffTensor {
            u.lower(j).raise(i).sub(&u.lower(i).raise(j)).with_degree(n)
        };
        let mut out = g.harmonic_apply(2).sub(&g.scaled(1.5)).scaled(2.0);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let l2 = rot(&rot(g, i, j), i, j);
            out = out.sub(&l2);
        }
        out
    })
}

/// Point count per axis used when none is configured.
pub fn default_points(degree: usize) -> usize {
    (degree + 4).max(20)
}

/// Split and weighted norms of one tensor.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormReport {
    /// `½ Σ ∫ σ^{ij} (A₋,i g A₋,j g + A₊,i g A₊,j g)`.
    pub sigma_norm_sq: f64,
    /// `Σ ∫ σ^{ij} ∂_i g ∂_j g + ¼ σ^{ij} v_i v_j g²`.
    pub sigma_norm_sq_direct: f64,
    /// `‖⟨v⟩^{γ/2} ∇g‖²`.
    pub grad_weighted_sq: f64,
    /// `‖⟨v⟩^{(γ+2)/2} g‖²`.
    pub weight_sq: f64,
    /// `‖⟨v⟩^{γ/2} 𝐏_v ∇_{𝓗±} g‖²`, both ladder families summed.
    pub parallel_sq: f64,
    /// `‖⟨v⟩^{(γ+2)/2} (I − 𝐏_v) ∇_{𝓗±} g‖²`, both ladder families summed.
    pub orthogonal_sq: f64,
}

/// `𝐏_v G = (G·v) v / |v|²` and its complement at each point; `𝐏_v G = 0` at `v = 0`.
pub fn project_along_v(field: &[[f64; 3]], points: &[[f64; 3]]) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let mut par = Vec::with_capacity(field.len());
    let mut orth = Vec::with_capacity(field.len());
    for (g, v) in field.iter().zip(points) {
        let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let p = if r2 == 0.0 {
            [0.0; 3]
        } else {
            let s = (g[0] * v[0] + g[1] * v[1] + g[2] * v[2]) / r2;
            [s * v[0], s * v[1], s * v[2]]
        };
        par.push(p);
        orth.push([g[0] - p[0], g[1] - p[1], g[2] - p[2]]);
    }
    (par, orth)
}

/// `sqrt(μ)`, `v_j sqrt(μ)`, `|v|² sqrt(μ)` as exact coefficient tensors.
pub fn collision_invariants(degree: usize) -> Vec<CoeffTensor> {
    let mut out = vec![CoeffTensor::ground(degree)];
    for j in 0..3 {
        out.push(CoeffTensor::basis(MultiIndex::unit(j), degree));
    }
    let mut e = CoeffTensor::ground(degree).scaled(3.0);
    for j in 0..3 {
        let mut a = [0; 3];
        a[j] = 2;
        e.set(MultiIndex(a), 2f64.sqrt());
    }
    out.push(e);
    out
}

/// Grid, convolution tables and the operator actions for one `(γ, N)`.
pub struct LandauOperators {
    pub pot: Potential,
    pub degree: usize,
    grid: HermiteGrid,
    tables: ConvolutionTables,
    sigma: Vec<Vec<f64>>,
}

impl LandauOperators {
    /// Builds grid and tables; `points` defaults to [`default_points`].
    pub fn new(pot: Potential, degree: usize, points: Option<usize>) -> Result<Self, OperatorError> {
        let n = points.unwrap_or_else(|| default_points(degree));
        let grid = Self::grid_for(degree, n);
        let tables = ConvolutionTables::build(pot, &grid, degree + 1, SubordinationRule::default());
        Self::from_parts(pot, degree, grid, tables)
    }

    pub fn grid_for(degree: usize, points: usize) -> HermiteGrid {
        HermiteGrid::new(points, degree + 2)
    }

    pub fn from_parts(
        pot: Potential,
        degree: usize,
        grid: HermiteGrid,
        tables: ConvolutionTables,
    ) -> Result<Self, OperatorError> {
        if tables.degree < degree + 1 {
            return Err(OperatorError::TableDegree {
                have: tables.degree,
                need: degree + 1,
            });
        }
        let need = degree / 2 + 3;
        if grid.points_per_axis() < need || grid.max_degree() < degree + 1 {
            return Err(OperatorError::GridTooSmall {
                have: grid.points_per_axis(),
                kmax: grid.max_degree(),
                degree,
                need,
                need_k: degree + 1,
            });
        }
        if pot.gamma == 0.0 {
            tables.gamma0_self_check(&grid)?;
        }
        let sigma = tables.sigma();
        Ok(LandauOperators {
            pot,
            degree,
            grid,
            tables,
            sigma,
        })
    }

    pub fn grid(&self) -> &HermiteGrid {
        &self.grid
    }

    pub fn tables(&self) -> &ConvolutionTables {
        &self.tables
    }

    pub fn trunc(&self) -> Truncation {
        Truncation::new(self.degree)
    }

    /// `σ^{ij}` at the grid points.
    pub fn sigma_at(&self, i: usize, j: usize) -> &[f64] {
        &self.sigma[pair_index(i, j)]
    }

    /// `Σ_i A₊,i ℙ_{≤N−1}(F_i)`: the Galerkin test against `A₋,i ψ_α`.
    pub fn close_divergence(&self, fields: &[Vec<f64>; 3]) -> CoeffTensor {
        let mut out = CoeffTensor::zeros(self.degree);
        if self.degree == 0 {
            return out;
        }
        for (i, f) in fields.iter().enumerate() {
            let p = self.grid.project(f, self.degree - 1);
            out.axpy(1.0, &p.raise(i));
        }
        out
    }

    fn restrict(&self, g: &CoeffTensor) -> CoeffTensor {
        if g.degree() == self.degree {
            g.clone()
        } else {
            g.with_degree(self.degree)
        }
    }

    /// `𝓛₁ g`; the input is first restricted to `|α| ≤ N`.
    pub fn apply_l1(&self, g: &CoeffTensor) -> CoeffTensor {
        let g = self.restrict(g);
        let lowered: Vec<Vec<f64>> = (0..3).map(|j| self.grid.evaluate(&g.lower(j))).collect();
        let npts = self.grid.num_points();
        let fields: [Vec<f64>; 3] = std::array::from_fn(|i| {
            let mut f = vec![0.0; npts];
            for (j, lj) in lowered.iter().enumerate() {
                let s = self.sigma_at(i, j);
                for k in 0..npts {
                    f[k] += s[k] * lj[k];
                }
            }
            f
        });
        self.close_divergence(&fields)
    }

    /// `𝓛₂ f`.
    pub fn apply_l2(&self, f: &CoeffTensor) -> CoeffTensor {
        let f = self.restrict(f);
        let npts = self.grid.num_points();
        let mut fields: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; npts]);
        for j in 0..3 {
            let c = self.tables.conv(&f.lower(j));
            for (i, field) in fields.iter_mut().enumerate() {
                let cij = &c[pair_index(i, j)];
                for k in 0..npts {
                    field[k] -= cij[k];
                }
            }
        }
        self.close_divergence(&fields)
    }

    /// Galerkin projection of `Γ(f, g)` onto `|α| ≤ N`.
    pub fn apply_gamma(&self, f: &CoeffTensor, g: &CoeffTensor) -> CoeffTensor {
        self.gamma_left(f).apply(g)
    }

    /// `g ↦ Γ(f, g)` with the convolutions of `f` precomputed.
    pub fn gamma_left(&self, f: &CoeffTensor) -> GammaLeft<'_> {
        let f = self.restrict(f);
        let empty = f.support_degree().is_none();
        let (cf, cfj) = if empty {
            (Vec::new(), Vec::new())
        } else {
            (
                self.tables.conv(&f),
                (0..3).map(|j| self.tables.conv(&f.raise(j))).collect(),
            )
        };
        GammaLeft { ops: self, empty, cf, cfj }
    }

    pub fn assemble_l1(&self) -> GalerkinOperator {
        GalerkinOperator::from_action(self.trunc(), OperatorTag::L1, |g| self.apply_l1(g))
    }

    pub fn assemble_l2(&self) -> GalerkinOperator {
        GalerkinOperator::from_action(self.trunc(), OperatorTag::L2, |g| self.apply_l2(g))
    }

    /// `𝓛 = 𝓛₁ + 𝓛₂`.
    pub fn assemble_linearized(&self) -> GalerkinOperator {
        GalerkinOperator::from_action(self.trunc(), OperatorTag::Linearized, |g| {
            self.apply_l1(g).add(&self.apply_l2(g))
        })
    }

    /// Matrix of `g ↦ Γ(f, g)`.
    pub fn assemble_gamma_partial(&self, f: &CoeffTensor) -> GalerkinOperator {
        GalerkinOperator::from_action(self.trunc(), OperatorTag::GammaPartial, |g| self.apply_gamma(f, g))
    }

    /// Both routes of the σ-norm and the weighted norms it controls.
    ///
    /// `g` may have any degree up to `N`; it is not restricted.
    pub fn sigma_norm_sq(&self, g: &CoeffTensor) -> NormReport {
        let grid = &self.grid;
        let npts = grid.num_points();
        let plus: Vec<Vec<f64>> = (0..3).map(|i| grid.evaluate(&g.raise(i))).collect();
        let minus: Vec<Vec<f64>> = (0..3).map(|i| grid.evaluate(&g.lower(i))).collect();
        let deriv: Vec<Vec<f64>> = (0..3).map(|i| grid.evaluate(&g.diff_v(i))).collect();
        let ghat = grid.evaluate(g);
        let w = grid.point_weights();
        let mut ladder = 0.0;
        let mut direct = 0.0;
        let mut grad_w = 0.0;
        let mut weight = 0.0;
        let mut par = 0.0;
        let mut orth = 0.0;
        let gamma = self.pot.gamma;
        for k in 0..npts {
            let v = grid.point(k);
            let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let bracket = 1.0 + r2;
            let mut l = 0.0;
            let mut d = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let s = self.sigma_at(i, j)[k];
                    l += s * (minus[i][k] * minus[j][k] + plus[i][k] * plus[j][k]);
                    d += s * (deriv[i][k] * deriv[j][k] + 0.25 * v[i] * v[j] * ghat[k] * ghat[k]);
                }
            }
            ladder += w[k] * 0.5 * l;
            direct += w[k] * d;
            let grad2: f64 = (0..3).map(|i| deriv[i][k] * deriv[i][k]).sum();
            grad_w += w[k] * bracket.powf(gamma / 2.0) * grad2;
            weight += w[k] * bracket.powf(gamma / 2.0 + 1.0) * ghat[k] * ghat[k];
            for fam in [&plus, &minus] {
                let gv = [fam[0][k], fam[1][k], fam[2][k]];
                let (p, o) = project_along_v(&[gv], &[v]);
                let p2: f64 = p[0].iter().map(|x| x * x).sum();
                let o2: f64 = o[0].iter().map(|x| x * x).sum();
                par += w[k] * bracket.powf(gamma / 2.0) * p2;
                orth += w[k] * bracket.powf(gamma / 2.0 + 1.0) * o2;
            }
        }
        NormReport {
            sigma_norm_sq: ladder,
            sigma_norm_sq_direct: direct,
            grad_weighted_sq: grad_w,
            weight_sq: weight,
            parallel_sq: par,
            orthogonal_sq: orth,
        }
    }

    /// Symmetric bilinear form of the σ-norm on the basis `|α| ≤ N`.
    pub fn sigma_gram(&self) -> DMatrix<f64> {
        let trunc = self.trunc();
        let n = trunc.num_modes();
        let grid = &self.grid;
        let npts = grid.num_points();
        let w = grid.point_weights();
        let mut plus = Vec::with_capacity(n);
        let mut minus = Vec::with_capacity(n);
        for col in 0..n {
            let e = CoeffTensor::basis(MultiIndex::from_index(col), self.degree);
            plus.push((0..3).map(|i| grid.evaluate(&e.raise(i))).collect::<Vec<_>>());
            minus.push((0..3).map(|i| grid.evaluate(&e.lower(i))).collect::<Vec<_>>());
        }
        // S[a][b] = ½ Σ_ij E[σ^{ij} (A₋,i a A₋,j b + A₊,i a A₊,j b)]
        let mut sp: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
        for b in 0..n {
            let mut fam = Vec::with_capacity(6);
            for src in [&plus[b], &minus[b]] {
                for i in 0..3 {
                    let mut f = vec![0.0; npts];
                    for (j, sj) in src.iter().enumerate() {
                        let s = self.sigma_at(i, j);
                        for k in 0..npts {
                            f[k] += s[k] * sj[k] * w[k];
                        }
                    }
                    fam.push(f);
                }
            }
            sp.push(fam);
        }
        let mut gram = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let mut s = 0.0;
                for i in 0..3 {
                    s += dot(&plus[a][i], &sp[b][i]) + dot(&minus[a][i], &sp[b][3 + i]);
                }
                gram[(a, b)] = 0.5 * s;
                gram[(b, a)] = 0.5 * s;
            }
        }
        gram
    }

    /// `‖⟨v⟩^s g‖²` by quadrature.
    pub fn weighted_norm_sq(&self, g: &CoeffTensor, s: f64) -> f64 {
        let ghat = self.grid.evaluate(g);
        let w = self.grid.point_weights();
        (0..self.grid.num_points())
            .map(|k| {
                let v = self.grid.point(k);
                let b = 1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                w[k] * b.powf(s) * ghat[k] * ghat[k]
            })
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Left-frozen trilinear form `g ↦ Γ(f, g)`.
pub struct GammaLeft<'a> {
    ops: &'a LandauOperators,
    empty: bool,
    cf: Vec<Vec<f64>>,
    cfj: Vec<Vec<Vec<f64>>>,
}

impl GammaLeft<'_> {
    pub fn apply(&self, g: &CoeffTensor) -> CoeffTensor {
        let ops = self.ops;
        let g = ops.restrict(g);
        if self.empty || g.support_degree().is_none() {
            return CoeffTensor::zeros(ops.degree);
        }
        let npts = ops.grid.num_points();
        let mut fields: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; npts]);
        let ghat = ops.grid.evaluate(&g);
        for j in 0..3 {
            let gj = ops.grid.evaluate(&g.raise(j));
            for (i, field) in fields.iter_mut().enumerate() {
                let p = pair_index(i, j);
                let (a, b) = (&self.cf[p], &self.cfj[j][p]);
                for k in 0..npts {
                    field[k] += a[k] * gj[k] - b[k] * ghat[k];
                }
            }
        }
        ops.close_divergence(&fields)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ops(gamma: f64, n: usize) -> LandauOperators {
        LandauOperators::new(Potential { gamma }, n, Some(n + 4)).unwrap()
    }

    #[test]
    fn closed_form_properties() {
        let t = Truncation::new(4);
        let m = closed_form_l1_gamma0(t);
        assert!(m.symmetry_residual() < 1e-13);
        let p0 = m.apply(&CoeffTensor::ground(4));
        assert!(p0.max_abs() < 1e-14);
        for j in 0..3 {
            let e = CoeffTensor::basis(MultiIndex::unit(j), 4);
            assert!(m.apply(&e).max_abs_diff(&e.scaled(4.0)) < 1e-13);
        }
        // level preserving
        for col in 0..t.num_modes() {
            let kc = MultiIndex::from_index(col).order();
            for row in 0..t.num_modes() {
                if MultiIndex::from_index(row).order() != kc {
                    assert_eq!(m.matrix[(row, col)], 0.0);
                }
            }
        }
        let r = t.level_range(1);
        let trace: f64 = r.clone().map(|i| m.matrix[(i, i)]).sum();
        assert!((trace - 3.0 * m.matrix[(r.start, r.start)]).abs() < 1e-13);
        assert!(m.symmetric_eigenvalues()[0] > -1e-12);
    }

    #[test]
    fn assembled_l1_matches_closed_form() {
        let o = ops(0.0, 6);
        let a = o.assemble_l1();
        let c = closed_form_l1_gamma0(o.trunc());
        assert!(a.max_abs_diff(&c) < 1e-10, "{}", a.max_abs_diff(&c));
        assert!(o.apply_l1(&CoeffTensor::ground(6)).max_abs() < 1e-12);
    }

    #[test]
    fn gamma_representations() {
        let o = ops(0.0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = CoeffTensor::random_damped(&mut rng, 5, 5);
        let p0 = CoeffTensor::ground(5);
        let r1 = o.apply_gamma(&p0, &g).add(&o.apply_l1(&g));
        assert!(r1.max_abs() < 1e-11);
        let r2 = o.apply_gamma(&g, &p0).add(&o.apply_l2(&g));
        assert!(r2.max_abs() < 1e-11);
        assert_eq!(o.apply_gamma(&CoeffTensor::zeros(5), &g).max_abs(), 0.0);
        assert_eq!(o.apply_gamma(&g, &CoeffTensor::zeros(5)).max_abs(), 0.0);
        assert!(o.apply_gamma(&p0, &p0).max_abs() < 1e-12);
    }

    #[test]
    fn gamma_representations_hard_potential() {
        let o = ops(1.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = CoeffTensor::random_damped(&mut rng, 3, 3);
        let p0 = CoeffTensor::ground(3);
        assert!(o.apply_gamma(&p0, &g).add(&o.apply_l1(&g)).max_abs() < 1e-9);
        assert!(o.apply_gamma(&g, &p0).add(&o.apply_l2(&g)).max_abs() < 1e-9);
        let l1 = o.assemble_l1();
        assert!(l1.symmetry_residual() < 1e-9);
        assert!(o.apply_l1(&p0).max_abs() < 1e-9);
    }

    #[test]
    fn l2_preserves_parity_class() {
        let o = ops(0.0, 4);
        // odd in v1, even in v2, v3
        let mut f = CoeffTensor::zeros(4);
        f.set(MultiIndex::new(1, 0, 0), 0.7);
        f.set(MultiIndex::new(1, 2, 0), -0.3);
        f.set(MultiIndex::new(3, 0, 0), 0.2);
        let out = o.apply_l2(&f);
        for (i, v) in out.values().iter().enumerate() {
            let a = MultiIndex::from_index(i);
            if a.0[0] % 2 == 0 || a.0[1] % 2 == 1 || a.0[2] % 2 == 1 {
                assert!(v.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn linearized_nonnegative_with_invariant_kernel() {
        let o = ops(0.0, 5);
        let l = o.assemble_linearized();
        assert!(l.symmetric_eigenvalues()[0] > -1e-10);
        for inv in collision_invariants(5) {
            assert!(l.rayleigh_quotient(&inv).abs() < 1e-10);
        }
    }

    #[test]
    fn sigma_norm_routes() {
        let o = ops(0.0, 5);
        let r = o.sigma_norm_sq(&CoeffTensor::ground(5));
        assert!((r.sigma_norm_sq - 3.0).abs() < 1e-12);
        assert!((r.sigma_norm_sq_direct - 3.0).abs() < 1e-12);
        let g = CoeffTensor::random_damped(&mut ChaCha8Rng::seed_from_u64(2), 5, 5);
        let r = o.sigma_norm_sq(&g);
        assert!((r.sigma_norm_sq - r.sigma_norm_sq_direct).abs() < 1e-9 * r.sigma_norm_sq);
        let gram = o.sigma_gram();
        let x = DVector::from_column_slice(g.values());
        let q = (x.transpose() * &gram * &x)[(0, 0)];
        assert!((q - r.sigma_norm_sq).abs() < 1e-10 * q);
        assert!(r.parallel_sq > 0.0 && r.orthogonal_sq > 0.0);
    }

    #[test]
    fn weighted_norms() {
        let o = ops(0.0, 4);
        let p0 = CoeffTensor::ground(4);
        assert!((o.weighted_norm_sq(&p0, 1.0) - 4.0).abs() < 1e-12);
        let g = CoeffTensor::random_damped(&mut ChaCha8Rng::seed_from_u64(3), 4, 4);
        assert!((o.weighted_norm_sq(&g, 0.0) - g.norm_sq()).abs() < 1e-10);
        let mut prev = 0.0;
        for s in [0.0, 0.5, 1.0, 1.5] {
            let w = o.weighted_norm_sq(&g, s);
            assert!(w >= prev);
            prev = w;
        }
    }

    #[test]
    fn projection_along_v() {
        let pts = [[1.0, 2.0, -1.0], [0.0, 0.0, 0.0], [0.3, 0.1, 0.2]];
        let g = 1.7;
        let field: Vec<[f64; 3]> = pts.iter().map(|v| [g * v[0], g * v[1], g * v[2]]).collect();
        let (p, o) = project_along_v(&field, &pts);
        for k in [0, 2] {
            for i in 0..3 {
                assert!((p[k][i] - field[k][i]).abs() < 1e-14);
                assert!(o[k][i].abs() < 1e-14);
            }
        }
        assert_eq!(p[1], [0.0; 3]);
        let h = [[0.5, -0.2, 0.9]];
        let (p, o) = project_along_v(&h, &pts[..1]);
        let n2 = |x: [f64; 3]| x.iter().map(|y| y * y).sum::<f64>();
        assert!((n2(h[0]) - n2(p[0]) - n2(o[0])).abs() < 1e-14);
    }

    #[test]
    fn invariants_exact() {
        let inv = collision_invariants(2);
        assert_eq!(inv.len(), 5);
        let e = &inv[4];
        assert_eq!(e.get(MultiIndex::ZERO), 3.0);
        assert!((e.get(MultiIndex::new(0, 2, 0)) - 2f64.sqrt()).abs() < 1e-15);
        // |v|² ψ₀ = Σ v_j (v_j ψ₀)
        let p0 = CoeffTensor::ground(0);
        let mut r = CoeffTensor::zeros(2);
        for j in 0..3 {
            r.axpy(1.0, &p0.mult_v(j).mult_v(j));
        }
        assert!(r.max_abs_diff(e) < 1e-14);
    }
}

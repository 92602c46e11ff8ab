//! IMEX time integration of the truncated perturbation equation
//! `∂ₜg + 𝓛g = Γ(g, g)` and the exact `γ = 0` reference heat flow.

use nalgebra::{DMatrix, DVector, LU};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::hermite::{level_offset, CoeffTensor, Truncation};
use crate::inequalities::sample_rng;
use crate::kernel::Potential;
use crate::operators::{collision_invariants, LandauOperators, OperatorError};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("linear system (I + c·dt·𝓛) is singular")]
    Singular,
    #[error("step at t = {t} rejected: norm grew from {before:.3e} to {after:.3e}")]
    Unstable { t: f64, before: f64, after: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("initial datum has norm {norm:.3e} above epsilon0 = {epsilon0:.3e}")]
    DatumTooLarge { norm: f64, epsilon0: f64 },
    #[error("reference heat flow is exact only for gamma = 0 (got {0})")]
    ReferenceGamma(f64),
    #[error("degree mismatch: state has degree {got}, solver expects {expected}")]
    Degree { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `(I + dt𝓛) g₁ = g₀ + dt Γ(g₀, g₀)`.
    ImexEuler,
    /// Crank–Nicolson on `𝓛`, second-order Adams–Bashforth on `Γ` (Euler start).
    ImexCn,
}

impl Scheme {
    pub fn order(self) -> f64 {
        match self {
            Scheme::ImexEuler => 1.0,
            Scheme::ImexCn => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ImexEuler => "imex-euler",
            Scheme::ImexCn => "imex-cn",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "imex-euler" => Ok(Scheme::ImexEuler),
            "imex-cn" => Ok(Scheme::ImexCn),
            _ => Err(format!("unknown scheme '{s}' (expected imex-euler or imex-cn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub gamma: f64,
    pub degree: usize,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub epsilon0: f64,
    pub seed: u64,
    /// Gauss–Hermite points per axis; `None` picks the operator default.
    pub quadrature_points: Option<usize>,
    /// Store a snapshot every this many steps (the initial state is always stored).
    pub snapshot_every: usize,
    /// Highest level of the random initial datum; `None` means `degree`.
    pub datum_support: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            gamma: 0.0,
            degree: 12,
            dt: 1e-3,
            t_end: 1.0,
            scheme: Scheme::ImexEuler,
            epsilon0: 1e-2,
            seed: 0,
            quadrature_points: None,
            snapshot_every: 10,
            datum_support: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be positive");
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return bad("t_end must be at least dt");
        }
        if !(self.epsilon0 > 0.0) {
            return bad("epsilon0 must be positive");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be finite and non-negative");
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1");
        }
        Ok(())
    }

    pub fn pot(&self) -> Potential {
        Potential { gamma: self.gamma }
    }

    pub fn trunc(&self) -> Truncation {
        Truncation::new(self.degree)
    }

    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub l2_sq: f64,
    pub sigma_sq: f64,
    pub int_sigma_sq: f64,
    /// `(‖g_{n+1}‖² − ‖g_n‖²)/dt − 2(−⟨𝓛g, g⟩ + ⟨Γ(g,g), g⟩)` at the new state.
    pub energy_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub state: CoeffTensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Set when integration stopped early; the records up to that point are kept.
    pub aborted: Option<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&CoeffTensor> {
        self.snapshots.last().map(|s| &s.state)
    }

    /// Trajectory CSV with header `t,l2_sq,sigma_sq,int_sigma_sq,energy_residual`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,l2_sq,sigma_sq,int_sigma_sq,energy_residual\n");
        for r in &self.records {
            s.push_str(&format!(
                "{:.12e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.t, r.l2_sq, r.sigma_sq, r.int_sigma_sq, r.energy_residual
            ));
        }
        s
    }
}

/// Pre-factored IMEX integrator for one configuration.
pub struct Solver {
    pub cfg: SimConfig,
    pub ops: LandauOperators,
    linear: DMatrix<f64>,
    gram: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    prev_gamma: Option<CoeffTensor>,
}

impl Solver {
    pub fn new(cfg: SimConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let ops = LandauOperators::new(cfg.pot(), cfg.degree, cfg.quadrature_points)?;
        Self::with_operators(cfg, ops)
    }

    pub fn with_operators(cfg: SimConfig, ops: LandauOperators) -> Result<Self, SolverError> {
        cfg.validate()?;
        if ops.degree != cfg.degree {
            return Err(SolverError::Degree {
                expected: cfg.degree,
                got: ops.degree,
            });
        }
        let linear = ops.assemble_linearized().matrix;
        let gram = ops.sigma_gram();
        let c = match cfg.scheme {
            Scheme::ImexEuler => cfg.dt,
            Scheme::ImexCn => 0.5 * cfg.dt,
        };
        let n = linear.nrows();
        let sys = DMatrix::identity(n, n) + c * &linear;
        let lu = sys.lu();
        if !lu.is_invertible() {
            return Err(SolverError::Singular);
        }
        Ok(Solver {
            cfg,
            ops,
            linear,
            gram,
            lu,
            prev_gamma: None,
        })
    }

    pub fn linear_matrix(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn sigma_sq(&self, g: &CoeffTensor) -> f64 {
        let x = DVector::from_column_slice(g.values());
        (x.transpose() * &self.gram * &x)[(0, 0)]
    }

    /// `⟨𝓛g, g⟩`.
    pub fn dissipation(&self, g: &CoeffTensor) -> f64 {
        let x = DVector::from_column_slice(g.values());
        (x.transpose() * &self.linear * &x)[(0, 0)]
    }

    fn check_degree(&self, g: &CoeffTensor) -> Result<(), SolverError> {
        if g.degree() != self.cfg.degree {
            return Err(SolverError::Degree {
                expected: self.cfg.degree,
                got: g.degree(),
            });
        }
        Ok(())
    }

    /// Forgets the Adams–Bashforth history so the next step restarts with Euler.
    pub fn reset(&mut self) {
        self.prev_gamma = None;
    }

    /// Advances `g` by one step of size `dt`; `t` is only used for error reports.
    pub fn step(&mut self, g: &CoeffTensor, t: f64) -> Result<CoeffTensor, SolverError> {
        self.check_degree(g)?;
        let dt = self.cfg.dt;
        let nl = self.ops.apply_gamma(g, g);
        let x = DVector::from_column_slice(g.values());
        let rhs = match (self.cfg.scheme, &self.prev_gamma) {
            (Scheme::ImexEuler, _) => x + dt * DVector::from_column_slice(nl.values()),
            (Scheme::ImexCn, prev) => {
                let explicit = match prev {
                    Some(p) => nl.scaled(1.5).sub(&p.scaled(0.5)),
                    None => nl.clone(),
                };
                &x - (0.5 * dt) * (&self.linear * &x) + dt * DVector::from_column_slice(explicit.values())
            }
        };
        let sol = self.lu.solve(&rhs).ok_or(SolverError::Singular)?;
        let next = CoeffTensor::from_values(self.cfg.degree, sol.as_slice().to_vec()).expect("solver keeps the degree");
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite(t + dt));
        }
        let (before, after) = (g.norm(), next.norm());
        if after > 2.0 * before && after > 0.0 {
            return Err(SolverError::Unstable { t: t + dt, before, after });
        }
        self.prev_gamma = Some(nl);
        Ok(next)
    }

    /// `2(−⟨𝓛g, g⟩ + ⟨Γ(g,g), g⟩)`.
    pub fn energy_rate(&self, g: &CoeffTensor) -> f64 {
        2.0 * (-self.dissipation(g) + self.ops.apply_gamma(g, g).dot(g))
    }

    /// Integrates from `g0` to `t_end`. On a step failure the partial trajectory
    /// is returned with `aborted` set.
    pub fn simulate(&mut self, g0: &CoeffTensor) -> Result<Trajectory, SolverError> {
        self.check_degree(g0)?;
        let norm = g0.norm();
        if norm > self.cfg.epsilon0 * (1.0 + 1e-12) {
            return Err(SolverError::DatumTooLarge {
                norm,
                epsilon0: self.cfg.epsilon0,
            });
        }
        self.reset();
        let dt = self.cfg.dt;
        let mut traj = Trajectory::default();
        let mut g = g0.clone();
        let s0 = self.sigma_sq(&g);
        traj.records.push(StepRecord {
            t: 0.0,
            l2_sq: g.norm_sq(),
            sigma_sq: s0,
            int_sigma_sq: 0.0,
            energy_residual: 0.0,
        });
        traj.snapshots.push(Snapshot { t: 0.0, state: g.clone() });
        let mut integral = 0.0;
        let mut prev_sigma = s0;
        for n in 1..=self.cfg.num_steps() {
            let t = (n - 1) as f64 * dt;
            let next = match self.step(&g, t) {
                Ok(x) => x,
                Err(e) => {
                    traj.aborted = Some(e.to_string());
                    return Ok(traj);
                }
            };
            let t_new = n as f64 * dt;
            let sigma = self.sigma_sq(&next);
            integral += 0.5 * dt * (prev_sigma + sigma);
            prev_sigma = sigma;
            let rate = (next.norm_sq() - g.norm_sq()) / dt;
            traj.records.push(StepRecord {
                t: t_new,
                l2_sq: next.norm_sq(),
                sigma_sq: sigma,
                int_sigma_sq: integral,
                energy_residual: rate - self.energy_rate(&next),
            });
            g = next;
            if n % self.cfg.snapshot_every == 0 || n == self.cfg.num_steps() {
                traj.snapshots.push(Snapshot { t: t_new, state: g.clone() });
            }
        }
        Ok(traj)
    }
}

/// Orthogonal projection onto the complement of the collision invariants.
pub fn remove_invariants(g: &CoeffTensor) -> CoeffTensor {
    let inv = collision_invariants(g.degree());
    // Gram–Schmidt; the invariants are linearly independent but not orthogonal
    let mut basis: Vec<CoeffTensor> = Vec::new();
    for v in inv {
        let mut w = v;
        for b in &basis {
            let c = w.dot(b);
            w.axpy(-c, b);
        }
        let n = w.norm();
        basis.push(w.scaled(1.0 / n));
    }
    let mut out = g.clone();
    for b in &basis {
        let c = out.dot(b);
        out.axpy(-c, b);
    }
    out
}

/// Random datum with per-coefficient rms `(|α|+1)^{-2}` on `|α| ≤ support`,
/// projected off the collision invariants and scaled to norm `epsilon0`.
///
/// Coefficients come from one stream in the flat ordering, so data for
/// different `degree` with equal `support` coincide.
pub fn rough_datum(degree: usize, support: usize, seed: u64, epsilon0: f64) -> CoeffTensor {
    let support = support.min(degree);
    let mut rng = sample_rng(seed, 0, 7);
    let mut g = CoeffTensor::zeros(degree);
    for k in 0..=support {
        let s = ((k + 1) as f64).powi(-2);
        for x in &mut g.values_mut()[level_offset(k)..level_offset(k + 1)] {
            let z: f64 = rng.sample(StandardNormal);
            *x = z * s;
        }
    }
    let g = remove_invariants(&g);
    let n = g.norm();
    if n == 0.0 {
        g
    } else {
        g.scaled(epsilon0 / n)
    }
}

/// Exact flow of `∂ₜf = −(𝓗 − 3/2 + 3/2) f` at `γ = 0`: `g_α ↦ e^{−(|α|+3/2)t} g_α`.
pub fn reference_heat_flow(g0: &CoeffTensor, t: f64, gamma: f64) -> Result<CoeffTensor, SolverError> {
    if gamma != 0.0 {
        return Err(SolverError::ReferenceGamma(gamma));
    }
    let mut g = g0.clone();
    for k in 0..=g.degree() {
        let f = (-(k as f64 + 1.5) * t).exp();
        for x in &mut g.values_mut()[level_offset(k)..level_offset(k + 1)] {
            *x *= f;
        }
    }
    Ok(g)
}

/// The same flow acting on level norms `‖ℙ_k g‖`, for spectra too large to store as tensors.
pub fn reference_heat_flow_levels(levels: &[f64], t: f64) -> Vec<f64> {
    levels
        .iter()
        .enumerate()
        .map(|(k, l)| l * (-(k as f64 + 1.5) * t).exp())
        .collect()
}

/// Level norms of a datum with per-coefficient rms `(k+1)^{-2}`: `‖ℙ_k g‖ = sqrt(d_k) (k+1)^{-2}`.
pub fn rough_level_spectrum(levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|k| (crate::hermite::level_size(k) as f64).sqrt() * ((k + 1) as f64).powi(-2))
        .collect()
}

/// Smallest nonzero `λ` with `⟨𝓛g, g⟩ ≥ λ ‖|g|‖²_σ` on the complement of the collision invariants.
pub fn coercivity_constant(ops: &LandauOperators) -> f64 {
    let n = crate::hermite::level_offset(ops.degree + 1);
    let l = ops.assemble_linearized().symmetrized();
    let s = ops.sigma_gram();
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in collision_invariants(ops.degree) {
        let mut w = DVector::from_column_slice(v.values());
        for b in &basis {
            let c = w.dot(b);
            w -= c * b;
        }
        let w = w.normalize();
        p -= &w * w.transpose();
        basis.push(w);
    }
    let lp = &p * l * &p;
    let sp = &p * s * &p + (DMatrix::identity(n, n) - &p);
    let chol = sp.cholesky().expect("σ-form is positive definite off the invariants");
    let li = chol.l().try_inverse().expect("triangular factor is invertible");
    let c = &li * lp * li.transpose();
    let eig = (0.5 * (&c + c.transpose())).symmetric_eigen();
    eig.eigenvalues.iter().copied().filter(|x| *x > 1e-8).fold(f64::INFINITY, f64::min)
}

/// `ε₀ = λ / (8 C)` from the measured coercivity constant `λ` and trilinear constant `C`.
pub fn measured_epsilon0(ops: &LandauOperators, seed: u64) -> Result<f64, SolverError> {
    let lambda = coercivity_constant(ops);
    let rep = crate::inequalities::estimate_trilinear(ops, 1, seed)
        .map_err(|e| SolverError::Config(e.to_string()))?;
    let c = rep.max_ratio.unwrap_or(0.0);
    if !(c > 0.0) || !lambda.is_finite() {
        return Err(SolverError::Config("could not measure the smallness threshold".into()));
    }
    Ok(lambda / (8.0 * c))
}

/// Smallest `Ĉ ≥ 0` with `‖g(t)‖² + ∫₀ᵗ‖|g|‖²_σ ≤ e^{Ĉt} ‖g₀‖²` along the records.
pub fn gronwall_rate(traj: &Trajectory) -> Option<f64> {
    let first = traj.records.first()?;
    if first.l2_sq == 0.0 {
        return Some(0.0);
    }
    let mut c: f64 = 0.0;
    for r in traj.records.iter().skip(1) {
        let lhs = r.l2_sq + r.int_sigma_sq;
        c = c.max((lhs / first.l2_sq).ln() / r.t);
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::MultiIndex;

    fn cfg(n: usize, dt: f64, t_end: f64, scheme: Scheme) -> SimConfig {
        SimConfig {
            degree: n,
            dt,
            t_end,
            scheme,
            epsilon0: 1.0,
            snapshot_every: 1,
            ..SimConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(4, 0.0, 1.0, Scheme::ImexEuler).validate().is_err());
        assert!(cfg(4, 0.1, 0.05, Scheme::ImexEuler).validate().is_err());
        let mut c = cfg(4, 0.1, 1.0, Scheme::ImexEuler);
        c.epsilon0 = 0.0;
        assert!(c.validate().is_err());
        assert_eq!(cfg(4, 0.1, 1.0, Scheme::ImexEuler).num_steps(), 10);
        assert_eq!("imex-cn".parse::<Scheme>().unwrap(), Scheme::ImexCn);
        assert!("rk4".parse::<Scheme>().is_err());
    }

    #[test]
    fn zero_stays_zero() {
        let mut s = Solver::new(cfg(4, 0.01, 0.05, Scheme::ImexEuler)).unwrap();
        let tr = s.simulate(&CoeffTensor::zeros(4)).unwrap();
        assert!(tr.aborted.is_none());
        assert!(tr.final_state().unwrap().max_abs() == 0.0);
        assert!(tr.records.iter().all(|r| r.l2_sq == 0.0));
    }

    #[test]
    fn mass_direction_is_stationary() {
        for scheme in [Scheme::ImexEuler, Scheme::ImexCn] {
            let mut s = Solver::new(cfg(5, 0.01, 0.05, scheme)).unwrap();
            let mut x = CoeffTensor::ground(5).scaled(0.3);
            for n in 0..5 {
                let y = s.step(&x, n as f64 * 0.01).unwrap();
                assert!(y.max_abs_diff(&x) <= 1e-8 * x.norm(), "{scheme:?}");
                x = y;
            }
        }
    }

    #[test]
    fn invariant_components_conserved() {
        // Γ(g,g) ≠ 0 for a generic invariant combination, but its invariant components vanish
        let mut s = Solver::new(cfg(5, 0.01, 0.05, Scheme::ImexCn)).unwrap();
        let inv = collision_invariants(5);
        let mut g = rough_datum(5, 5, 4, 0.05);
        for (c, v) in [0.3, -0.2, 0.1, 0.25, 0.05].iter().zip(&inv) {
            g.axpy(*c, v);
        }
        let before: Vec<f64> = inv.iter().map(|v| v.dot(&g)).collect();
        let mut x = g.clone();
        for n in 0..5 {
            x = s.step(&x, n as f64 * 0.01).unwrap();
        }
        for (v, b) in inv.iter().zip(&before) {
            assert!((v.dot(&x) - b).abs() < 1e-12, "{} {}", v.dot(&x), b);
        }
        let l = s.linear_matrix();
        for v in &inv {
            let lv = l * DVector::from_column_slice(v.values());
            assert!(lv.amax() < 1e-10);
        }
    }

    #[test]
    fn cn_linear_part_second_order() {
        // tiny data: the flow is exp(−t𝓛) g0 up to O(‖g0‖²)
        let g0 = CoeffTensor::basis(MultiIndex::new(2, 0, 0), 4).scaled(1e-9);
        let err = |dt: f64| {
            let mut s = Solver::new(cfg(4, dt, 0.1, Scheme::ImexCn)).unwrap();
            let got = s.simulate(&g0).unwrap().final_state().unwrap().clone();
            let eig = s.linear_matrix().clone().symmetric_eigen();
            let coeffs = eig.eigenvectors.transpose() * DVector::from_column_slice(g0.values());
            let decayed = DVector::from_iterator(
                coeffs.len(),
                coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, lam)| c * (-lam * 0.1).exp()),
            );
            let exact = &eig.eigenvectors * decayed;
            got.values().iter().zip(exact.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (a, b) = (err(0.01), err(0.005));
        assert!(a < 1e-3 * 1e-9);
        assert!((a / b).log2() > 1.9, "{a} {b}");
    }

    #[test]
    fn euler_is_first_order() {
        let g0 = rough_datum(4, 4, 3, 0.2);
        let run = |dt: f64| {
            let mut c = cfg(4, dt, 0.2, Scheme::ImexEuler);
            c.epsilon0 = 0.2;
            let mut s = Solver::new(c).unwrap();
            s.simulate(&g0).unwrap().final_state().unwrap().clone()
        };
        let (a, b, c) = (run(0.02), run(0.01), run(0.005));
        let e1 = a.sub(&b).norm();
        let e2 = b.sub(&c).norm();
        let order = (e1 / e2).log2();
        assert!((order - 1.0).abs() < 0.15, "{order}");
    }

    #[test]
    fn non_invariant_mode_decays() {
        let mut c = cfg(6, 1e-2, 0.5, Scheme::ImexEuler);
        c.epsilon0 = 1e-2;
        let mut s = Solver::new(c).unwrap();
        let g0 = remove_invariants(&CoeffTensor::basis(MultiIndex::new(2, 0, 0), 6)).scaled(1e-2 / 0.9);
        let g0 = g0.scaled(1e-2 / g0.norm());
        let tr = s.simulate(&g0).unwrap();
        for w in tr.records.windows(2) {
            assert!(w[1].l2_sq < w[0].l2_sq);
        }
        let r = tr.records.last().unwrap();
        assert!(r.int_sigma_sq > 0.0);
    }

    #[test]
    fn guard_and_datum_checks() {
        let mut c = cfg(4, 0.01, 0.02, Scheme::ImexEuler);
        c.epsilon0 = 1e-3;
        let mut s = Solver::new(c).unwrap();
        let g = CoeffTensor::ground(4);
        assert!(matches!(s.simulate(&g), Err(SolverError::DatumTooLarge { .. })));
        assert!(matches!(s.step(&CoeffTensor::zeros(3), 0.0), Err(SolverError::Degree { .. })));
    }

    #[test]
    fn rough_datum_properties() {
        let a = rough_datum(12, 10, 5, 0.01);
        let b = rough_datum(16, 10, 5, 0.01);
        assert!((a.norm() - 0.01).abs() < 1e-15);
        assert!(a.with_degree(16).max_abs_diff(&b) < 1e-17);
        for inv in collision_invariants(12) {
            assert!(a.dot(&inv).abs() < 1e-15);
        }
    }

    #[test]
    fn measured_constants() {
        let ops = LandauOperators::new(Potential::maxwell(), 4, None).unwrap();
        let lam = coercivity_constant(&ops);
        assert!(lam > 0.0 && lam.is_finite());
        let eps = measured_epsilon0(&ops, 1).unwrap();
        assert!(eps > 0.0 && eps < 1.0, "{eps}");
        let mut c = cfg(4, 0.01, 0.2, Scheme::ImexEuler);
        c.epsilon0 = eps;
        let mut s = Solver::with_operators(c, ops).unwrap();
        let tr = s.simulate(&rough_datum(4, 4, 2, eps)).unwrap();
        let rate = gronwall_rate(&tr).unwrap();
        assert!(rate.is_finite() && rate >= 0.0);
        for r in &tr.records[1..] {
            assert!(r.l2_sq + r.int_sigma_sq <= (rate * r.t).exp() * tr.records[0].l2_sq * (1.0 + 1e-12));
        }
    }

    #[test]
    fn heat_flow() {
        let p0 = CoeffTensor::ground(3);
        assert_eq!(reference_heat_flow(&p0, 0.0, 0.0).unwrap(), p0);
        let g = reference_heat_flow(&p0, 1.0, 0.0).unwrap();
        assert!((g.get(MultiIndex::ZERO) - (-1.5f64).exp()).abs() < 1e-15);
        assert!(reference_heat_flow(&p0, 1.0, 1.0).is_err());
        let r = rough_datum(6, 6, 1, 1.0);
        let lv: Vec<f64> = r.level_norms_sq().iter().map(|x| x.sqrt()).collect();
        let via_levels = reference_heat_flow_levels(&lv, 0.3);
        let direct: Vec<f64> = reference_heat_flow(&r, 0.3, 0.0)
            .unwrap()
            .level_norms_sq()
            .iter()
            .map(|x| x.sqrt())
            .collect();
        for (a, b) in via_levels.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn energy_residual_shrinks_with_dt() {
        let g0 = rough_datum(5, 5, 2, 0.05);
        let mean_res = |dt: f64| {
            let mut c = cfg(5, dt, 0.1, Scheme::ImexEuler);
            c.epsilon0 = 0.05;
            let mut s = Solver::new(c).unwrap();
            let tr = s.simulate(&g0).unwrap();
            tr.records[1..].iter().map(|r| r.energy_residual.abs()).sum::<f64>() / (tr.records.len() - 1) as f64
        };
        let (a, b) = (mean_res(0.01), mean_res(0.005));
        assert!((a / b).log2() > 0.9, "{a} {b}");
    }
}

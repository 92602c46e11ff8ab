//! Smoothing diagnostics: Gelfand–Shilov radius fits from level-norm decay,
//! radius growth along a trajectory, and the measured `m!` bound.

use crate::hermite::{level_size, CoeffTensor};
use crate::solver::Trajectory;

/// Default noise floor, relative to the largest normalized level norm.
pub const DEFAULT_FLOOR: f64 = 1e-13;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("only {usable} levels above the noise floor, at least {needed} needed")]
    TooFewLevels { usable: usize, needed: usize },
    #[error("only {got} snapshots in [{t_min}, {t_max}], at least 2 needed")]
    TooFewSnapshots { got: usize, t_min: f64, t_max: f64 },
    #[error("m_max = {m_max} exceeds half the truncation degree {degree}")]
    MTooLarge { m_max: usize, degree: usize },
    #[error("trajectory has no snapshots")]
    Empty,
}

/// Fit of `log(‖ℙ_k g‖ / sqrt(d_k)) ≈ a − c sqrt(k + 3/2)`, `d_k` the level multiplicity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecayFit {
    pub t: f64,
    pub c: f64,
    pub a: f64,
    pub rms_residual: f64,
    /// Lowest and highest level used.
    pub k_range: (usize, usize),
    pub levels_used: usize,
}

pub const MIN_LEVELS: usize = 4;

/// Radius fit from level norms `‖ℙ_k g‖`, `k = 0, 1, ...`.
///
/// Levels whose normalized norm is at most `floor` times the largest one are dropped.
pub fn fit_level_norms(levels: &[f64], floor: f64, t: f64) -> Result<DecayFit, DiagnosticsError> {
    let normalized: Vec<f64> = levels
        .iter()
        .enumerate()
        .map(|(k, l)| l / (level_size(k) as f64).sqrt())
        .collect();
    let top = normalized.iter().copied().fold(0.0, f64::max);
    let pts: Vec<(usize, f64, f64)> = normalized
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > floor * top && **v > 0.0)
        .map(|(k, v)| (k, (k as f64 + 1.5).sqrt(), v.ln()))
        .collect();
    if pts.len() < MIN_LEVELS {
        return Err(DiagnosticsError::TooFewLevels {
            usable: pts.len(),
            needed: MIN_LEVELS,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.2).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.1 - mx) * (p.2 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.1 - mx) * (p.1 - mx)).sum();
    let slope = sxy / sxx;
    let a = my - slope * mx;
    let rms = (pts.iter().map(|p| (p.2 - a - slope * p.1).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit {
        t,
        c: -slope,
        a,
        rms_residual: rms,
        k_range: (pts[0].0, pts[pts.len() - 1].0),
        levels_used: pts.len(),
    })
}

pub fn fit_gs_radius(g: &CoeffTensor, floor: f64) -> Result<DecayFit, DiagnosticsError> {
    fit_gs_radius_at(g, floor, 0.0)
}

pub fn fit_gs_radius_at(g: &CoeffTensor, floor: f64, t: f64) -> Result<DecayFit, DiagnosticsError> {
    let levels: Vec<f64> = g.level_norms_sq().iter().map(|x| x.sqrt()).collect();
    fit_level_norms(&levels, floor, t)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RadiusGrowth {
    pub fits: Vec<DecayFit>,
    /// `c(t)/sqrt(t)` per fit.
    pub scaled: Vec<f64>,
    /// max/min of `scaled`.
    pub band: f64,
    pub increasing: bool,
}

impl RadiusGrowth {
    pub fn from_fits(fits: Vec<DecayFit>) -> Self {
        let scaled: Vec<f64> = fits.iter().map(|f| f.c / f.t.sqrt()).collect();
        let hi = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
        let increasing = fits.windows(2).all(|w| w[1].c > w[0].c);
        RadiusGrowth {
            fits,
            scaled,
            band: hi / lo,
            increasing,
        }
    }

    /// CSV with header `t,c,residual`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,c,residual\n");
        for f in &self.fits {
            s.push_str(&format!("{:.12e},{:.17e},{:.17e}\n", f.t, f.c, f.rms_residual));
        }
        s
    }
}

/// Fits `c(t)` for every snapshot with `t_min ≤ t ≤ t_max` and reports the `c(t)/sqrt(t)` band.
pub fn check_radius_growth(
    traj: &Trajectory,
    t_min: f64,
    t_max: f64,
    floor: f64,
) -> Result<RadiusGrowth, DiagnosticsError> {
    let snaps: Vec<_> = traj
        .snapshots
        .iter()
        .filter(|s| s.t >= t_min - 1e-12 && s.t <= t_max + 1e-12)
        .collect();
    if snaps.len() < 2 {
        return Err(DiagnosticsError::TooFewSnapshots {
            got: snaps.len(),
            t_min,
            t_max,
        });
    }
    let fits = snaps
        .iter()
        .map(|s| fit_gs_radius_at(&s.state, floor, s.t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RadiusGrowth::from_fits(fits))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MfactorialEntry {
    pub t: f64,
    pub m: usize,
    /// `ln b_m`, `b_m = t̃^{m/2} ‖∇ᵐ_{𝓗₊} g(t)‖`.
    pub log_b: f64,
    pub b: f64,
    /// `(b_m / m!)^{1/(m+1)}`.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MfactorialReport {
    pub entries: Vec<MfactorialEntry>,
    /// `sup_t r_m` for `m = 0..=m_max`.
    pub sup_r: Vec<f64>,
    pub sup_all: f64,
}

impl MfactorialReport {
    /// CSV with header `t,m,b_m,r_m`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,m,b_m,r_m\n");
        for e in &self.entries {
            s.push_str(&format!("{:.12e},{},{:.17e},{:.17e}\n", e.t, e.m, e.b, e.r));
        }
        s
    }
}

/// `r_m(t) = (t̃^{m/2} ‖∇ᵐ_{𝓗₊} g(t)‖ / m!)^{1/(m+1)}`, `t̃ = min(t, 1)`, evaluated in the log domain.
pub fn mfactorial_entry(g: &CoeffTensor, t: f64, m: usize) -> MfactorialEntry {
    let tt = t.min(1.0);
    let log_norm = 0.5 * g.grad_hplus_log_norm_sq(m);
    let log_b = if m == 0 {
        log_norm
    } else if tt <= 0.0 {
        f64::NEG_INFINITY
    } else {
        0.5 * m as f64 * tt.ln() + log_norm
    };
    let log_fact = libm::lgamma(m as f64 + 1.0);
    let r = ((log_b - log_fact) / (m + 1) as f64).exp();
    MfactorialEntry {
        t,
        m,
        log_b,
        b: log_b.exp(),
        r,
    }
}

pub fn check_mfactorial_bound(traj: &Trajectory, m_max: usize) -> Result<MfactorialReport, DiagnosticsError> {
    let first = traj.snapshots.first().ok_or(DiagnosticsError::Empty)?;
    let degree = first.state.degree();
    if 2 * m_max > degree {
        return Err(DiagnosticsError::MTooLarge { m_max, degree });
    }
    let mut entries = Vec::new();
    let mut sup_r = vec![0.0f64; m_max + 1];
    for s in &traj.snapshots {
        for m in 0..=m_max {
            let e = mfactorial_entry(&s.state, s.t, m);
            sup_r[m] = sup_r[m].max(e.r);
            entries.push(e);
        }
    }
    let sup_all = sup_r.iter().copied().fold(0.0, f64::max);
    Ok(MfactorialReport { entries, sup_r, sup_all })
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_drift(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

//! Command-line front end: `assemble`, `verify`, `simulate` and `fit`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 identity
//! violation, 3 numerical failure. Every run writes `manifest.json` listing
//! its outputs. Set `LANDAU_CACHE_DIR` to reuse convolution tables across runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_suites, RunConfig, Suite};
use crate::diagnostics::{self, DEFAULT_FLOOR};
use crate::inequalities::{self, EstimateReport};
use crate::io::{self, CacheStatus, TableKey};
use crate::operators::{closed_form_l1_gamma0, LandauOperators};
use crate::solver::{self, Solver, Trajectory};

pub const CACHE_ENV: &str = "LANDAU_CACHE_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IDENTITY: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Identity tolerances used by `verify`.
pub const LEIBNIZ_TOL: f64 = 1e-7;
pub const COERCIVITY_TOL: f64 = 1e-7;
pub const NORMS_TOL: f64 = 1e-9;
pub const ORACLE_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "landau", version, about = "Hermite-Galerkin toolkit for the Landau equation with hard potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Assemble L1 and L2, export them, and check the gamma = 0 oracle.
    Assemble(Common),
    /// Run identity and inequality checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated suites: leibniz, trilinear, coercivity, ladder, norms or all.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Integrate the truncated equation from a rough datum.
    Simulate(Common),
    /// Fit radii and the m! bound on a snapshot bundle.
    Fit {
        /// Snapshot bundle, or a directory containing snapshots.bin.
        path: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Highest m for the m! bound (default: min(4, N/2)).
        #[arg(long)]
        m_max: Option<usize>,
        /// Relative noise floor for the radius fits.
        #[arg(long, default_value_t = DEFAULT_FLOOR)]
        floor: f64,
    },
}

#[derive(Args, Debug)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(m: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: m.to_string(),
    }
}

fn numerical(m: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_NUMERICAL,
        message: m.to_string(),
    }
}

#[derive(Serialize)]
struct Manifest {
    artifact_version: &'static str,
    ordering_version: u32,
    command: &'static str,
    config_hash: Option<String>,
    table_key_hash: Option<String>,
    table_cache: Option<String>,
    seeds: Vec<u64>,
    outputs: Vec<String>,
}

/// Collects written files so the manifest lists every output.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        io::atomic_write(&self.dir.join(name), bytes).map_err(numerical)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(v).map_err(numerical)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn finish(mut self, mut manifest: Manifest) -> Result<(), Failure> {
        self.files.sort();
        manifest.outputs = self.files.clone();
        let mut s = serde_json::to_string_pretty(&manifest).map_err(numerical)?;
        s.push('\n');
        io::atomic_write(&self.dir.join("manifest.json"), s.as_bytes()).map_err(numerical)
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| usage(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = RunConfig::parse(&text).map_err(usage)?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn build_operators(cfg: &RunConfig) -> Result<(LandauOperators, Option<String>, Option<String>), Failure> {
    let dir = cache_dir();
    let (ops, status) = io::load_or_build_operators(dir.as_deref(), cfg.sim.pot(), cfg.sim.degree, cfg.sim.quadrature_points)
        .map_err(numerical)?;
    let key = TableKey::for_operators(cfg.sim.pot(), cfg.sim.degree, cfg.sim.quadrature_points).hash();
    let status = match status {
        CacheStatus::Disabled => None,
        CacheStatus::Hit => Some("hit".to_string()),
        CacheStatus::Miss => Some("miss".to_string()),
        CacheStatus::Mismatch(why) => {
            eprintln!("warning: cached tables unusable ({why}); rebuilt");
            Some("rebuilt".to_string())
        }
    };
    Ok((ops, Some(key), status))
}

fn manifest(command: &'static str, cfg: Option<&RunConfig>, key: Option<String>, cache: Option<String>) -> Manifest {
    Manifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        ordering_version: crate::hermite::ORDERING_VERSION,
        command,
        config_hash: cfg.map(|c| c.hash()),
        table_key_hash: key,
        table_cache: cache,
        seeds: cfg.map(|c| vec![c.sim.seed]).unwrap_or_default(),
        outputs: Vec::new(),
    }
}

#[derive(Serialize)]
struct AssembleReport {
    gamma: f64,
    degree: usize,
    modes: usize,
    quadrature_points: usize,
    l1_symmetry_residual: f64,
    l2_symmetry_residual: f64,
    oracle_residual: Option<f64>,
    oracle_tolerance: f64,
    min_eigenvalue_linearized: f64,
}

fn cmd_assemble(common: &Common) -> Result<i32, Failure> {
    let cfg = load_config(common)?;
    let (ops, key, cache) = build_operators(&cfg)?;
    let l1 = ops.assemble_l1();
    let l2 = ops.assemble_l2();
    let lin = l1.add(&l2, crate::operators::OperatorTag::Linearized);
    let oracle = (cfg.sim.gamma == 0.0).then(|| l1.max_abs_diff(&closed_form_l1_gamma0(ops.trunc())));
    let eig = lin.symmetric_eigenvalues();
    let report = AssembleReport {
        gamma: cfg.sim.gamma,
        degree: cfg.sim.degree,
        modes: ops.trunc().num_modes(),
        quadrature_points: ops.grid().points_per_axis(),
        l1_symmetry_residual: l1.symmetry_residual(),
        l2_symmetry_residual: l2.symmetry_residual(),
        oracle_residual: oracle,
        oracle_tolerance: ORACLE_TOL,
        min_eigenvalue_linearized: eig.first().copied().unwrap_or(0.0),
    };
    let mut out = Outputs::new(&common.out_dir)?;
    out.write("L1.bin", &io::matrix_to_bytes(&l1.matrix))?;
    out.write("L1.mtx", io::matrix_market(&l1.matrix).as_bytes())?;
    out.write("L2.bin", &io::matrix_to_bytes(&l2.matrix))?;
    out.write("L2.mtx", io::matrix_market(&l2.matrix).as_bytes())?;
    if cfg.sim.gamma == 0.0 {
        let cf = closed_form_l1_gamma0(ops.trunc());
        out.write("L1_closed_form.mtx", io::matrix_market(&cf.matrix).as_bytes())?;
    }
    out.json("assemble.json", &report)?;
    out.write("config.txt", cfg.canonical().as_bytes())?;
    out.finish(manifest("assemble", Some(&cfg), key, cache))?;
    println!("modes = {}", report.modes);
    println!("l1_symmetry_residual = {:.3e}", report.l1_symmetry_residual);
    println!("l2_symmetry_residual = {:.3e}", report.l2_symmetry_residual);
    if let Some(r) = oracle {
        println!("oracle_residual = {r:.3e}");
        if r > ORACLE_TOL {
            eprintln!("error: gamma = 0 oracle residual {r:.3e} exceeds {ORACLE_TOL:.0e}");
            return Ok(EXIT_IDENTITY);
        }
    }
    Ok(EXIT_OK)
}

fn run_suite(ops: &LandauOperators, cfg: &RunConfig, suite: Suite) -> Result<EstimateReport, Failure> {
    let seed = cfg.sim.seed;
    let n = cfg.sim.degree;
    let samples = cfg.samples;
    let ms_upto = |cap: usize| 0..=cfg.m_max.min(cap);
    let rep = match suite {
        Suite::Leibniz => {
            let mut rep = EstimateReport::new("leibniz", seed, LEIBNIZ_TOL);
            for m in ms_upto(n.saturating_sub(1)) {
                if m == 0 {
                    continue;
                }
                let r = inequalities::verify_leibniz_random(ops, m, samples, seed, LEIBNIZ_TOL).map_err(usage)?;
                rep.merge(&r);
            }
            rep
        }
        Suite::Coercivity => {
            let mut rep = EstimateReport::new("coercivity", seed, COERCIVITY_TOL);
            for m in ms_upto(n.saturating_sub(1)) {
                let r = inequalities::verify_coercivity_random(ops, m, samples, seed, COERCIVITY_TOL).map_err(usage)?;
                rep.merge(&r);
            }
            rep
        }
        Suite::Trilinear => {
            let ms: Vec<usize> = ms_upto(n.saturating_sub(1)).collect();
            inequalities::estimate_trilinear_grad(ops, &ms, samples, 0, seed).map_err(usage)?
        }
        Suite::Ladder => inequalities::verify_ladder_bounds(samples.max(100), n, 6, seed),
        Suite::Norms => inequalities::verify_norms(ops, samples, seed, NORMS_TOL),
    };
    Ok(rep)
}

#[derive(Serialize)]
struct SuiteSummary {
    name: String,
    samples: usize,
    violations: usize,
    max_residual: Option<f64>,
    max_ratio: Option<f64>,
}

#[derive(Serialize)]
struct VerifySummary {
    seed: u64,
    gamma: f64,
    degree: usize,
    suites: Vec<SuiteSummary>,
    identity_violations: usize,
}

fn cmd_verify(common: &Common, suite: Option<&str>) -> Result<i32, Failure> {
    let mut cfg = load_config(common)?;
    if let Some(s) = suite {
        cfg.suites = parse_suites(s).map_err(usage)?;
    }
    let (ops, key, cache) = build_operators(&cfg)?;
    let mut out = Outputs::new(&common.out_dir)?;
    let mut summary = VerifySummary {
        seed: cfg.sim.seed,
        gamma: cfg.sim.gamma,
        degree: cfg.sim.degree,
        suites: Vec::new(),
        identity_violations: 0,
    };
    for &s in &cfg.suites {
        let rep = run_suite(&ops, &cfg, s)?;
        if s != Suite::Trilinear {
            summary.identity_violations += rep.violations;
        }
        println!(
            "{:<11} samples={:<4} violations={:<3} max_residual={} max_ratio={}",
            s.name(),
            rep.samples,
            rep.violations,
            rep.max_residual.map_or("-".into(), |x| format!("{x:.3e}")),
            rep.max_ratio.map_or("-".into(), |x| format!("{x:.4}")),
        );
        summary.suites.push(SuiteSummary {
            name: s.name().to_string(),
            samples: rep.samples,
            violations: rep.violations,
            max_residual: rep.max_residual,
            max_ratio: rep.max_ratio,
        });
        out.json(&format!("verify_{}.json", s.name()), &rep)?;
    }
    out.json("verify.json", &summary)?;
    out.write("config.txt", cfg.canonical().as_bytes())?;
    out.finish(manifest("verify", Some(&cfg), key, cache))?;
    Ok(if summary.identity_violations > 0 { EXIT_IDENTITY } else { EXIT_OK })
}

#[derive(Serialize)]
struct SimulateReport {
    gamma: f64,
    degree: usize,
    scheme: &'static str,
    dt: f64,
    t_end: f64,
    epsilon0: f64,
    epsilon0_measured: bool,
    datum_support: usize,
    steps: usize,
    snapshots: usize,
    initial_l2_sq: f64,
    final_l2_sq: f64,
    max_abs_energy_residual: f64,
    gronwall_rate: Option<f64>,
    aborted: Option<String>,
}

fn cmd_simulate(common: &Common) -> Result<i32, Failure> {
    let cfg = load_config(common)?;
    let (ops, key, cache) = build_operators(&cfg)?;
    let mut sim = cfg.sim.clone();
    let measured = !cfg.epsilon0_given;
    if measured {
        sim.epsilon0 = solver::measured_epsilon0(&ops, sim.seed).map_err(numerical)?;
    }
    let support = sim.datum_support.unwrap_or(sim.degree).min(sim.degree);
    let g0 = solver::rough_datum(sim.degree, support, sim.seed, sim.epsilon0);
    let mut s = Solver::with_operators(sim.clone(), ops).map_err(numerical)?;
    let traj = s.simulate(&g0).map_err(numerical)?;
    let report = SimulateReport {
        gamma: sim.gamma,
        degree: sim.degree,
        scheme: sim.scheme.name(),
        dt: sim.dt,
        t_end: sim.t_end,
        epsilon0: sim.epsilon0,
        epsilon0_measured: measured,
        datum_support: support,
        steps: traj.records.len() - 1,
        snapshots: traj.snapshots.len(),
        initial_l2_sq: traj.records[0].l2_sq,
        final_l2_sq: traj.records.last().map_or(0.0, |r| r.l2_sq),
        max_abs_energy_residual: traj.records.iter().map(|r| r.energy_residual.abs()).fold(0.0, f64::max),
        gronwall_rate: solver::gronwall_rate(&traj),
        aborted: traj.aborted.clone(),
    };
    let mut out = Outputs::new(&common.out_dir)?;
    out.write("trajectory.csv", traj.to_csv().as_bytes())?;
    out.write("snapshots.bin", &io::snapshots_to_bytes(&traj.snapshots))?;
    out.json("simulate.json", &report)?;
    out.write("config.txt", cfg.canonical().as_bytes())?;
    out.finish(manifest("simulate", Some(&cfg), key, cache))?;
    println!("steps = {}", report.steps);
    println!("final_l2_sq = {:.6e}", report.final_l2_sq);
    if let Some(why) = &traj.aborted {
        eprintln!("error: integration aborted: {why}");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FitReport {
    snapshots: usize,
    degree: usize,
    floor: f64,
    radius: Option<diagnostics::RadiusGrowth>,
    radius_error: Option<String>,
    m_max: usize,
    sup_r: Vec<f64>,
    sup_all: f64,
    verdicts: BTreeMap<String, bool>,
}

fn cmd_fit(path: &Path, out_dir: &Path, m_max: Option<usize>, floor: f64) -> Result<i32, Failure> {
    let file = if path.is_dir() { path.join("snapshots.bin") } else { path.to_path_buf() };
    let snaps = io::read_snapshots(&file).map_err(usage)?;
    if snaps.is_empty() {
        return Err(usage(format!("{}: trajectory has no snapshots", file.display())));
    }
    let degree = snaps[0].state.degree();
    let m_max = m_max.unwrap_or((degree / 2).min(4));
    let traj = Trajectory {
        records: Vec::new(),
        snapshots: snaps,
        aborted: None,
    };
    let positive: Vec<_> = traj.snapshots.iter().filter(|s| s.t > 0.0).collect();
    let t_lo = positive.first().map_or(0.0, |s| s.t);
    let t_hi = positive.last().map_or(0.0, |s| s.t).min(1.0);
    let (radius, radius_error) = match diagnostics::check_radius_growth(&traj, t_lo.max(1e-300), t_hi, floor) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mf = diagnostics::check_mfactorial_bound(&traj, m_max).map_err(usage)?;
    let mut verdicts = BTreeMap::new();
    verdicts.insert("sup_r_finite".to_string(), mf.sup_r.iter().all(|x| x.is_finite()));
    if let Some(r) = &radius {
        verdicts.insert("radius_increasing".to_string(), r.increasing);
        verdicts.insert("radius_band_within_2".to_string(), r.band <= 2.0);
    }
    let report = FitReport {
        snapshots: traj.snapshots.len(),
        degree,
        floor,
        radius: radius.clone(),
        radius_error,
        m_max,
        sup_r: mf.sup_r.clone(),
        sup_all: mf.sup_all,
        verdicts,
    };
    let mut out = Outputs::new(out_dir)?;
    if let Some(r) = &radius {
        out.write("radius.csv", r.to_csv().as_bytes())?;
    }
    out.write("mfactorial.csv", mf.to_csv().as_bytes())?;
    out.json("fit.json", &report)?;
    out.finish(manifest("fit", None, None, None))?;
    for (m, r) in mf.sup_r.iter().enumerate() {
        println!("sup_r[{m}] = {r:.6e}");
    }
    if let Some(r) = &radius {
        println!("radius_band = {:.4} increasing = {}", r.band, r.increasing);
    }
    if !mf.sup_r.iter().all(|x| x.is_finite()) {
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let res = match &cli.command {
        Command::Assemble(c) => cmd_assemble(c),
        Command::Verify { common, suite } => cmd_verify(common, suite.as_deref()),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Fit {
            path,
            out_dir,
            m_max,
            floor,
        } => cmd_fit(path, out_dir, *m_max, *floor),
    };
    match res {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

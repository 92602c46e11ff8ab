//! Run configuration: a flat `key = value` text format with optional
//! `[section]` headers that prefix the keys below them (`[quadrature]` then
//! `degree = 20` is `quadrature.degree`). `#` starts a comment. Unknown and
//! duplicate keys are errors.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::io::sha256_hex;
use crate::solver::{Scheme, SimConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number, 0 for whole-file problems.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Leibniz,
    Trilinear,
    Coercivity,
    Ladder,
    Norms,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Leibniz, Suite::Trilinear, Suite::Coercivity, Suite::Ladder, Suite::Norms];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Leibniz => "leibniz",
            Suite::Trilinear => "trilinear",
            Suite::Coercivity => "coercivity",
            Suite::Ladder => "ladder",
            Suite::Norms => "norms",
        }
    }
}

/// Parses a comma-separated suite list; `all` expands to every suite.
pub fn parse_suites(s: &str) -> Result<Vec<Suite>, String> {
    let mut out = BTreeSet::new();
    for name in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        match name {
            "all" => out.extend(Suite::ALL),
            "leibniz" => {
                out.insert(Suite::Leibniz);
            }
            "trilinear" => {
                out.insert(Suite::Trilinear);
            }
            "coercivity" => {
                out.insert(Suite::Coercivity);
            }
            "ladder" => {
                out.insert(Suite::Ladder);
            }
            "norms" => {
                out.insert(Suite::Norms);
            }
            other => {
                return Err(format!(
                    "unknown suite '{other}' (expected leibniz, trilinear, coercivity, ladder, norms or all)"
                ))
            }
        }
    }
    if out.is_empty() {
        return Err("empty suite list".into());
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub sim: SimConfig,
    /// `false` when `epsilon0` was not given and should be measured.
    pub epsilon0_given: bool,
    pub suites: Vec<Suite>,
    /// Random samples per verification check.
    pub samples: usize,
    /// Highest `m` for the gradient checks.
    pub m_max: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sim: SimConfig::default(),
            epsilon0_given: false,
            suites: Suite::ALL.to_vec(),
            samples: 4,
            m_max: 3,
        }
    }
}

pub const KEYS: [&str; 14] = [
    "gamma",
    "N",
    "dt",
    "t_end",
    "epsilon0",
    "seed",
    "scheme",
    "quadrature.degree",
    "suites",
    "output.snapshot_every",
    "datum.support",
    "verify.samples",
    "verify.m_max",
    "quadrature.kind",
];

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError {
        line,
        message: format!("invalid value '{v}' for {key}"),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError {
                    line,
                    message: format!("malformed section header '{content}'"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| ConfigError {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError {
                    line,
                    message: format!("unknown key '{key}'"),
                });
            }
            if !seen.insert(key.clone()) {
                return Err(ConfigError {
                    line,
                    message: format!("duplicate key '{key}'"),
                });
            }
            let s = &mut cfg.sim;
            match key.as_str() {
                "gamma" => s.gamma = parse_value(line, &key, v)?,
                "N" => s.degree = parse_value(line, &key, v)?,
                "dt" => s.dt = parse_value(line, &key, v)?,
                "t_end" => s.t_end = parse_value(line, &key, v)?,
                "epsilon0" => {
                    s.epsilon0 = parse_value(line, &key, v)?;
                    cfg.epsilon0_given = true;
                }
                "seed" => s.seed = parse_value(line, &key, v)?,
                "scheme" => s.scheme = v.parse::<Scheme>().map_err(|message| ConfigError { line, message })?,
                "quadrature.degree" => s.quadrature_points = Some(parse_value(line, &key, v)?),
                "quadrature.kind" => {
                    if v != "tensor-gauss-hermite" {
                        return Err(ConfigError {
                            line,
                            message: format!("unsupported quadrature.kind '{v}' (only tensor-gauss-hermite)"),
                        });
                    }
                }
                "suites" => cfg.suites = parse_suites(v).map_err(|message| ConfigError { line, message })?,
                "output.snapshot_every" => s.snapshot_every = parse_value(line, &key, v)?,
                "datum.support" => s.datum_support = Some(parse_value(line, &key, v)?),
                "verify.samples" => cfg.samples = parse_value(line, &key, v)?,
                "verify.m_max" => cfg.m_max = parse_value(line, &key, v)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let whole = |m: String| ConfigError { line: 0, message: m };
        self.sim.validate().map_err(|e| whole(e.to_string()))?;
        if self.sim.degree < 1 {
            return Err(whole("N must be at least 1".into()));
        }
        if let Some(p) = self.sim.quadrature_points {
            if p < self.sim.degree / 2 + 3 {
                return Err(whole(format!(
                    "quadrature.degree = {p} is too small for N = {} (need at least {})",
                    self.sim.degree,
                    self.sim.degree / 2 + 3
                )));
            }
        }
        if self.samples == 0 {
            return Err(whole("verify.samples must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical text form: every key in a fixed order, explicit defaults.
    pub fn canonical(&self) -> String {
        let s = &self.sim;
        let mut out = String::new();
        out.push_str(&format!("gamma = {:?}\n", s.gamma));
        out.push_str(&format!("N = {}\n", s.degree));
        out.push_str(&format!("dt = {:?}\n", s.dt));
        out.push_str(&format!("t_end = {:?}\n", s.t_end));
        if self.epsilon0_given {
            out.push_str(&format!("epsilon0 = {:?}\n", s.epsilon0));
        }
        out.push_str(&format!("seed = {}\n", s.seed));
        out.push_str(&format!("scheme = {}\n", s.scheme.name()));
        let suites: Vec<&str> = self.suites.iter().map(|x| x.name()).collect();
        out.push_str(&format!("suites = {}\n", suites.join(",")));
        out.push_str("[quadrature]\nkind = tensor-gauss-hermite\n");
        if let Some(p) = s.quadrature_points {
            out.push_str(&format!("degree = {p}\n"));
        }
        out.push_str(&format!("[output]\nsnapshot_every = {}\n", s.snapshot_every));
        if let Some(d) = s.datum_support {
            out.push_str(&format!("[datum]\nsupport = {d}\n"));
        }
        out.push_str(&format!("[verify]\nsamples = {}\nm_max = {}\n", self.samples, self.m_max));
        out
    }

    /// SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

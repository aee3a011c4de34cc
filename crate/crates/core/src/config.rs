//! Run configuration: a flat JSON document with unknown keys rejected, plus
//! constructors for the entropy, initial datum, and solver options it
//! describes. A SHA-256 fingerprint of the raw config bytes is embedded in
//! every artifact.

use crate::density::GridDensity;
use crate::entropy::{CustomTable, EntropySpec};
use crate::error::{Error, Result};
use crate::jko::JkoOptions;
use crate::potential::Potential;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntropyConfig {
    LogLog,
    LogPow { m: f64 },
    PowPowEqual { m: f64 },
    PowPow { m: f64, r: f64 },
    /// CSV slope table; see the custom-table format in the entropy module.
    Custom { table_path: String },
}

impl EntropyConfig {
    pub fn build(&self) -> Result<EntropySpec> {
        match self {
            EntropyConfig::LogLog => Ok(EntropySpec::log_log()),
            EntropyConfig::LogPow { m } => EntropySpec::log_pow(*m),
            EntropyConfig::PowPowEqual { m } => EntropySpec::pow_pow_equal(*m),
            EntropyConfig::PowPow { m, r } => EntropySpec::pow_pow(*m, *r),
            EntropyConfig::Custom { table_path } => {
                Ok(EntropySpec::custom(CustomTable::from_path(Path::new(table_path))?))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Uniform,
    /// `e^{-x} / (1 - e^{-l})` — unit mass on `[0, l]`.
    ExpNormalized,
    /// `height` on `[position - width/2, position + width/2]`, zero
    /// elsewhere, then normalized.
    Spike { position: f64, width: f64, height: f64 },
    /// CSV `x,rho` samples, piecewise-linear, cell-averaged by midpoint and
    /// normalized.
    Table { path: String },
}

impl InitialConfig {
    pub fn build(&self, l: f64, n: usize) -> Result<GridDensity> {
        match self {
            InitialConfig::Uniform => Ok(GridDensity::uniform(l, n)),
            InitialConfig::ExpNormalized => {
                let z = 1.0 - (-l).exp();
                GridDensity::from_fn(l, n, |x| (-x).exp() / z)
            }
            InitialConfig::Spike { position, width, height } => {
                if !(*width > 0.0 && *height > 0.0) {
                    return Err(Error::Config("spike width and height must be positive".into()));
                }
                let (lo, hi) = (position - width / 2.0, position + width / 2.0);
                let h = l / n as f64;
                let values: Vec<f64> = (0..n)
                    .map(|i| {
                        // Overlap of the cell with the spike window.
                        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                        height * (b.min(hi) - a.max(lo)).max(0.0) / h
                    })
                    .collect();
                Ok(GridDensity::new_normalized(l, values)?.0)
            }
            InitialConfig::Table { path } => {
                let text = std::fs::read_to_string(path)?;
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for (idx, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("x,")) {
                        continue;
                    }
                    let mut parts = line.split(',');
                    let parse = |s: Option<&str>| -> Result<f64> {
                        s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                            Error::Config(format!("initial table line {}: expected `x,rho`", idx + 1))
                        })
                    };
                    xs.push(parse(parts.next())?);
                    ys.push(parse(parts.next())?);
                }
                if xs.len() < 2 || xs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(
                        "initial table needs at least two rows with strictly increasing x".into(),
                    ));
                }
                if ys.iter().any(|&y| y < 0.0) {
                    return Err(Error::Config("initial table densities must be nonnegative".into()));
                }
                let interp = Potential::Table { xs, ys };
                let values: Vec<f64> =
                    (0..n).map(|i| interp.eval((i as f64 + 0.5) * l / n as f64)).collect();
                Ok(GridDensity::new_normalized(l, values)?.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damping: f64,
    pub max_iters: usize,
    pub tol_fix: f64,
    pub tol_mass: f64,
    pub tol_phase: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = JkoOptions::default();
        Self {
            damping: o.damping,
            max_iters: o.max_iters,
            tol_fix: o.tol_fix,
            tol_mass: o.tol_mass,
            tol_phase: o.tol_phase,
        }
    }
}

impl From<SolverConfig> for JkoOptions {
    fn from(c: SolverConfig) -> Self {
        JkoOptions {
            damping: c.damping,
            max_iters: c.max_iters,
            tol_fix: c.tol_fix,
            tol_mass: c.tol_mass,
            tol_phase: c.tol_phase,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub entropy: EntropyConfig,
    pub domain_length: f64,
    pub cells: usize,
    pub potential: Potential,
    pub initial: InitialConfig,
    pub tau: f64,
    pub horizon: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file, returning the parsed config and the SHA-256
    /// fingerprint of the raw bytes.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        let cfg = Self::from_json(std::str::from_utf8(&bytes).map_err(|e| {
            Error::Config(format!("config is not UTF-8: {e}"))
        })?)?;
        Ok((cfg, fingerprint(&bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells < 16 {
            return Err(Error::Config(format!("cells = {} below the minimum of 16", self.cells)));
        }
        if !(self.domain_length > 0.0) || !self.domain_length.is_finite() {
            return Err(Error::Config(format!("domain_length = {} invalid", self.domain_length)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau = {} must be positive", self.tau)));
        }
        let steps = self.horizon / self.tau;
        if !(self.horizon > 0.0) || (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Config(format!(
                "horizon {} is not a positive integer multiple of tau {}",
                self.horizon, self.tau
            )));
        }
        self.potential.validate(self.domain_length)?;
        self.entropy.build()?;
        Ok(())
    }

    pub fn build_entropy(&self) -> Result<EntropySpec> {
        self.entropy.build()
    }

    pub fn build_initial(&self) -> Result<GridDensity> {
        self.initial.build(self.domain_length, self.cells)
    }

    pub fn jko_options(&self) -> JkoOptions {
        self.solver.into()
    }

    /// True when the closed-form stationary oracle applies: the two-slope
    /// logarithmic entropy with drift `2x`.
    pub fn has_stationary_oracle(&self) -> bool {
        matches!(self.entropy, EntropyConfig::LogLog)
            && matches!(self.potential, Potential::Linear { slope } if slope == 2.0)
    }
}

pub fn fingerprint(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

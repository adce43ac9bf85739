//! Run configuration read from TOML.
//!
//! `n`, `eps` and `seed` are required; every other key has a default.
//! Complex parameters are given as separate `_re` / `_im` keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::besov::PartitionProfile;
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, C64};
use crate::io::load_field;
use crate::noise::MollifierProfile;
use crate::renorm::{CConvention, ConstantsOptions, DEFAULT_PAIR_BUDGET};
use crate::solver::{PipelineSpec, Scheme, SolverConfig};

fn d_mu() -> f64 {
    1.0
}
fn d_nu_re() -> f64 {
    1.0
}
fn d_dt() -> f64 {
    1e-3
}
fn d_t_end() -> f64 {
    0.1
}
fn d_burn_in() -> f64 {
    5.0
}
fn d_kappa() -> f64 {
    0.02
}
fn d_kappa_prime() -> f64 {
    0.05
}
fn d_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn d_output_every() -> usize {
    10
}
fn d_precision() -> usize {
    17
}
fn d_budget() -> u64 {
    DEFAULT_PAIR_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    #[serde(default = "d_mu")]
    pub mu: f64,
    #[serde(default = "d_nu_re")]
    pub nu_re: f64,
    #[serde(default)]
    pub nu_im: f64,
    #[serde(default = "d_dt")]
    pub dt: f64,
    /// Noise base step; defaults to `dt`. `dt` must be a whole multiple.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_dt: Option<f64>,
    #[serde(default = "d_t_end")]
    pub t_end: f64,
    #[serde(default = "d_burn_in")]
    pub burn_in: f64,
    #[serde(default = "d_kappa")]
    pub kappa: f64,
    #[serde(default = "d_kappa_prime")]
    pub kappa_prime: f64,
    #[serde(default)]
    pub chi: MollifierProfile,
    #[serde(default)]
    pub partition: PartitionProfile,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub c_convention: CConvention,
    #[serde(default)]
    pub literal_c1: bool,
    #[serde(default)]
    pub time_filter: bool,
    #[serde(default)]
    pub u0_re: f64,
    #[serde(default)]
    pub u0_im: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0_file: Option<PathBuf>,
    #[serde(default = "d_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "d_output_every")]
    pub output_every: usize,
    #[serde(default = "d_precision")]
    pub csv_precision: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "d_budget")]
    pub pair_budget: u64,
}

fn bad(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Validation {
        field,
        reason: reason.into(),
    }
}

impl RunConfig {
    /// A config with the required keys set and defaults elsewhere.
    pub fn with_required(n: usize, eps: f64, seed: u64) -> Self {
        toml::from_str(&format!("n = {n}\neps = {eps:?}\nseed = {seed}\n")).expect("defaults parse")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn nu(&self) -> C64 {
        C64::new(self.nu_re, self.nu_im)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n).map_err(|e| bad("n", e.to_string()))
    }

    pub fn base_dt(&self) -> f64 {
        self.base_dt.unwrap_or(self.dt)
    }

    pub fn substeps(&self) -> usize {
        (self.dt / self.base_dt()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(bad("eps", format!("must lie in (0, 1], got {}", self.eps)));
        }
        if !(self.burn_in >= 0.0) {
            return Err(bad("burn_in", format!("must be >= 0, got {}", self.burn_in)));
        }
        self.solver_config().validate()?;
        let base = self.base_dt();
        if !(base > 0.0) {
            return Err(bad("base_dt", format!("must be > 0, got {base}")));
        }
        let m = self.dt / base;
        if self.dt > 0.0 && (m < 0.5 || (m - m.round()).abs() > 1e-9 * m) {
            return Err(bad("base_dt", format!("dt = {} is not a whole multiple of {base}", self.dt)));
        }
        if self.csv_precision != 17 {
            return Err(bad("csv_precision", "only 17 significant digits are supported"));
        }
        if self.threads == Some(0) {
            return Err(bad("threads", "must be >= 1"));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            mu: self.mu,
            nu: self.nu(),
            dt: self.dt,
            t_end: self.t_end,
            kappa: self.kappa,
            kappa_prime: self.kappa_prime,
            scheme: self.scheme,
            partition: self.partition,
            output_every: self.output_every,
        }
    }

    pub fn constants_options(&self) -> ConstantsOptions {
        ConstantsOptions {
            convention: self.c_convention,
            literal_c1: self.literal_c1,
            pair_budget: self.pair_budget,
        }
    }

    pub fn pipeline(&self) -> Result<PipelineSpec> {
        self.validate()?;
        Ok(PipelineSpec {
            solver: self.solver_config(),
            grid: self.grid()?,
            base_dt: self.base_dt(),
            substeps: self.substeps(),
            burn_in: self.burn_in,
            chi: self.chi,
            time_filter: self.time_filter,
            constants: self.constants_options(),
        })
    }

    /// Initial datum: the field in `u0_file` (resolved against `base`), or
    /// the constant `u0_re + i·u0_im`.
    pub fn initial_data(&self, base: &Path) -> Result<Field> {
        let grid = self.grid()?;
        match &self.u0_file {
            Some(p) => {
                let f = load_field(&base.join(p))?;
                if f.grid() != grid {
                    return Err(bad("u0_file", format!("grid n = {} differs from n = {}", f.grid().n(), grid.n())));
                }
                Ok(f)
            }
            None => Ok(Field::constant(grid, C64::new(self.u0_re, self.u0_im))),
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

//! Run configuration, read from a TOML file.
//!
//! ```toml
//! version = 1
//! model = "toy"
//! g = { kind = "constant", value = 1.0 }
//!
//! [sweep]
//! beta = { lo = 1e-3, hi = 1e2, n = 25 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tipshoot_core::bats::{AlphaParam, ViscosityFn};
use tipshoot_core::classify::ClassifyTolerances;
use tipshoot_core::toy::GFunction;

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Toy,
    Bats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

/// `n` points from `lo` to `hi`. Log spacing works on magnitudes, so both
/// ends must be nonzero and of equal sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if self.n == 0 {
            return Err(CliError::ConfigInvalid("grid has no points".into()));
        }
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(CliError::ConfigInvalid("grid ends must be finite".into()));
        }
        if self.n == 1 {
            return Ok(vec![self.lo]);
        }
        let t = |i: usize| i as f64 / (self.n - 1) as f64;
        match self.spacing {
            Spacing::Linear => Ok((0..self.n)
                .map(|i| self.lo + (self.hi - self.lo) * t(i))
                .collect()),
            Spacing::Log => {
                if !(self.lo * self.hi > 0.0) {
                    return Err(CliError::ConfigInvalid(format!(
                        "log grid needs nonzero ends of equal sign, got [{}, {}]",
                        self.lo, self.hi
                    )));
                }
                let sign = self.lo.signum();
                let (a, b) = (self.lo.abs(), self.hi.abs());
                Ok((0..self.n).map(|i| sign * a * (b / a).powf(t(i))).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub beta: Option<Vec<f64>>,
    pub alpha: Option<Vec<AlphaParam>>,
}

fn default_beta_tol() -> f64 {
    1e-10
}

fn default_probe() -> GridSpec {
    GridSpec {
        lo: 1e-3,
        hi: 1e2,
        n: 25,
        spacing: Spacing::Log,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectSection {
    pub bracket: Option<[f64; 2]>,
    #[serde(default)]
    pub auto_bracket: bool,
    #[serde(default = "default_beta_tol")]
    pub beta_tol: f64,
    #[serde(default = "default_probe")]
    pub probe: GridSpec,
}

fn default_h0_rel_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub beta: Option<GridSpec>,
    pub h0: Option<GridSpec>,
    pub z0: Option<GridSpec>,
    #[serde(default = "default_h0_rel_tol")]
    pub h0_rel_tol: f64,
}

fn default_verify_betas() -> Vec<f64> {
    vec![0.0, 0.1, 1.0, 10.0]
}

fn default_pairs() -> Vec<[f64; 2]> {
    vec![[1.0, 2.0], [0.5, 1.0]]
}

fn default_alphas() -> Vec<AlphaParam> {
    vec![
        AlphaParam { h0: 1.0, z0: -1.0 },
        AlphaParam { h0: 0.1, z0: -2.0 },
        AlphaParam { h0: 3.0, z0: -0.5 },
    ]
}

fn default_r_samples() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_verify_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_pairs")]
    pub pairs: Vec<[f64; 2]>,
    #[serde(default = "default_r_samples")]
    pub r_samples: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<AlphaParam>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            betas: default_verify_betas(),
            pairs: default_pairs(),
            r_samples: default_r_samples(),
            alphas: default_alphas(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub beta: Option<f64>,
    pub alpha: Option<AlphaParam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub model: Model,
    pub g: Option<GFunction>,
    pub mu: Option<ViscosityFn>,
    #[serde(default)]
    pub tolerances: ClassifyTolerances,
    pub output_dir: Option<PathBuf>,
    pub format: Option<Format>,
    /// Worker threads; defaults to the number of CPUs.
    pub jobs: Option<usize>,
    pub classify: Option<ClassifySection>,
    pub bisect: Option<BisectSection>,
    pub sweep: Option<SweepSection>,
    pub verify: Option<VerifySection>,
    pub profile: Option<ProfileSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::Subcommand)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Classify each listed parameter as A, B, X-like or undetermined.
    Classify,
    /// Locate the A/B boundary in β by bisection (toy model).
    Bisect,
    /// Classify a β grid or an (h₀, z₀) grid and draw the region map.
    Sweep,
    /// Run the invariant suite of the selected model.
    Verify,
    /// Reconstruct and draw the cell profile for one parameter.
    Profile,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Bisect => "bisect",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::Profile => "profile",
        }
    }
}

/// A parsed configuration together with the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path)?;
    parse(&bytes)
}

pub fn parse(bytes: &[u8]) -> Result<LoadedConfig, CliError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| CliError::ConfigInvalid(format!("config is not UTF-8: {e}")))?;
    let config: RunConfig =
        toml::from_str(text).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    if config.version != CONFIG_VERSION {
        return Err(CliError::ConfigInvalid(format!(
            "unsupported config version {} (expected {CONFIG_VERSION})",
            config.version
        )));
    }
    Ok(LoadedConfig {
        config,
        hash: config_hash(bytes),
    })
}

impl RunConfig {
    /// Checks the section layout for `cmd` and the tolerance values.
    ///
    /// Function condition checks are left to the commands, since `verify`
    /// reports them instead of rejecting the config.
    pub fn validate_for(&self, cmd: Command) -> Result<(), CliError> {
        let present: Vec<&str> = [
            ("classify", self.classify.is_some()),
            ("bisect", self.bisect.is_some()),
            ("sweep", self.sweep.is_some()),
            ("verify", self.verify.is_some()),
            ("profile", self.profile.is_some()),
        ]
        .iter()
        .filter(|(_, p)| *p)
        .map(|(n, _)| *n)
        .collect();
        if present != [cmd.name()] {
            return Err(CliError::ConfigInvalid(format!(
                "config must contain exactly the [{}] command section, found {:?}",
                cmd.name(),
                present
            )));
        }
        match self.model {
            Model::Toy if self.g.is_none() => {
                return Err(CliError::ConfigInvalid("toy model needs `g`".into()))
            }
            Model::Bats if self.mu.is_none() => {
                return Err(CliError::ConfigInvalid("BATS model needs `mu`".into()))
            }
            _ => {}
        }
        if cmd == Command::Bisect && self.model != Model::Toy {
            return Err(CliError::ConfigInvalid(
                "bisect is defined for the toy model only".into(),
            ));
        }
        self.tolerances
            .integrator
            .validate()
            .map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }

    pub fn g(&self) -> Result<&GFunction, CliError> {
        self.g
            .as_ref()
            .ok_or_else(|| CliError::ConfigInvalid("toy model needs `g`".into()))
    }

    pub fn mu(&self) -> Result<&ViscosityFn, CliError> {
        self.mu
            .as_ref()
            .ok_or_else(|| CliError::ConfigInvalid("BATS model needs `mu`".into()))
    }
}

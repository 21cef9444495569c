use std::fmt;
use std::path::{Path, PathBuf};

use lagrg::critical::{FixedPointKind, SearchOptions};
use lagrg::dynamics::{EvolutionParams, Variant};
use lagrg::laguerre::LaguerreFactored;
use lagrg::limits::{theta_from_dimension, HierarchyParams, Normalization};
use lagrg::{Precision, DEFAULT_K};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Orbit,
    FindCritical,
    Eigenvalues,
    Limit,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::FindCritical => "find-critical",
            Command::Eigenvalues => "eigenvalues",
            Command::Limit => "limit",
            Command::OracleCheck => "oracle-check",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Map and hierarchy parameters as written in a config file.
///
/// Exactly one of `beta` and `tau` may be given; `theta` may be replaced by
/// the dimension `N` (and drift `d`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub lambda: f64,
    pub delta: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub tol: f64,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default)]
    pub d: f64,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_n_max() -> usize {
    60
}

fn default_depth() -> usize {
    400
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    pub kmax: usize,
    pub fixed_point: FixedPointKind,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            kmax: 4,
            fixed_point: FixedPointKind::Critical,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Random cases in the shift-identity sweep.
    pub cases: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { cases: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File name stem; the command name when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            stem: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub command: Command,
    pub seed: LaguerreFactored,
    pub params: ParamsConfig,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default)]
    pub search: SearchOptions,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub random_seed: u64,
}

fn default_variant() -> Variant {
    Variant::T
}

fn default_normalization() -> Normalization {
    Normalization::Abnormal
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub out: Option<PathBuf>,
    pub precision: Option<Precision>,
    pub max_iter: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::ConfigInvalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Applies overrides, fills the precision and checks every numeric field.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(c) = o.command {
            self.command = c;
        }
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
        let precision = o
            .precision
            .or(self.precision)
            .unwrap_or(self.search.precision);
        self.precision = Some(precision);
        self.search.precision = precision;
        if let Some(n) = o.max_iter {
            match self.command {
                Command::Orbit | Command::OracleCheck => self.params.n_max = n,
                Command::FindCritical => self.search.max_bisections = n,
                Command::Limit => self.params.depth = n,
                Command::Eigenvalues => {}
            }
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| Err(CliError::ConfigInvalid(m));
        let p = &self.params;
        if p.beta.is_some() && p.tau.is_some() {
            return invalid("params: give beta or tau, not both".into());
        }
        if let Some(t) = p.tau {
            if !(t.is_finite() && t >= 0.0) {
                return invalid(format!("params.tau must be nonnegative, got {t}"));
            }
        }
        if !(p.d.is_finite() && p.d >= 0.0) {
            return invalid(format!("params.d must be nonnegative, got {}", p.d));
        }
        if p.depth == 0 {
            return invalid("params.depth must be positive".into());
        }
        if !(p.lambda > 0.0 && p.lambda < 0.5) {
            return invalid(format!(
                "params.lambda must lie in (0, 1/2), got {}",
                p.lambda
            ));
        }
        let s = &self.search;
        if !(s.beta_tol.is_finite() && s.beta_tol >= 0.0) {
            return invalid("search.beta_tol must be nonnegative".into());
        }
        if s.horizon == 0 || s.zeta_horizon == 0 {
            return invalid("search horizons must be positive".into());
        }
        if let Some(cap) = s.beta_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return invalid("search.beta_cap must be positive".into());
            }
        }
        if self.eigen.kmax == 0 || 2 * self.eigen.kmax > p.k {
            return invalid(format!(
                "eigen.kmax must lie in [1, K/2], got {}",
                self.eigen.kmax
            ));
        }
        if self.oracle.cases == 0 {
            return invalid("oracle.cases must be positive".into());
        }
        if let Some(stem) = &self.output.stem {
            if stem.is_empty() || stem.contains(['/', '\\']) {
                return invalid(format!(
                    "output.stem must be a plain file name, got '{stem}'"
                ));
            }
        }
        if self.command == Command::Limit && p.n.is_none() {
            return invalid("limit needs params.N".into());
        }
        let e = self.evolution()?;
        e.validate()
            .map_err(|err| CliError::ConfigInvalid(format!("params: {err}")))?;
        if p.n.is_some() {
            self.hierarchy()?;
        }
        Ok(())
    }

    fn theta(&self) -> Result<f64, CliError> {
        let p = &self.params;
        match (p.n, p.theta) {
            (Some(n), theta) => {
                let t = theta_from_dimension(n, p.d)
                    .map_err(|e| CliError::ConfigInvalid(format!("params: {e}")))?;
                if let Some(given) = theta {
                    if (given - t).abs() > 1e-12 {
                        return Err(CliError::ConfigInvalid(format!(
                            "params.theta = {given} disagrees with (N + d)/2 = {t}"
                        )));
                    }
                }
                Ok(t)
            }
            (None, Some(t)) => Ok(t),
            (None, None) => Err(CliError::ConfigInvalid("params needs theta or N".into())),
        }
    }

    pub fn evolution(&self) -> Result<EvolutionParams, CliError> {
        let p = &self.params;
        let mut e = EvolutionParams::new(self.theta()?, p.lambda, p.delta, p.beta.unwrap_or(0.0))
            .with_k(p.k)
            .with_n_max(p.n_max)
            .with_tol(p.tol);
        if let Some(t) = p.tau {
            e = e.with_tau(t);
        }
        Ok(e)
    }

    pub fn hierarchy(&self) -> Result<HierarchyParams, CliError> {
        let n = self
            .params
            .n
            .ok_or_else(|| CliError::ConfigInvalid("params.N is required".into()))?;
        let hp = HierarchyParams::new(n, self.params.d, self.evolution()?)
            .map_err(|e| CliError::ConfigInvalid(format!("params: {e}")))?
            .with_depth(self.params.depth);
        hp.validate()
            .map_err(|e| CliError::ConfigInvalid(format!("params: {e}")))?;
        Ok(hp)
    }

    pub fn precision(&self) -> Precision {
        self.precision.unwrap_or(Precision::Auto)
    }

    pub fn output_path(&self, ext: &str) -> PathBuf {
        let stem = self.output.stem.as_deref().unwrap_or(self.command.name());
        self.output.dir.join(format!("{stem}.{ext}"))
    }

    /// Single-line JSON of the resolved config.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

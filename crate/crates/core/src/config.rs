//! Run configuration: one TOML document fully determines a run.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::BatteryParams;
use crate::harness::{HarnessConfig, PolicyKind};
use crate::matrix::Matrix;
use crate::optimizer::OptimizerConfig;
use crate::samplers::{
    BootstrapSampler, CyclicRegimeParams, CyclicRegimeSampler, ExternalSampler, GaussianArParams, GaussianArSampler,
    RegimeMixtureParams, RegimeMixtureSampler, ReplaySampler, SamplerError, SamplerRequest, TrajectorySampler,
    DEFAULT_TIMEOUT,
};
use crate::scenario_tree::TreeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT.as_secs()
}

/// Where forecasts come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerSpec {
    GaussianAr(GaussianArParams),
    /// Gaussian AR(1) fitted by least squares on the first `hours` rows of
    /// the price data.
    GaussianArFit {
        hours: usize,
    },
    RegimeMixture(RegimeMixtureParams),
    CyclicRegime(CyclicRegimeParams),
    /// Block bootstrap over the first `hours` rows of the price data.
    Bootstrap {
        block: usize,
        hours: usize,
    },
    /// Zero-variance replay of the price data itself.
    Replay,
    /// NDJSON protocol endpoint: a spawned `command` or a TCP `address`.
    External {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        command: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        address: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

impl SamplerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            SamplerSpec::GaussianAr(_) => "gaussian_ar",
            SamplerSpec::GaussianArFit { .. } => "gaussian_ar_fit",
            SamplerSpec::RegimeMixture(_) => "regime_mixture",
            SamplerSpec::CyclicRegime(_) => "cyclic_regime",
            SamplerSpec::Bootstrap { .. } => "bootstrap",
            SamplerSpec::Replay => "replay",
            SamplerSpec::External { .. } => "external",
        }
    }

    /// Series dimension, when the sampler parameters alone determine it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            SamplerSpec::GaussianAr(p) => Some(p.dim()),
            SamplerSpec::RegimeMixture(p) => Some(p.dim()),
            SamplerSpec::CyclicRegime(p) => Some(p.dim()),
            _ => None,
        }
    }

    /// Whether building the sampler needs the price data.
    pub fn needs_data(&self) -> bool {
        matches!(
            self,
            SamplerSpec::GaussianArFit { .. } | SamplerSpec::Bootstrap { .. } | SamplerSpec::Replay
        )
    }

    /// Instantiates the sampler. `data` is the full price series.
    pub fn build(&self, data: Option<&Matrix>) -> Result<Box<dyn TrajectorySampler>, SamplerError> {
        let data =
            || data.ok_or_else(|| SamplerError::InvalidInput(format!("{} sampler needs price data", self.kind())));
        let prefix = |hours: usize| -> Result<Matrix, SamplerError> {
            let series = data()?;
            if hours > series.rows() {
                return Err(SamplerError::InvalidInput(format!(
                    "training prefix of {hours} hours exceeds the {} available",
                    series.rows()
                )));
            }
            Ok(series.slice_rows(0, hours))
        };
        Ok(match self {
            SamplerSpec::GaussianAr(p) => Box::new(GaussianArSampler::new(p.clone())?),
            SamplerSpec::GaussianArFit { hours } => {
                Box::new(GaussianArSampler::new(GaussianArParams::fit(&prefix(*hours)?)?)?)
            }
            SamplerSpec::RegimeMixture(p) => Box::new(RegimeMixtureSampler::new(p.clone())?),
            SamplerSpec::CyclicRegime(p) => Box::new(CyclicRegimeSampler::new(p.clone())?),
            SamplerSpec::Bootstrap { block, hours } => {
                Box::new(BootstrapSampler::from_series(&prefix(*hours)?, *block)?)
            }
            SamplerSpec::Replay => Box::new(ReplaySampler::new(data()?.clone())),
            SamplerSpec::External {
                command,
                address,
                timeout_secs,
            } => {
                let timeout = Duration::from_secs(*timeout_secs);
                match (command, address) {
                    (Some(cmd), None) if !cmd.is_empty() => {
                        Box::new(ExternalSampler::spawn(&cmd[0], &cmd[1..], timeout)?)
                    }
                    (None, Some(addr)) => Box::new(ExternalSampler::connect(addr.as_str(), timeout)?),
                    _ => {
                        return Err(SamplerError::InvalidInput(
                            "external sampler needs exactly one of `command` or `address`".into(),
                        ))
                    }
                }
            }
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Price CSV; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Column that settles trades; defaults to the first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trading_column: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HarnessSection {
    /// Scenario count for `mc_smpc` (default: leaves of a full-width tree).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    /// History rows required before the first decision epoch.
    #[serde(default)]
    pub min_context: usize,
}

/// Synthetic series generation for the `synth` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub hours: usize,
    /// Timestamp of the first row.
    pub start: String,
    #[serde(default)]
    pub seed: u64,
    /// Column names; defaults to `price`, `price_1`, ...
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
    /// Row the sampler is conditioned on for the first hour. Unused by
    /// `cyclic_regime`, which generates from its own origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    /// Generator; defaults to the run's `[sampler]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSpec>,
}

impl SynthConfig {
    pub fn column_names(&self, dim: usize) -> Vec<String> {
        if !self.names.is_empty() {
            return self.names.clone();
        }
        (0..dim)
            .map(|j| {
                if j == 0 {
                    "price".to_string()
                } else {
                    format!("price_{j}")
                }
            })
            .collect()
    }
}

/// Generates `cfg.hours` rows from a sampler spec that needs no data.
pub fn synthesize(spec: &SamplerSpec, cfg: &SynthConfig) -> Result<Matrix, SamplerError> {
    if let SamplerSpec::CyclicRegime(p) = spec {
        return CyclicRegimeSampler::new(p.clone())?.generate(cfg.hours, cfg.seed);
    }
    let sampler = spec.build(None)?;
    let d = sampler.dim();
    let initial = cfg.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    let history = Matrix::from_rows(&[initial])
        .filter(|m| m.cols() == d)
        .ok_or_else(|| SamplerError::InvalidInput(format!("initial row must have {d} values")))?;
    let batch = sampler.sample(&SamplerRequest::new(history, 1, cfg.hours, cfg.seed))?;
    batch.check(1, cfg.hours, d)?;
    Ok(batch.sample_matrix(0))
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

/// A complete run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default)]
    pub battery: BatteryParams,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub harness: HarnessSection,
    pub sampler: SamplerSpec,
    /// Sampler behind `ar_tree_smpc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_sampler: Option<SamplerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(data), Some(dir)) = (cfg.data.path.as_mut(), path.parent()) {
            if data.is_relative() {
                *data = dir.join(&*data);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// Checks that do not need the price data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.tree.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.battery
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.optimizer
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.seeds.is_empty() {
            return invalid("`seeds` must list at least one seed");
        }
        if self.policies.is_empty() {
            return invalid("`policies` must list at least one policy");
        }
        if self.harness.mc_samples == Some(0) {
            return invalid("`harness.mc_samples` must be positive");
        }
        if self.optimizer.trading_dim >= self.tree.series_dim {
            return invalid(format!(
                "trading_dim {} outside a {}-dimensional series",
                self.optimizer.trading_dim, self.tree.series_dim
            ));
        }
        let specs = [
            Some(&self.sampler),
            self.ar_sampler.as_ref(),
            self.synth.as_ref().and_then(|s| s.sampler.as_ref()),
        ];
        for spec in specs.into_iter().flatten() {
            if let Some(d) = spec.dim() {
                if d != self.tree.series_dim {
                    return invalid(format!(
                        "{} sampler has dimension {d}, tree.series_dim is {}",
                        spec.kind(),
                        self.tree.series_dim
                    ));
                }
            }
            if let SamplerSpec::Bootstrap { block, .. } = spec {
                if *block == 0 || !self.tree.stage_horizon.is_multiple_of(*block) {
                    return invalid(format!(
                        "bootstrap block {block} must divide the stage horizon {}",
                        self.tree.stage_horizon
                    ));
                }
            }
        }
        if self.policies.contains(&PolicyKind::ArTreeSmpc) && self.ar_sampler.is_none() {
            return invalid("`ar_tree_smpc` needs an `[ar_sampler]` section");
        }
        if let Some(s) = &self.synth {
            if s.hours == 0 {
                return invalid("`synth.hours` must be positive");
            }
            if crate::data::parse_timestamp(&s.start).is_none() {
                return invalid(format!("`synth.start` {:?} is not a timestamp", s.start));
            }
            if !s.names.is_empty() && s.names.len() != self.tree.series_dim {
                return invalid("`synth.names` must name every series column");
            }
        }
        Ok(())
    }

    /// Cross-checks against the loaded price data and resolves the trading
    /// column to an index.
    pub fn check_data(&self, names: &[String]) -> Result<usize, ConfigError> {
        if names.len() != self.tree.series_dim {
            return invalid(format!(
                "price data has {} columns, tree.series_dim is {}",
                names.len(),
                self.tree.series_dim
            ));
        }
        match &self.data.trading_column {
            Some(col) => names
                .iter()
                .position(|n| n == col)
                .ok_or_else(|| ConfigError::Invalid(format!("trading column {col:?} not in the price data"))),
            None => Ok(self.optimizer.trading_dim),
        }
    }

    /// Harness settings for one seed, trading on column `trading_dim`.
    pub fn harness_config(&self, seed: u64, trading_dim: usize) -> HarnessConfig {
        HarnessConfig {
            tree: TreeConfig {
                master_seed: seed,
                ..self.tree.clone()
            },
            battery: self.battery.clone(),
            optimizer: OptimizerConfig {
                trading_dim,
                ..self.optimizer.clone()
            },
            mc_samples: self.harness.mc_samples,
            min_context: self.harness.min_context,
            seed,
        }
    }
}

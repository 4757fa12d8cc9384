use std::path::{Path, PathBuf};

use homodyne::patterns::{Precision, RangeMode};
use homodyne::reconstruct::BetaPolicy;
use homodyne::simulate::StateSpec;
use homodyne::wigner::LambdaMethod;
use homodyne::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorName {
    Binned,
    Unbinned,
}

/// Where the error bars come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    Blocks,
    PerSample,
}

/// Parameters of one run. Every field except `version` is optional so a
/// file can set only what it needs; values from a file win over flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_phi: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nsamples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nblks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_points: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bin: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_floor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_phase_aliasing: Option<bool>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<LambdaMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cartesian: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cartesian_extent: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),* $(,)?) => {
        RunConfig {
            version: $top.version,
            $($f: $top.$f.or($base.$f),)*
        }
    };
}

impl RunConfig {
    pub fn new() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            ..Default::default()
        }
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(base, top;
            state, cutoff, n_phi, nsamples, nblks, seed, x_points,
            estimator, n_bin, beta, errors, seed_floor, allow_phase_aliasing,
            method, n_r, n_theta, r_max, cartesian, cartesian_extent,
            precision, range, threads, input, truth, output,
        )
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::InvalidArgument(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = homodyne::formats::read_text(path)?;
        RunConfig::from_json(&text).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Missing required key: a usage error.
pub fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::InvalidArgument(format!("missing required parameter `{key}`")))
}

//! Density-matrix estimation from quadrature data.

mod dataset;
mod estimate;
mod sinogram;

pub use dataset::{double_by_symmetry, PhaseLayout, QuadratureDataset, QuadratureSample};
pub use estimate::{
    block_statistics_binned, block_statistics_unbinned, check_normalization, estimate_binned,
    estimate_binned_with, estimate_unbinned, DensityMatrixEstimate, EstimateMeta, EstimatorKind,
    Normalization,
};
pub use sinogram::{bin, bin_with_edges, phase_dft, BinEdges, PhaseSpectrum, Sinogram};

use crate::error::{invalid, Result};
use crate::patterns::{choose_beta, PatternConfig, Precision, RangeMode, DEFAULT_SEED_FLOOR};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Estimator {
    Binned { n_bin: usize },
    Unbinned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaPolicy {
    /// `exp(-3 max|x|)` over the data
    Heuristic,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub cutoff: usize,
    pub estimator: Estimator,
    pub beta: BetaPolicy,
    pub precision: Precision,
    pub range: RangeMode,
    pub seed_floor: usize,
    /// Read frequency `d` modulo `n_φ` instead of failing when `n_φ < M`.
    pub allow_phase_aliasing: bool,
}

impl ReconConfig {
    pub fn new(cutoff: usize, estimator: Estimator) -> Self {
        ReconConfig {
            cutoff,
            estimator,
            beta: BetaPolicy::Heuristic,
            precision: Precision::Double,
            range: RangeMode::Extended,
            seed_floor: DEFAULT_SEED_FLOOR,
            allow_phase_aliasing: false,
        }
    }

    pub fn pattern_config(&self, ds: &QuadratureDataset) -> Result<PatternConfig> {
        let beta = match self.beta {
            BetaPolicy::Fixed(b) => b,
            BetaPolicy::Heuristic => {
                if ds.is_empty() {
                    return Err(invalid("cannot choose beta for an empty dataset"));
                }
                choose_beta(&ds.values().collect::<Vec<_>>())?
            }
        };
        Ok(PatternConfig::new(self.cutoff, beta)?
            .with_precision(self.precision)
            .with_range(self.range)
            .with_seed_floor(self.seed_floor))
    }
}

/// Estimate with per-sample errors.
pub fn reconstruct(ds: &QuadratureDataset, cfg: &ReconConfig) -> Result<DensityMatrixEstimate> {
    let pcfg = cfg.pattern_config(ds)?;
    match cfg.estimator {
        Estimator::Binned { n_bin } => {
            let sino = bin(ds, n_bin, None)?;
            estimate_binned_with(&phase_dft(&sino), &pcfg, cfg.allow_phase_aliasing)
        }
        Estimator::Unbinned => estimate_unbinned(ds, &pcfg),
    }
}

/// Mean of per-block estimates with errors from the spread between blocks.
pub fn block_statistics(ds: &QuadratureDataset, cfg: &ReconConfig) -> Result<DensityMatrixEstimate> {
    let pcfg = cfg.pattern_config(ds)?;
    match cfg.estimator {
        Estimator::Binned { n_bin } => block_statistics_binned(ds, n_bin, &pcfg, cfg.allow_phase_aliasing),
        Estimator::Unbinned => block_statistics_unbinned(ds, &pcfg),
    }
}

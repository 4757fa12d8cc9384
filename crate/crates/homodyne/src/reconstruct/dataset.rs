use crate::error::{data, invalid, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const PHASE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSample {
    pub phase_index: u32,
    pub phase: f64,
    pub block: u32,
    pub value: f64,
}

/// How the phases of a dataset are arranged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseLayout {
    /// `φ_j = 2πj/n_φ`
    FullCircle,
    /// `φ_j = πj/n_φ`
    HalfCircle,
    /// arbitrary phases in `[0, 2π)`
    Scattered,
}

impl PhaseLayout {
    pub fn phase(self, j: usize, n_phi: usize) -> Option<f64> {
        match self {
            PhaseLayout::FullCircle => Some(2.0 * PI * j as f64 / n_phi as f64),
            PhaseLayout::HalfCircle => Some(PI * j as f64 / n_phi as f64),
            PhaseLayout::Scattered => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureDataset {
    samples: Vec<QuadratureSample>,
    n_phi: usize,
    n_blocks: usize,
    layout: PhaseLayout,
}

impl QuadratureDataset {
    pub fn new(
        samples: Vec<QuadratureSample>,
        n_phi: usize,
        n_blocks: usize,
        layout: PhaseLayout,
    ) -> Result<Self> {
        if n_phi == 0 {
            return Err(invalid("n_phi must be positive"));
        }
        if n_blocks == 0 {
            return Err(invalid("number of blocks must be positive"));
        }
        for (k, s) in samples.iter().enumerate() {
            if !s.value.is_finite() {
                return Err(data(format!("sample {k}: value {} is not finite", s.value)));
            }
            if !(s.phase >= 0.0 && s.phase < 2.0 * PI) {
                return Err(data(format!("sample {k}: phase {} outside [0, 2pi)", s.phase)));
            }
            if s.phase_index as usize >= n_phi {
                return Err(data(format!(
                    "sample {k}: phase index {} >= n_phi = {n_phi}",
                    s.phase_index
                )));
            }
            if s.block as usize >= n_blocks {
                return Err(data(format!(
                    "sample {k}: block {} >= number of blocks {n_blocks}",
                    s.block
                )));
            }
            if let Some(want) = layout.phase(s.phase_index as usize, n_phi) {
                if (s.phase - want).abs() > PHASE_TOL {
                    return Err(data(format!(
                        "sample {k}: phase {} does not match grid value {want} for index {}",
                        s.phase, s.phase_index
                    )));
                }
            }
        }
        Ok(QuadratureDataset {
            samples,
            n_phi,
            n_blocks,
            layout,
        })
    }

    /// Samples on the full-circle grid from `(phase_index, block, value)` triples.
    pub fn gridded(
        n_phi: usize,
        n_blocks: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let samples = triples
            .into_iter()
            .map(|(j, b, value)| QuadratureSample {
                phase_index: j as u32,
                phase: 2.0 * PI * j as f64 / n_phi.max(1) as f64,
                block: b as u32,
                value,
            })
            .collect();
        Self::new(samples, n_phi, n_blocks, PhaseLayout::FullCircle)
    }

    /// Arbitrary `(phase, value)` pairs in a single block.
    pub fn scattered(points: &[(f64, f64)]) -> Result<Self> {
        let samples = points
            .iter()
            .enumerate()
            .map(|(k, &(phase, value))| QuadratureSample {
                phase_index: k as u32,
                phase,
                block: 0,
                value,
            })
            .collect();
        Self::new(samples, points.len().max(1), 1, PhaseLayout::Scattered)
    }

    pub fn samples(&self) -> &[QuadratureSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<QuadratureSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn layout(&self) -> PhaseLayout {
        self.layout
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.value)
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.n_blocks];
        for s in &self.samples {
            n[s.block as usize] += 1;
        }
        n
    }

    pub fn phase_counts(&self) -> Vec<usize> {
        let mut n = vec![0; self.n_phi];
        for s in &self.samples {
            n[s.phase_index as usize] += 1;
        }
        n
    }

    /// Samples of one block, in dataset order.
    pub fn block(&self, b: usize) -> impl Iterator<Item = &QuadratureSample> + '_ {
        self.samples.iter().filter(move |s| s.block as usize == b)
    }

    pub fn block_dataset(&self, b: usize) -> Result<QuadratureDataset> {
        if b >= self.n_blocks {
            return Err(invalid(format!("block {b} out of range")));
        }
        let samples = self
            .block(b)
            .map(|s| QuadratureSample { block: 0, ..*s })
            .collect();
        Ok(QuadratureDataset {
            samples,
            n_phi: self.n_phi,
            n_blocks: 1,
            layout: self.layout,
        })
    }
}

/// Adds `(φ+π, -x)` for every `(φ, x)`, using `X_{φ+π} = -X_φ`.
pub fn double_by_symmetry(ds: &QuadratureDataset) -> Result<QuadratureDataset> {
    if let Some((k, s)) = ds.samples.iter().enumerate().find(|(_, s)| s.phase >= PI) {
        return Err(data(format!(
            "sample {k}: phase {} >= pi; doubling would count it twice",
            s.phase
        )));
    }
    let n = ds.n_phi;
    let (layout, n_phi) = match ds.layout {
        PhaseLayout::HalfCircle => (PhaseLayout::FullCircle, 2 * n),
        _ => (PhaseLayout::Scattered, 2 * n),
    };
    let mut samples = Vec::with_capacity(2 * ds.len());
    samples.extend(ds.samples.iter().copied());
    for s in &ds.samples {
        let j = s.phase_index + n as u32;
        let phase = match layout {
            PhaseLayout::FullCircle => 2.0 * PI * j as f64 / n_phi as f64,
            _ => s.phase + PI,
        };
        samples.push(QuadratureSample {
            phase_index: j,
            phase,
            block: s.block,
            value: -s.value,
        });
    }
    QuadratureDataset::new(samples, n_phi, ds.n_blocks, layout)
}

use super::dataset::{PhaseLayout, QuadratureDataset};
use crate::error::{data, invalid, Result};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

/// `n_bin` equal-width bins over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinEdges {
    edges: Vec<f64>,
    centers: Vec<f64>,
}

impl BinEdges {
    pub fn new(lo: f64, hi: f64, n_bin: usize) -> Result<Self> {
        if n_bin < 1 {
            return Err(invalid("n_bin must be at least 1"));
        }
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(invalid(format!("bin range [{lo}, {hi}] is empty or not finite")));
        }
        let w = hi - lo;
        let edges: Vec<f64> = (0..=n_bin)
            .map(|k| if k == n_bin { hi } else { lo + w * k as f64 / n_bin as f64 })
            .collect();
        let centers = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        Ok(BinEdges { edges, centers })
    }

    /// Symmetric range `[-X - h/2, X + h/2]` with `X = max|x|` and bin width `h = 2X/(n_bin-1)`,
    /// so the outermost centers sit on `±X`.
    pub fn symmetric(max_abs: f64, n_bin: usize) -> Result<Self> {
        if n_bin < 1 {
            return Err(invalid("n_bin must be at least 1"));
        }
        let x = if max_abs > 0.0 { max_abs } else { 0.5 };
        let half = if n_bin == 1 { x } else { x / (n_bin - 1) as f64 };
        Self::new(-x - half, x + half, n_bin)
    }

    pub fn n_bin(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    /// Bin of `x`; values on an interior edge go to the right-hand bin.
    pub fn index(&self, x: f64) -> Option<usize> {
        let n = self.n_bin();
        if !(x >= self.edges[0] && x <= self.edges[n]) {
            return None;
        }
        Some(self.edges[1..n].partition_point(|&e| e <= x))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    /// `freq[[j, i]]`: fraction of phase j's samples in bin i.
    pub freq: Array2<f64>,
    pub row_counts: Vec<usize>,
    pub bins: BinEdges,
}

impl Sinogram {
    pub fn n_phi(&self) -> usize {
        self.freq.nrows()
    }

    pub fn n_bin(&self) -> usize {
        self.freq.ncols()
    }

    pub fn bin_edges(&self) -> &[f64] {
        self.bins.edges()
    }

    pub fn bin_centers(&self) -> &[f64] {
        self.bins.centers()
    }

    pub fn n_samples(&self) -> usize {
        self.row_counts.iter().sum()
    }
}

/// Histogram per phase with row-normalized frequencies.
pub fn bin(ds: &QuadratureDataset, n_bin: usize, range: Option<(f64, f64)>) -> Result<Sinogram> {
    let bins = match range {
        Some((lo, hi)) => BinEdges::new(lo, hi, n_bin)?,
        None => BinEdges::symmetric(ds.max_abs_value(), n_bin)?,
    };
    bin_with_edges(ds, None, &bins)
}

/// Histogram of one block (or of all samples when `block` is `None`) on given bins.
pub fn bin_with_edges(ds: &QuadratureDataset, block: Option<usize>, bins: &BinEdges) -> Result<Sinogram> {
    if ds.layout() != PhaseLayout::FullCircle {
        return Err(data(
            "binning needs equispaced phases over [0, 2pi); double half-circle data first or use the unbinned estimator",
        ));
    }
    let n_phi = ds.n_phi();
    let mut counts = Array2::<f64>::zeros((n_phi, bins.n_bin()));
    let mut row_counts = vec![0usize; n_phi];
    for s in ds.samples() {
        if let Some(b) = block {
            if s.block as usize != b {
                continue;
            }
        }
        let i = bins.index(s.value).ok_or_else(|| {
            data(format!(
                "value {} lies outside the bin range [{}, {}]",
                s.value,
                bins.edges()[0],
                bins.edges()[bins.n_bin()]
            ))
        })?;
        counts[[s.phase_index as usize, i]] += 1.0;
        row_counts[s.phase_index as usize] += 1;
    }
    if let Some(j) = row_counts.iter().position(|&c| c == 0) {
        return Err(data(format!(
            "phase index {j} has no samples{}; the estimator would be biased",
            block.map(|b| format!(" in block {b}")).unwrap_or_default()
        )));
    }
    for (mut row, &c) in counts.rows_mut().into_iter().zip(row_counts.iter()) {
        let inv = 1.0 / c as f64;
        row.mapv_inplace(|v| v * inv);
    }
    Ok(Sinogram {
        freq: counts,
        row_counts,
        bins: bins.clone(),
    })
}

/// Discrete Fourier transform of the sinogram along the phase axis,
/// `Ŝ_{d,i} = (1/n_φ) Σ_j S_{j,i} e^{-2πi jd/n_φ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpectrum {
    pub shat: Array2<Complex64>,
    pub n_samples: usize,
    pub bins: BinEdges,
}

impl PhaseSpectrum {
    pub fn n_phi(&self) -> usize {
        self.shat.nrows()
    }

    pub fn n_bin(&self) -> usize {
        self.shat.ncols()
    }

    pub fn bin_centers(&self) -> &[f64] {
        self.bins.centers()
    }
}

pub fn phase_dft(s: &Sinogram) -> PhaseSpectrum {
    let n_phi = s.n_phi();
    let n_bin = s.n_bin();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_phi);
    let scale = 1.0 / n_phi as f64;
    let columns: Vec<Vec<Complex64>> = (0..n_bin)
        .into_par_iter()
        .map_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, i| {
                let col = s.freq.column(i);
                if col.iter().all(|&v| v == 0.0) {
                    return vec![Complex64::new(0.0, 0.0); n_phi];
                }
                let mut buf: Vec<Complex64> = col.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft.process_with_scratch(&mut buf, scratch);
                let mut out = vec![Complex64::new(0.0, 0.0); n_phi];
                out[0] = Complex64::new(col.sum() * scale, 0.0);
                for d in 1..=n_phi / 2 {
                    let v = buf[d] * scale;
                    if 2 * d == n_phi {
                        out[d] = Complex64::new(v.re, 0.0);
                    } else {
                        out[d] = v;
                        out[n_phi - d] = v.conj();
                    }
                }
                out
            },
        )
        .collect();
    let mut shat = Array2::zeros((n_phi, n_bin));
    for (i, col) in columns.into_iter().enumerate() {
        for (d, v) in col.into_iter().enumerate() {
            shat[[d, i]] = v;
        }
    }
    PhaseSpectrum {
        shat,
        n_samples: s.n_samples(),
        bins: s.bins.clone(),
    }
}

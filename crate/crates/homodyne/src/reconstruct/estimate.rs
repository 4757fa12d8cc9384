use super::dataset::{QuadratureDataset, QuadratureSample};
use super::sinogram::{bin_with_edges, phase_dft, BinEdges, PhaseSpectrum};
use crate::error::{data, invalid, Error, Result};
use crate::patterns::{PatternConfig, PatternKernel, Precision};
use crate::real::{ldexp, Real};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Bins per pattern chunk; sized so that one chunk stays in cache.
const CHUNK: usize = 32;
/// Samples per Welford group in the unbinned estimator.
const GROUP: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Binned,
    Unbinned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub estimator: EstimatorKind,
    pub n_samples: usize,
    pub n_bin: Option<usize>,
    pub beta: f64,
    pub n_blocks: Option<usize>,
    pub precision: Precision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrixEstimate {
    pub rho: Array2<Complex64>,
    pub err_re: Array2<f64>,
    pub err_im: Array2<f64>,
    pub trace: f64,
    pub trace_err: f64,
    pub meta: EstimateMeta,
}

/// Values stored by diagonal: `diag[d][n]` is element `(n, n+d)`.
pub(crate) struct Diagonals {
    pub rho: Vec<Vec<Complex64>>,
    pub err_re: Vec<Vec<f64>>,
    pub err_im: Vec<Vec<f64>>,
}

impl Diagonals {
    fn zeros(m: usize) -> Self {
        Diagonals {
            rho: (0..m).map(|d| vec![Complex64::new(0.0, 0.0); m - d]).collect(),
            err_re: (0..m).map(|d| vec![0.0; m - d]).collect(),
            err_im: (0..m).map(|d| vec![0.0; m - d]).collect(),
        }
    }
}

impl DensityMatrixEstimate {
    pub(crate) fn from_diagonals(diag: Diagonals, meta: EstimateMeta) -> Result<Self> {
        let m = diag.rho.len();
        let mut rho = Array2::zeros((m, m));
        let mut err_re = Array2::zeros((m, m));
        let mut err_im = Array2::zeros((m, m));
        for d in 0..m {
            for n in 0..m - d {
                let mut v = diag.rho[d][n];
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::NonFinite {
                        sequence: "density matrix estimate",
                        index: n * m + n + d,
                    });
                }
                let (er, mut ei) = (diag.err_re[d][n], diag.err_im[d][n]);
                if d == 0 {
                    v.im = 0.0;
                    ei = 0.0;
                }
                rho[[n, n + d]] = v;
                rho[[n + d, n]] = v.conj();
                err_re[[n, n + d]] = er;
                err_re[[n + d, n]] = er;
                err_im[[n, n + d]] = ei;
                err_im[[n + d, n]] = ei;
            }
        }
        let trace = (0..m).map(|n| rho[[n, n]].re).sum();
        let trace_err = (0..m).map(|n| err_re[[n, n]].powi(2)).sum::<f64>().sqrt();
        Ok(DensityMatrixEstimate {
            rho,
            err_re,
            err_im,
            trace,
            trace_err,
            meta,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.rho.nrows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.cutoff()).map(|n| self.rho[[n, n]].re).collect()
    }

    pub fn diagonal_errors(&self) -> Vec<f64> {
        (0..self.cutoff()).map(|n| self.err_re[[n, n]]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub trace: f64,
    pub trace_err: f64,
    pub compatible: bool,
}

/// Trace and its error; compatible when `|trace - 1| ≤ 3 trace_err`
/// (plus a rounding allowance of 1e-12 for exact inputs).
pub fn check_normalization(est: &DensityMatrixEstimate) -> Normalization {
    let m = est.cutoff();
    let trace: f64 = (0..m).map(|n| est.rho[[n, n]].re).sum();
    let trace_err = (0..m).map(|n| est.err_re[[n, n]].powi(2)).sum::<f64>().sqrt();
    Normalization {
        trace,
        trace_err,
        compatible: (trace - 1.0).abs() <= 3.0 * trace_err + 1e-12,
    }
}

// ---------------------------------------------------------------------------
// binned estimator

/// Pattern data of a group of bins, stored index-major so that the inner loop
/// runs over bins: `a[k * len + i]` is `a_k(x_i)`.
struct PatternChunk<F> {
    bins: Vec<usize>,
    a: Vec<F>,
    u: Vec<F>,
    v: Vec<F>,
    b: Vec<F>,
    eu: Vec<i32>,
    ev: Vec<i32>,
    plain: bool,
}

/// Pattern functions at a fixed set of bin centers, reusable across blocks.
pub(crate) struct BinPatterns<F> {
    cutoff: usize,
    chunks: Vec<PatternChunk<F>>,
}

impl<F: Real> BinPatterns<F> {
    fn build(kernel: &PatternKernel<F>, centers: &[f64], active: &[usize]) -> Result<Self> {
        let m = kernel.config().cutoff;
        let chunks = active
            .par_chunks(CHUNK)
            .map(|idx| {
                let len = idx.len();
                let mut c = PatternChunk {
                    bins: idx.to_vec(),
                    a: vec![F::zero(); m * len],
                    u: vec![F::zero(); m * len],
                    v: vec![F::zero(); m * len],
                    b: vec![F::zero(); m * len],
                    eu: vec![0; m * len],
                    ev: vec![0; m * len],
                    plain: true,
                };
                for (i, &bin) in idx.iter().enumerate() {
                    let ws = kernel.workspace(centers[bin])?;
                    let p = ws.parts();
                    c.plain &= p.plain;
                    for k in 0..m {
                        c.a[k * len + i] = p.a[k];
                        c.u[k * len + i] = p.u[k];
                        c.v[k * len + i] = p.v[k];
                        c.b[k * len + i] = p.b[k];
                        c.eu[k * len + i] = p.eu[k];
                        c.ev[k * len + i] = p.ev[k];
                    }
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BinPatterns { cutoff: m, chunks })
    }

    /// `Σ_i Ŝ_{d,i} f_{n,n+d}(x_i)` and, optionally, the second moments needed
    /// for per-sample errors.
    fn accumulate(&self, spec: &PhaseSpectrum, with_moments: bool) -> (Vec<Vec<Complex64>>, Vec<Vec<[f64; 2]>>) {
        let m = self.cutoff;
        let n_phi = spec.n_phi();
        let tasks = rayon::current_num_threads().clamp(1, m);
        let shat = &spec.shat;
        let results: Vec<Vec<(usize, Vec<Complex64>, Vec<[f64; 2]>)>> = (0..tasks)
            .into_par_iter()
            .map(|t| {
                let ds: Vec<usize> = (t..m).step_by(tasks).collect();
                let mut rho: Vec<Vec<Complex64>> =
                    ds.iter().map(|&d| vec![Complex64::new(0.0, 0.0); m - d]).collect();
                let mut mom: Vec<Vec<[f64; 2]>> = ds
                    .iter()
                    .map(|&d| if with_moments { vec![[0.0; 2]; m - d] } else { Vec::new() })
                    .collect();
                let mut sr = [0.0f64; CHUNK];
                let mut si = [0.0f64; CHUNK];
                let mut wp = [0.0f64; CHUNK];
                let mut wm = [0.0f64; CHUNK];
                let mut f = [0.0f64; CHUNK];
                for c in &self.chunks {
                    let len = c.bins.len();
                    for (slot, &d) in ds.iter().enumerate() {
                        let row = shat.row(d % n_phi);
                        for (i, &bin) in c.bins.iter().enumerate() {
                            sr[i] = row[bin].re;
                            si[i] = row[bin].im;
                        }
                        if with_moments {
                            let r0 = shat.row(0);
                            let r2 = shat.row((2 * d) % n_phi);
                            for (i, &bin) in c.bins.iter().enumerate() {
                                wp[i] = 0.5 * (r0[bin].re + r2[bin].re);
                                wm[i] = 0.5 * (r0[bin].re - r2[bin].re);
                            }
                        }
                        for n in 0..m - d {
                            let o1 = n * len;
                            let o2 = (n + d) * len;
                            let (a, u) = (&c.a[o1..o1 + len], &c.u[o1..o1 + len]);
                            let (v, b) = (&c.v[o2..o2 + len], &c.b[o2..o2 + len]);
                            if c.plain {
                                for i in 0..len {
                                    f[i] = (a[i] * v[i] - u[i] * b[i]).f64();
                                }
                            } else {
                                let (eu, ev) = (&c.eu[o1..o1 + len], &c.ev[o2..o2 + len]);
                                for i in 0..len {
                                    f[i] = ldexp((a[i] * v[i] - u[i] * b[i]).f64(), eu[i] + ev[i]);
                                }
                            }
                            let (mut re, mut im) = (0.0, 0.0);
                            for i in 0..len {
                                re += sr[i] * f[i];
                                im += si[i] * f[i];
                            }
                            rho[slot][n] += Complex64::new(re, im);
                            if with_moments {
                                let (mut qr, mut qi) = (0.0, 0.0);
                                for i in 0..len {
                                    let f2 = f[i] * f[i];
                                    qr += wp[i] * f2;
                                    qi += wm[i] * f2;
                                }
                                mom[slot][n][0] += qr;
                                mom[slot][n][1] += qi;
                            }
                        }
                    }
                }
                ds.into_iter()
                    .zip(rho.into_iter().zip(mom))
                    .map(|(d, (r, q))| (d, r, q))
                    .collect()
            })
            .collect();
        let mut rho = vec![Vec::new(); m];
        let mut mom = vec![Vec::new(); m];
        for (d, r, q) in results.into_iter().flatten() {
            rho[d] = r;
            mom[d] = q;
        }
        (rho, mom)
    }
}

fn active_bins(spec: &PhaseSpectrum) -> Vec<usize> {
    (0..spec.n_bin()).filter(|&i| spec.shat[[0, i]].re != 0.0).collect()
}

fn check_phases(n_phi: usize, cutoff: usize, allow_aliasing: bool) -> Result<()> {
    if n_phi < cutoff && !allow_aliasing {
        return Err(data(format!(
            "phase count insufficient for cutoff M: n_phi = {n_phi} < M = {cutoff}"
        )));
    }
    Ok(())
}

fn binned_config(cfg: &PatternConfig, bins: &BinEdges) -> PatternConfig {
    let mut c = cfg.clone();
    c.forward_floor = c.forward_floor.max(1e-3 * bins.width());
    c
}

fn per_sample_errors(rho: &[Vec<Complex64>], mom: &[Vec<[f64; 2]>], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let nf = n as f64;
    let err = |second: f64, first: f64| {
        if n < 2 {
            0.0
        } else {
            let s2 = nf / (nf - 1.0) * (second - first * first).max(0.0);
            (s2 / nf).sqrt()
        }
    };
    let er = rho
        .iter()
        .zip(mom)
        .map(|(r, q)| r.iter().zip(q).map(|(v, q)| err(q[0], v.re)).collect())
        .collect();
    let ei = rho
        .iter()
        .zip(mom)
        .map(|(r, q)| r.iter().zip(q).map(|(v, q)| err(q[1], v.im)).collect())
        .collect();
    (er, ei)
}

/// `ρ_{n,n+d} = Σ_i Ŝ_{d,i} f_{n,n+d}(x_i)` with per-sample errors; requires `n_φ ≥ M`.
pub fn estimate_binned(spec: &PhaseSpectrum, cfg: &PatternConfig) -> Result<DensityMatrixEstimate> {
    estimate_binned_with(spec, cfg, false)
}

/// As [`estimate_binned`]; with `allow_aliasing` the frequency `d` is read modulo `n_φ`.
pub fn estimate_binned_with(
    spec: &PhaseSpectrum,
    cfg: &PatternConfig,
    allow_aliasing: bool,
) -> Result<DensityMatrixEstimate> {
    match cfg.precision {
        Precision::Double => binned_in::<f64>(spec, cfg, allow_aliasing),
        Precision::Single => binned_in::<f32>(spec, cfg, allow_aliasing),
    }
}

fn binned_in<F: Real>(spec: &PhaseSpectrum, cfg: &PatternConfig, allow_aliasing: bool) -> Result<DensityMatrixEstimate> {
    cfg.validate()?;
    check_phases(spec.n_phi(), cfg.cutoff, allow_aliasing)?;
    let cfg = binned_config(cfg, &spec.bins);
    let kernel = PatternKernel::<F>::new(&cfg)?;
    let patterns = BinPatterns::build(&kernel, spec.bin_centers(), &active_bins(spec))?;
    let (rho, mom) = patterns.accumulate(spec, true);
    let (err_re, err_im) = per_sample_errors(&rho, &mom, spec.n_samples);
    DensityMatrixEstimate::from_diagonals(
        Diagonals { rho, err_re, err_im },
        EstimateMeta {
            estimator: EstimatorKind::Binned,
            n_samples: spec.n_samples,
            n_bin: Some(spec.n_bin()),
            beta: cfg.beta,
            n_blocks: None,
            precision: cfg.precision,
        },
    )
}

// ---------------------------------------------------------------------------
// unbinned estimator

/// Running means and squared deviations of Re F and Im F per element.
#[derive(Clone, Debug)]
struct Welford {
    n: usize,
    mean: Vec<[f64; 2]>,
    m2: Vec<[f64; 2]>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![[0.0; 2]; len],
            m2: vec![[0.0; 2]; len],
        }
    }

    #[inline]
    fn push(&mut self, k: usize, re: f64, im: f64, inv_n: f64) {
        let mean = &mut self.mean[k];
        let m2 = &mut self.m2[k];
        let dr = re - mean[0];
        mean[0] += dr * inv_n;
        m2[0] += dr * (re - mean[0]);
        let di = im - mean[1];
        mean[1] += di * inv_n;
        m2[1] += di * (im - mean[1]);
    }

    fn merge(&mut self, o: &Welford) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = o.clone();
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            for p in 0..2 {
                let delta = o.mean[k][p] - self.mean[k][p];
                self.mean[k][p] += delta * (nb / n);
                self.m2[k][p] += o.m2[k][p] + delta * delta * (na * nb / n);
            }
        }
        self.n += o.n;
    }
}

fn offsets(m: usize) -> Vec<usize> {
    let mut off = Vec::with_capacity(m + 1);
    let mut acc = 0;
    for d in 0..=m {
        off.push(acc);
        if d < m {
            acc += m - d;
        }
    }
    off
}

fn unbinned_group<F: Real>(kernel: &PatternKernel<F>, samples: &[QuadratureSample], off: &[usize]) -> Result<Welford> {
    let m = kernel.config().cutoff;
    let mut w = Welford::new(off[m]);
    let mut row = vec![F::zero(); m];
    for s in samples {
        let ws = kernel.workspace(s.value)?;
        w.n += 1;
        let inv_n = 1.0 / w.n as f64;
        for d in 0..m {
            let ph = Complex64::from_polar(1.0, -(d as f64) * s.phase);
            let r = &mut row[..m - d];
            ws.pattern_row_into(d, r)?;
            for (n, f) in r.iter().enumerate() {
                let f = f.f64();
                w.push(off[d] + n, f * ph.re, f * ph.im, inv_n);
            }
        }
    }
    Ok(w)
}

fn unbinned_sums<F: Real>(kernel: &PatternKernel<F>, samples: &[QuadratureSample]) -> Result<Welford> {
    let m = kernel.config().cutoff;
    let off = offsets(m);
    let mut total = Welford::new(off[m]);
    let batch = GROUP * rayon::current_num_threads().max(1) * 4;
    for sup in samples.chunks(batch) {
        let parts = sup
            .par_chunks(GROUP)
            .map(|g| unbinned_group(kernel, g, &off))
            .collect::<Result<Vec<_>>>()?;
        for p in &parts {
            total.merge(p);
        }
    }
    Ok(total)
}

fn welford_diagonals(w: &Welford, m: usize, with_errors: bool) -> Diagonals {
    let off = offsets(m);
    let mut diag = Diagonals::zeros(m);
    let nf = w.n as f64;
    for d in 0..m {
        for n in 0..m - d {
            let k = off[d] + n;
            diag.rho[d][n] = Complex64::new(w.mean[k][0], w.mean[k][1]);
            if with_errors && w.n >= 2 {
                diag.err_re[d][n] = (w.m2[k][0].max(0.0) / (nf - 1.0) / nf).sqrt();
                diag.err_im[d][n] = (w.m2[k][1].max(0.0) / (nf - 1.0) / nf).sqrt();
            }
        }
    }
    diag
}

/// Monte Carlo average `ρ_{n,m} = (1/N) Σ_k e^{-i(m-n)φ_k} f_{n,m}(x_k)` with errors
/// from the unbiased sample variances of Re F and Im F. With a single sample the
/// point estimate is returned and the errors are zero.
pub fn estimate_unbinned(ds: &QuadratureDataset, cfg: &PatternConfig) -> Result<DensityMatrixEstimate> {
    match cfg.precision {
        Precision::Double => unbinned_in::<f64>(ds.samples(), cfg),
        Precision::Single => unbinned_in::<f32>(ds.samples(), cfg),
    }
}

fn unbinned_in<F: Real>(samples: &[QuadratureSample], cfg: &PatternConfig) -> Result<DensityMatrixEstimate> {
    if samples.is_empty() {
        return Err(data("the unbinned estimator needs at least one sample"));
    }
    let kernel = PatternKernel::<F>::new(cfg)?;
    let w = unbinned_sums(&kernel, samples)?;
    DensityMatrixEstimate::from_diagonals(
        welford_diagonals(&w, cfg.cutoff, true),
        EstimateMeta {
            estimator: EstimatorKind::Unbinned,
            n_samples: samples.len(),
            n_bin: None,
            beta: cfg.beta,
            n_blocks: None,
            precision: cfg.precision,
        },
    )
}

// ---------------------------------------------------------------------------
// blocks

fn check_blocks(ds: &QuadratureDataset) -> Result<()> {
    if ds.n_blocks() < 2 {
        return Err(data("block statistics need at least two blocks"));
    }
    let sizes = ds.block_sizes();
    if sizes.iter().any(|&s| s != sizes[0]) {
        return Err(data(format!("blocks have unequal sizes {sizes:?}")));
    }
    Ok(())
}

fn block_diagonals(blocks: &[Vec<Vec<Complex64>>], m: usize) -> Diagonals {
    let off = offsets(m);
    let mut w = Welford::new(off[m]);
    for b in blocks {
        w.n += 1;
        let inv = 1.0 / w.n as f64;
        for d in 0..m {
            for n in 0..m - d {
                w.push(off[d] + n, b[d][n].re, b[d][n].im, inv);
            }
        }
    }
    welford_diagonals(&w, m, true)
}

/// Binned estimate per block on shared bins; mean and standard error over blocks.
pub fn block_statistics_binned(
    ds: &QuadratureDataset,
    n_bin: usize,
    cfg: &PatternConfig,
    allow_aliasing: bool,
) -> Result<DensityMatrixEstimate> {
    match cfg.precision {
        Precision::Double => blocks_binned_in::<f64>(ds, n_bin, cfg, allow_aliasing),
        Precision::Single => blocks_binned_in::<f32>(ds, n_bin, cfg, allow_aliasing),
    }
}

fn blocks_binned_in<F: Real>(
    ds: &QuadratureDataset,
    n_bin: usize,
    cfg: &PatternConfig,
    allow_aliasing: bool,
) -> Result<DensityMatrixEstimate> {
    cfg.validate()?;
    check_blocks(ds)?;
    check_phases(ds.n_phi(), cfg.cutoff, allow_aliasing)?;
    let bins = BinEdges::symmetric(ds.max_abs_value(), n_bin)?;
    let cfg = binned_config(cfg, &bins);
    let kernel = PatternKernel::<F>::new(&cfg)?;
    let active = {
        let all = bin_with_edges(ds, None, &bins)?;
        let used: Vec<usize> = (0..bins.n_bin())
            .filter(|&i| all.freq.column(i).iter().any(|&v| v != 0.0))
            .collect();
        used
    };
    let patterns = BinPatterns::build(&kernel, bins.centers(), &active)?;
    let mut per_block = Vec::with_capacity(ds.n_blocks());
    for b in 0..ds.n_blocks() {
        let spec = phase_dft(&bin_with_edges(ds, Some(b), &bins)?);
        let (rho, _) = patterns.accumulate(&spec, false);
        per_block.push(rho);
    }
    DensityMatrixEstimate::from_diagonals(
        block_diagonals(&per_block, cfg.cutoff),
        EstimateMeta {
            estimator: EstimatorKind::Binned,
            n_samples: ds.len(),
            n_bin: Some(n_bin),
            beta: cfg.beta,
            n_blocks: Some(ds.n_blocks()),
            precision: cfg.precision,
        },
    )
}

/// Unbinned estimate per block; mean and standard error over blocks.
pub fn block_statistics_unbinned(ds: &QuadratureDataset, cfg: &PatternConfig) -> Result<DensityMatrixEstimate> {
    match cfg.precision {
        Precision::Double => blocks_unbinned_in::<f64>(ds, cfg),
        Precision::Single => blocks_unbinned_in::<f32>(ds, cfg),
    }
}

fn blocks_unbinned_in<F: Real>(ds: &QuadratureDataset, cfg: &PatternConfig) -> Result<DensityMatrixEstimate> {
    check_blocks(ds)?;
    let kernel = PatternKernel::<F>::new(cfg)?;
    let m = cfg.cutoff;
    let off = offsets(m);
    let mut per_block = Vec::with_capacity(ds.n_blocks());
    for b in 0..ds.n_blocks() {
        let samples: Vec<QuadratureSample> = ds.block(b).copied().collect();
        let w = unbinned_sums(&kernel, &samples)?;
        per_block.push(
            (0..m)
                .map(|d| {
                    (0..m - d)
                        .map(|n| Complex64::new(w.mean[off[d] + n][0], w.mean[off[d] + n][1]))
                        .collect()
                })
                .collect::<Vec<Vec<Complex64>>>(),
        );
    }
    if per_block.is_empty() {
        return Err(invalid("no blocks"));
    }
    DensityMatrixEstimate::from_diagonals(
        block_diagonals(&per_block, m),
        EstimateMeta {
            estimator: EstimatorKind::Unbinned,
            n_samples: ds.len(),
            n_bin: None,
            beta: cfg.beta,
            n_blocks: Some(ds.n_blocks()),
            precision: cfg.precision,
        },
    )
}

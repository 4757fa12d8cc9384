//! Synthetic homodyne data from pure states.

use crate::error::{data, invalid, Result};
use crate::reconstruct::{
    block_statistics, check_normalization, reconstruct, DensityMatrixEstimate, Normalization,
    QuadratureDataset, QuadratureSample, ReconConfig,
};
use ndarray::{Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Generator used by [`sample`]; one stream per phase index.
pub const RNG_NAME: &str = "chacha8 (rand_chacha 0.3), stream = phase index";

const DEFICIT_ERROR: f64 = 1e-2;
const DEFICIT_WARN: f64 = 1e-6;
const MIN_ROW_MASS: f64 = 0.999;

/// Fock-basis coefficients `c_n`, `n < M`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    coeffs: Vec<Complex64>,
    deficit: f64,
}

impl FockVector {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("state needs at least one coefficient"));
        }
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(invalid("state coefficients must be finite"));
        }
        let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        Ok(FockVector {
            coeffs,
            deficit: 1.0 - norm,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `1 - Σ|c_n|²`
    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    /// `ρ = |ψ⟩⟨ψ|` truncated (or zero-padded) to `m × m`.
    pub fn density_matrix(&self, m: usize) -> Array2<Complex64> {
        let c = |n: usize| self.coeffs.get(n).copied().unwrap_or_default();
        Array2::from_shape_fn((m, m), |(n, k)| c(n) * c(k).conj())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StateSpec {
    /// Equal-weight superposition of number states.
    FockSuperposition { levels: Vec<usize> },
    Coherent { re: f64, im: f64 },
    /// `(|α⟩ + |-α⟩)` normalized.
    Cat { re: f64, im: f64 },
}

fn coherent_coeffs(alpha: Complex64, m: usize) -> Vec<Complex64> {
    let r = alpha.norm();
    let theta = alpha.arg();
    let mut ln_fact = 0.0;
    (0..m)
        .map(|n| {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            if r == 0.0 {
                return if n == 0 { Complex64::new(1.0, 0.0) } else { Complex64::default() };
            }
            let ln_mag = -0.5 * r * r + n as f64 * r.ln() - 0.5 * ln_fact;
            Complex64::from_polar(ln_mag.exp(), n as f64 * theta)
        })
        .collect()
}

pub fn make_state(spec: &StateSpec, cutoff: usize) -> Result<FockVector> {
    if cutoff == 0 {
        return Err(invalid("cutoff M must be at least 1"));
    }
    let coeffs = match spec {
        StateSpec::FockSuperposition { levels } => {
            if levels.is_empty() {
                return Err(invalid("Fock superposition needs at least one level"));
            }
            let mut sorted = levels.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != levels.len() {
                return Err(invalid("Fock levels must be distinct"));
            }
            if let Some(&n) = sorted.iter().find(|&&n| n >= cutoff) {
                return Err(invalid(format!("Fock level {n} is not below the cutoff {cutoff}")));
            }
            let w = 1.0 / (levels.len() as f64).sqrt();
            let mut c = vec![Complex64::default(); cutoff];
            for &n in levels {
                c[n] = Complex64::new(w, 0.0);
            }
            c
        }
        StateSpec::Coherent { re, im } => coherent_coeffs(Complex64::new(*re, *im), cutoff),
        StateSpec::Cat { re, im } => {
            let alpha = Complex64::new(*re, *im);
            let norm = (2.0 * (1.0 + (-2.0 * alpha.norm_sqr()).exp())).sqrt();
            coherent_coeffs(alpha, cutoff)
                .into_iter()
                .enumerate()
                .map(|(n, c)| if n % 2 == 0 { 2.0 * c / norm } else { Complex64::default() })
                .collect()
        }
    };
    let state = FockVector::new(coeffs)?;
    if state.deficit > DEFICIT_ERROR {
        return Err(invalid(format!(
            "cutoff {cutoff} truncates the state: norm deficit {:.3e}",
            state.deficit
        )));
    }
    if state.deficit > DEFICIT_WARN {
        log::warn!("cutoff {cutoff} leaves a norm deficit of {:.3e}", state.deficit);
    }
    Ok(state)
}

/// `ψ_n(x)` for `n < m`, oscillator eigenfunctions with `ψ_0 = (2/π)^{1/4} e^{-x²}`.
pub fn oscillator_functions(x: f64, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    if m == 0 {
        return out;
    }
    // running values carry a common factor e^{shift}
    let mut shift = 0.25 * (2.0 / PI).ln() - x * x;
    let (mut prev, mut cur) = (0.0, 1.0);
    out[0] = shift.exp();
    for n in 1..m {
        let next = (2.0 * x * cur - ((n - 1) as f64).sqrt() * prev) / (n as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > 1e150 {
            prev *= 1e-150;
            cur *= 1e-150;
            shift += 150.0 * 10f64.ln();
        }
        out[n] = cur * shift.exp();
    }
    out
}

/// Probability densities `p_φ(x)` on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalTable {
    x: Vec<f64>,
    /// stored `n_x × n_φ`
    p: Array2<f64>,
}

fn trapezoid(x: &[f64], y: impl Iterator<Item = f64>) -> f64 {
    let y: Vec<f64> = y.collect();
    (1..x.len()).map(|k| 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1])).sum()
}

impl MarginalTable {
    /// Table from arbitrary non-negative rows; each row is renormalized.
    pub fn new(x: Vec<f64>, mut p: Array2<f64>) -> Result<Self> {
        if x.len() < 2 || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("x grid needs at least two strictly increasing points"));
        }
        if p.ncols() != x.len() || p.nrows() == 0 {
            return Err(invalid("density table shape does not match the grid"));
        }
        if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(data("densities must be finite and non-negative"));
        }
        for mut row in p.rows_mut() {
            let mass = trapezoid(&x, row.iter().copied());
            if !(mass > 0.0) {
                return Err(data("density row has zero mass"));
            }
            row.mapv_inplace(|v| v / mass);
        }
        let p = p.t().as_standard_layout().into_owned();
        Ok(MarginalTable { x, p })
    }

    fn from_columns(x: Vec<f64>, mut p: Array2<f64>) -> Result<Self> {
        for mut col in p.columns_mut() {
            let mass = trapezoid(&x, col.iter().copied());
            if !(mass > 0.0) {
                return Err(data("density row has zero mass"));
            }
            col.mapv_inplace(|v| v / mass);
        }
        Ok(MarginalTable { x, p })
    }

    pub fn n_phi(&self) -> usize {
        self.p.ncols()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// `n_φ × n_x` view.
    pub fn densities(&self) -> ArrayView2<'_, f64> {
        self.p.t()
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.p.column(j)
    }
}

/// Symmetric grid `[-X, X]` with `X = √(M + 1/2) + 6` and `max(2049, 64M + 1)` points.
pub fn default_x_grid(cutoff: usize) -> Vec<f64> {
    let points = (64 * cutoff + 1).max(2049);
    x_grid(cutoff, points)
}

pub fn x_grid(cutoff: usize, points: usize) -> Vec<f64> {
    let xmax = (cutoff as f64 + 0.5).sqrt() + 6.0;
    let points = points.max(2);
    (0..points)
        .map(|k| -xmax + 2.0 * xmax * k as f64 / (points - 1) as f64)
        .collect()
}

/// `p_φ(x) = |Σ_n c_n e^{-inφ} ψ_n(x)|²` at `φ_j = 2πj/n_φ`, rows renormalized.
pub fn marginals(state: &FockVector, n_phi: usize, x: &[f64]) -> Result<MarginalTable> {
    if n_phi == 0 {
        return Err(invalid("n_phi must be positive"));
    }
    if x.len() < 2 || x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("x grid needs at least two strictly increasing points"));
    }
    let m = state.cutoff();
    let c = state.coeffs();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_phi);
    let mut flat = vec![0.0; x.len() * n_phi];
    flat.par_chunks_mut(n_phi).zip(x.par_iter()).for_each_init(
        || vec![Complex64::default(); fft.get_inplace_scratch_len()],
        |scratch, (out, &xv)| {
            let psi = oscillator_functions(xv, m);
            let mut b = vec![Complex64::default(); n_phi];
            for n in 0..m {
                b[n % n_phi] += c[n] * psi[n];
            }
            fft.process_with_scratch(&mut b, scratch);
            for (o, a) in out.iter_mut().zip(&b) {
                *o = a.norm_sqr();
            }
        },
    );
    let p = Array2::from_shape_vec((x.len(), n_phi), flat).expect("shape matches");
    let norm = 1.0 - state.deficit();
    for (j, col) in p.columns().into_iter().enumerate() {
        let mass = trapezoid(x, col.iter().copied()) / norm;
        if mass < MIN_ROW_MASS {
            return Err(data(format!(
                "x grid [{}, {}] is too narrow: phase row {j} holds only {mass:.6} of the probability",
                x[0],
                x[x.len() - 1]
            )));
        }
    }
    MarginalTable::from_columns(x.to_vec(), p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    /// samples per phase and block
    pub nsamples: usize,
    pub nblks: usize,
    pub n_phi: usize,
    pub seed: u64,
    /// sampler grid size; `None` uses [`default_x_grid`]
    pub x_points: Option<usize>,
}

impl SimulationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.nsamples == 0 || self.nblks == 0 || self.n_phi == 0 {
            return Err(invalid("nsamples, nblks and n_phi must be positive"));
        }
        if self.x_points.is_some_and(|p| p < 2) {
            return Err(invalid("x_points must be at least 2"));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.nsamples * self.nblks * self.n_phi
    }

    pub fn grid(&self, cutoff: usize) -> Vec<f64> {
        match self.x_points {
            Some(p) => x_grid(cutoff, p),
            None => default_x_grid(cutoff),
        }
    }
}

/// Inverse CDF of a piecewise-linear density.
struct RowSampler<'a> {
    x: &'a [f64],
    p: &'a [f64],
    cdf: Vec<f64>,
}

impl<'a> RowSampler<'a> {
    fn new(x: &'a [f64], p: &'a [f64]) -> Self {
        let mut cdf = Vec::with_capacity(x.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for k in 1..x.len() {
            acc += 0.5 * (x[k] - x[k - 1]) * (p[k] + p[k - 1]);
            cdf.push(acc);
        }
        RowSampler { x, p, cdf }
    }

    fn draw(&self, u: f64) -> f64 {
        let total = self.cdf[self.cdf.len() - 1];
        let target = u * total;
        let k = self.cdf.partition_point(|&c| c <= target).clamp(1, self.cdf.len() - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let r = (target - self.cdf[k]).max(0.0);
        let (p0, p1) = (self.p[k], self.p[k + 1]);
        let s = (p1 - p0) / h;
        let disc = (p0 * p0 + 2.0 * s * r).max(0.0);
        let denom = p0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.x[k] + t.clamp(0.0, h)
    }
}

/// Draws `nsamples · nblks` values per phase row; samples are ordered by block,
/// then phase, then draw.
pub fn sample(table: &MarginalTable, plan: &SimulationPlan) -> Result<QuadratureDataset> {
    plan.validate()?;
    if table.n_phi() != plan.n_phi {
        return Err(invalid(format!(
            "table has {} phases, plan asks for {}",
            table.n_phi(),
            plan.n_phi
        )));
    }
    let per_phase = plan.nsamples * plan.nblks;
    let draws: Vec<Vec<f64>> = (0..plan.n_phi)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(j as u64);
            let row = table.row(j).to_vec();
            let sampler = RowSampler::new(table.x(), &row);
            (0..per_phase).map(|_| sampler.draw(rng.gen::<f64>())).collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(plan.total_samples());
    for b in 0..plan.nblks {
        for (j, row) in draws.iter().enumerate() {
            let phase = 2.0 * PI * j as f64 / plan.n_phi as f64;
            for &value in &row[b * plan.nsamples..(b + 1) * plan.nsamples] {
                samples.push(QuadratureSample {
                    phase_index: j as u32,
                    phase,
                    block: b as u32,
                    value,
                });
            }
        }
    }
    QuadratureDataset::new(samples, plan.n_phi, plan.nblks, crate::reconstruct::PhaseLayout::FullCircle)
}

/// Marginals and sampling in one step.
pub fn simulate(state: &FockVector, plan: &SimulationPlan) -> Result<QuadratureDataset> {
    plan.validate()?;
    let table = marginals(state, plan.n_phi, &plan.grid(state.cutoff()))?;
    sample(&table, plan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// max over elements of `|Re(ρ_est - ρ_true)| / err_re`
    pub max_z_re: f64,
    /// same for the imaginary parts (off-diagonal only)
    pub max_z_im: f64,
    pub max_abs_deviation: f64,
    pub normalization: Normalization,
    pub n_samples: usize,
    pub beta: f64,
    pub rng: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub estimate: DensityMatrixEstimate,
    pub truth: Array2<Complex64>,
    pub diagnostics: Diagnostics,
}

/// Deviation of an estimate from the truth in units of its standard errors.
pub fn compare(est: &DensityMatrixEstimate, truth: &Array2<Complex64>) -> (f64, f64, f64) {
    let (mut zr, mut zi, mut dev) = (0.0f64, 0.0f64, 0.0f64);
    for ((idx, e), t) in est.rho.indexed_iter().zip(truth.iter()) {
        let diff = e - t;
        dev = dev.max(diff.norm());
        let z = |d: f64, err: f64| {
            if err > 0.0 {
                d.abs() / err
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        zr = zr.max(z(diff.re, est.err_re[idx]));
        if idx.0 != idx.1 {
            zi = zi.max(z(diff.im, est.err_im[idx]));
        }
    }
    (zr, zi, dev)
}

/// state → marginals → samples → estimate (block errors when `nblks ≥ 2`) → diagnostics.
pub fn run_experiment(state: &FockVector, plan: &SimulationPlan, cfg: &ReconConfig) -> Result<ExperimentResult> {
    let ds = simulate(state, plan)?;
    let estimate = if plan.nblks >= 2 {
        block_statistics(&ds, cfg)?
    } else {
        reconstruct(&ds, cfg)?
    };
    let truth = state.density_matrix(cfg.cutoff);
    let (max_z_re, max_z_im, max_abs_deviation) = compare(&estimate, &truth);
    let normalization = check_normalization(&estimate);
    let diagnostics = Diagnostics {
        max_z_re,
        max_z_im,
        max_abs_deviation,
        normalization,
        n_samples: ds.len(),
        beta: estimate.meta.beta,
        rng: RNG_NAME.to_string(),
    };
    Ok(ExperimentResult {
        estimate,
        truth,
        diagnostics,
    })
}

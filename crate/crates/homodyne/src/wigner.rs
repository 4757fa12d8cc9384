//! Wigner function on a polar grid from the diagonals of a density matrix,
//! with three ways to build the Laguerre coefficients `λ_{n,d}(x)`.

use crate::error::{invalid, Error, Result};
use crate::patterns::{Precision, RangeMode};
use crate::real::{ldexp, Real, Scaled, TwoFold};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const LAMBDA0: f64 = 4.0 / PI;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMethod {
    Direct,
    #[default]
    Recurrence1,
    Recurrence2,
}

impl std::str::FromStr for LambdaMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(LambdaMethod::Direct),
            "1" | "recurrence1" => Ok(LambdaMethod::Recurrence1),
            "2" | "recurrence2" => Ok(LambdaMethod::Recurrence2),
            _ => Err(invalid(format!(
                "unknown lambda method {s:?} (expected 1, 2 or direct)"
            ))),
        }
    }
}

/// `ρ̃_{n,d} = (-1)^n ρ_{n,n+d}` for `d = 0..M-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalDensityMatrix {
    cutoff: usize,
    diagonals: Vec<Vec<Complex64>>,
}

impl DiagonalDensityMatrix {
    /// Reads the upper triangle; the lower triangle is implied by Hermiticity.
    pub fn from_matrix(rho: &Array2<Complex64>) -> Result<Self> {
        let (r, c) = rho.dim();
        if r != c || r == 0 {
            return Err(invalid(format!("density matrix must be square and non-empty, got {r}x{c}")));
        }
        let diagonals = (0..r)
            .map(|d| {
                (0..r - d)
                    .map(|n| {
                        let v = rho[[n, n + d]];
                        if n % 2 == 0 {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(DiagonalDensityMatrix { cutoff: r, diagonals })
    }

    pub fn to_matrix(&self) -> Array2<Complex64> {
        let m = self.cutoff;
        let mut rho = Array2::zeros((m, m));
        for (d, diag) in self.diagonals.iter().enumerate() {
            for (n, &v) in diag.iter().enumerate() {
                let v = if n % 2 == 0 { v } else { -v };
                rho[[n, n + d]] = v;
                rho[[n + d, n]] = v.conj();
            }
        }
        rho
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn diagonal(&self, d: usize) -> &[Complex64] {
        &self.diagonals[d]
    }
}

/// Triangular table `λ_{n,d}`, `n ≤ M-d-1`, stored by diagonal `d`.
#[derive(Clone, Debug)]
pub struct LambdaTable<F> {
    x: f64,
    cutoff: usize,
    method: LambdaMethod,
    cols: Vec<Vec<F>>,
}

impl<F: Real> LambdaTable<F> {
    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn method(&self) -> LambdaMethod {
        self.method
    }

    pub fn get(&self, n: usize, d: usize) -> F {
        self.cols[d][n]
    }

    pub fn column(&self, d: usize) -> &[F] {
        &self.cols[d]
    }

    pub fn is_finite(&self) -> bool {
        self.cols.iter().flatten().all(|v| v.is_finite())
    }

    pub fn len(&self) -> usize {
        self.cutoff * (self.cutoff + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.cutoff == 0
    }
}

fn check_args(x: f64, cutoff: usize) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(invalid(format!("lambda argument must be finite and >= 0, got {x}")));
    }
    if cutoff == 0 {
        return Err(invalid("cutoff M must be at least 1"));
    }
    Ok(())
}

fn z_scaled<F: Real>(x: f64) -> Scaled<F> {
    Scaled::from_ln(F::one(), LAMBDA0.ln() - 0.5 * x)
}

/// Largest x at which some entry of an M-table can still be of order one.
fn outer_turning_point(cutoff: usize) -> f64 {
    let k = 4.0 * cutoff as f64;
    k + 2.0 + 4.0 * k.cbrt()
}

/// Closed form with log-factorials; reference for the recursions.
pub fn lambda_direct(x: f64, cutoff: usize) -> Result<LambdaTable<f64>> {
    check_args(x, cutoff)?;
    let mut ln_fact = vec![0.0f64; 2 * cutoff + 1];
    for k in 1..ln_fact.len() {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let mut cols = Vec::with_capacity(cutoff);
    for d in 0..cutoff {
        let len = cutoff - d;
        let mut col = vec![0.0; len];
        if d > 0 && x == 0.0 {
            cols.push(col);
            continue;
        }
        let df = d as f64;
        let x_pow = if d == 0 { 0.0 } else { 0.5 * df * x.ln() };
        let mut l_prev = 0.0f64;
        let mut l = 1.0f64;
        for (n, c) in col.iter_mut().enumerate() {
            if n == 1 {
                l_prev = l;
                l = 1.0 + df - x;
            } else if n >= 2 {
                let nf = n as f64;
                let next = ((2.0 * nf - 1.0 + df - x) * l - (nf - 1.0 + df) * l_prev) / nf;
                l_prev = l;
                l = next;
            }
            if !l.is_finite() {
                return Err(Error::Overflow {
                    sequence: "direct Laguerre polynomial",
                    index: n,
                    hint: "the direct formula is meant for M <= 64".into(),
                });
            }
            if l == 0.0 {
                continue;
            }
            let ln_pref = LAMBDA0.ln() - 0.5 * x + x_pow + 0.5 * (ln_fact[n] - ln_fact[n + d]);
            let v = l.signum() * (ln_pref + l.abs().ln()).exp();
            if !v.is_finite() {
                return Err(Error::Overflow {
                    sequence: "direct lambda",
                    index: n,
                    hint: "the direct formula is meant for M <= 64".into(),
                });
            }
            *c = v;
        }
        cols.push(col);
    }
    Ok(LambdaTable {
        x,
        cutoff,
        method: LambdaMethod::Direct,
        cols,
    })
}

fn plain_seed<F: Real>(x: f64, cutoff: usize) -> Result<F> {
    let z = F::of(LAMBDA0 * (-0.5 * x).exp());
    if z < F::min_positive_value() && x < outer_turning_point(cutoff) {
        return Err(Error::Underflow {
            sequence: "lambda table",
            index: 0,
            hint: format!(
                "z(x) = (4/pi) exp(-x/2) underflows in {} precision at x = {x}; use extended range",
                F::NAME
            ),
        });
    }
    Ok(z)
}

/// `|λ| ≤ 4/π` up to a precision-dependent rounding allowance.
fn lambda_bound<F: Real>() -> f64 {
    LAMBDA0 * (1.0 + (1e5 * F::epsilon().f64()).max(1e-6))
}

fn check_column<F: Real>(col: &[F], x: f64, d: usize, plain: bool, sequence: &'static str) -> Result<()> {
    let bound = lambda_bound::<F>();
    for (n, v) in col.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { sequence, index: n });
        }
        if plain && *v != F::zero() && v.abs() < F::min_positive_value() {
            return Err(Error::Underflow {
                sequence,
                index: n,
                hint: format!(
                    "lambda entry (n = {n}, d = {d}) is subnormal in {} precision at x = {x}; use extended range",
                    F::NAME
                ),
            });
        }
        if v.abs().f64() > bound {
            return Err(Error::Numerical(format!(
                "{sequence} lost accuracy at x = {x}, n = {n}, d = {d} (|lambda| = {} exceeds 4/pi)",
                v.abs()
            )));
        }
    }
    Ok(())
}

/// Method 1: seeds along the first two rows, then the three-term recurrence in n.
pub fn lambda_method1<F: Real>(x: f64, cutoff: usize, range: RangeMode) -> Result<LambdaTable<F>> {
    check_args(x, cutoff)?;
    let m = cutoff;
    let mut cols: Vec<Vec<F>> = Vec::with_capacity(m);
    match range {
        RangeMode::Extended => {
            let mut top = z_scaled::<F>(x);
            let mut col = Vec::with_capacity(m);
            for d in 0..m {
                if d > 0 {
                    top = top.scale(F::of((x / d as f64).sqrt()));
                }
                let df = d as f64;
                col.clear();
                col.push(top);
                if m - d >= 2 {
                    col.push(top.scale(F::of((1.0 + df - x) / (df + 1.0).sqrt())));
                }
                for n in 2..m - d {
                    let nf = n as f64;
                    let a = (2.0 * nf + df - x - 1.0) / (nf * (nf + df)).sqrt();
                    let b = ((nf - 1.0) * (nf + df - 1.0) / (nf * (nf + df))).sqrt();
                    let next = col[n - 1].scale(F::of(a)).sub(col[n - 2].scale(F::of(b)));
                    col.push(next);
                }
                let out: Vec<F> = col.iter().map(|s| s.to_float()).collect();
                check_column(&out, x, d, false, "lambda method 1")?;
                cols.push(out);
            }
        }
        RangeMode::Plain => {
            let mut top = plain_seed::<F>(x, m)?;
            for d in 0..m {
                let df = d as f64;
                if d > 0 {
                    top = top * F::of((x / df).sqrt());
                    if x > 0.0 && x < outer_turning_point(m) && top.abs() < F::min_positive_value() {
                        return Err(Error::Underflow {
                            sequence: "lambda method 1",
                            index: 0,
                            hint: format!(
                                "seed lambda_(0,{d}) underflows in {} precision at x = {x}; use extended range",
                                F::NAME
                            ),
                        });
                    }
                }
                let mut col = Vec::with_capacity(m - d);
                col.push(top);
                if m - d >= 2 {
                    col.push(top * F::of((1.0 + df - x) / (df + 1.0).sqrt()));
                }
                for n in 2..m - d {
                    let nf = n as f64;
                    let a = F::of((2.0 * nf + df - x - 1.0) / (nf * (nf + df)).sqrt());
                    let b = F::of(((nf - 1.0) * (nf + df - 1.0) / (nf * (nf + df))).sqrt());
                    col.push(a * col[n - 1] - b * col[n - 2]);
                }
                check_column(&col, x, d, true, "lambda method 1")?;
                cols.push(col);
            }
        }
    }
    Ok(LambdaTable {
        x,
        cutoff,
        method: LambdaMethod::Recurrence1,
        cols,
    })
}

/// Double-word mantissa with a binary exponent.
#[derive(Clone, Copy, Debug)]
struct Wide<F> {
    m: TwoFold<F>,
    e: i32,
}

impl<F: Real> Wide<F> {
    fn norm(mut self) -> Self {
        let hi = crate::real::up::<F>();
        let lo = crate::real::down::<F>();
        if self.m.hi == F::zero() || !self.m.hi.is_finite() {
            return self;
        }
        while self.m.hi.abs() > hi {
            self.m = self.m.mul_f(lo);
            self.e += F::RESCALE_BITS;
        }
        while self.m.hi.abs() < lo {
            self.m = self.m.mul_f(hi);
            self.e -= F::RESCALE_BITS;
        }
        self
    }

    fn scale(self, k: TwoFold<F>) -> Self {
        Wide { m: self.m.mul(k), e: self.e }.norm()
    }

    fn add(self, o: Self) -> Self {
        if o.m.hi == F::zero() {
            return self;
        }
        if self.m.hi == F::zero() {
            return o;
        }
        let (a, b) = if self.e >= o.e { (self, o) } else { (o, self) };
        let shift = b.e - a.e;
        let bm = TwoFold {
            hi: ldexp(b.m.hi, shift),
            lo: ldexp(b.m.lo, shift),
        };
        Wide { m: a.m.add(bm), e: a.e }.norm()
    }
}

/// Method 2: the summation identity `L_n^d = L_{n-1}^d + L_n^{d-1}`.
///
/// The two-dimensional recursion amplifies rounding errors along both indices
/// wherever `x` lies between the turning points, so it runs in double-word
/// arithmetic and refuses tables whose entries exceed the bound `|λ| ≤ 4/π`.
pub fn lambda_method2<F: Real>(x: f64, cutoff: usize, range: RangeMode) -> Result<LambdaTable<F>> {
    check_args(x, cutoff)?;
    let m = cutoff;
    let xf = F::of(x);
    let tf = |v: f64| TwoFold::new(F::of(v));
    let sqrt_x = TwoFold::new(xf).sqrt();
    let sqrt_int: Vec<TwoFold<F>> = (0..=m).map(|k| tf(k as f64).sqrt()).collect();
    let (z, ext) = match range {
        RangeMode::Extended => (z_scaled::<F>(x), true),
        RangeMode::Plain => (Scaled { mant: plain_seed::<F>(x, m)?, exp: 0 }, false),
    };
    let one = Wide {
        m: TwoFold::new(F::one()),
        e: 0,
    };
    // μ = λ / z
    let mut prev: Vec<Wide<F>> = Vec::with_capacity(m);
    let mut cur: Vec<Wide<F>> = Vec::with_capacity(m);
    let mut cols = Vec::with_capacity(m);
    let bound = lambda_bound::<F>();
    for d in 0..m {
        cur.clear();
        if d == 0 {
            cur.push(one);
            if m >= 2 {
                cur.push(Wide {
                    m: tf(1.0).sub(TwoFold::new(xf)),
                    e: 0,
                });
            }
            for n in 2..m {
                let nf = n as f64;
                let a = tf(2.0 * nf - 1.0).sub(TwoFold::new(xf));
                let b = tf(-(nf - 1.0));
                let t = cur[n - 1].scale(a).add(cur[n - 2].scale(b));
                cur.push(Wide {
                    m: t.m.div(tf(nf)),
                    e: t.e,
                }
                .norm());
            }
        } else {
            let step = TwoFold::new(xf).div(tf(d as f64)).sqrt();
            cur.push(prev[0].scale(step));
            for n in 1..m - d {
                let t = cur[n - 1].scale(sqrt_int[n]).add(prev[n].scale(sqrt_x));
                let s = tf((n + d) as f64).sqrt();
                cur.push(Wide { m: t.m.div(s), e: t.e }.norm());
            }
        }
        let mut out = Vec::with_capacity(m - d);
        for (n, w) in cur.iter().enumerate() {
            if !w.m.is_finite() {
                return Err(Error::NonFinite {
                    sequence: "lambda method 2",
                    index: n,
                });
            }
            let v = if ext {
                ldexp(w.m.hi * z.mant, w.e + z.exp)
            } else {
                ldexp(w.m.hi, w.e) * z.mant
            };
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    sequence: "lambda method 2",
                    index: n,
                });
            }
            if v.abs().f64() > bound {
                return Err(Error::Numerical(format!(
                    "method 2 recursion lost accuracy at x = {x}, n = {n}, d = {d} (|lambda| = {} exceeds 4/pi); use method 1",
                    v.abs()
                )));
            }
            out.push(v);
        }
        cols.push(out);
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(LambdaTable {
        x,
        cutoff,
        method: LambdaMethod::Recurrence2,
        cols,
    })
}

pub fn lambda_table<F: Real>(
    x: f64,
    cutoff: usize,
    method: LambdaMethod,
    range: RangeMode,
) -> Result<LambdaTable<F>> {
    match method {
        LambdaMethod::Recurrence1 => lambda_method1(x, cutoff, range),
        LambdaMethod::Recurrence2 => lambda_method2(x, cutoff, range),
        LambdaMethod::Direct => {
            let t = lambda_direct(x, cutoff)?;
            Ok(LambdaTable {
                x,
                cutoff,
                method: LambdaMethod::Direct,
                cols: t
                    .cols
                    .into_iter()
                    .map(|c| c.into_iter().map(F::of).collect())
                    .collect(),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WignerOptions {
    pub method: LambdaMethod,
    pub precision: Precision,
    pub range: RangeMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    /// `w[[i, k]] = W(r_i, θ_k)`.
    pub w: Array2<f64>,
}

/// Equispaced polar grid with `r ∈ [0, √M]` and `θ_k = 2πk/n_θ`.
pub fn polar_grid(cutoff: usize, n_r: usize, n_theta: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_r < 2 || n_theta < 1 {
        return Err(invalid("polar grid needs n_r >= 2 and n_theta >= 1"));
    }
    let r_max = (cutoff as f64).sqrt();
    let r = (0..n_r).map(|i| r_max * i as f64 / (n_r - 1) as f64).collect();
    let theta = (0..n_theta)
        .map(|k| 2.0 * PI * k as f64 / n_theta as f64)
        .collect();
    Ok((r, theta))
}

pub fn wigner_polar(
    rho: &DiagonalDensityMatrix,
    r: &[f64],
    theta: &[f64],
    opts: &WignerOptions,
) -> Result<WignerGrid> {
    match opts.precision {
        Precision::Double => wigner_polar_in::<f64>(rho, r, theta, opts),
        Precision::Single => wigner_polar_in::<f32>(rho, r, theta, opts),
    }
}

fn wigner_polar_in<F: Real>(
    rho: &DiagonalDensityMatrix,
    r: &[f64],
    theta: &[f64],
    opts: &WignerOptions,
) -> Result<WignerGrid> {
    if let Some(bad) = r.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(invalid(format!("radius {bad} must be finite and >= 0")));
    }
    let m = rho.cutoff();
    let n_t = theta.len();
    let phases: Vec<Complex64> = (0..m)
        .flat_map(|d| theta.iter().map(move |&t| Complex64::from_polar(1.0, d as f64 * t)))
        .collect();
    let rows: Vec<Result<Vec<f64>>> = r
        .par_iter()
        .map(|&ri| {
            let table = lambda_table::<F>(4.0 * ri * ri, m, opts.method, opts.range)?;
            let mut t = vec![Complex64::new(0.0, 0.0); m];
            for (d, td) in t.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (l, c) in table.column(d).iter().zip(rho.diagonal(d)) {
                    acc += c * l.f64();
                }
                *td = if d == 0 { acc * 0.5 } else { acc };
            }
            let mut row = vec![0.0; n_t];
            for (k, w) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for (d, td) in t.iter().enumerate() {
                    let p = phases[d * n_t + k];
                    s += td.re * p.re - td.im * p.im;
                }
                *w = s;
            }
            Ok(row)
        })
        .collect();
    let mut w = Array2::zeros((r.len(), n_t));
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row?.into_iter().enumerate() {
            w[[i, k]] = v;
        }
    }
    Ok(WignerGrid {
        r: r.to_vec(),
        theta: theta.to_vec(),
        w,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartesianGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `w[[j, i]] = W(x_i, y_j)`.
    pub w: Array2<f64>,
}

impl WignerGrid {
    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn equispaced_theta(&self) -> Result<f64> {
        let n = self.theta.len();
        let h = 2.0 * PI / n as f64;
        let ok = self
            .theta
            .iter()
            .enumerate()
            .all(|(k, t)| (t - h * k as f64).abs() < 1e-9);
        if ok && n > 0 {
            Ok(h)
        } else {
            Err(invalid("operation needs theta_k = 2 pi k / n_theta"))
        }
    }

    /// `∫ W r dr dθ` with the trapezoid rule in r and the periodic rule in θ.
    pub fn integrate(&self) -> Result<f64> {
        let h = self.equispaced_theta()?;
        let mut total = 0.0;
        for i in 0..self.r.len().saturating_sub(1) {
            let dr = self.r[i + 1] - self.r[i];
            let f = |j: usize| self.r[j] * self.w.row(j).sum() * h;
            total += 0.5 * dr * (f(i) + f(i + 1));
        }
        Ok(total)
    }

    /// Bilinear interpolation onto an `n × n` Cartesian grid over `[-extent, extent]²`.
    /// Points beyond the largest radius are set to zero.
    pub fn to_cartesian(&self, n: usize, extent: f64) -> Result<CartesianGrid> {
        let h = self.equispaced_theta()?;
        if n < 2 || self.r.len() < 2 {
            return Err(invalid("cartesian grid needs n >= 2 and at least two radii"));
        }
        let axis: Vec<f64> = (0..n)
            .map(|i| -extent + 2.0 * extent * i as f64 / (n - 1) as f64)
            .collect();
        let nt = self.theta.len();
        let r_last = *self.r.last().unwrap();
        let mut w = Array2::zeros((n, n));
        for (j, &y) in axis.iter().enumerate() {
            for (i, &x) in axis.iter().enumerate() {
                let rr = x.hypot(y);
                if rr > r_last {
                    continue;
                }
                let ir = self.r.partition_point(|&v| v <= rr).clamp(1, self.r.len() - 1) - 1;
                let fr = ((rr - self.r[ir]) / (self.r[ir + 1] - self.r[ir])).clamp(0.0, 1.0);
                let t = y.atan2(x).rem_euclid(2.0 * PI) / h;
                let it = (t.floor() as usize) % nt;
                let ft = t - t.floor();
                let it2 = (it + 1) % nt;
                let g = |a: usize, b: usize| self.w[[a, b]];
                let lo = g(ir, it) * (1.0 - ft) + g(ir, it2) * ft;
                let hi = g(ir + 1, it) * (1.0 - ft) + g(ir + 1, it2) * ft;
                w[[j, i]] = lo * (1.0 - fr) + hi * fr;
            }
        }
        Ok(CartesianGrid {
            x: axis.clone(),
            y: axis,
            w,
        })
    }
}

//! β-scaled regular and irregular oscillator sequences and the pattern
//! functions `f_{n,m}(x)` assembled from them.
//!
//! Quadratures follow the convention `X = (a + a†)/2`, so the vacuum variance
//! is 1/4 and `ψ_0(x) = (2/π)^{1/4} e^{-x²}`.

use crate::error::{invalid, Error, Result};
use crate::real::{down, ldexp, up, Real, Scaled};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_SEED_FLOOR: usize = 16384;
pub const DEFAULT_FORWARD_FLOOR: f64 = 1e-6;
/// Largest estimated absolute error accepted for single-precision workspaces.
pub const SINGLE_PRECISION_TOLERANCE: f64 = 1e-2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    #[default]
    Double,
}

impl std::str::FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            _ => Err(invalid(format!("unknown precision {s:?} (expected single or double)"))),
        }
    }
}

/// How the recursions keep values inside the floating-point range.
///
/// `Plain` uses the scalar β alone and reports overflow or underflow as an
/// error. `Extended` additionally carries a binary exponent per stored entry,
/// so large cutoffs and wide quadrature ranges stay finite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeMode {
    #[default]
    Extended,
    Plain,
}

impl std::str::FromStr for RangeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extended" => Ok(RangeMode::Extended),
            "plain" => Ok(RangeMode::Plain),
            _ => Err(invalid(format!("unknown range mode {s:?} (expected extended or plain)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Backward,
    Forward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternConfig {
    pub cutoff: usize,
    pub beta: f64,
    pub precision: Precision,
    pub range: RangeMode,
    /// Minimum starting index of the backward recursion.
    pub seed_floor: usize,
    /// Smallest |x| accepted by the forward recursion.
    pub forward_floor: f64,
}

impl PatternConfig {
    pub fn new(cutoff: usize, beta: f64) -> Result<Self> {
        let cfg = PatternConfig {
            cutoff,
            beta,
            precision: Precision::Double,
            range: RangeMode::Extended,
            seed_floor: DEFAULT_SEED_FLOOR,
            forward_floor: DEFAULT_FORWARD_FLOOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_range(mut self, range: RangeMode) -> Self {
        self.range = range;
        self
    }

    pub fn with_seed_floor(mut self, seed_floor: usize) -> Self {
        self.seed_floor = seed_floor;
        self
    }

    pub fn with_forward_floor(mut self, floor: f64) -> Self {
        self.forward_floor = floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoff < 1 {
            return Err(invalid("cutoff M must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be positive and finite, got {}", self.beta)));
        }
        if !(self.forward_floor >= 0.0 && self.forward_floor.is_finite()) {
            return Err(invalid("forward floor must be a finite non-negative number"));
        }
        Ok(())
    }

    /// Index at which the backward recursion is seeded.
    pub fn seed_index(&self) -> usize {
        (4 * self.cutoff).max(self.seed_floor).max(self.cutoff + 3)
    }
}

/// `exp(-3 max|x|)` over the data.
pub fn choose_beta(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(invalid("cannot choose beta for an empty set of quadratures"));
    }
    let mut max = 0.0f64;
    for &x in xs {
        if !x.is_finite() {
            return Err(invalid(format!("non-finite quadrature value {x}")));
        }
        max = max.max(x.abs());
    }
    let beta = (-3.0 * max).exp();
    if beta == 0.0 {
        return Err(invalid(format!(
            "exp(-3*{max}) underflows; set beta explicitly"
        )));
    }
    Ok(beta)
}

pub fn safe_region_bound(cutoff: usize) -> f64 {
    let a = (4.0 * cutoff as f64 + 0.5).sqrt();
    a - 0.5 * a.powf(-1.0 / 3.0)
}

pub fn in_safe_region(x: f64, cutoff: usize) -> bool {
    x.abs() < safe_region_bound(cutoff)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemiclassicalSeed {
    pub m: usize,
    pub alpha: f64,
    pub tau: f64,
    pub chi: f64,
    pub kappa: f64,
}

/// Large-m asymptotic form of the irregular solution, up to `β^{-1} e^{-x²}`.
pub fn semiclassical_kappa(m: usize, x: f64) -> Result<SemiclassicalSeed> {
    let alpha = (m as f64 + 0.5).sqrt();
    if !(x.abs() < alpha) {
        return Err(invalid(format!(
            "semiclassical seed needs |x| < alpha_m = {alpha} (m = {m}, x = {x})"
        )));
    }
    let tau = (x / alpha).acos();
    let chi = (2.0 * tau).sin() - 2.0 * tau;
    let kappa = (8.0 * PI).powf(0.25) / (alpha * tau.sin()).sqrt()
        * (0.5 * alpha * alpha * chi + PI / 4.0).sin();
    if !kappa.is_finite() {
        return Err(Error::NonFinite {
            sequence: "semiclassical seed",
            index: m,
        });
    }
    Ok(SemiclassicalSeed {
        m,
        alpha,
        tau,
        chi,
        kappa,
    })
}

/// A sequence stored as mantissas with a binary exponent per entry.
/// In plain mode every exponent is zero.
#[derive(Clone, Debug)]
pub struct ScaledSequence<F> {
    pub values: Vec<F>,
    pub tilde: Vec<F>,
    pub exponents: Vec<i32>,
}

impl<F: Real> ScaledSequence<F> {
    fn zeros(len: usize) -> Self {
        ScaledSequence {
            values: vec![F::zero(); len],
            tilde: vec![F::zero(); len],
            exponents: vec![0; len],
        }
    }

    pub fn value(&self, k: usize) -> F {
        ldexp(self.values[k], self.exponents[k])
    }

    pub fn tilde_value(&self, k: usize) -> F {
        ldexp(self.tilde[k], self.exponents[k])
    }

    pub fn is_plain(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }
}

/// Square-root tables and configuration shared by all workspaces of one run.
#[derive(Clone, Debug)]
pub struct PatternKernel<F> {
    cfg: PatternConfig,
    sqrt: Vec<F>,
    inv_sqrt: Vec<F>,
    ln_beta: f64,
}

impl<F: Real> PatternKernel<F> {
    pub fn new(cfg: &PatternConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.seed_index();
        let sqrt: Vec<F> = (0..=k + 2).map(|i| F::of((i as f64).sqrt())).collect();
        let inv_sqrt: Vec<F> = (0..=k + 2)
            .map(|i| if i == 0 { F::zero() } else { F::of(1.0 / (i as f64).sqrt()) })
            .collect();
        Ok(PatternKernel {
            cfg: cfg.clone(),
            sqrt,
            inv_sqrt,
            ln_beta: cfg.beta.ln(),
        })
    }

    pub fn config(&self) -> &PatternConfig {
        &self.cfg
    }

    fn extended(&self) -> bool {
        self.cfg.range == RangeMode::Extended
    }

    fn beta_hint(&self) -> String {
        format!(
            "choose a smaller beta than {:e} or use extended range",
            self.cfg.beta
        )
    }

    pub fn regular(&self, x: F) -> Result<ScaledSequence<F>> {
        let len = self.cfg.cutoff + 2;
        let mut s = ScaledSequence::zeros(len);
        let two_x = x + x;
        let (mut p2, mut e) = if self.extended() {
            let b = Scaled::<F>::from_ln(F::one(), self.ln_beta);
            (b.mant, b.exp)
        } else {
            let b = F::of(self.cfg.beta);
            if !b.is_normal() {
                return Err(Error::Underflow {
                    sequence: "regular sequence u",
                    index: 0,
                    hint: format!(
                        "beta = {:e} is not representable in {} precision; use a larger beta or extended range",
                        self.cfg.beta,
                        F::NAME
                    ),
                });
            }
            (b, 0)
        };
        let mut p1 = two_x * p2;
        s.values[0] = p2;
        s.values[1] = p1;
        s.tilde[1] = p1;
        s.exponents[0] = e;
        s.exponents[1] = e;
        if !p1.is_finite() {
            return Err(Error::Overflow {
                sequence: "regular sequence u",
                index: 1,
                hint: self.beta_hint(),
            });
        }
        let (hi, lo) = (up::<F>(), down::<F>());
        for n in 2..len {
            let t = two_x * p1 - self.sqrt[n - 1] * p2;
            let c = t * self.inv_sqrt[n];
            if !t.is_finite() {
                return Err(Error::Overflow {
                    sequence: "regular sequence u",
                    index: n,
                    hint: self.beta_hint(),
                });
            }
            s.values[n] = c;
            s.tilde[n] = t;
            s.exponents[n] = e;
            p2 = p1;
            p1 = c;
            if self.extended() {
                if p1.abs() > hi || p2.abs() > hi {
                    p1 = p1 * lo;
                    p2 = p2 * lo;
                    e += F::RESCALE_BITS;
                } else if p1.abs() < lo && p2.abs() < lo && (p1 != F::zero() || p2 != F::zero()) {
                    p1 = p1 * hi;
                    p2 = p2 * hi;
                    e -= F::RESCALE_BITS;
                }
            }
        }
        Ok(s)
    }

    pub fn irregular(&self, x: F) -> Result<(ScaledSequence<F>, Region)> {
        let xf = x.f64();
        if in_safe_region(xf, self.cfg.cutoff) {
            self.backward(x).map(|s| (s, Region::Backward))
        } else {
            self.forward(x).map(|s| (s, Region::Forward))
        }
    }

    fn backward(&self, x: F) -> Result<ScaledSequence<F>> {
        let m_cut = self.cfg.cutoff;
        let len = m_cut + 2;
        let k = self.cfg.seed_index();
        let xf = x.f64();
        let kappa_k = semiclassical_kappa(k, xf)?.kappa;
        let kappa_k1 = semiclassical_kappa(k - 1, xf)?.kappa;
        let ln_scale = -xf * xf - self.ln_beta;
        let (mut a, mut b, mut e) = if self.extended() {
            let s = Scaled::<F>::from_ln(F::one(), ln_scale);
            (s.mant * F::of(kappa_k), s.mant * F::of(kappa_k1), s.exp)
        } else {
            let s = F::of(ln_scale.exp());
            if s.is_infinite() {
                return Err(Error::Overflow {
                    sequence: "irregular sequence v",
                    index: k,
                    hint: "the backward seed 1/beta exceeds the range; choose a larger beta or use extended range".into(),
                });
            }
            if !s.is_normal() {
                return Err(Error::Underflow {
                    sequence: "irregular sequence v",
                    index: k,
                    hint: format!(
                        "the backward seed exp(-x^2)/beta underflows in {} precision at x = {xf}; choose a smaller beta or use extended range",
                        F::NAME
                    ),
                });
            }
            (s * F::of(kappa_k), s * F::of(kappa_k1), 0)
        };
        let mut s = ScaledSequence::zeros(len);
        let two_x = x + x;
        let (hi, lo) = (up::<F>(), down::<F>());
        let ext = self.extended();
        for m in (0..=k - 2).rev() {
            let c = (two_x * b - self.sqrt[m + 2] * a) * self.inv_sqrt[m + 1];
            a = b;
            b = c;
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    sequence: "irregular sequence v",
                    index: m,
                });
            }
            if m < len {
                s.values[m] = c;
                s.tilde[m] = c * self.sqrt[m];
                s.exponents[m] = e;
            }
            if ext {
                if b.abs() > hi || a.abs() > hi {
                    a = a * lo;
                    b = b * lo;
                    e += F::RESCALE_BITS;
                } else if b.abs() < lo && a.abs() < lo && (a != F::zero() || b != F::zero()) {
                    a = a * hi;
                    b = b * hi;
                    e -= F::RESCALE_BITS;
                }
            }
        }
        Ok(s)
    }

    fn forward(&self, x: F) -> Result<ScaledSequence<F>> {
        let xf = x.f64();
        if !(xf.abs() >= self.cfg.forward_floor) || xf == 0.0 {
            return Err(Error::Numerical(format!(
                "forward recursion is singular at x = {xf} (floor {:e})",
                self.cfg.forward_floor
            )));
        }
        let len = self.cfg.cutoff + 2;
        let mut s = ScaledSequence::zeros(len);
        let sign = if xf < 0.0 { -F::one() } else { F::one() };
        let ln_v0 = -self.ln_beta - xf.abs().ln();
        let (mut c, mut e) = if self.extended() {
            let v = Scaled::<F>::from_ln(sign, ln_v0);
            (v.mant, v.exp)
        } else {
            let v = F::of(ln_v0.exp());
            if !v.is_finite() {
                return Err(Error::Overflow {
                    sequence: "irregular sequence v",
                    index: 0,
                    hint: "1/(beta x) exceeds the range; choose a larger beta or use extended range".into(),
                });
            }
            if !v.is_normal() {
                return Err(Error::Underflow {
                    sequence: "irregular sequence v",
                    index: 0,
                    hint: "1/(beta x) underflows; choose a smaller beta or use extended range".into(),
                });
            }
            (sign * v, 0)
        };
        let inv_two_x = F::one() / (x + x);
        let (hi, lo) = (up::<F>(), down::<F>());
        s.values[0] = c;
        s.exponents[0] = e;
        for m in 1..len {
            c = self.sqrt[m] * inv_two_x * c;
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    sequence: "irregular sequence v",
                    index: m,
                });
            }
            s.values[m] = c;
            s.tilde[m] = c * self.sqrt[m];
            s.exponents[m] = e;
            if self.extended() {
                if c.abs() > hi {
                    c = c * lo;
                    e += F::RESCALE_BITS;
                } else if c.abs() < lo && c != F::zero() {
                    c = c * hi;
                    e -= F::RESCALE_BITS;
                }
            }
        }
        Ok(s)
    }

    pub fn workspace(&self, x: f64) -> Result<PatternWorkspace<F>> {
        if !x.is_finite() {
            return Err(invalid(format!("quadrature value {x} is not finite")));
        }
        let xf = F::of(x.abs());
        let mut u = self.regular(xf)?;
        let (mut v, region) = self.irregular(xf)?;
        if !self.extended() {
            check_normal(&u, "regular sequence u")?;
            check_normal(&v, "irregular sequence v")?;
        }
        if x < 0.0 {
            // u_n(-x) = (-1)^n u_n(x), v_m(-x) = (-1)^{m+1} v_m(x)
            for n in (1..u.values.len()).step_by(2) {
                u.values[n] = -u.values[n];
                u.tilde[n] = -u.tilde[n];
            }
            for m in (0..v.values.len()).step_by(2) {
                v.values[m] = -v.values[m];
                v.tilde[m] = -v.tilde[m];
            }
            return self.checked(PatternWorkspace::assemble(-xf, self.cfg.cutoff, u, v, region)?);
        }
        self.checked(PatternWorkspace::assemble(xf, self.cfg.cutoff, u, v, region)?)
    }

    fn checked(&self, ws: PatternWorkspace<F>) -> Result<PatternWorkspace<F>> {
        if self.cfg.precision == Precision::Single {
            let e = ws.error_estimate(self.cfg.seed_index());
            if !(e <= SINGLE_PRECISION_TOLERANCE) {
                return Err(Error::Numerical(format!(
                    "single-precision pattern functions at x = {} carry an estimated error of {e:.3e}; use double precision",
                    ws.x().f64()
                )));
            }
        }
        Ok(ws)
    }
}

fn check_normal<F: Real>(s: &ScaledSequence<F>, sequence: &'static str) -> Result<()> {
    match s
        .values
        .iter()
        .position(|v| *v != F::zero() && v.abs() < F::min_positive_value())
    {
        Some(index) => Err(Error::Underflow {
            sequence,
            index,
            hint: format!("value is subnormal in {} precision; use extended range", F::NAME),
        }),
        None => Ok(()),
    }
}

pub fn regular_sequence<F: Real>(x: F, cfg: &PatternConfig) -> Result<ScaledSequence<F>> {
    PatternKernel::new(cfg)?.regular(x)
}

pub fn irregular_sequence<F: Real>(
    x: F,
    cfg: &PatternConfig,
) -> Result<(ScaledSequence<F>, Region)> {
    PatternKernel::new(cfg)?.irregular(x)
}

/// Regular and irregular sequences at one quadrature value, plus the two
/// combinations that enter every pattern function.
#[derive(Clone, Debug)]
pub struct PatternWorkspace<F> {
    x: F,
    cutoff: usize,
    region: Region,
    u: ScaledSequence<F>,
    v: ScaledSequence<F>,
    // 2x u_n - ũ_{n+1}, at the exponent of u_n
    a: Vec<F>,
    // ṽ_{m+1}, at the exponent of v_m
    b: Vec<F>,
    plain: bool,
}

impl<F: Real> PatternWorkspace<F> {
    pub fn new(x: f64, cfg: &PatternConfig) -> Result<Self> {
        PatternKernel::new(cfg)?.workspace(x)
    }

    fn assemble(
        x: F,
        cutoff: usize,
        u: ScaledSequence<F>,
        v: ScaledSequence<F>,
        region: Region,
    ) -> Result<Self> {
        let two_x = x + x;
        let a: Vec<F> = (0..=cutoff)
            .map(|n| {
                two_x * u.values[n]
                    - ldexp(u.tilde[n + 1], u.exponents[n + 1] - u.exponents[n])
            })
            .collect();
        let b: Vec<F> = (0..=cutoff)
            .map(|m| ldexp(v.tilde[m + 1], v.exponents[m + 1] - v.exponents[m]))
            .collect();
        let plain = u.is_plain() && v.is_plain();
        if let Some(n) = a.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                sequence: "pattern workspace",
                index: n,
            });
        }
        Ok(PatternWorkspace {
            x,
            cutoff,
            region,
            u,
            v,
            a,
            b,
            plain,
        })
    }

    pub fn x(&self) -> F {
        self.x
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn regular(&self) -> &ScaledSequence<F> {
        &self.u
    }

    pub fn irregular(&self) -> &ScaledSequence<F> {
        &self.v
    }

    /// True when no entry carries a binary exponent.
    pub fn is_plain(&self) -> bool {
        self.plain
    }

    pub fn is_finite(&self) -> bool {
        let fin = |s: &ScaledSequence<F>| {
            s.values.iter().chain(s.tilde.iter()).all(|v| v.is_finite())
        };
        fin(&self.u) && fin(&self.v) && self.a.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }

    #[inline]
    fn f_upper(&self, n: usize, m: usize) -> F {
        let core = self.a[n] * self.v.values[m] - self.u.values[n] * self.b[m];
        if self.plain {
            core
        } else {
            ldexp(core, self.u.exponents[n] + self.v.exponents[m])
        }
    }

    /// Estimated absolute rounding error of the assembled `f_{n,m}(x)`, maximized
    /// over `n ≤ m < M`. Accounts for cancellation in the assembly and for
    /// rounding accumulated along recursions seeded at `seed_index`.
    pub fn error_estimate(&self, seed_index: usize) -> f64 {
        let m = self.cutoff;
        let two_x = (self.x + self.x).f64().abs();
        let depth = (seed_index as f64).sqrt() + 4.0;
        let mut worst = 0.0f64;
        for n in 0..m {
            let a_abs = two_x * self.u.values[n].f64().abs()
                + ldexp(
                    self.u.tilde[n + 1].f64().abs(),
                    self.u.exponents[n + 1] - self.u.exponents[n],
                );
            let u_abs = self.u.values[n].f64().abs();
            for k in n..m {
                let t = a_abs * self.v.values[k].f64().abs() + u_abs * self.b[k].f64().abs();
                worst = worst.max(ldexp(t, self.u.exponents[n] + self.v.exponents[k]));
            }
        }
        depth * F::epsilon().f64() * worst
    }

    /// `f_{n,m}(x)`, with `f_{m,n} = f_{n,m}`.
    pub fn pattern(&self, n: usize, m: usize) -> Result<F> {
        if n >= self.cutoff || m >= self.cutoff {
            return Err(invalid(format!(
                "pattern index ({n}, {m}) outside cutoff {}",
                self.cutoff
            )));
        }
        Ok(if n <= m { self.f_upper(n, m) } else { self.f_upper(m, n) })
    }

    /// `u_n(x) v_m(x)`, whose derivative is `2 f_{n,m}(x)`.
    pub fn product(&self, n: usize, m: usize) -> F {
        ldexp(
            self.u.values[n] * self.v.values[m],
            self.u.exponents[n] + self.v.exponents[m],
        )
    }

    /// `f_{n,n+d}(x)` for `n = 0..M-d-1`.
    pub fn pattern_row(&self, d: usize) -> Result<Vec<F>> {
        let mut out = vec![F::zero(); self.cutoff.saturating_sub(d)];
        self.pattern_row_into(d, &mut out)?;
        Ok(out)
    }

    pub fn pattern_row_into(&self, d: usize, out: &mut [F]) -> Result<()> {
        if d >= self.cutoff {
            return Err(invalid(format!(
                "diagonal {d} out of range for cutoff {}",
                self.cutoff
            )));
        }
        let len = self.cutoff - d;
        if out.len() != len {
            return Err(invalid(format!("row buffer has length {}, expected {len}", out.len())));
        }
        for (n, o) in out.iter_mut().enumerate() {
            let f = self.f_upper(n, n + d);
            if !f.is_finite() {
                return Err(Error::NonFinite {
                    sequence: "pattern function",
                    index: n,
                });
            }
            *o = f;
        }
        Ok(())
    }

    /// Split view used by the estimators: `f_{n,m} = (a_n v_m - u_n b_m) 2^{e_n + e'_m}`.
    pub(crate) fn parts(&self) -> PatternParts<'_, F> {
        PatternParts {
            a: &self.a,
            u: &self.u.values,
            v: &self.v.values,
            b: &self.b,
            eu: &self.u.exponents,
            ev: &self.v.exponents,
            plain: self.plain,
        }
    }
}

pub(crate) struct PatternParts<'a, F> {
    pub a: &'a [F],
    pub u: &'a [F],
    pub v: &'a [F],
    pub b: &'a [F],
    pub eu: &'a [i32],
    pub ev: &'a [i32],
    pub plain: bool,
}

pub fn pattern_row<F: Real>(ws: &PatternWorkspace<F>, d: usize) -> Result<Vec<F>> {
    ws.pattern_row(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: usize, beta: f64) -> PatternConfig {
        PatternConfig::new(m, beta).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn beta_heuristic() {
        assert_eq!(choose_beta(&[0.0]).unwrap(), 1.0);
        assert!(rel(choose_beta(&[1.0, -2.0, 0.5]).unwrap(), 2.4787521766663585e-3) < 1e-14);
        assert!(rel(choose_beta(&[5.0]).unwrap(), 3.059023205018258e-7) < 1e-14);
        assert!(choose_beta(&[]).is_err());
        assert!(choose_beta(&[f64::NAN]).is_err());
    }

    #[test]
    fn safe_region_examples() {
        assert!(in_safe_region(0.0, 1));
        assert!(in_safe_region(15.8, 64));
        assert!(!in_safe_region(15.9, 64));
        let b = safe_region_bound(64);
        assert!((b - 15.8173).abs() < 1e-3);
        assert!(!in_safe_region(b, 64));
        assert!(!in_safe_region(-b, 64));
    }

    #[test]
    fn regular_at_origin() {
        let s = regular_sequence(0.0f64, &cfg(4, 1.0)).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(s.values[0], 1.0);
        assert_eq!(s.values[1], 0.0);
        assert!((s.values[2] + r).abs() < 1e-15);
        assert_eq!(s.values[3], 0.0);
        assert!((s.values[4] - 3f64.sqrt() * r / 2.0).abs() < 1e-15);
        assert_eq!(s.tilde[0], 0.0);
        assert_eq!(s.tilde[1], s.values[1]);
    }

    #[test]
    fn regular_half() {
        let s = regular_sequence(0.5f64, &cfg(4, 1.0)).unwrap();
        assert_eq!(s.values[1], 1.0);
        assert_eq!(s.values[2], 0.0);
        for n in 0..s.values.len() {
            assert!((s.tilde[n] - (n as f64).sqrt() * s.values[n]).abs() < 1e-14);
        }
    }

    #[test]
    fn regular_plain_overflow_names_index() {
        let c = cfg(64, 1e300).with_range(RangeMode::Plain);
        match regular_sequence(20.0f64, &c) {
            Err(Error::Overflow { index, hint, .. }) => {
                assert!(index >= 2 && index < 66);
                assert!(hint.contains("smaller beta"));
            }
            other => panic!("expected overflow, got {other:?}"),
        }
        let e = regular_sequence(20.0f64, &cfg(64, 1e300)).unwrap();
        assert!(e.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn kappa_at_origin() {
        let s = semiclassical_kappa(256, 0.0).unwrap();
        let a = 256.5f64.sqrt();
        assert!((s.tau - PI / 2.0).abs() < 1e-15);
        assert!((s.chi + PI).abs() < 1e-14);
        let want = (8.0 * PI).powf(0.25) / a.sqrt() * (PI / 4.0 - PI * a * a / 2.0).sin();
        assert!((s.kappa - want).abs() < 1e-12);
        assert!(semiclassical_kappa(10, 10.5f64.sqrt()).is_err());
        let near = semiclassical_kappa(10, 10.5f64.sqrt() * (1.0 - 1e-12)).unwrap();
        let mid = semiclassical_kappa(10, 1.0).unwrap();
        assert!(near.kappa.abs() > 100.0 * mid.kappa.abs().max(1.0) || near.alpha * near.tau.sin() < 1e-4);
    }

    #[test]
    fn region_selection_and_forward_ratio() {
        let k = PatternKernel::<f64>::new(&cfg(8, 1.0)).unwrap();
        let (_, r) = k.irregular(0.0).unwrap();
        assert_eq!(r, Region::Backward);
        let x = 9.0;
        let (v, r) = k.irregular(x).unwrap();
        assert_eq!(r, Region::Forward);
        assert!(rel(v.value(1) / v.value(0), 1.0 / (2.0 * x)) < 1e-15);
        for (m, (&t, &val)) in v.tilde.iter().zip(v.values.iter()).enumerate() {
            assert!((t - (m as f64).sqrt() * val).abs() <= 1e-15 * t.abs().max(1e-300));
        }
        assert_eq!(v.tilde[0], 0.0);
    }

    #[test]
    fn forward_floor_is_enforced() {
        let c = cfg(1, 1.0).with_forward_floor(100.0);
        let k = PatternKernel::<f64>::new(&c).unwrap();
        assert!(matches!(k.irregular(5.0), Err(Error::Numerical(_))));
    }

    #[test]
    fn pattern_parity_and_symmetry() {
        let c = cfg(12, 1e-3);
        let k = PatternKernel::<f64>::new(&c).unwrap();
        for &x in &[0.3, 1.7, 4.2] {
            let p = k.workspace(x).unwrap();
            let q = k.workspace(-x).unwrap();
            for n in 0..12 {
                for m in n..12 {
                    let a = p.pattern(n, m).unwrap();
                    let b = q.pattern(n, m).unwrap();
                    let s = if (m - n) % 2 == 0 { 1.0 } else { -1.0 };
                    assert!((a - s * b).abs() <= 1e-9 * a.abs().max(1e-6), "{n} {m} {x} {a} {b}");
                    assert_eq!(p.pattern(m, n).unwrap(), a);
                }
            }
        }
    }

    #[test]
    fn vacuum_pattern_is_known() {
        // vacuum average of f_{0,0} is rho_00 = 1
        let k = PatternKernel::<f64>::new(&cfg(4, 1.0)).unwrap();
        let n = 4001;
        let xmax = 6.0;
        let h = 2.0 * xmax / (n - 1) as f64;
        let mut s = 0.0;
        for i in 0..n {
            let x = -xmax + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let p = (2.0 / PI).sqrt() * (-2.0 * x * x).exp();
            s += w * h * p * k.workspace(x).unwrap().pattern(0, 0).unwrap();
        }
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn derivative_relation_has_half_factor() {
        let k = PatternKernel::<f64>::new(&cfg(10, 1.0)).unwrap();
        let h = 1e-4;
        for &x in &[0.4, 1.3, 2.9] {
            let w = k.workspace(x).unwrap();
            let wp = k.workspace(x + h).unwrap();
            let wm = k.workspace(x - h).unwrap();
            for (n, m) in [(0, 0), (1, 3), (4, 9), (7, 7)] {
                let dg = (wp.product(n, m) - wm.product(n, m)) / (2.0 * h);
                let f = w.pattern(n, m).unwrap();
                assert!((0.5 * dg - f).abs() < 1e-6 * f.abs().max(1.0), "{n} {m} {x}");
            }
        }
    }

    #[test]
    fn plain_and_extended_agree_where_plain_works() {
        let base = cfg(32, choose_beta(&[6.0]).unwrap());
        let kp = PatternKernel::<f64>::new(&base.clone().with_range(RangeMode::Plain)).unwrap();
        let ke = PatternKernel::<f64>::new(&base).unwrap();
        for &x in &[-5.5, -0.7, 0.0, 2.2, 6.0, 12.5] {
            let p = kp.workspace(x).unwrap();
            let e = ke.workspace(x).unwrap();
            for d in [0, 3, 17] {
                let rp = p.pattern_row(d).unwrap();
                let re = e.pattern_row(d).unwrap();
                for (a, b) in rp.iter().zip(re.iter()) {
                    assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3), "{x} {d} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn plain_seed_underflow_is_reported() {
        let c = cfg(200, 1.0).with_range(RangeMode::Plain);
        let k = PatternKernel::<f64>::new(&c).unwrap();
        let r = k.workspace(27.0);
        assert!(matches!(r, Err(Error::Underflow { .. })), "{r:?}");
        let e = PatternKernel::<f64>::new(&cfg(200, 1.0)).unwrap();
        assert!(e.workspace(27.0).unwrap().is_finite());
    }

    #[test]
    fn single_plain_fails_loudly() {
        let c = cfg(64, (-70f64).exp())
            .with_range(RangeMode::Plain)
            .with_precision(Precision::Single);
        let k = PatternKernel::<f32>::new(&c).unwrap();
        assert!(k.workspace(12.0).unwrap().is_finite());
        let r = k.workspace(15.0);
        assert!(r.as_ref().map_err(|e| e.is_numerical()).err() == Some(true), "{r:?}");
    }

    #[test]
    fn error_estimate_bounds_single_precision_error() {
        let beta = choose_beta(&[9.0]).unwrap();
        let c64 = cfg(64, beta);
        let c32 = c64.clone().with_precision(Precision::Single);
        let k64 = PatternKernel::<f64>::new(&c64).unwrap();
        let k32 = PatternKernel::<f32>::new(&c32).unwrap();
        for &x in &[0.0, 0.3, 1.7, 4.0, 8.9] {
            let w64 = k64.workspace(x).unwrap();
            let w32 = k32.workspace(x).unwrap();
            let est = w32.error_estimate(c32.seed_index());
            assert!(est < SINGLE_PRECISION_TOLERANCE, "{x} {est}");
            let mut worst = 0.0f64;
            for n in 0..64 {
                for m in n..64 {
                    let e = (w32.pattern(n, m).unwrap() as f64 - w64.pattern(n, m).unwrap()).abs();
                    worst = worst.max(e);
                }
            }
            assert!(worst <= est, "{x}: error {worst} above estimate {est}");
            assert!(w64.error_estimate(c64.seed_index()) < 1e-9);
        }
    }

    #[test]
    fn row_bounds() {
        let w = PatternWorkspace::<f64>::new(0.5, &cfg(5, 1.0)).unwrap();
        assert_eq!(w.pattern_row(0).unwrap().len(), 5);
        assert_eq!(w.pattern_row(4).unwrap().len(), 1);
        assert!(w.pattern_row(5).is_err());
        assert!(w.pattern(5, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PatternConfig::new(0, 1.0).is_err());
        assert!(PatternConfig::new(1, 0.0).is_err());
        assert!(PatternConfig::new(1, f64::INFINITY).is_err());
        let c = cfg(64, 1.0);
        assert_eq!(c.seed_index(), DEFAULT_SEED_FLOOR);
        assert_eq!(c.clone().with_seed_floor(0).seed_index(), 256);
        assert_eq!(cfg(8192, 1.0).seed_index(), 32768);
    }
}

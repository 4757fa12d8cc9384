//! Floating-point plumbing shared by the recursions: a precision trait, an
//! extended-range number with a binary exponent, and double-word arithmetic.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};

pub trait Real: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Exponent step (in bits) used when a mantissa leaves `[2^-B, 2^B]`.
    const RESCALE_BITS: i32;
    const NAME: &'static str;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Real")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    fn usize(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl Real for f32 {
    const RESCALE_BITS: i32 = 32;
    const NAME: &'static str = "single";
}

impl Real for f64 {
    const RESCALE_BITS: i32 = 256;
    const NAME: &'static str = "double";
}

#[inline]
pub(crate) fn up<F: Real>() -> F {
    F::of(2f64.powi(F::RESCALE_BITS))
}

#[inline]
pub(crate) fn down<F: Real>() -> F {
    F::of(2f64.powi(-F::RESCALE_BITS))
}

/// `m * 2^e` without intermediate overflow or premature underflow.
pub fn ldexp<F: Real>(m: F, e: i32) -> F {
    if e == 0 || m == F::zero() || !m.is_finite() {
        return m;
    }
    let b = F::RESCALE_BITS;
    let mut m = m;
    let mut e = e;
    while e >= b {
        m = m * up::<F>();
        e -= b;
        if m.is_infinite() {
            return m;
        }
    }
    while e <= -b {
        m = m * down::<F>();
        e += b;
        if m == F::zero() {
            return m;
        }
    }
    if e != 0 {
        m = m * F::of(2f64.powi(e));
    }
    m
}

/// A value `mant * 2^exp` where `exp` is a multiple of `F::RESCALE_BITS`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled<F> {
    pub mant: F,
    pub exp: i32,
}

impl<F: Real> Scaled<F> {
    pub fn new(mant: F) -> Self {
        Scaled { mant, exp: 0 }.normalized()
    }

    pub fn zero() -> Self {
        Scaled {
            mant: F::zero(),
            exp: 0,
        }
    }

    /// `sign * e^ln`, for magnitudes far outside the range of `F`.
    pub fn from_ln(sign: F, ln: f64) -> Self {
        const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
        const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
        let k = (ln / std::f64::consts::LN_2).round();
        let r = (ln - k * LN2_HI) - k * LN2_LO;
        let k = k as i64;
        let b = F::RESCALE_BITS as i64;
        let e = k.div_euclid(b) * b;
        let mant = ldexp(F::of(r.exp()), (k - e) as i32);
        Scaled {
            mant: sign * mant,
            exp: e as i32,
        }
        .normalized()
    }

    pub fn normalized(mut self) -> Self {
        if self.mant == F::zero() {
            self.exp = 0;
            return self;
        }
        if !self.mant.is_finite() {
            return self;
        }
        let hi = up::<F>();
        let lo = down::<F>();
        while self.mant.abs() > hi {
            self.mant = self.mant * lo;
            self.exp += F::RESCALE_BITS;
        }
        while self.mant.abs() < lo {
            self.mant = self.mant * hi;
            self.exp -= F::RESCALE_BITS;
        }
        self
    }

    pub fn scale(self, k: F) -> Self {
        Scaled {
            mant: self.mant * k,
            exp: self.exp,
        }
        .normalized()
    }

    pub fn mul(self, o: Self) -> Self {
        Scaled {
            mant: self.mant * o.mant,
            exp: self.exp + o.exp,
        }
        .normalized()
    }

    pub fn add(self, o: Self) -> Self {
        if self.mant == F::zero() {
            return o;
        }
        if o.mant == F::zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= o.exp { (self, o) } else { (o, self) };
        Scaled {
            mant: hi.mant + ldexp(lo.mant, lo.exp - hi.exp),
            exp: hi.exp,
        }
        .normalized()
    }

    pub fn sub(self, o: Self) -> Self {
        self.add(Scaled {
            mant: -o.mant,
            exp: o.exp,
        })
    }

    pub fn to_float(self) -> F {
        ldexp(self.mant, self.exp)
    }

    pub fn is_finite(self) -> bool {
        self.mant.is_finite()
    }

    pub fn log2_abs(self) -> f64 {
        self.mant.abs().f64().log2() + self.exp as f64
    }
}

/// Unevaluated sum `hi + lo` carrying roughly twice the working precision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoFold<F> {
    pub hi: F,
    pub lo: F,
}

#[inline]
fn two_sum<F: Real>(a: F, b: F) -> (F, F) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum<F: Real>(a: F, b: F) -> (F, F) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod<F: Real>(a: F, b: F) -> (F, F) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl<F: Real> TwoFold<F> {
    pub fn new(v: F) -> Self {
        TwoFold { hi: v, lo: F::zero() }
    }

    pub fn zero() -> Self {
        Self::new(F::zero())
    }

    pub fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        TwoFold { hi, lo }
    }

    pub fn neg(self) -> Self {
        TwoFold {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Self) -> Self {
        self.add(o.neg())
    }

    pub fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        TwoFold { hi, lo }
    }

    pub fn mul_f(self, k: F) -> Self {
        let (p, e) = two_prod(self.hi, k);
        let (hi, lo) = quick_two_sum(p, e + self.lo * k);
        TwoFold { hi, lo }
    }

    pub fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        TwoFold { hi, lo }.add(TwoFold::new(q3))
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= F::zero() {
            return TwoFold::zero();
        }
        let s = self.hi.sqrt();
        let (p, e) = two_prod(s, s);
        let r = ((self.hi - p) - e + self.lo) / (s + s);
        let (hi, lo) = quick_two_sum(s, r);
        TwoFold { hi, lo }
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }
}

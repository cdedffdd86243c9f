//! Deterministic dyadic fixed-point arithmetic.
//!
//! Every protocol value is a [`FixedReal`]: a signed big-integer mantissa `m`
//! interpreted as `m * 2^-p` for a global precision `p`. Addition and
//! subtraction are exact; multiplication truncates toward zero onto the
//! `2^-p` grid, so each product carries an error below `2^-p` per component.
//! Trigonometric evaluation (argument reduction plus Taylor series, carried
//! out with `guard` extra working bits) is provided in [`trig_pair`].

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Hard cap on mantissa size; exceeding it is a configuration error, not a
/// numerical condition the protocol can recover from.
pub const MAX_MANTISSA_BITS: u64 = 1 << 22;

/// Precision configuration shared by all values of one protocol session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrecisionContext {
    /// Grid unit is `2^-p`.
    pub p: u32,
    /// Extra working bits for intermediate products and trig evaluation.
    pub guard: u32,
}

impl PrecisionContext {
    pub fn new(p: u32) -> Self {
        Self { p, guard: 32 }
    }

    pub fn with_guard(p: u32, guard: u32) -> Self {
        assert!(guard >= 32, "guard must be at least 32 bits");
        Self { p, guard }
    }

    /// Working precision used internally by trig and oracle paths.
    pub fn working_bits(&self) -> u32 {
        self.p + self.guard
    }
}

/// A signed dyadic fixed-point real: `mantissa * 2^-p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedReal {
    mantissa: BigInt,
    p: u32,
}

fn check_mantissa(m: &BigInt) {
    if m.magnitude().bits() > MAX_MANTISSA_BITS {
        panic!(
            "fixed-point mantissa exceeds configured maximum of {} bits",
            MAX_MANTISSA_BITS
        );
    }
}

impl FixedReal {
    pub fn zero(p: u32) -> Self {
        Self { mantissa: BigInt::zero(), p }
    }

    pub fn one(p: u32) -> Self {
        Self { mantissa: BigInt::one() << p, p }
    }

    pub fn from_mantissa(mantissa: BigInt, p: u32) -> Self {
        check_mantissa(&mantissa);
        Self { mantissa, p }
    }

    pub fn from_i64(v: i64, p: u32) -> Self {
        Self::from_mantissa(BigInt::from(v) << p, p)
    }

    /// Exact dyadic `m * 2^-exp`, truncated toward zero if `exp > p`.
    pub fn from_dyadic(mantissa: BigInt, exp: i64, p: u32) -> Self {
        let shift = p as i64 - exp;
        let m = if shift >= 0 {
            mantissa << shift as u64
        } else {
            div_trunc_pow2(&mantissa, (-shift) as u64)
        };
        Self::from_mantissa(m, p)
    }

    /// `num/den` truncated toward zero onto the `2^-p` grid.
    pub fn from_ratio(num: &BigInt, den: &BigInt, p: u32) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        let m = (num << p) / den;
        Self::from_mantissa(m, p)
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn precision(&self) -> u32 {
        self.p
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    fn check_compat(&self, other: &Self) {
        if self.p != other.p {
            panic!("fixed-point precision mismatch: {} vs {}", self.p, other.p);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_compat(other);
        Self::from_mantissa(&self.mantissa + &other.mantissa, self.p)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_compat(other);
        Self::from_mantissa(&self.mantissa - &other.mantissa, self.p)
    }

    pub fn neg(&self) -> Self {
        Self { mantissa: -&self.mantissa, p: self.p }
    }

    pub fn abs(&self) -> Self {
        Self { mantissa: self.mantissa.abs(), p: self.p }
    }

    /// Product rounded toward zero; error strictly below `2^-p`.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_compat(other);
        let prod = &self.mantissa * &other.mantissa;
        Self::from_mantissa(div_trunc_pow2(&prod, self.p as u64), self.p)
    }

    /// Square root of a non-negative value, truncated toward zero.
    pub fn sqrt(&self) -> Self {
        assert!(!self.is_negative(), "sqrt of negative value");
        let shifted: BigUint = (self.mantissa.magnitude()) << self.p;
        Self::from_mantissa(BigInt::from(shifted.sqrt()), self.p)
    }

    /// `|self| <= num/den`, decided exactly in integer arithmetic.
    pub fn abs_le_ratio(&self, num: &BigUint, den: &BigUint) -> bool {
        self.mantissa.magnitude() * den <= num << self.p
    }

    /// Re-truncate to a (smaller or larger) precision, toward zero.
    pub fn retrunc(&self, p: u32) -> Self {
        Self::from_dyadic(self.mantissa.clone(), self.p as i64, p)
    }

    pub fn cmp_abs(&self, other: &Self) -> std::cmp::Ordering {
        self.check_compat(other);
        self.mantissa.magnitude().cmp(other.mantissa.magnitude())
    }

    /// Approximate conversion for reporting; exact for small values.
    pub fn to_f64(&self) -> f64 {
        let bits = self.mantissa.magnitude().bits();
        if bits <= 900 && self.p <= 900 {
            return self.mantissa.to_f64().unwrap_or(f64::NAN) / 2f64.powi(self.p as i32);
        }
        // Keep the top 64 bits and track the scale separately.
        let drop = bits.saturating_sub(64);
        let top = (self.mantissa.magnitude() >> drop).to_f64().unwrap_or(f64::NAN);
        let signed = if self.mantissa.is_negative() { -top } else { top };
        signed * 2f64.powi(drop as i32 - self.p as i32)
    }
}

impl fmt::Display for FixedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^-{}", self.mantissa, self.p)
    }
}

// Serialized as a (decimal mantissa string, p) pair.
impl Serialize for FixedReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.mantissa.to_string(), self.p).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FixedReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (m, p): (String, u32) = Deserialize::deserialize(deserializer)?;
        let mantissa: BigInt = m.parse().map_err(|_| D::Error::custom("bad mantissa"))?;
        Ok(FixedReal::from_mantissa(mantissa, p))
    }
}

/// Truncated division by `2^shift`, rounding toward zero (the `⌊·⌋` of the
/// fixed-point model for either sign).
pub fn div_trunc_pow2(v: &BigInt, shift: u64) -> BigInt {
    match v.sign() {
        Sign::NoSign => BigInt::zero(),
        Sign::Plus => v >> shift,
        Sign::Minus => -((-v) >> shift),
    }
}

/// A complex scalar with dyadic fixed-point components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedComplex {
    pub re: FixedReal,
    pub im: FixedReal,
}

impl FixedComplex {
    pub fn zero(p: u32) -> Self {
        Self { re: FixedReal::zero(p), im: FixedReal::zero(p) }
    }

    pub fn one(p: u32) -> Self {
        Self { re: FixedReal::one(p), im: FixedReal::zero(p) }
    }

    pub fn new(re: FixedReal, im: FixedReal) -> Self {
        assert_eq!(re.precision(), im.precision(), "component precision mismatch");
        Self { re, im }
    }

    pub fn from_real(re: FixedReal) -> Self {
        let p = re.precision();
        Self { re, im: FixedReal::zero(p) }
    }

    pub fn precision(&self) -> u32 {
        self.re.precision()
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { re: self.re.add(&other.re), im: self.im.add(&other.im) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { re: self.re.sub(&other.re), im: self.im.sub(&other.im) }
    }

    pub fn neg(&self) -> Self {
        Self { re: self.re.neg(), im: self.im.neg() }
    }

    /// Componentwise error below `2^-(p-1)` (two truncated products each).
    pub fn mul(&self, other: &Self) -> Self {
        let re = self.re.mul(&other.re).sub(&self.im.mul(&other.im));
        let im = self.re.mul(&other.im).add(&self.im.mul(&other.re));
        Self { re, im }
    }

    pub fn conj(&self) -> Self {
        Self { re: self.re.clone(), im: self.im.neg() }
    }

    pub fn modulus_squared(&self) -> FixedReal {
        self.re.mul(&self.re).add(&self.im.mul(&self.im))
    }

    pub fn modulus(&self) -> FixedReal {
        // Exact integer route: sqrt((mr^2 + mi^2) << p) avoids the truncation
        // in modulus_squared, keeping the error under 2^-(p-2).
        let m = self.re.mantissa() * self.re.mantissa() + self.im.mantissa() * self.im.mantissa();
        // m is at scale 2^-2p, so its integer sqrt is at scale 2^-p already.
        FixedReal::from_mantissa(BigInt::from(m.magnitude().sqrt()), self.precision())
    }

    /// `|self| <= num/den`, exact: compares squared moduli in integers.
    pub fn modulus_le_ratio(&self, num: &BigUint, den: &BigUint) -> bool {
        let p = self.precision();
        let sq = self.re.mantissa().magnitude() * self.re.mantissa().magnitude()
            + self.im.mantissa().magnitude() * self.im.mantissa().magnitude();
        &sq * (den * den) <= (num * num) << (2 * p as u64)
    }

    /// Modulus of an integer bound: `|self| <= 2^k`.
    pub fn modulus_le_pow2(&self, k: u32) -> bool {
        let p = self.precision();
        let sq = self.re.mantissa().magnitude() * self.re.mantissa().magnitude()
            + self.im.mantissa().magnitude() * self.im.mantissa().magnitude();
        sq <= BigUint::one() << (2 * (k + p) as u64)
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

struct TrigConsts {
    half_pi: BigUint,
    quarter_pi: BigUint,
    two_pi: BigUint,
}

static TRIG_CONSTS: OnceLock<Mutex<HashMap<u32, &'static TrigConsts>>> = OnceLock::new();

/// `arctan(1/x) * 2^w`, floor, by the integer Gregory series.
fn atan_inv_fix(x: u64, w: u64) -> BigUint {
    let one = BigUint::one() << w;
    let x2 = BigUint::from(x) * BigUint::from(x);
    let mut term = &one / BigUint::from(x);
    let mut acc = term.clone();
    let mut k = 1u64;
    let mut positive = true;
    while !term.is_zero() {
        term /= &x2;
        k += 2;
        positive = !positive;
        let t = &term / BigUint::from(k);
        if positive {
            acc += &t;
        } else {
            acc -= &t;
        }
    }
    acc
}

/// `pi * 2^w` via the Machin formula; error a few ulps at `w` bits, so we
/// compute with 32 extra bits and shift down.
fn pi_fix(w: u32) -> BigUint {
    let ww = w as u64 + 32;
    let v = atan_inv_fix(5, ww) * 16u32 - atan_inv_fix(239, ww) * 4u32;
    v >> 32
}

fn trig_consts(w: u32) -> &'static TrigConsts {
    let map = TRIG_CONSTS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().unwrap();
    if let Some(c) = guard.get(&w) {
        return c;
    }
    let pi = pi_fix(w + 2);
    let consts = Box::leak(Box::new(TrigConsts {
        half_pi: &pi >> 3,
        quarter_pi: &pi >> 4,
        two_pi: &pi >> 1,
    }));
    guard.insert(w, &*consts);
    consts
}

/// Number of grid angles `i * 2^-xi_exp` in `[0, 2*pi)`.
pub fn grid_point_count(xi_exp: i32) -> BigUint {
    let w = (xi_exp.max(0) as u32) + 64;
    let two_pi = &trig_consts(w).two_pi;
    (two_pi >> (w as i64 - xi_exp as i64) as u64) + 1u32
}

fn mul_fix_u(a: &BigUint, b: &BigUint, w: u32) -> BigUint {
    (a * b) >> w
}

/// Taylor series for sin and cos of `r * 2^-w`, valid for `r` in `[0, ~1)`.
fn sin_cos_series(r: &BigUint, w: u32) -> (BigUint, BigUint) {
    let one = BigUint::one() << w;
    let r2 = mul_fix_u(r, r, w);
    // cos
    let mut cos_acc = BigInt::from(one.clone());
    let mut term = one.clone();
    let mut k = 0u64;
    let mut positive = true;
    while !term.is_zero() {
        term = mul_fix_u(&term, &r2, w) / ((k + 1) * (k + 2));
        k += 2;
        positive = !positive;
        if positive {
            cos_acc += BigInt::from(term.clone());
        } else {
            cos_acc -= BigInt::from(term.clone());
        }
    }
    // sin
    let mut sin_acc = BigInt::from(r.clone());
    let mut term = r.clone();
    let mut k = 1u64;
    let mut positive = true;
    while !term.is_zero() {
        term = mul_fix_u(&term, &r2, w) / ((k + 1) * (k + 2));
        k += 2;
        positive = !positive;
        if positive {
            sin_acc += BigInt::from(term.clone());
        } else {
            sin_acc -= BigInt::from(term.clone());
        }
    }
    let clamp = |v: BigInt| -> BigUint {
        if v.is_negative() {
            BigUint::zero()
        } else {
            v.magnitude().clone()
        }
    };
    (clamp(sin_acc), clamp(cos_acc))
}

/// Cosine and sine of the grid angle `k * 2^-xi_exp`, each within `2^-p` of
/// the exact value. Deterministic: identical inputs give identical bits.
pub fn trig_pair(k: &BigUint, xi_exp: i32, ctx: &PrecisionContext) -> (FixedReal, FixedReal) {
    let p = ctx.p;
    let w = ctx.working_bits();
    assert!(w as i64 >= xi_exp as i64, "working precision below angle grid");
    let consts = trig_consts(w);
    let theta = k << (w as i64 - xi_exp as i64) as u64;
    assert!(theta < consts.two_pi, "grid angle index out of [0, 2*pi) range");

    let quad = (&theta / &consts.half_pi).to_u64().expect("quadrant fits u64");
    let mut r = &theta - &consts.half_pi * quad;
    // Fold [pi/4, pi/2) onto [0, pi/4] through the co-function identity.
    let swapped = r > consts.quarter_pi;
    if swapped {
        r = &consts.half_pi - &r;
    }
    let (s, c) = sin_cos_series(&r, w);
    let (sin_r, cos_r) = if swapped { (c, s) } else { (s, c) };
    let (cos_m, sin_m): (BigInt, BigInt) = match quad % 4 {
        0 => (cos_r.into(), sin_r.into()),
        1 => (-BigInt::from(sin_r), cos_r.into()),
        2 => (-BigInt::from(cos_r), -BigInt::from(sin_r)),
        _ => (sin_r.into(), -BigInt::from(cos_r)),
    };
    // Round to nearest at p bits: the guard-bit error budget then keeps the
    // total under 2^-p.
    let round = |m: BigInt| -> FixedReal {
        let shift = (w - p) as u64;
        let half = BigInt::one() << (shift - 1);
        let m = if m.is_negative() { -((-m + half) >> shift) } else { (m + half) >> shift };
        FixedReal::from_mantissa(m, p)
    };
    (round(cos_m), round(sin_m))
}

/// Truncate an exact rational onto the `2^-p` grid, toward zero.
pub fn truncate_ratio(num: &BigInt, den: &BigInt, ctx: &PrecisionContext) -> FixedReal {
    FixedReal::from_ratio(num, den, ctx.p)
}

/// `1/sqrt(2)` truncated toward zero at precision `p` (the Hadamard entry).
pub fn inv_sqrt2(p: u32) -> FixedReal {
    // floor(2^p / sqrt(2)) = floor(sqrt(2^(2p+1)) / 2), computed exactly.
    let m = (BigUint::one() << (2 * p as u64 + 1)).sqrt();
    FixedReal::from_mantissa(BigInt::from(m >> 1), p)
}

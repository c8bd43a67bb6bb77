//! Extended-range reals: `mantissa * 2^exp2` with an `i64` exponent.
//!
//! Scale and speed densities of the OU and Feller models span hundreds of
//! decades across the state interval; values are carried in this form until a
//! final, checked conversion to `f64`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// A real number `mantissa * 2^exp2`. Nonzero values are kept normalized with
/// `|mantissa|` in `[1, 2)`; zero is stored as `(0.0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledReal {
    mantissa: f64,
    exp2: i64,
}

impl ScaledReal {
    pub const ZERO: ScaledReal = ScaledReal {
        mantissa: 0.0,
        exp2: 0,
    };
    pub const ONE: ScaledReal = ScaledReal {
        mantissa: 1.0,
        exp2: 0,
    };

    pub fn new(mantissa: f64, exp2: i64) -> Self {
        let (m, e) = frexp(mantissa);
        if m == 0.0 {
            return Self::ZERO;
        }
        Self {
            mantissa: m,
            exp2: exp2 + e,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        Self::new(v, 0)
    }

    /// `exp(log_value)` without leaving the representable range.
    pub fn from_ln(log_value: f64) -> Self {
        if log_value == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        let e = (log_value / std::f64::consts::LN_2).floor();
        let m = (log_value - e * std::f64::consts::LN_2).exp();
        Self::new(m, e as i64)
    }

    pub fn mantissa(&self) -> f64 {
        self.mantissa
    }

    pub fn exp2(&self) -> i64 {
        self.exp2
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    pub fn signum(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.mantissa.signum()
        }
    }

    pub fn abs(self) -> Self {
        Self {
            mantissa: self.mantissa.abs(),
            exp2: self.exp2,
        }
    }

    /// Natural log of `|self|`.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.mantissa.abs().ln() + self.exp2 as f64 * std::f64::consts::LN_2
    }

    /// Checked conversion: fails with [`Error::Overflow`] instead of returning infinity.
    pub fn to_f64(&self) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        if self.exp2 > 1023 {
            return Err(Error::Overflow {
                log_value: self.ln_abs(),
            });
        }
        Ok(ldexp(self.mantissa, self.exp2))
    }

    /// Lossy conversion: underflows to 0, saturates to +-inf.
    pub fn to_f64_lossy(&self) -> f64 {
        if self.exp2 > 1100 {
            return self.mantissa.signum() * f64::INFINITY;
        }
        ldexp(self.mantissa, self.exp2)
    }

    pub fn recip(self) -> Self {
        Self::new(1.0 / self.mantissa, -self.exp2)
    }

    pub fn div(self, other: Self) -> Self {
        Self::new(self.mantissa / other.mantissa, self.exp2 - other.exp2)
    }

    pub fn scale(self, factor: f64) -> Self {
        Self::new(self.mantissa * factor, self.exp2)
    }

    /// `|a - b| / max(|a|, |b|)`, 0 when both vanish.
    pub fn rel_diff(a: Self, b: Self) -> f64 {
        let m = if a.abs() > b.abs() { a.abs() } else { b.abs() };
        if m.is_zero() {
            return 0.0;
        }
        (a - b).abs().div(m).to_f64_lossy()
    }
}

impl Default for ScaledReal {
    fn default() -> Self {
        Self::ZERO
    }
}

impl From<f64> for ScaledReal {
    fn from(v: f64) -> Self {
        Self::from_f64(v)
    }
}

impl Mul for ScaledReal {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.mantissa * rhs.mantissa, self.exp2 + rhs.exp2)
    }
}

impl Add for ScaledReal {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.exp2 >= rhs.exp2 {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let shift = small.exp2 - big.exp2;
        if shift < -1100 {
            return big;
        }
        Self::new(big.mantissa + ldexp(small.mantissa, shift), big.exp2)
    }
}

impl Neg for ScaledReal {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            mantissa: -self.mantissa,
            exp2: self.exp2,
        }
    }
}

impl Sub for ScaledReal {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl PartialOrd for ScaledReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let d = *self - *other;
        d.mantissa.partial_cmp(&0.0)
    }
}

impl fmt::Display for ScaledReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let log10 = self.ln_abs() / std::f64::consts::LN_10;
        let dec = log10.floor();
        let m = self.signum() * 10f64.powf(log10 - dec);
        write!(f, "{m:.15}e{dec}")
    }
}

/// Sum in fixed pairwise order; result is independent of how callers chunk work.
pub fn pairwise_sum(values: &[ScaledReal]) -> ScaledReal {
    match values.len() {
        0 => ScaledReal::ZERO,
        1 => values[0],
        n => {
            let (l, r) = values.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

pub(crate) fn frexp(v: f64) -> (f64, i64) {
    if v == 0.0 || !v.is_finite() {
        return (if v.is_finite() { 0.0 } else { v }, 0);
    }
    let bits = v.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    if raw_exp == 0 {
        // subnormal
        let (m, e) = frexp(v * 2f64.powi(64));
        return (m, e - 64);
    }
    let e = raw_exp - 1023;
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1023 << 52));
    (m, e)
}

pub(crate) fn ldexp(m: f64, e: i64) -> f64 {
    if e > 2000 {
        return m * f64::INFINITY;
    }
    if e < -2200 {
        return 0.0 * m;
    }
    let mut x = m;
    let mut e = e;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

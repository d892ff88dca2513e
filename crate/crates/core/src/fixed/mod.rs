//! Deterministic 18-decimal fixed-point arithmetic.
//!
//! [`FixedDec`] stores a signed 256-bit mantissa on the `10^-18` grid. Every
//! operation is exact integer arithmetic followed by one rounding step
//! (half away from zero unless a [`Rounding`] is passed explicitly), and
//! every overflow is reported as a [`MathError`] instead of wrapping.
//!
//! A single reserved value, [`FixedDec::INF`], stands for "unbounded". It is
//! only produced for the health factor of a debt-free position; arithmetic
//! on it is rejected.

mod wide;

use std::fmt;
use std::str::FromStr;

use ethnum::{I256, U256};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use wide::Rounding;

const SCALE_U: U256 = U256::new(1_000_000_000_000_000_000);
const SCALE_I: I256 = I256::new(1_000_000_000_000_000_000);

/// Number of fractional decimal digits.
pub const DECIMALS: u32 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MathError {
    #[error("arithmetic overflow")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("operation on the unbounded sentinel")]
    NonFinite,
    #[error("square root of a negative value")]
    NegativeSqrt,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseFixedError {
    #[error("empty decimal string")]
    Empty,
    #[error("invalid character {0:?} in decimal string")]
    InvalidChar(char),
    #[error("more than 18 fractional digits")]
    TooPrecise,
    #[error("decimal value out of range")]
    OutOfRange,
}

/// Signed fixed-point decimal with 18 fractional digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FixedDec(I256);

impl FixedDec {
    pub const ZERO: Self = Self(I256::ZERO);
    pub const ONE: Self = Self(SCALE_I);
    /// Smallest positive value, one unit on the `10^-18` grid.
    pub const ULP: Self = Self(I256::ONE);
    /// Unbounded sentinel (health factor of a debt-free position).
    pub const INF: Self = Self(I256::MAX);

    pub const fn from_raw(raw: I256) -> Self {
        Self(raw)
    }

    pub const fn raw(self) -> I256 {
        self.0
    }

    pub fn from_integer(n: i128) -> Self {
        // |n| < 2^127 keeps n * 10^18 far inside the 255-bit range.
        Self(I256::new(n) * SCALE_I)
    }

    /// Truncates toward zero. `None` for the sentinel or when the integer
    /// part does not fit an `i128`.
    pub fn to_integer(self) -> Option<i128> {
        if self.is_inf() {
            return None;
        }
        let q = self.0 / SCALE_I;
        i128::try_from(q).ok()
    }

    /// `num / den` rounded half away from zero. Panics if `den == 0`; meant
    /// for literal constants.
    pub fn from_ratio(num: i128, den: i128) -> Self {
        Self::from_integer(num)
            .div(Self::from_integer(den))
            .expect("from_ratio with a zero denominator")
    }

    pub const fn is_inf(self) -> bool {
        // I256 has no const eq; compare words.
        let (hi, lo) = self.0.into_words();
        hi == i128::MAX && lo == -1
    }

    pub fn is_zero(self) -> bool {
        self.0 == I256::ZERO
    }

    pub fn is_positive(self) -> bool {
        self.0 > I256::ZERO
    }

    pub fn is_negative(self) -> bool {
        self.0 < I256::ZERO
    }

    pub fn abs(self) -> Self {
        Self(self.0.abs())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Result<Self, MathError> {
        self.finite()?;
        Ok(Self(-self.0))
    }

    fn finite(self) -> Result<Self, MathError> {
        if self.is_inf() || self.0 == I256::MIN {
            Err(MathError::NonFinite)
        } else {
            Ok(self)
        }
    }

    fn checked(raw: Option<I256>) -> Result<Self, MathError> {
        match raw {
            Some(r) if r != I256::MAX && r != I256::MIN => Ok(Self(r)),
            _ => Err(MathError::Overflow),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Self) -> Result<Self, MathError> {
        self.finite()?;
        rhs.finite()?;
        Self::checked(self.0.checked_add(rhs.0))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: Self) -> Result<Self, MathError> {
        self.finite()?;
        rhs.finite()?;
        Self::checked(self.0.checked_sub(rhs.0))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Self) -> Result<Self, MathError> {
        self.mul_div_rounded(rhs, Self::ONE, Rounding::HalfAwayFromZero)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(self, rhs: Self) -> Result<Self, MathError> {
        self.mul_div_rounded(Self::ONE, rhs, Rounding::HalfAwayFromZero)
    }

    /// `self * num / den` with one rounding step, half away from zero.
    pub fn mul_div(self, num: Self, den: Self) -> Result<Self, MathError> {
        self.mul_div_rounded(num, den, Rounding::HalfAwayFromZero)
    }

    pub fn mul_rounded(self, rhs: Self, rounding: Rounding) -> Result<Self, MathError> {
        self.mul_div_rounded(rhs, Self::ONE, rounding)
    }

    pub fn div_rounded(self, rhs: Self, rounding: Rounding) -> Result<Self, MathError> {
        self.mul_div_rounded(Self::ONE, rhs, rounding)
    }

    pub fn mul_div_rounded(self, num: Self, den: Self, rounding: Rounding) -> Result<Self, MathError> {
        self.finite()?;
        num.finite()?;
        den.finite()?;
        if den.is_zero() {
            return Err(MathError::DivisionByZero);
        }
        let negative = self.is_negative() ^ num.is_negative() ^ den.is_negative();
        // Raw mantissas carry one factor of 10^18 each: (a*b/S) / (c/S) = a*b/c.
        let magnitude = wide::mul_div(
            self.0.unsigned_abs(),
            num.0.unsigned_abs(),
            den.0.unsigned_abs(),
            rounding,
        )
        .ok_or(MathError::Overflow)?;
        let signed = magnitude.as_i256();
        if signed.is_negative() {
            return Err(MathError::Overflow);
        }
        Self::checked(Some(if negative { -signed } else { signed }))
    }

    /// Multiplies by a plain integer count (seconds, iterations).
    pub fn mul_int(self, n: u64) -> Result<Self, MathError> {
        self.finite()?;
        Self::checked(self.0.checked_mul(I256::from(n)))
    }

    /// `self^n` by repeated squaring; each product rounds half away from zero.
    pub fn pow_int(self, mut n: u64) -> Result<Self, MathError> {
        self.finite()?;
        let mut base = self;
        let mut acc = Self::ONE;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(base)?;
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(base)?;
            }
        }
        Ok(acc)
    }

    /// Square root rounded down onto the grid (Newton on the mantissa).
    pub fn sqrt(self) -> Result<Self, MathError> {
        self.finite()?;
        if self.is_negative() {
            return Err(MathError::NegativeSqrt);
        }
        let scaled = self.0.unsigned_abs().checked_mul(SCALE_U).ok_or(MathError::Overflow)?;
        Ok(Self(wide::isqrt(scaled).as_i256()))
    }

    pub fn min(self, other: Self) -> Self {
        std::cmp::min(self, other)
    }

    pub fn max(self, other: Self) -> Self {
        std::cmp::max(self, other)
    }

    /// Distance in grid units; saturates at `u128::MAX`.
    pub fn ulps_from(self, other: Self) -> u128 {
        let diff = if self.0 >= other.0 {
            self.0.wrapping_sub(other.0).as_u256()
        } else {
            other.0.wrapping_sub(self.0).as_u256()
        };
        u128::try_from(diff).unwrap_or(u128::MAX)
    }

    pub fn checked_sum<I: IntoIterator<Item = Self>>(iter: I) -> Result<Self, MathError> {
        iter.into_iter().try_fold(Self::ZERO, Self::add)
    }

    /// Rounds half away from zero to `dp` fractional digits.
    pub fn round_dp(self, dp: u32) -> Self {
        if self.is_inf() || dp >= DECIMALS {
            return self;
        }
        let unit = I256::from(10u8).pow(DECIMALS - dp);
        let half = unit / 2;
        let rem = self.0 % unit;
        let down = self.0 - rem;
        Self(if rem.abs() >= half { down + unit * rem.signum() } else { down })
    }
}

impl fmt::Display for FixedDec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            return f.write_str("inf");
        }
        let mag = self.0.unsigned_abs();
        let int = mag / SCALE_U;
        let frac = mag % SCALE_U;
        if self.is_negative() {
            f.write_str("-")?;
        }
        write!(f, "{int}")?;
        if frac != U256::ZERO {
            let digits = format!("{:018}", frac.as_u128());
            write!(f, ".{}", digits.trim_end_matches('0'))?;
        }
        Ok(())
    }
}

impl fmt::Debug for FixedDec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FixedDec({self})")
    }
}

impl FromStr for FixedDec {
    type Err = ParseFixedError;

    /// Accepts `[+-]digits[.digits]`, `_` separators between digits, and
    /// the literal `inf`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "inf" {
            return Ok(Self::INF);
        }
        let (negative, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            Some(_) => (false, s),
            None => return Err(ParseFixedError::Empty),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (body, None),
        };
        if int_part.is_empty() && frac_part.is_none_or(str::is_empty) {
            return Err(ParseFixedError::Empty);
        }

        let ten = U256::new(10);
        let mut int = U256::ZERO;
        for c in int_part.chars() {
            match c {
                '_' => continue,
                '0'..='9' => {
                    int = int
                        .checked_mul(ten)
                        .and_then(|v| v.checked_add(U256::new(c as u128 - '0' as u128)))
                        .ok_or(ParseFixedError::OutOfRange)?;
                }
                other => return Err(ParseFixedError::InvalidChar(other)),
            }
        }

        let mut frac = 0u128;
        let mut digits = 0u32;
        for c in frac_part.unwrap_or("").chars() {
            match c {
                '_' => continue,
                '0'..='9' => {
                    digits += 1;
                    if digits > DECIMALS {
                        return Err(ParseFixedError::TooPrecise);
                    }
                    frac = frac * 10 + (c as u128 - '0' as u128);
                }
                other => return Err(ParseFixedError::InvalidChar(other)),
            }
        }
        let frac = frac * 10u128.pow(DECIMALS - digits);

        let mag = int
            .checked_mul(SCALE_U)
            .and_then(|v| v.checked_add(U256::new(frac)))
            .ok_or(ParseFixedError::OutOfRange)?;
        let signed = mag.as_i256();
        if signed.is_negative() || signed == I256::MAX {
            return Err(ParseFixedError::OutOfRange);
        }
        Ok(Self(if negative { -signed } else { signed }))
    }
}

impl Serialize for FixedDec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FixedDec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FixedVisitor;

        impl Visitor<'_> for FixedVisitor {
            type Value = FixedDec;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal string or an integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<FixedDec, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<FixedDec, E> {
                Ok(FixedDec::from_integer(v.into()))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<FixedDec, E> {
                Ok(FixedDec::from_integer(v.into()))
            }
        }

        deserializer.deserialize_any(FixedVisitor)
    }
}

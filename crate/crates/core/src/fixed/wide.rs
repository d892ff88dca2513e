//! Unsigned 256-bit helpers with a 512-bit intermediate for `x * y / d`.

use ethnum::U256;

/// How the final quotient of a scaled operation is rounded, measured on the
/// magnitude of the exact result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rounding {
    /// Ties and above move away from zero.
    HalfAwayFromZero,
    /// Truncate toward zero.
    TowardZero,
    /// Any non-zero remainder moves away from zero.
    AwayFromZero,
}

fn widening_mul(x: U256, y: U256) -> (U256, U256) {
    let (x1, x0) = x.into_words();
    let (y1, y0) = y.into_words();
    let p00 = U256::new(x0) * U256::new(y0);
    let p01 = U256::new(x0) * U256::new(y1);
    let p10 = U256::new(x1) * U256::new(y0);
    let p11 = U256::new(x1) * U256::new(y1);

    let (mid, mid_carry) = p01.overflowing_add(p10);
    let (lo, lo_carry) = p00.overflowing_add(mid << 128);
    let mut hi = p11 + (mid >> 128);
    if mid_carry {
        hi += U256::ONE << 128;
    }
    if lo_carry {
        hi += U256::ONE;
    }
    (hi, lo)
}

/// Divides the 512-bit value `hi:lo` by `d`. Requires `hi < d` so the
/// quotient fits in 256 bits.
fn div_wide(hi: U256, lo: U256, d: U256) -> (U256, U256) {
    debug_assert!(hi < d);
    let mut rem = hi;
    let mut quot = U256::ZERO;
    for bit in (0..256u32).rev() {
        let carry = (rem >> 255u32) == U256::ONE;
        rem = (rem << 1u32) | ((lo >> bit) & U256::ONE);
        quot <<= 1u32;
        if carry || rem >= d {
            rem = rem.wrapping_sub(d);
            quot |= U256::ONE;
        }
    }
    (quot, rem)
}

fn apply_rounding(quot: U256, rem: U256, d: U256, rounding: Rounding) -> Option<U256> {
    let bump = match rounding {
        Rounding::TowardZero => false,
        Rounding::AwayFromZero => rem != U256::ZERO,
        Rounding::HalfAwayFromZero => rem >= d - rem,
    };
    if bump {
        quot.checked_add(U256::ONE)
    } else {
        Some(quot)
    }
}

/// `x * y / d` with a single rounding step. `None` on overflow or `d == 0`.
pub fn mul_div(x: U256, y: U256, d: U256, rounding: Rounding) -> Option<U256> {
    if d == U256::ZERO {
        return None;
    }
    if let Some(product) = x.checked_mul(y) {
        return apply_rounding(product / d, product % d, d, rounding);
    }
    let (hi, lo) = widening_mul(x, y);
    if hi >= d {
        return None;
    }
    let (quot, rem) = div_wide(hi, lo, d);
    apply_rounding(quot, rem, d, rounding)
}

/// Integer square root, rounded down, by Newton iteration.
pub fn isqrt(n: U256) -> U256 {
    if n < U256::new(2) {
        return n;
    }
    let bits = 256 - n.leading_zeros();
    let mut x = U256::ONE << bits.div_ceil(2);
    loop {
        let y = (x + n / x) >> 1u32;
        if y >= x {
            return x;
        }
        x = y;
    }
}

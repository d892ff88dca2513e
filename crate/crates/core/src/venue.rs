//! Trading venues with price impact.
//!
//! A constant-product venue keeps `reserve_base * reserve_quote` from
//! decreasing: the fee stays in the pool and the output reserve is rounded
//! up. A fixed-price venue models unlimited depth: trades execute at the
//! quoted price and never move it.

use serde::{Deserialize, Serialize};

use crate::fixed::{FixedDec, MathError, Rounding};
use crate::pool::AssetId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VenueError {
    #[error("trade amount must be positive, got {0}")]
    InvalidAmount(FixedDec),
    #[error("venue {venue} lacks depth: output {requested} against reserve {reserve}")]
    InsufficientDepth { venue: String, requested: FixedDec, reserve: FixedDec },
    #[error("target price must be positive, got {0}")]
    InvalidTarget(FixedDec),
    #[error("invalid venue {venue}: {reason}")]
    InvalidConfig { venue: String, reason: String },
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Base in, quote out. Lowers the spot price.
    SellBase,
    /// Quote in, base out. Raises the spot price.
    BuyBase,
}

impl Direction {
    pub fn asset_in(self, venue: &Venue) -> &AssetId {
        match self {
            Direction::SellBase => &venue.base,
            Direction::BuyBase => &venue.quote,
        }
    }

    pub fn asset_out(self, venue: &Venue) -> &AssetId {
        match self {
            Direction::SellBase => &venue.quote,
            Direction::BuyBase => &venue.base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    ConstantProduct,
    /// Executes every trade at `price`, limited only by the reserves held.
    FixedPrice { price: FixedDec },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub direction: Direction,
    pub amount_in: FixedDec,
    pub amount_out: FixedDec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Venue {
    pub id: String,
    pub base: AssetId,
    pub quote: AssetId,
    pub reserve_base: FixedDec,
    pub reserve_quote: FixedDec,
    pub fee: FixedDec,
    pub curve: Curve,
}

impl Venue {
    pub fn constant_product(
        id: impl Into<String>,
        base: AssetId,
        quote: AssetId,
        reserve_base: FixedDec,
        reserve_quote: FixedDec,
        fee: FixedDec,
    ) -> Result<Self, VenueError> {
        let v = Self { id: id.into(), base, quote, reserve_base, reserve_quote, fee, curve: Curve::ConstantProduct };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), VenueError> {
        let fail = |reason: String| Err(VenueError::InvalidConfig { venue: self.id.clone(), reason });
        if self.base == self.quote {
            return fail(format!("base and quote are both {}", self.base));
        }
        if !self.reserve_base.is_positive() || !self.reserve_quote.is_positive() {
            return fail("reserves must be positive".into());
        }
        if self.reserve_base.is_inf() || self.reserve_quote.is_inf() {
            return fail("reserves must be finite".into());
        }
        if self.fee.is_negative() || self.fee >= FixedDec::ONE {
            return fail(format!("fee {} outside [0, 1)", self.fee));
        }
        if let Curve::FixedPrice { price } = self.curve {
            if !price.is_positive() || price.is_inf() {
                return fail(format!("fixed price {price} must be positive"));
            }
        }
        Ok(())
    }

    /// Multiplies both reserves by `k`; spot is unchanged.
    pub fn scaled(&self, k: FixedDec) -> Result<Self, VenueError> {
        let mut v = self.clone();
        v.reserve_base = v.reserve_base.mul(k)?;
        v.reserve_quote = v.reserve_quote.mul(k)?;
        v.validate()?;
        Ok(v)
    }

    /// Quote units per base unit.
    pub fn quote_spot(&self) -> Result<FixedDec, VenueError> {
        Ok(match self.curve {
            Curve::ConstantProduct => self.reserve_quote.div(self.reserve_base)?,
            Curve::FixedPrice { price } => price,
        })
    }

    fn reserves(&self, direction: Direction) -> (FixedDec, FixedDec) {
        match direction {
            Direction::SellBase => (self.reserve_base, self.reserve_quote),
            Direction::BuyBase => (self.reserve_quote, self.reserve_base),
        }
    }

    fn set_reserves(&mut self, direction: Direction, r_in: FixedDec, r_out: FixedDec) {
        match direction {
            Direction::SellBase => (self.reserve_base, self.reserve_quote) = (r_in, r_out),
            Direction::BuyBase => (self.reserve_quote, self.reserve_base) = (r_in, r_out),
        }
    }

    /// Output of a trade without executing it.
    pub fn quote_swap(&self, direction: Direction, amount_in: FixedDec) -> Result<FixedDec, VenueError> {
        Ok(self.clone().swap(direction, amount_in)?.amount_out)
    }

    pub fn swap(&mut self, direction: Direction, amount_in: FixedDec) -> Result<Fill, VenueError> {
        if !amount_in.is_positive() {
            return Err(VenueError::InvalidAmount(amount_in));
        }
        let effective = amount_in.mul_rounded(FixedDec::ONE.sub(self.fee)?, Rounding::TowardZero)?;
        let (r_in, r_out) = self.reserves(direction);
        let new_in = r_in.add(amount_in)?;
        let amount_out = match self.curve {
            Curve::ConstantProduct => {
                let new_out = r_in.mul_div_rounded(r_out, r_in.add(effective)?, Rounding::AwayFromZero)?;
                r_out.sub(new_out)?
            }
            Curve::FixedPrice { price } => match direction {
                Direction::SellBase => effective.mul_rounded(price, Rounding::TowardZero)?,
                Direction::BuyBase => effective.div_rounded(price, Rounding::TowardZero)?,
            },
        };
        if amount_out >= r_out {
            return Err(VenueError::InsufficientDepth { venue: self.id.clone(), requested: amount_out, reserve: r_out });
        }
        self.set_reserves(direction, new_in, r_out.sub(amount_out)?);
        Ok(Fill { direction, amount_in, amount_out })
    }

    /// Trade size that moves a constant-product spot to `target`.
    ///
    /// With `r` the input-side reserve, `k` the invariant and `f` the fee,
    /// the input `x` solves `(1-f)x^2 + r(2-f)x + r^2 - C = 0` where
    /// `C = k / target` when selling base and `k * target` when buying it.
    pub fn rebalance_size(&self, target: FixedDec) -> Result<Option<(Direction, FixedDec)>, VenueError> {
        if !target.is_positive() || target.is_inf() {
            return Err(VenueError::InvalidTarget(target));
        }
        if self.curve != Curve::ConstantProduct {
            return Ok(None);
        }
        let spot = self.quote_spot()?;
        let direction = match target.cmp(&spot) {
            std::cmp::Ordering::Equal => return Ok(None),
            std::cmp::Ordering::Less => Direction::SellBase,
            std::cmp::Ordering::Greater => Direction::BuyBase,
        };
        let (rb, rq) = (self.reserve_base, self.reserve_quote);
        let (r, c) = match direction {
            Direction::SellBase => (rb, rb.mul_div(rq, target)?),
            Direction::BuyBase => (rq, rb.mul(rq)?.mul(target)?),
        };
        let f = self.fee;
        let one_minus_f = FixedDec::ONE.sub(f)?;
        let rf = r.mul(f)?;
        let disc = rf.mul(rf)?.add(c.mul(one_minus_f)?.mul_int(4)?)?.sqrt()?;
        let lin = r.mul(FixedDec::from_integer(2).sub(f)?)?;
        let x = disc.sub(lin)?.div(one_minus_f.mul_int(2)?)?;
        if !x.is_positive() {
            return Ok(None);
        }
        Ok(Some((direction, x)))
    }

    /// Executes the swap that syncs spot to `target`. A fixed-price venue
    /// is repriced without trading.
    pub fn arbitrage_rebalance(&mut self, target: FixedDec) -> Result<Option<Fill>, VenueError> {
        if let Curve::FixedPrice { price } = &mut self.curve {
            if !target.is_positive() || target.is_inf() {
                return Err(VenueError::InvalidTarget(target));
            }
            *price = target;
            return Ok(None);
        }
        let Some((direction, x)) = self.rebalance_size(target)? else {
            return Ok(None);
        };
        // The closed form is exact up to sqrt truncation; try neighbouring
        // sizes and keep the one landing closest to the target.
        let mut best: Option<(u128, Venue, Fill)> = None;
        for delta in -2i64..=2 {
            let size = x.add(FixedDec::from_raw(delta.into()))?;
            if !size.is_positive() {
                continue;
            }
            let mut trial = self.clone();
            let Ok(fill) = trial.swap(direction, size) else { continue };
            let miss = trial.quote_spot()?.ulps_from(target);
            if best.as_ref().is_none_or(|(m, _, _)| miss < *m) {
                best = Some((miss, trial, fill));
            }
        }
        match best {
            Some((_, venue, fill)) => {
                *self = venue;
                Ok(Some(fill))
            }
            None => Ok(Some(self.swap(direction, x)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> FixedDec {
        s.parse().unwrap()
    }

    fn pool(base: &str, quote: &str, fee: &str) -> Venue {
        Venue::constant_product("v", "CRV".into(), "USDT".into(), d(base), d(quote), d(fee)).unwrap()
    }

    #[test]
    fn spot_examples() {
        assert_eq!(pool("1000", "1000", "0").quote_spot().unwrap(), d("1"));
        assert_eq!(pool("1100", "909.090909090909090910", "0").quote_spot().unwrap(), d("0.826446280991735537"));
        let v = pool("1234", "567", "0");
        assert_eq!(v.scaled(d("2")).unwrap().quote_spot().unwrap(), v.quote_spot().unwrap());
    }

    #[test]
    fn sell_without_fee() {
        let mut v = pool("1000", "1000", "0");
        let fill = v.swap(Direction::SellBase, d("100")).unwrap();
        // Exact output is 90.90...0909 recurring; the reserve rounds up.
        assert_eq!(fill.amount_out, d("90.909090909090909090"));
        assert_eq!(v.reserve_base, d("1100"));
        assert_eq!(v.reserve_quote, d("909.090909090909090910"));
        assert_eq!(v.quote_spot().unwrap(), d("0.826446280991735537"));
    }

    #[test]
    fn sell_with_fee() {
        let mut v = pool("1000", "1000", "0.003");
        let fill = v.swap(Direction::SellBase, d("100")).unwrap();
        assert_eq!(fill.amount_out, d("90.661089388014913158"));
        assert_eq!(v.reserve_quote, d("909.338910611985086842"));
        assert_eq!(v.reserve_base, d("1100"));
    }

    #[test]
    fn round_trip_recovers_reserves() {
        let mut v = pool("1000", "1000", "0");
        let out = v.swap(Direction::SellBase, d("100")).unwrap().amount_out;
        v.swap(Direction::BuyBase, out).unwrap();
        assert!(v.reserve_base.ulps_from(d("1000")) <= 1);
        assert!(v.reserve_quote.ulps_from(d("1000")) <= 1);
    }

    #[test]
    fn rebalance_examples() {
        let v = pool("1000", "1000", "0");
        assert_eq!(v.clone().arbitrage_rebalance(d("1")).unwrap(), None);

        let (dir, x) = v.rebalance_size(d("0.81")).unwrap().unwrap();
        assert_eq!(dir, Direction::SellBase);
        // 1000 * (1/0.9 - 1) = 111.11...
        assert!(x.ulps_from(d("111.111111111111111111")) <= 2);
        let mut v = v;
        v.arbitrage_rebalance(d("0.81")).unwrap().unwrap();
        assert!(v.quote_spot().unwrap().ulps_from(d("0.81")) <= 1);
    }

    #[test]
    fn errors() {
        let mut v = pool("1000", "1000", "0");
        assert_eq!(v.swap(Direction::SellBase, FixedDec::ZERO), Err(VenueError::InvalidAmount(FixedDec::ZERO)));
        assert!(matches!(v.arbitrage_rebalance(FixedDec::ZERO), Err(VenueError::InvalidTarget(_))));
        assert!(Venue::constant_product("v", "A".into(), "A".into(), d("1"), d("1"), d("0")).is_err());
        assert!(Venue::constant_product("v", "A".into(), "B".into(), d("1"), d("1"), d("1")).is_err());
        assert!(Venue::constant_product("v", "A".into(), "B".into(), d("0"), d("1"), d("0")).is_err());

        let mut fixed = pool("10", "10", "0");
        fixed.curve = Curve::FixedPrice { price: d("1") };
        assert!(matches!(fixed.swap(Direction::SellBase, d("10")), Err(VenueError::InsufficientDepth { .. })));
    }

    #[test]
    fn fixed_price_has_no_impact() {
        let mut v = pool("1000000", "1000000", "0");
        v.curve = Curve::FixedPrice { price: d("0.6") };
        let fill = v.swap(Direction::SellBase, d("1000")).unwrap();
        assert_eq!(fill.amount_out, d("600"));
        assert_eq!(v.quote_spot().unwrap(), d("0.6"));
        let fill = v.swap(Direction::BuyBase, d("600")).unwrap();
        assert_eq!(fill.amount_out, d("1000"));
        assert_eq!(v.arbitrage_rebalance(d("0.5")).unwrap(), None);
        assert_eq!(v.quote_spot().unwrap(), d("0.5"));
    }

    fn amount() -> impl Strategy<Value = FixedDec> {
        (1u64..10_000_000_000).prop_map(|n| FixedDec::from_ratio(n.into(), 1000))
    }

    fn fee() -> impl Strategy<Value = FixedDec> {
        (0i128..100).prop_map(|bps| FixedDec::from_ratio(bps, 10_000))
    }

    /// Reserves of at least 1000 tokens: below a few tokens one ulp of
    /// trade size moves spot by more than one ulp.
    fn reserve() -> impl Strategy<Value = FixedDec> {
        (1_000_000u64..10_000_000_000_000).prop_map(|n| FixedDec::from_ratio(n.into(), 1000))
    }

    /// Spot kept within [0.01, 100] so one ulp of base reserve is worth less
    /// than one ulp of price.
    fn venue() -> impl Strategy<Value = Venue> {
        (reserve(), 1i128..10_000, fee()).prop_map(|(b, centi_spot, f)| {
            let q = b.mul(FixedDec::from_ratio(centi_spot, 100)).unwrap();
            Venue::constant_product("v", "B".into(), "Q".into(), b, q, f).unwrap()
        })
    }

    fn k(v: &Venue) -> FixedDec {
        v.reserve_base.mul_rounded(v.reserve_quote, Rounding::TowardZero).unwrap()
    }

    proptest! {
        #[test]
        fn product_never_decreases(mut v in venue(), trades in prop::collection::vec((any::<bool>(), amount()), 1..10)) {
            for (sell, amt) in trades {
                let dir = if sell { Direction::SellBase } else { Direction::BuyBase };
                let before = k(&v);
                if v.swap(dir, amt).is_ok() {
                    prop_assert!(k(&v) >= before);
                    prop_assert!(v.reserve_base.is_positive() && v.reserve_quote.is_positive());
                }
            }
        }

        #[test]
        fn zero_fee_round_trip(b in amount(), q in amount(), x in amount()) {
            let mut v = Venue::constant_product("v", "B".into(), "Q".into(), b, q, FixedDec::ZERO).unwrap();
            let out = v.swap(Direction::SellBase, x).unwrap().amount_out;
            prop_assume!(out.is_positive());
            // The rounded quote reserve is off by < 1 ulp; buying back scales
            // that error by (b + x) / q in the base reserve.
            let amplification = b.add(x).unwrap().div_rounded(q, Rounding::AwayFromZero).unwrap();
            let bound = 1 + amplification.to_integer().unwrap() as u128;
            v.swap(Direction::BuyBase, out).unwrap();
            prop_assert_eq!(v.reserve_quote, q);
            prop_assert!(v.reserve_base.ulps_from(b) <= bound, "{} vs {}", v.reserve_base, b);
            if amplification <= FixedDec::ONE {
                prop_assert!(v.reserve_base.ulps_from(b) <= 1);
            }
        }

        #[test]
        fn impact_is_monotone(v in venue(), x in amount()) {
            let spot = v.quote_spot().unwrap();
            let mut sold = v.clone();
            sold.swap(Direction::SellBase, x).unwrap();
            prop_assert!(sold.quote_spot().unwrap() < spot);
            let mut bought = v.clone();
            bought.swap(Direction::BuyBase, x).unwrap();
            prop_assert!(bought.quote_spot().unwrap() > spot);
        }

        #[test]
        fn deeper_venue_moves_less(v in venue(), x in amount()) {
            let relative = |venue: &Venue| {
                let spot = venue.quote_spot().unwrap();
                let mut after = venue.clone();
                after.swap(Direction::SellBase, x).unwrap();
                spot.sub(after.quote_spot().unwrap()).unwrap().div(spot).unwrap()
            };
            let shallow = relative(&v);
            let deep = relative(&v.scaled(FixedDec::from_integer(2)).unwrap());
            prop_assume!(shallow.is_positive());
            prop_assert!(deep < shallow, "deep {} shallow {}", deep, shallow);
        }

        #[test]
        fn split_sells_never_beat_one_sell(v in venue(), x in amount(), n in 2u64..6) {
            let mut single = v.clone();
            let whole = single.swap(Direction::SellBase, x).unwrap().amount_out;
            let part = x.div_rounded(FixedDec::from_integer(n.into()), Rounding::TowardZero).unwrap();
            prop_assume!(part.is_positive());
            let mut split = v.clone();
            let mut total = FixedDec::ZERO;
            for _ in 0..n {
                total = total.add(split.swap(Direction::SellBase, part).unwrap().amount_out).unwrap();
            }
            if v.fee.is_zero() {
                prop_assert!(total <= whole.add(FixedDec::from_raw((n as i64).into())).unwrap());
            } else {
                prop_assert!(total < whole);
            }
        }

        #[test]
        fn rebalance_hits_target(v in venue(), num in 1i128..100_000) {
            let target = v.quote_spot().unwrap().mul(FixedDec::from_ratio(num, 10_000)).unwrap();
            prop_assume!(target.is_positive());
            let mut after = v.clone();
            if after.arbitrage_rebalance(target).unwrap().is_some() {
                let spot = after.quote_spot().unwrap();
                prop_assert!(spot.ulps_from(target) <= 1, "spot {} target {}", spot, target);
            }
        }
    }
}

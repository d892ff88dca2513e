//! Utilization-driven interest rates with a single kink.

use serde::{Deserialize, Serialize};

use crate::fixed::{FixedDec, MathError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RateError {
    #[error("utilization {0} outside [0, 1]")]
    Domain(FixedDec),
    #[error("invalid reserve state: {0}")]
    InvalidState(String),
    #[error("invalid rate parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Parameters of the kinked borrow-rate curve. All rates are annualized.
///
/// Construct through [`RateParams::new`] or deserialize; both validate and
/// cache `max_rate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RateParamsDef", into = "RateParamsDef")]
pub struct RateParams {
    r0: FixedDec,
    u_optimal: FixedDec,
    slope1: FixedDec,
    slope2: FixedDec,
    reserve_factor: FixedDec,
    max_rate: FixedDec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateParamsDef {
    #[serde(default)]
    r0: FixedDec,
    u_optimal: FixedDec,
    slope1: FixedDec,
    slope2: FixedDec,
    #[serde(default)]
    reserve_factor: FixedDec,
}

impl TryFrom<RateParamsDef> for RateParams {
    type Error = RateError;

    fn try_from(d: RateParamsDef) -> Result<Self, RateError> {
        RateParams::new(d.r0, d.u_optimal, d.slope1, d.slope2, d.reserve_factor)
    }
}

impl From<RateParams> for RateParamsDef {
    fn from(p: RateParams) -> Self {
        RateParamsDef {
            r0: p.r0,
            u_optimal: p.u_optimal,
            slope1: p.slope1,
            slope2: p.slope2,
            reserve_factor: p.reserve_factor,
        }
    }
}

impl RateParams {
    pub fn new(
        r0: FixedDec,
        u_optimal: FixedDec,
        slope1: FixedDec,
        slope2: FixedDec,
        reserve_factor: FixedDec,
    ) -> Result<Self, RateError> {
        if !(u_optimal.is_positive() && u_optimal < FixedDec::ONE) {
            return Err(RateError::InvalidParams(format!("u_optimal {u_optimal} must lie in (0, 1)")));
        }
        if r0.is_negative() || slope1.is_negative() || slope2.is_negative() {
            return Err(RateError::InvalidParams("rates must be non-negative".into()));
        }
        if reserve_factor.is_negative() || reserve_factor > FixedDec::ONE {
            return Err(RateError::InvalidParams(format!(
                "reserve_factor {reserve_factor} must lie in [0, 1]"
            )));
        }
        let max_rate = r0.add(slope1)?.add(slope2)?;
        Ok(Self { r0, u_optimal, slope1, slope2, reserve_factor, max_rate })
    }

    /// CRV curve on the lending market: r0 = 0, kink at 45 %, slopes 7 % and 300 %.
    pub fn crv() -> Self {
        Self::new(
            FixedDec::ZERO,
            FixedDec::from_ratio(45, 100),
            FixedDec::from_ratio(7, 100),
            FixedDec::from_integer(3),
            FixedDec::ZERO,
        )
        .expect("static preset")
    }

    pub fn with_reserve_factor(self, reserve_factor: FixedDec) -> Result<Self, RateError> {
        Self::new(self.r0, self.u_optimal, self.slope1, self.slope2, reserve_factor)
    }

    pub fn r0(&self) -> FixedDec {
        self.r0
    }
    pub fn u_optimal(&self) -> FixedDec {
        self.u_optimal
    }
    pub fn slope1(&self) -> FixedDec {
        self.slope1
    }
    pub fn slope2(&self) -> FixedDec {
        self.slope2
    }
    pub fn reserve_factor(&self) -> FixedDec {
        self.reserve_factor
    }
    pub fn max_rate(&self) -> FixedDec {
        self.max_rate
    }
}

/// Borrowed share of deposited funds; zero for an empty reserve.
pub fn utilization(total_debt: FixedDec, total_liquidity: FixedDec) -> Result<FixedDec, RateError> {
    if total_debt.is_negative() || total_liquidity.is_negative() {
        return Err(RateError::InvalidState(format!(
            "negative totals (debt {total_debt}, liquidity {total_liquidity})"
        )));
    }
    if total_debt > total_liquidity {
        return Err(RateError::InvalidState(format!(
            "debt {total_debt} exceeds liquidity {total_liquidity}"
        )));
    }
    if total_liquidity.is_zero() {
        return Ok(FixedDec::ZERO);
    }
    Ok(total_debt.div(total_liquidity)?)
}

fn check_domain(u: FixedDec) -> Result<(), RateError> {
    if u.is_negative() || u > FixedDec::ONE {
        return Err(RateError::Domain(u));
    }
    Ok(())
}

/// Annualized variable borrow rate at utilization `u`.
pub fn borrow_rate(u: FixedDec, p: &RateParams) -> Result<FixedDec, RateError> {
    check_domain(u)?;
    let rate = if u <= p.u_optimal {
        p.r0.add(u.mul_div(p.slope1, p.u_optimal)?)?
    } else {
        let excess = u.sub(p.u_optimal)?;
        let span = FixedDec::ONE.sub(p.u_optimal)?;
        p.r0.add(p.slope1)?.add(excess.mul_div(p.slope2, span)?)?
    };
    Ok(rate.min(p.max_rate))
}

/// Rate earned by depositors: `borrow_rate * u * (1 - reserve_factor)`.
pub fn supply_rate(u: FixedDec, p: &RateParams) -> Result<FixedDec, RateError> {
    let kept = FixedDec::ONE.sub(p.reserve_factor)?;
    Ok(borrow_rate(u, p)?.mul(u)?.mul(kept)?)
}

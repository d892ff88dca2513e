use serde::{Deserialize, Serialize};

use super::PoolError;
use crate::fixed::FixedDec;
use crate::rates::{self, RateParams};

/// Seconds per year used to de-annualize rates.
pub const SECONDS_PER_YEAR: u64 = 31_536_000;

fn default_bonus() -> FixedDec {
    FixedDec::from_ratio(5, 100)
}

fn default_close_factor() -> FixedDec {
    FixedDec::from_ratio(1, 2)
}

fn yes() -> bool {
    true
}

/// Risk parameters of one reserve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveConfig {
    pub ltv: FixedDec,
    pub liquidation_threshold: FixedDec,
    #[serde(default = "default_bonus")]
    pub liquidation_bonus: FixedDec,
    #[serde(default = "default_close_factor")]
    pub close_factor: FixedDec,
    pub rate: RateParams,
    #[serde(default = "yes")]
    pub borrowing_enabled: bool,
    #[serde(default)]
    pub frozen: bool,
}

impl ReserveConfig {
    pub fn new(ltv: FixedDec, liquidation_threshold: FixedDec, rate: RateParams) -> Self {
        Self {
            ltv,
            liquidation_threshold,
            liquidation_bonus: default_bonus(),
            close_factor: default_close_factor(),
            rate,
            borrowing_enabled: true,
            frozen: false,
        }
    }

    /// Returns the name of the offending field with a reason.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let unit = |v: FixedDec| !v.is_negative() && v <= FixedDec::ONE;
        if !unit(self.ltv) {
            return Err(("ltv", format!("{} outside [0, 1]", self.ltv)));
        }
        if !unit(self.liquidation_threshold) {
            return Err((
                "liquidation_threshold",
                format!("{} outside [0, 1]", self.liquidation_threshold),
            ));
        }
        if self.ltv > self.liquidation_threshold {
            return Err((
                "ltv",
                format!("{} above liquidation threshold {}", self.ltv, self.liquidation_threshold),
            ));
        }
        if self.liquidation_bonus.is_negative() {
            return Err(("liquidation_bonus", "must be non-negative".into()));
        }
        if !(self.close_factor.is_positive() && self.close_factor <= FixedDec::ONE) {
            return Err(("close_factor", format!("{} outside (0, 1]", self.close_factor)));
        }
        Ok(())
    }
}

/// Live accounting of one reserve.
///
/// `cash` is the token balance held by the pool. Debt is tracked in scaled
/// units against `borrow_index`; `total_liquidity` is always restated as
/// `cash + total_debt`, so available liquidity equals the tokens held.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReserveState {
    pub total_liquidity: FixedDec,
    pub total_debt: FixedDec,
    pub borrow_index: FixedDec,
    pub liquidity_index: FixedDec,
    pub last_accrual: u64,
    pub cash: FixedDec,
    pub scaled_debt: FixedDec,
    pub scaled_deposits: FixedDec,
    /// Scaled deposit claim of the protocol treasury (reserve factor and
    /// rounding remainders).
    pub treasury_scaled: FixedDec,
}

impl ReserveState {
    pub fn new(now: u64) -> Self {
        Self {
            total_liquidity: FixedDec::ZERO,
            total_debt: FixedDec::ZERO,
            borrow_index: FixedDec::ONE,
            liquidity_index: FixedDec::ONE,
            last_accrual: now,
            cash: FixedDec::ZERO,
            scaled_debt: FixedDec::ZERO,
            scaled_deposits: FixedDec::ZERO,
            treasury_scaled: FixedDec::ZERO,
        }
    }

    pub fn available_liquidity(&self) -> FixedDec {
        self.cash
    }

    pub fn utilization(&self) -> Result<FixedDec, PoolError> {
        Ok(rates::utilization(self.total_debt, self.total_liquidity)?)
    }

    pub(crate) fn restate(&mut self) -> Result<(), PoolError> {
        self.total_debt = self.scaled_debt.mul(self.borrow_index)?;
        self.total_liquidity = self.cash.add(self.total_debt)?;
        Ok(())
    }
}

/// Growth factor `1 + rate * dt / year`.
fn linear_factor(rate: FixedDec, dt: u64) -> Result<FixedDec, PoolError> {
    let dt = FixedDec::from_integer(dt.into());
    let year = FixedDec::from_integer(SECONDS_PER_YEAR.into());
    Ok(FixedDec::ONE.add(rate.mul_div(dt, year)?)?)
}

/// Advances both indices from `state.last_accrual` to `now` using the rates
/// implied by the utilization at the start of the interval.
pub fn accrue(state: &ReserveState, now: u64, params: &RateParams) -> Result<ReserveState, PoolError> {
    if now < state.last_accrual {
        return Err(PoolError::InvalidTime { last: state.last_accrual, now });
    }
    let dt = now - state.last_accrual;
    let mut next = state.clone();
    next.last_accrual = now;
    if dt == 0 {
        return Ok(next);
    }

    let u = state.utilization()?;
    let borrow_rate = rates::borrow_rate(u, params)?;
    let supply_rate = rates::supply_rate(u, params)?;
    next.borrow_index = state.borrow_index.mul(linear_factor(borrow_rate, dt)?)?;
    next.liquidity_index = state.liquidity_index.mul(linear_factor(supply_rate, dt)?)?;
    next.restate()?;

    // Depositors' claims grow with the supply rate; whatever debt interest
    // they do not receive becomes a treasury deposit so that the sum of all
    // claims keeps matching total liquidity.
    let claims = next.scaled_deposits.mul(next.liquidity_index)?;
    let gap = next.total_liquidity.sub(claims)?;
    if gap.is_positive() {
        let minted = gap.div(next.liquidity_index)?;
        next.treasury_scaled = next.treasury_scaled.add(minted)?;
        next.scaled_deposits = next.scaled_deposits.add(minted)?;
    }
    Ok(next)
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AccountId, AssetId, PoolError, Prices, Reserve};
use crate::fixed::FixedDec;

/// One account's balances, stored in scaled units.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Position {
    pub account: AccountId,
    #[serde(default)]
    pub scaled_deposits: BTreeMap<AssetId, FixedDec>,
    #[serde(default)]
    pub scaled_debts: BTreeMap<AssetId, FixedDec>,
}

impl Position {
    pub fn new(account: AccountId) -> Self {
        Self { account, ..Self::default() }
    }

    pub fn has_debt(&self) -> bool {
        self.scaled_debts.values().any(|v| v.is_positive())
    }

    pub fn is_empty(&self) -> bool {
        self.scaled_deposits.values().chain(self.scaled_debts.values()).all(|v| v.is_zero())
    }
}

/// Aggregate numéraire values of a position at a given set of prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Valuation {
    pub collateral_value: FixedDec,
    /// Σ collateral value × liquidation threshold.
    pub weighted_collateral: FixedDec,
    /// Σ collateral value × loan-to-value.
    pub borrow_capacity: FixedDec,
    pub debt_value: FixedDec,
}

impl Valuation {
    pub fn of(
        position: &Position,
        reserves: &BTreeMap<AssetId, Reserve>,
        prices: &Prices,
    ) -> Result<Self, PoolError> {
        let mut v = Valuation::default();
        for (asset, scaled) in &position.scaled_deposits {
            if scaled.is_zero() {
                continue;
            }
            let reserve = reserves.get(asset).ok_or_else(|| PoolError::NotFound(asset.clone()))?;
            let value = scaled.mul(reserve.state.liquidity_index)?.mul(prices.get(asset)?)?;
            v.collateral_value = v.collateral_value.add(value)?;
            v.weighted_collateral =
                v.weighted_collateral.add(value.mul(reserve.config.liquidation_threshold)?)?;
            v.borrow_capacity = v.borrow_capacity.add(value.mul(reserve.config.ltv)?)?;
        }
        for (asset, scaled) in &position.scaled_debts {
            if scaled.is_zero() {
                continue;
            }
            let reserve = reserves.get(asset).ok_or_else(|| PoolError::NotFound(asset.clone()))?;
            let value = scaled.mul(reserve.state.borrow_index)?.mul(prices.get(asset)?)?;
            v.debt_value = v.debt_value.add(value)?;
        }
        Ok(v)
    }

    /// `Σ C·l / Σ D`, or [`FixedDec::INF`] when there is no debt.
    pub fn health_factor(&self) -> Result<FixedDec, PoolError> {
        if self.debt_value.is_zero() {
            return Ok(FixedDec::INF);
        }
        Ok(self.weighted_collateral.div(self.debt_value)?)
    }

    /// Debt value not covered by collateral value.
    pub fn shortfall(&self) -> Result<FixedDec, PoolError> {
        Ok(self.debt_value.sub(self.collateral_value)?.max(FixedDec::ZERO))
    }

    /// Remaining borrow capacity; negative when above the LTV limit.
    pub fn borrow_headroom(&self) -> Result<FixedDec, PoolError> {
        Ok(self.borrow_capacity.sub(self.debt_value)?)
    }
}

pub fn health_factor(
    position: &Position,
    reserves: &BTreeMap<AssetId, Reserve>,
    prices: &Prices,
) -> Result<FixedDec, PoolError> {
    Valuation::of(position, reserves, prices)?.health_factor()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadDebtRecord {
    pub account: AccountId,
    pub shortfall_value: FixedDec,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BadDebtReport {
    pub records: Vec<BadDebtRecord>,
    pub total: FixedDec,
}

/// Shortfall of every position whose debt value exceeds its collateral value.
pub fn bad_debt<'a>(
    positions: impl IntoIterator<Item = &'a Position>,
    reserves: &BTreeMap<AssetId, Reserve>,
    prices: &Prices,
    timestamp: u64,
) -> Result<BadDebtReport, PoolError> {
    let mut report = BadDebtReport::default();
    for position in positions {
        let shortfall = Valuation::of(position, reserves, prices)?.shortfall()?;
        if shortfall.is_positive() {
            report.total = report.total.add(shortfall)?;
            report.records.push(BadDebtRecord {
                account: position.account.clone(),
                shortfall_value: shortfall,
                timestamp,
            });
        }
    }
    Ok(report)
}

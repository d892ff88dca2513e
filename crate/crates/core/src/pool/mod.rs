//! Over-collateralized lending pool: reserves, positions, interest accrual,
//! health factors, liquidation and bad-debt accounting.
//!
//! The pool only keeps protocol accounting. Token custody outside the pool
//! (wallets, venues) lives in [`crate::world`]; every pool operation states
//! how many tokens enter or leave its `cash`.

mod health;
mod reserve;
mod types;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fixed::{FixedDec, MathError, Rounding};
use crate::rates::RateError;

pub use health::{bad_debt, health_factor, BadDebtRecord, BadDebtReport, Position, Valuation};
pub use reserve::{accrue, ReserveConfig, ReserveState, SECONDS_PER_YEAR};
pub use types::{AccountId, AssetId, Prices};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PoolError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("clock moved backwards from {last} to {now}")]
    InvalidTime { last: u64, now: u64 },
    #[error("amount must be positive, got {0}")]
    InvalidAmount(FixedDec),
    #[error("reserve {0} is frozen")]
    ReserveFrozen(AssetId),
    #[error("borrowing is disabled for {0}")]
    BorrowingDisabled(AssetId),
    #[error("liquidity exhausted for {asset}: requested {requested}, available {available}")]
    LiquidityExhausted { asset: AssetId, requested: FixedDec, available: FixedDec },
    #[error("collateral of {0} is insufficient for this action")]
    CollateralInsufficient(AccountId),
    #[error("amount {requested} exceeds balance {balance}")]
    AmountExceedsBalance { requested: FixedDec, balance: FixedDec },
    #[error("{account} is not liquidatable (health factor {health_factor})")]
    NotLiquidatable { account: AccountId, health_factor: FixedDec },
    #[error("repay {requested} exceeds close-factor limit {max}")]
    CloseFactorExceeded { requested: FixedDec, max: FixedDec },
    #[error("{account} has no {asset} collateral to seize")]
    NothingToSeize { account: AccountId, asset: AssetId },
    #[error("no oracle price for {0}")]
    OracleMissing(AssetId),
    #[error("unknown reserve {0}")]
    NotFound(AssetId),
    #[error("invalid reserve configuration for {asset}.{field}: {reason}")]
    InvalidConfig { asset: AssetId, field: &'static str, reason: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
}

impl PoolError {
    /// Errors that indicate a broken simulation rather than a rejected action.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            PoolError::Math(_) | PoolError::Rate(_) | PoolError::InvalidTime { .. } | PoolError::InvalidState(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reserve {
    pub config: ReserveConfig,
    pub state: ReserveState,
}

/// Where seized collateral ends up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    /// Paid out of pool cash to the liquidator's wallet.
    Underlying,
    /// Credited as a deposit in the liquidator's position.
    Deposit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidationReceipt {
    pub repaid: FixedDec,
    pub seized: FixedDec,
    pub delivery: Delivery,
    pub health_factor_before: FixedDec,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LendingPool {
    now: u64,
    reserves: BTreeMap<AssetId, Reserve>,
    positions: BTreeMap<AccountId, Position>,
}

impl LendingPool {
    pub fn new(now: u64) -> Self {
        Self { now, ..Self::default() }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn list_reserve(&mut self, asset: AssetId, config: ReserveConfig) -> Result<(), PoolError> {
        if let Err((field, reason)) = config.validate() {
            return Err(PoolError::InvalidConfig { asset, field, reason });
        }
        if self.reserves.contains_key(&asset) {
            return Err(PoolError::InvalidConfig { asset, field: "asset", reason: "listed twice".into() });
        }
        self.reserves.insert(asset, Reserve { config, state: ReserveState::new(self.now) });
        Ok(())
    }

    pub fn reserves(&self) -> &BTreeMap<AssetId, Reserve> {
        &self.reserves
    }

    pub fn reserve(&self, asset: &AssetId) -> Result<&Reserve, PoolError> {
        self.reserves.get(asset).ok_or_else(|| PoolError::NotFound(asset.clone()))
    }

    fn reserve_mut(&mut self, asset: &AssetId) -> Result<&mut Reserve, PoolError> {
        self.reserves.get_mut(asset).ok_or_else(|| PoolError::NotFound(asset.clone()))
    }

    pub fn positions(&self) -> impl Iterator<Item = &Position> {
        self.positions.values()
    }

    pub fn position(&self, account: &AccountId) -> Option<&Position> {
        self.positions.get(account)
    }

    /// Accrues interest on every reserve up to `now`.
    pub fn advance_to(&mut self, now: u64) -> Result<(), PoolError> {
        if now < self.now {
            return Err(PoolError::InvalidTime { last: self.now, now });
        }
        self.now = now;
        for reserve in self.reserves.values_mut() {
            reserve.state = accrue(&reserve.state, now, &reserve.config.rate)?;
        }
        Ok(())
    }

    fn accrue_reserve(&mut self, asset: &AssetId) -> Result<(), PoolError> {
        let now = self.now;
        let reserve = self.reserve_mut(asset)?;
        reserve.state = accrue(&reserve.state, now, &reserve.config.rate)?;
        Ok(())
    }

    /// Current deposit balance of `account` in `asset`.
    pub fn deposit_of(&self, account: &AccountId, asset: &AssetId) -> Result<FixedDec, PoolError> {
        let index = self.reserve(asset)?.state.liquidity_index;
        let scaled = self
            .positions
            .get(account)
            .and_then(|p| p.scaled_deposits.get(asset))
            .copied()
            .unwrap_or_default();
        Ok(scaled.mul(index)?)
    }

    /// Current debt of `account` in `asset`.
    pub fn debt_of(&self, account: &AccountId, asset: &AssetId) -> Result<FixedDec, PoolError> {
        let index = self.reserve(asset)?.state.borrow_index;
        let scaled = self
            .positions
            .get(account)
            .and_then(|p| p.scaled_debts.get(asset))
            .copied()
            .unwrap_or_default();
        Ok(scaled.mul(index)?)
    }

    pub fn valuation(&self, account: &AccountId, prices: &Prices) -> Result<Valuation, PoolError> {
        match self.positions.get(account) {
            Some(p) => Valuation::of(p, &self.reserves, prices),
            None => Ok(Valuation::default()),
        }
    }

    pub fn health_factor(&self, account: &AccountId, prices: &Prices) -> Result<FixedDec, PoolError> {
        self.valuation(account, prices)?.health_factor()
    }

    pub fn bad_debt(&self, prices: &Prices) -> Result<BadDebtReport, PoolError> {
        bad_debt(self.positions.values(), &self.reserves, prices, self.now)
    }

    fn positive(amount: FixedDec) -> Result<(), PoolError> {
        if amount.is_positive() {
            Ok(())
        } else {
            Err(PoolError::InvalidAmount(amount))
        }
    }

    fn credit_deposit(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), PoolError> {
        let reserve = self.reserve_mut(asset)?;
        let scaled = amount.div(reserve.state.liquidity_index)?;
        reserve.state.scaled_deposits = reserve.state.scaled_deposits.add(scaled)?;
        let position = self
            .positions
            .entry(account.clone())
            .or_insert_with(|| Position::new(account.clone()));
        let slot = position.scaled_deposits.entry(asset.clone()).or_default();
        *slot = slot.add(scaled)?;
        Ok(())
    }

    /// Removes `amount` of deposit claim; burns the whole balance when the
    /// amount matches it so no dust is left behind.
    fn debit_deposit(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), PoolError> {
        let balance = self.deposit_of(account, asset)?;
        if amount > balance {
            return Err(PoolError::AmountExceedsBalance { requested: amount, balance });
        }
        let index = self.reserve(asset)?.state.liquidity_index;
        let position = self
            .positions
            .get_mut(account)
            .ok_or(PoolError::AmountExceedsBalance { requested: amount, balance })?;
        let slot = position.scaled_deposits.entry(asset.clone()).or_default();
        let burned = if amount == balance { *slot } else { amount.div(index)?.min(*slot) };
        *slot = slot.sub(burned)?;
        let reserve = self.reserve_mut(asset)?;
        reserve.state.scaled_deposits = reserve.state.scaled_deposits.sub(burned)?.max(FixedDec::ZERO);
        Ok(())
    }

    fn credit_debt(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), PoolError> {
        let reserve = self.reserve_mut(asset)?;
        let scaled = amount.div(reserve.state.borrow_index)?;
        reserve.state.scaled_debt = reserve.state.scaled_debt.add(scaled)?;
        let position = self
            .positions
            .entry(account.clone())
            .or_insert_with(|| Position::new(account.clone()));
        let slot = position.scaled_debts.entry(asset.clone()).or_default();
        *slot = slot.add(scaled)?;
        Ok(())
    }

    fn debit_debt(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), PoolError> {
        let balance = self.debt_of(account, asset)?;
        if amount > balance {
            return Err(PoolError::AmountExceedsBalance { requested: amount, balance });
        }
        let index = self.reserve(asset)?.state.borrow_index;
        let position = self
            .positions
            .get_mut(account)
            .ok_or(PoolError::AmountExceedsBalance { requested: amount, balance })?;
        let slot = position.scaled_debts.entry(asset.clone()).or_default();
        let burned = if amount == balance { *slot } else { amount.div(index)?.min(*slot) };
        *slot = slot.sub(burned)?;
        let reserve = self.reserve_mut(asset)?;
        reserve.state.scaled_debt = reserve.state.scaled_debt.sub(burned)?.max(FixedDec::ZERO);
        Ok(())
    }

    fn move_cash(&mut self, asset: &AssetId, delta: FixedDec) -> Result<(), PoolError> {
        let reserve = self.reserve_mut(asset)?;
        let cash = reserve.state.cash.add(delta)?;
        if cash.is_negative() {
            return Err(PoolError::InvalidState(format!("{asset} cash would turn negative")));
        }
        reserve.state.cash = cash;
        reserve.state.restate()
    }

    /// Supplies `amount` tokens, which enter pool cash.
    pub fn deposit(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), PoolError> {
        Self::positive(amount)?;
        self.accrue_reserve(asset)?;
        if self.reserve(asset)?.config.frozen {
            return Err(PoolError::ReserveFrozen(asset.clone()));
        }
        self.credit_deposit(account, asset, amount)?;
        self.move_cash(asset, amount)
    }

    /// Largest amount of `asset` the account may borrow right now, bounded
    /// by both LTV headroom and available liquidity.
    pub fn max_borrow(&self, account: &AccountId, asset: &AssetId, prices: &Prices) -> Result<FixedDec, PoolError> {
        let available = self.reserve(asset)?.state.available_liquidity();
        let price = prices.get(asset)?;
        let valuation = self.valuation(account, prices)?;
        let headroom = valuation.borrow_headroom()?;
        if !headroom.is_positive() || !price.is_positive() {
            return Ok(FixedDec::ZERO);
        }
        let mut amount = headroom.div_rounded(price, Rounding::TowardZero)?;
        while amount.is_positive() && valuation.debt_value.add(amount.mul(price)?)? > valuation.borrow_capacity {
            amount = amount.sub(FixedDec::ULP)?;
        }
        Ok(amount.min(available))
    }

    /// Takes `amount` tokens out of pool cash as new debt.
    pub fn borrow(
        &mut self,
        account: &AccountId,
        asset: &AssetId,
        amount: FixedDec,
        prices: &Prices,
    ) -> Result<(), PoolError> {
        Self::positive(amount)?;
        self.accrue_reserve(asset)?;
        let reserve = self.reserve(asset)?;
        if reserve.config.frozen {
            return Err(PoolError::ReserveFrozen(asset.clone()));
        }
        if !reserve.config.borrowing_enabled {
            return Err(PoolError::BorrowingDisabled(asset.clone()));
        }
        let available = reserve.state.available_liquidity();
        if amount > available {
            return Err(PoolError::LiquidityExhausted { asset: asset.clone(), requested: amount, available });
        }
        let valuation = self.valuation(account, prices)?;
        let new_debt = valuation.debt_value.add(amount.mul(prices.get(asset)?)?)?;
        if new_debt > valuation.borrow_capacity {
            return Err(PoolError::CollateralInsufficient(account.clone()));
        }
        self.credit_debt(account, asset, amount)?;
        self.move_cash(asset, amount.neg()?)
    }

    /// Returns `amount` tokens to pool cash against the account's debt.
    pub fn repay(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), PoolError> {
        Self::positive(amount)?;
        self.accrue_reserve(asset)?;
        self.debit_debt(account, asset, amount)?;
        self.move_cash(asset, amount)
    }

    /// Pays `amount` tokens out of pool cash against the account's deposit.
    /// Indebted accounts must stay within both the LTV limit and a health
    /// factor of at least one.
    pub fn withdraw(
        &mut self,
        account: &AccountId,
        asset: &AssetId,
        amount: FixedDec,
        prices: &Prices,
    ) -> Result<(), PoolError> {
        Self::positive(amount)?;
        self.accrue_reserve(asset)?;
        let balance = self.deposit_of(account, asset)?;
        if amount > balance {
            return Err(PoolError::AmountExceedsBalance { requested: amount, balance });
        }
        let available = self.reserve(asset)?.state.available_liquidity();
        if amount > available {
            return Err(PoolError::LiquidityExhausted { asset: asset.clone(), requested: amount, available });
        }
        let mut trial = self.clone();
        trial.debit_deposit(account, asset, amount)?;
        if let Some(position) = trial.positions.get(account).filter(|p| p.has_debt()) {
            let v = Valuation::of(position, &trial.reserves, prices)?;
            if v.health_factor()? < FixedDec::ONE || v.debt_value > v.borrow_capacity {
                return Err(PoolError::CollateralInsufficient(account.clone()));
            }
        }
        *self = trial;
        self.move_cash(asset, amount.neg()?)
    }

    /// Repays part of an unhealthy position's debt in exchange for its
    /// collateral plus a bonus.
    ///
    /// The bonus is limited to the position's equity (collateral value above
    /// debt value), so a liquidation at fixed prices can never enlarge the
    /// position's shortfall. Seized tokens round toward zero.
    #[allow(clippy::too_many_arguments)]
    pub fn liquidate(
        &mut self,
        liquidator: &AccountId,
        target: &AccountId,
        debt_asset: &AssetId,
        collateral_asset: &AssetId,
        repay_amount: FixedDec,
        prices: &Prices,
        delivery: Delivery,
    ) -> Result<LiquidationReceipt, PoolError> {
        self.accrue_reserve(debt_asset)?;
        self.accrue_reserve(collateral_asset)?;
        let position = self.positions.get(target).cloned().unwrap_or_else(|| Position::new(target.clone()));
        let before = Valuation::of(&position, &self.reserves, prices)?;
        let health_factor = before.health_factor()?;
        if health_factor >= FixedDec::ONE {
            return Err(PoolError::NotLiquidatable { account: target.clone(), health_factor });
        }
        Self::positive(repay_amount)?;
        let debt = self.debt_of(target, debt_asset)?;
        let max = debt.mul(self.reserve(debt_asset)?.config.close_factor)?;
        if repay_amount > max {
            return Err(PoolError::CloseFactorExceeded { requested: repay_amount, max });
        }
        let collateral = self.deposit_of(target, collateral_asset)?;
        if collateral.is_zero() {
            return Err(PoolError::NothingToSeize { account: target.clone(), asset: collateral_asset.clone() });
        }

        let debt_price = prices.get(debt_asset)?;
        let collateral_price = prices.get(collateral_asset)?;
        let repay_value = repay_amount.mul(debt_price)?;
        let equity = before.collateral_value.sub(before.debt_value)?.max(FixedDec::ZERO);
        let bonus = self.reserve(collateral_asset)?.config.liquidation_bonus;
        let bonus_value = repay_value.mul(bonus)?.min(equity);
        let seize_value = repay_value.add(bonus_value)?;
        let mut seized = seize_value.div_rounded(collateral_price, Rounding::TowardZero)?.min(collateral);

        // Rounding of scaled balances can still move the revalued position by
        // a few ulps; trim the seizure until the shortfall is not larger.
        let shortfall_before = before.shortfall()?;
        let committed = loop {
            let mut trial = self.clone();
            trial.debit_debt(target, debt_asset, repay_amount)?;
            if seized.is_positive() {
                trial.debit_deposit(target, collateral_asset, seized)?;
            }
            let after = trial.valuation(target, prices)?.shortfall()?;
            if after <= shortfall_before || seized.is_zero() {
                break trial;
            }
            let excess = after.sub(shortfall_before)?;
            let trim = excess.div_rounded(collateral_price, Rounding::AwayFromZero)?.add(FixedDec::ULP)?;
            seized = seized.sub(trim)?.max(FixedDec::ZERO);
        };
        *self = committed;
        self.move_cash(debt_asset, repay_amount)?;

        let cash = self.reserve(collateral_asset)?.state.cash;
        let delivery = if delivery == Delivery::Underlying && seized <= cash {
            self.move_cash(collateral_asset, seized.neg()?)?;
            Delivery::Underlying
        } else {
            if seized.is_positive() {
                self.credit_deposit(liquidator, collateral_asset, seized)?;
            }
            Delivery::Deposit
        };
        Ok(LiquidationReceipt { repaid: repay_amount, seized, delivery, health_factor_before: health_factor })
    }

    /// Governance switch. Existing debt and deposits are untouched.
    pub fn set_reserve_flags(&mut self, asset: &AssetId, borrowing_enabled: bool, frozen: bool) -> Result<(), PoolError> {
        let reserve = self.reserve_mut(asset)?;
        reserve.config.borrowing_enabled = borrowing_enabled;
        reserve.config.frozen = frozen;
        Ok(())
    }

    /// Installs a pre-existing position without health checks, as when a
    /// scenario starts from a snapshot of live protocol state. Deposits enter
    /// cash and debts leave it; returns nothing, the caller moves wallet
    /// balances.
    pub fn import_position(
        &mut self,
        account: &AccountId,
        deposits: &BTreeMap<AssetId, FixedDec>,
        debts: &BTreeMap<AssetId, FixedDec>,
    ) -> Result<(), PoolError> {
        for (asset, amount) in deposits {
            Self::positive(*amount)?;
            self.accrue_reserve(asset)?;
            self.credit_deposit(account, asset, *amount)?;
            self.move_cash(asset, *amount)?;
        }
        for (asset, amount) in debts {
            Self::positive(*amount)?;
            self.accrue_reserve(asset)?;
            let available = self.reserve(asset)?.state.available_liquidity();
            if *amount > available {
                return Err(PoolError::LiquidityExhausted { asset: asset.clone(), requested: *amount, available });
            }
            self.credit_debt(account, asset, *amount)?;
            self.move_cash(asset, amount.neg()?)?;
        }
        Ok(())
    }

    /// Structured text snapshot (JSON) of the full pool state.
    pub fn to_snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("pool state serializes")
    }

    /// Parses and validates a snapshot produced by [`Self::to_snapshot`].
    pub fn from_snapshot(text: &str) -> Result<Self, PoolError> {
        let pool: LendingPool =
            serde_json::from_str(text).map_err(|e| PoolError::InvalidState(format!("snapshot: {e}")))?;
        pool.check_invariants()?;
        Ok(pool)
    }

    /// Structural invariants: valid configs, non-negative balances, indices
    /// at least one, reserve totals consistent with cash and scaled debt.
    pub fn check_invariants(&self) -> Result<(), PoolError> {
        let bad = |m: String| Err(PoolError::InvalidState(m));
        for (asset, reserve) in &self.reserves {
            if let Err((field, reason)) = reserve.config.validate() {
                return Err(PoolError::InvalidConfig { asset: asset.clone(), field, reason });
            }
            let s = &reserve.state;
            if s.borrow_index < FixedDec::ONE || s.liquidity_index < FixedDec::ONE {
                return bad(format!("{asset}: index below one"));
            }
            for (name, v) in [
                ("cash", s.cash),
                ("scaled_debt", s.scaled_debt),
                ("scaled_deposits", s.scaled_deposits),
                ("treasury_scaled", s.treasury_scaled),
            ] {
                if v.is_negative() || v.is_inf() {
                    return bad(format!("{asset}: {name} out of range"));
                }
            }
            if s.last_accrual > self.now {
                return bad(format!("{asset}: accrued past pool clock"));
            }
            let debt = s.scaled_debt.mul(s.borrow_index)?;
            if debt != s.total_debt || s.cash.add(debt)? != s.total_liquidity {
                return bad(format!("{asset}: totals inconsistent with cash and scaled debt"));
            }
        }
        for (account, position) in &self.positions {
            if &position.account != account {
                return bad(format!("position keyed {account} belongs to {}", position.account));
            }
            for (asset, v) in position.scaled_deposits.iter().chain(position.scaled_debts.iter()) {
                if !self.reserves.contains_key(asset) {
                    return Err(PoolError::NotFound(asset.clone()));
                }
                if v.is_negative() || v.is_inf() {
                    return bad(format!("{account}: negative balance in {asset}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;

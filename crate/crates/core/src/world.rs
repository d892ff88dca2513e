//! Token custody and action execution.
//!
//! Every token of every asset sits in exactly one of three places: a wallet,
//! a venue reserve, or pool cash. Actions move tokens between them without
//! creating or destroying any, so per-asset totals stay equal to the genesis
//! supply. The [`MARKET`] wallet is the outside world: it takes the other
//! side of exogenous rebalancing trades and may hold negative balances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fixed::{FixedDec, MathError};
use crate::oracle::{Oracle, OracleError};
use crate::pool::{AccountId, AssetId, Delivery, LendingPool, LiquidationReceipt, PoolError, Prices};
use crate::venue::{Direction, Fill, Venue, VenueError};

/// Counterparty for exogenous price moves.
pub const MARKET: &str = "market";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Venue(#[from] VenueError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("{account} holds {held} {asset}, needs {needed}")]
    InsufficientFunds { account: AccountId, asset: AssetId, needed: FixedDec, held: FixedDec },
    #[error("unknown venue {0}")]
    UnknownVenue(String),
    #[error("amount must be positive, got {0}")]
    InvalidAmount(FixedDec),
    #[error("conservation violated for {asset}: held {held}, genesis {genesis}")]
    Conservation { asset: AssetId, held: FixedDec, genesis: FixedDec },
}

impl ActionError {
    /// Errors that mean the simulation itself is broken.
    pub fn is_fatal(&self) -> bool {
        match self {
            ActionError::Pool(e) => e.is_fatal(),
            ActionError::Venue(VenueError::Math(_)) | ActionError::Math(_) | ActionError::Conservation { .. } => true,
            ActionError::Oracle(OracleError::Math(_) | OracleError::InvalidTime { .. }) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Deposit { asset: AssetId, amount: FixedDec },
    Withdraw { asset: AssetId, amount: FixedDec },
    Borrow { asset: AssetId, amount: FixedDec },
    Repay { asset: AssetId, amount: FixedDec },
    Transfer { to: AccountId, asset: AssetId, amount: FixedDec },
    Swap { venue: String, direction: Direction, amount_in: FixedDec },
    Liquidate { target: AccountId, debt_asset: AssetId, collateral_asset: AssetId, repay: FixedDec, delivery: Delivery },
    /// Reserve flag change taking effect `delay` seconds from now.
    ScheduleReserveFlags { asset: AssetId, borrowing_enabled: bool, frozen: bool, delay: u64 },
}

impl Action {
    pub fn label(&self) -> &'static str {
        match self {
            Action::Deposit { .. } => "deposit",
            Action::Withdraw { .. } => "withdraw",
            Action::Borrow { .. } => "borrow",
            Action::Repay { .. } => "repay",
            Action::Transfer { .. } => "transfer",
            Action::Swap { .. } => "swap",
            Action::Liquidate { .. } => "liquidate",
            Action::ScheduleReserveFlags { .. } => "schedule_reserve_flags",
        }
    }

    /// Compact single-line description for the action log.
    pub fn describe(&self) -> String {
        match self {
            Action::Deposit { asset, amount }
            | Action::Withdraw { asset, amount }
            | Action::Borrow { asset, amount }
            | Action::Repay { asset, amount } => format!("{amount} {asset}"),
            Action::Transfer { to, asset, amount } => format!("{amount} {asset} to {to}"),
            Action::Swap { venue, direction, amount_in } => {
                let side = match direction {
                    Direction::SellBase => "sell_base",
                    Direction::BuyBase => "buy_base",
                };
                format!("{side} {amount_in} on {venue}")
            }
            Action::Liquidate { target, debt_asset, collateral_asset, repay, .. } => {
                format!("{target} repay {repay} {debt_asset} for {collateral_asset}")
            }
            Action::ScheduleReserveFlags { asset, borrowing_enabled, frozen, delay } => {
                format!("{asset} borrowing_enabled={borrowing_enabled} frozen={frozen} in {delay}s")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outcome {
    Done,
    Swapped(Fill),
    Liquidated(LiquidationReceipt),
    Scheduled { effective_at: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingChange {
    pub effective_at: u64,
    pub asset: AssetId,
    pub borrowing_enabled: bool,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub kind: String,
    pub account: String,
    pub asset: String,
    pub amount: FixedDec,
    pub value: FixedDec,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct World {
    pub tick: u64,
    pub now: u64,
    pub pool: LendingPool,
    pub oracle: Oracle,
    pub venues: Vec<Venue>,
    pub wallets: BTreeMap<AccountId, BTreeMap<AssetId, FixedDec>>,
    pub genesis: BTreeMap<AssetId, FixedDec>,
    pub pending: Vec<PendingChange>,
    pub events: Vec<Event>,
}

impl World {
    pub fn new(now: u64) -> Self {
        Self { now, pool: LendingPool::new(now), ..Self::default() }
    }

    pub fn market() -> AccountId {
        AccountId::from(MARKET)
    }

    pub fn balance(&self, account: &AccountId, asset: &AssetId) -> FixedDec {
        self.wallets.get(account).and_then(|w| w.get(asset)).copied().unwrap_or_default()
    }

    pub fn prices(&self) -> Prices {
        self.oracle.prices()
    }

    pub fn venue(&self, id: &str) -> Result<&Venue, ActionError> {
        self.venues.iter().find(|v| v.id == id).ok_or_else(|| ActionError::UnknownVenue(id.to_owned()))
    }

    fn venue_mut(&mut self, id: &str) -> Result<&mut Venue, ActionError> {
        self.venues.iter_mut().find(|v| v.id == id).ok_or_else(|| ActionError::UnknownVenue(id.to_owned()))
    }

    /// Adds tokens to a wallet at genesis.
    pub fn mint(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), ActionError> {
        self.credit(account, asset, amount)
    }

    fn credit(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), ActionError> {
        let slot = self.wallets.entry(account.clone()).or_default().entry(asset.clone()).or_default();
        *slot = slot.add(amount)?;
        Ok(())
    }

    fn ensure_funds(&self, account: &AccountId, asset: &AssetId, needed: FixedDec) -> Result<(), ActionError> {
        let held = self.balance(account, asset);
        if account.as_str() != MARKET && held < needed {
            return Err(ActionError::InsufficientFunds {
                account: account.clone(),
                asset: asset.clone(),
                needed,
                held,
            });
        }
        Ok(())
    }

    fn debit(&mut self, account: &AccountId, asset: &AssetId, amount: FixedDec) -> Result<(), ActionError> {
        self.ensure_funds(account, asset, amount)?;
        self.credit(account, asset, amount.neg()?)
    }

    /// Freezes the current holdings as the reference supply for
    /// [`Self::check_conservation`].
    pub fn seal_genesis(&mut self) -> Result<(), ActionError> {
        self.genesis = self.holdings()?;
        Ok(())
    }

    /// Per-asset sum of wallet balances, venue reserves and pool cash.
    pub fn holdings(&self) -> Result<BTreeMap<AssetId, FixedDec>, ActionError> {
        let mut total: BTreeMap<AssetId, FixedDec> = BTreeMap::new();
        let mut add = |asset: &AssetId, v: FixedDec| -> Result<(), ActionError> {
            let slot = total.entry(asset.clone()).or_default();
            *slot = slot.add(v)?;
            Ok(())
        };
        for wallet in self.wallets.values() {
            for (asset, v) in wallet {
                add(asset, *v)?;
            }
        }
        for venue in &self.venues {
            add(&venue.base, venue.reserve_base)?;
            add(&venue.quote, venue.reserve_quote)?;
        }
        for (asset, reserve) in self.pool.reserves() {
            add(asset, reserve.state.cash)?;
        }
        Ok(total)
    }

    pub fn check_conservation(&self) -> Result<(), ActionError> {
        let held = self.holdings()?;
        for (asset, genesis) in &self.genesis {
            let h = held.get(asset).copied().unwrap_or_default();
            if h != *genesis {
                return Err(ActionError::Conservation { asset: asset.clone(), held: h, genesis: *genesis });
            }
        }
        if let Some(asset) = held.keys().find(|a| !self.genesis.contains_key(*a)) {
            return Err(ActionError::Conservation {
                asset: asset.clone(),
                held: held[asset],
                genesis: FixedDec::ZERO,
            });
        }
        Ok(())
    }

    fn event(&mut self, kind: &str, account: &AccountId, asset: &AssetId, amount: FixedDec) {
        let value = self.oracle.price(asset).ok().and_then(|p| amount.mul(p).ok()).unwrap_or_default();
        self.events.push(Event {
            tick: self.tick,
            kind: kind.to_owned(),
            account: account.to_string(),
            asset: asset.to_string(),
            amount,
            value,
        });
    }

    fn positive(amount: FixedDec) -> Result<(), ActionError> {
        if amount.is_positive() {
            Ok(())
        } else {
            Err(ActionError::InvalidAmount(amount))
        }
    }

    /// Executes one action on behalf of `actor`, using the currently
    /// published oracle prices. Nothing changes when an error is returned.
    pub fn apply(&mut self, actor: &AccountId, action: &Action) -> Result<Outcome, ActionError> {
        let prices = self.prices();
        match action {
            Action::Deposit { asset, amount } => {
                self.ensure_funds(actor, asset, *amount)?;
                self.pool.deposit(actor, asset, *amount)?;
                self.debit(actor, asset, *amount)?;
            }
            Action::Withdraw { asset, amount } => {
                self.pool.withdraw(actor, asset, *amount, &prices)?;
                self.credit(actor, asset, *amount)?;
            }
            Action::Borrow { asset, amount } => {
                self.pool.borrow(actor, asset, *amount, &prices)?;
                self.credit(actor, asset, *amount)?;
                self.event("borrow", actor, asset, *amount);
            }
            Action::Repay { asset, amount } => {
                self.ensure_funds(actor, asset, *amount)?;
                self.pool.repay(actor, asset, *amount)?;
                self.debit(actor, asset, *amount)?;
            }
            Action::Transfer { to, asset, amount } => {
                Self::positive(*amount)?;
                self.debit(actor, asset, *amount)?;
                self.credit(to, asset, *amount)?;
            }
            Action::Swap { venue, direction, amount_in } => {
                let v = self.venue(venue)?;
                let (asset_in, asset_out) = (direction.asset_in(v).clone(), direction.asset_out(v).clone());
                self.ensure_funds(actor, &asset_in, *amount_in)?;
                let fill = self.venue_mut(venue)?.swap(*direction, *amount_in)?;
                self.debit(actor, &asset_in, fill.amount_in)?;
                self.credit(actor, &asset_out, fill.amount_out)?;
                return Ok(Outcome::Swapped(fill));
            }
            Action::Liquidate { target, debt_asset, collateral_asset, repay, delivery } => {
                self.ensure_funds(actor, debt_asset, *repay)?;
                let receipt =
                    self.pool.liquidate(actor, target, debt_asset, collateral_asset, *repay, &prices, *delivery)?;
                self.debit(actor, debt_asset, receipt.repaid)?;
                if receipt.delivery == Delivery::Underlying {
                    self.credit(actor, collateral_asset, receipt.seized)?;
                }
                self.event("liquidation", target, debt_asset, receipt.repaid);
                return Ok(Outcome::Liquidated(receipt));
            }
            Action::ScheduleReserveFlags { asset, borrowing_enabled, frozen, delay } => {
                self.pool.reserve(asset)?;
                let effective_at = self.now.saturating_add(*delay);
                self.pending.push(PendingChange {
                    effective_at,
                    asset: asset.clone(),
                    borrowing_enabled: *borrowing_enabled,
                    frozen: *frozen,
                });
                self.apply_due_changes()?;
                return Ok(Outcome::Scheduled { effective_at });
            }
        }
        Ok(Outcome::Done)
    }

    /// Applies every pending governance change whose time has come.
    pub fn apply_due_changes(&mut self) -> Result<(), ActionError> {
        let now = self.now;
        let (due, waiting): (Vec<_>, Vec<_>) = self.pending.drain(..).partition(|c| c.effective_at <= now);
        self.pending = waiting;
        for change in due {
            self.pool.set_reserve_flags(&change.asset, change.borrowing_enabled, change.frozen)?;
            let kind = if change.frozen {
                "freeze"
            } else if !change.borrowing_enabled {
                "disable_borrowing"
            } else {
                "unfreeze"
            };
            self.event(kind, &AccountId::from("governance"), &change.asset, FixedDec::ZERO);
        }
        Ok(())
    }

    /// Trades against venue `id` on behalf of the outside market so that its
    /// spot reaches `target`.
    pub fn market_rebalance(&mut self, id: &str, target: FixedDec) -> Result<Option<Fill>, ActionError> {
        let v = self.venue(id)?;
        let (base, quote) = (v.base.clone(), v.quote.clone());
        let Some(fill) = self.venue_mut(id)?.arbitrage_rebalance(target)? else {
            return Ok(None);
        };
        let (asset_in, asset_out) = match fill.direction {
            Direction::SellBase => (base, quote),
            Direction::BuyBase => (quote, base),
        };
        let market = Self::market();
        self.credit(&market, &asset_in, fill.amount_in.neg()?)?;
        self.credit(&market, &asset_out, fill.amount_out)?;
        Ok(Some(fill))
    }
}

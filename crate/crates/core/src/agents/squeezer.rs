use serde::{Deserialize, Serialize};

use super::Ctx;
use crate::fixed::FixedDec;
use crate::pool::{AccountId, AssetId, PoolError};
use crate::venue::Direction;
use crate::world::{Action, ActionError};

fn yes() -> bool {
    true
}

fn one() -> FixedDec {
    FixedDec::ONE
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondBorrow {
    pub asset: AssetId,
    /// Borrows below this size are skipped.
    #[serde(default = "one")]
    pub min_amount: FixedDec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezerParams {
    pub collateral_asset: AssetId,
    /// Defaults to the whole wallet balance.
    #[serde(default)]
    pub collateral_amount: Option<FixedDec>,
    pub target: AssetId,
    /// Largest borrow per tick.
    pub tranche: FixedDec,
    /// Venue whose base is `target`; borrowed tokens are sold there.
    pub venue: String,
    #[serde(default = "yes")]
    pub sell: bool,
    /// The borrow phase ends once the possible borrow drops below this.
    #[serde(default = "one")]
    pub min_borrow: FixedDec,
    #[serde(default)]
    pub second_borrow: Option<SecondBorrow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqueezePhase {
    #[default]
    Deposit,
    Borrow,
    Extra,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SqueezerMemory {
    pub phase: SqueezePhase,
    pub deposited: FixedDec,
    pub borrowed: FixedDec,
    pub sold: FixedDec,
    pub proceeds: FixedDec,
    /// Borrow headroom (numéraire) when the borrow phase ended.
    pub headroom_at_switch: FixedDec,
    pub extra_borrowed: FixedDec,
}

/// Deposits stable collateral, borrows the target asset in tranches and
/// dumps it, then optionally borrows a second asset against whatever credit
/// the falling price frees up. Never repays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortSqueezer {
    pub params: SqueezerParams,
    #[serde(default)]
    pub memory: SqueezerMemory,
}

impl ShortSqueezer {
    pub fn new(params: SqueezerParams) -> Self {
        Self { params, memory: SqueezerMemory::default() }
    }

    fn end_borrow_phase(&mut self, wallet: &AccountId, ctx: &Ctx<'_>) {
        self.memory.phase = SqueezePhase::Extra;
        self.memory.headroom_at_switch = ctx
            .world()
            .pool
            .valuation(wallet, &ctx.prices())
            .and_then(|v| v.borrow_headroom())
            .unwrap_or_default();
    }

    fn sell_holdings(&mut self, wallet: &AccountId, ctx: &mut Ctx<'_>) {
        let p = &self.params;
        let held = ctx.balance(wallet, &p.target);
        if !p.sell || !held.is_positive() {
            return;
        }
        let swap = Action::Swap { venue: p.venue.clone(), direction: Direction::SellBase, amount_in: held };
        if let Ok(crate::world::Outcome::Swapped(fill)) = ctx.execute(wallet, swap) {
            self.memory.sold = self.memory.sold.add(fill.amount_in).unwrap_or(self.memory.sold);
            self.memory.proceeds = self.memory.proceeds.add(fill.amount_out).unwrap_or(self.memory.proceeds);
        }
    }

    pub fn step(&mut self, wallet: &AccountId, ctx: &mut Ctx<'_>) {
        if self.memory.phase == SqueezePhase::Deposit {
            let p = &self.params;
            let held = ctx.balance(wallet, &p.collateral_asset);
            let amount = p.collateral_amount.map_or(held, |a| a.min(held));
            if amount.is_positive() {
                let deposit = Action::Deposit { asset: p.collateral_asset.clone(), amount };
                if ctx.execute(wallet, deposit).is_ok() {
                    self.memory.deposited = amount;
                }
            }
            self.memory.phase = SqueezePhase::Borrow;
        }

        if self.memory.phase == SqueezePhase::Borrow {
            let p = &self.params;
            let possible = ctx.max_borrow(wallet, &p.target).unwrap_or_default();
            let amount = possible.min(p.tranche);
            if amount < p.min_borrow || !amount.is_positive() {
                self.end_borrow_phase(wallet, ctx);
            } else {
                match ctx.execute(wallet, Action::Borrow { asset: p.target.clone(), amount }) {
                    Ok(_) => self.memory.borrowed = self.memory.borrowed.add(amount).unwrap_or(self.memory.borrowed),
                    Err(ActionError::Pool(
                        PoolError::LiquidityExhausted { .. }
                        | PoolError::ReserveFrozen(_)
                        | PoolError::BorrowingDisabled(_),
                    )) => self.end_borrow_phase(wallet, ctx),
                    Err(_) => {}
                }
            }
            self.sell_holdings(wallet, ctx);
            return;
        }

        if let Some(second) = &self.params.second_borrow {
            let amount = ctx.max_borrow(wallet, &second.asset).unwrap_or_default();
            if amount >= second.min_amount && amount.is_positive() {
                let borrow = Action::Borrow { asset: second.asset.clone(), amount };
                if ctx.execute(wallet, borrow).is_ok() {
                    let value = ctx.prices().get(&second.asset).and_then(|p| Ok(amount.mul(p)?)).unwrap_or_default();
                    self.memory.extra_borrowed = self.memory.extra_borrowed.add(value).unwrap_or(self.memory.extra_borrowed);
                }
            }
        }
        self.sell_holdings(wallet, ctx);
    }
}

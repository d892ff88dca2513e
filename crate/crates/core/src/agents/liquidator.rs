use serde::{Deserialize, Serialize};

use super::Ctx;
use crate::fixed::{FixedDec, Rounding};
use crate::pool::{AccountId, AssetId, Delivery, PoolError};
use crate::venue::Direction;
use crate::world::{Action, Outcome};

fn underlying() -> Delivery {
    Delivery::Underlying
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiquidatorParams {
    /// Venue on which seized collateral is sold right away, if any. Only
    /// used when the venue's base is the seized asset.
    #[serde(default)]
    pub sell_seized: Option<String>,
    #[serde(default = "underlying")]
    pub delivery: Delivery,
    /// Skips liquidations whose seized collateral, sold on `sell_seized`,
    /// would not return the repaid value times `1 + min_profit`.
    #[serde(default)]
    pub min_profit: Option<FixedDec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LiquidatorMemory {
    pub liquidations: u64,
    pub repaid_value: FixedDec,
}

/// Repays unhealthy positions up to the close factor out of its own
/// inventory and collects the collateral.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Liquidator {
    pub params: LiquidatorParams,
    #[serde(default)]
    pub memory: LiquidatorMemory,
}

struct Plan {
    target: AccountId,
    debt_asset: AssetId,
    collateral_asset: AssetId,
    repay: FixedDec,
}

impl Liquidator {
    pub fn new(params: LiquidatorParams) -> Self {
        Self { params, memory: LiquidatorMemory::default() }
    }

    /// Largest-value debt the liquidator holds inventory for, against the
    /// largest-value collateral, sized so the seizure is not capped.
    fn plan(&self, wallet: &AccountId, target: &AccountId, ctx: &Ctx<'_>) -> Result<Option<Plan>, PoolError> {
        let world = ctx.world();
        let prices = ctx.prices();
        let pool = &world.pool;
        let Some(position) = pool.position(target) else {
            return Ok(None);
        };
        let mut debt: Option<(FixedDec, &AssetId, FixedDec)> = None;
        for asset in position.scaled_debts.keys() {
            if !world.balance(wallet, asset).is_positive() {
                continue;
            }
            let amount = pool.debt_of(target, asset)?;
            let value = amount.mul(prices.get(asset)?)?;
            if value.is_positive() && debt.is_none_or(|(v, _, _)| value > v) {
                debt = Some((value, asset, amount));
            }
        }
        let mut collateral: Option<(FixedDec, &AssetId, FixedDec)> = None;
        for asset in position.scaled_deposits.keys() {
            let amount = pool.deposit_of(target, asset)?;
            let value = amount.mul(prices.get(asset)?)?;
            if value.is_positive() && collateral.is_none_or(|(v, _, _)| value > v) {
                collateral = Some((value, asset, amount));
            }
        }
        let (Some((_, debt_asset, debt_amount)), Some((collateral_value, collateral_asset, _))) = (debt, collateral)
        else {
            return Ok(None);
        };
        let close_factor = pool.reserve(debt_asset)?.config.close_factor;
        let bonus = pool.reserve(collateral_asset)?.config.liquidation_bonus;
        let covered = collateral_value
            .div_rounded(prices.get(debt_asset)?.mul(FixedDec::ONE.add(bonus)?)?, Rounding::TowardZero)?;
        let repay = debt_amount.mul(close_factor)?.min(world.balance(wallet, debt_asset)).min(covered);
        if !repay.is_positive() {
            return Ok(None);
        }
        Ok(Some(Plan { target: target.clone(), debt_asset: debt_asset.clone(), collateral_asset: collateral_asset.clone(), repay }))
    }

    /// Whether selling what `plan` would seize covers its cost. Priced on a
    /// scratch copy of the pool, so nothing changes.
    fn profitable(&self, wallet: &AccountId, plan: &Plan, ctx: &Ctx<'_>) -> bool {
        let (Some(margin), Some(venue)) = (self.params.min_profit, &self.params.sell_seized) else {
            return true;
        };
        let world = ctx.world();
        let Ok(venue) = world.venue(venue) else { return false };
        if venue.base != plan.collateral_asset {
            return false;
        }
        let prices = ctx.prices();
        let estimate = || -> Result<bool, crate::world::ActionError> {
            let receipt = world.pool.clone().liquidate(
                wallet,
                &plan.target,
                &plan.debt_asset,
                &plan.collateral_asset,
                plan.repay,
                &prices,
                Delivery::Underlying,
            )?;
            let proceeds = venue.quote_swap(Direction::SellBase, receipt.seized)?.mul(prices.get(&venue.quote)?)?;
            let cost = receipt.repaid.mul(prices.get(&plan.debt_asset)?)?;
            Ok(proceeds >= cost.mul(FixedDec::ONE.add(margin)?)?)
        };
        estimate().unwrap_or(false)
    }

    pub fn step(&mut self, wallet: &AccountId, ctx: &mut Ctx<'_>) {
        let prices = ctx.prices();
        let targets: Vec<AccountId> = ctx
            .world()
            .pool
            .positions()
            .filter(|p| &p.account != wallet && p.has_debt())
            .filter(|p| ctx.world().pool.health_factor(&p.account, &prices).is_ok_and(|h| h < FixedDec::ONE))
            .map(|p| p.account.clone())
            .collect();
        for target in targets {
            let Ok(Some(plan)) = self.plan(wallet, &target, ctx) else {
                continue;
            };
            if !self.profitable(wallet, &plan, ctx) {
                continue;
            }
            let action = Action::Liquidate {
                target: plan.target,
                debt_asset: plan.debt_asset.clone(),
                collateral_asset: plan.collateral_asset.clone(),
                repay: plan.repay,
                delivery: self.params.delivery,
            };
            let Ok(Outcome::Liquidated(receipt)) = ctx.execute(wallet, action) else {
                continue;
            };
            self.memory.liquidations += 1;
            let value = prices.get(&plan.debt_asset).and_then(|p| Ok(receipt.repaid.mul(p)?)).unwrap_or_default();
            self.memory.repaid_value = self.memory.repaid_value.add(value).unwrap_or(self.memory.repaid_value);

            let Some(venue) = &self.params.sell_seized else { continue };
            let sells_collateral = ctx.world().venue(venue).is_ok_and(|v| v.base == plan.collateral_asset);
            let held = ctx.balance(wallet, &plan.collateral_asset);
            if sells_collateral && receipt.delivery == Delivery::Underlying && held.is_positive() {
                let amount_in = receipt.seized.min(held);
                let _ = ctx.execute(wallet, Action::Swap { venue: venue.clone(), direction: Direction::SellBase, amount_in });
            }
        }
    }
}

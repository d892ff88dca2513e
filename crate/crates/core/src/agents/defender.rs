use serde::{Deserialize, Serialize};

use super::Ctx;
use crate::fixed::FixedDec;
use crate::pool::{AccountId, AssetId, PoolError};
use crate::world::Action;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenderParams {
    pub collateral_asset: AssetId,
    /// Acts when the health factor falls below this.
    pub trigger: FixedDec,
    /// Health factor restored by a top-up.
    pub target: FixedDec,
    /// Total tokens the defender is willing to add.
    pub budget: FixedDec,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DefenderMemory {
    pub spent: FixedDec,
    pub top_ups: u64,
}

/// Tops up collateral of its own position to keep the health factor up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defender {
    pub params: DefenderParams,
    #[serde(default)]
    pub memory: DefenderMemory,
}

impl Defender {
    pub fn new(params: DefenderParams) -> Self {
        Self { params, memory: DefenderMemory::default() }
    }

    /// Collateral that lifts the health factor from its current value to
    /// `target`: `(target * D - Σ C·p·l) / (p·l)`.
    pub fn top_up_needed(&self, wallet: &AccountId, ctx: &Ctx<'_>) -> Result<FixedDec, PoolError> {
        let prices = ctx.prices();
        let pool = &ctx.world().pool;
        let v = pool.valuation(wallet, &prices)?;
        let h = v.health_factor()?;
        if h >= self.params.trigger {
            return Ok(FixedDec::ZERO);
        }
        let p = prices.get(&self.params.collateral_asset)?;
        let l = pool.reserve(&self.params.collateral_asset)?.config.liquidation_threshold;
        let missing = self.params.target.mul(v.debt_value)?.sub(v.weighted_collateral)?;
        Ok(missing.div(p.mul(l)?)?.max(FixedDec::ZERO))
    }

    pub fn step(&mut self, wallet: &AccountId, ctx: &mut Ctx<'_>) {
        let Ok(needed) = self.top_up_needed(wallet, ctx) else { return };
        let left = self.params.budget.sub(self.memory.spent).unwrap_or_default();
        let amount = needed.min(left).min(ctx.balance(wallet, &self.params.collateral_asset));
        if !amount.is_positive() {
            return;
        }
        let deposit = Action::Deposit { asset: self.params.collateral_asset.clone(), amount };
        if ctx.execute(wallet, deposit).is_ok() {
            self.memory.spent = self.memory.spent.add(amount).unwrap_or(self.memory.spent);
            self.memory.top_ups += 1;
        }
    }
}

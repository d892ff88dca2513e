use serde::{Deserialize, Serialize};

use super::Ctx;
use crate::fixed::FixedDec;
use crate::pool::{AccountId, AssetId};
use crate::world::Action;

/// Three days.
fn default_delay() -> u64 {
    259_200
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Utilization of `asset` strictly above `threshold` for `ticks`
    /// consecutive ticks.
    Utilization { asset: AssetId, threshold: FixedDec, ticks: u64 },
    /// Fires at `tick`.
    Scheduled { tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagChange {
    pub asset: AssetId,
    #[serde(default)]
    pub borrowing_enabled: bool,
    #[serde(default = "yes")]
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernanceParams {
    pub trigger: Trigger,
    pub change: FlagChange,
    /// Seconds between the decision and the change taking effect.
    #[serde(default = "default_delay")]
    pub delay_seconds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GovernanceMemory {
    pub streak: u64,
    pub fired_at: Option<u64>,
}

/// Mechanical risk governance: schedules one reserve-flag change once its
/// trigger holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Governance {
    pub params: GovernanceParams,
    #[serde(default)]
    pub memory: GovernanceMemory,
}

impl Governance {
    pub fn new(params: GovernanceParams) -> Self {
        Self { params, memory: GovernanceMemory::default() }
    }

    pub fn step(&mut self, wallet: &AccountId, ctx: &mut Ctx<'_>) {
        if self.memory.fired_at.is_some() {
            return;
        }
        let fire = match &self.params.trigger {
            Trigger::Scheduled { tick } => ctx.tick() >= *tick,
            Trigger::Utilization { asset, threshold, ticks } => {
                let u = ctx
                    .world()
                    .pool
                    .reserve(asset)
                    .and_then(|r| r.state.utilization())
                    .unwrap_or(FixedDec::ZERO);
                self.memory.streak = if u > *threshold { self.memory.streak + 1 } else { 0 };
                self.memory.streak >= *ticks
            }
        };
        if !fire {
            return;
        }
        let c = &self.params.change;
        let action = Action::ScheduleReserveFlags {
            asset: c.asset.clone(),
            borrowing_enabled: c.borrowing_enabled,
            frozen: c.frozen,
            delay: self.params.delay_seconds,
        };
        if ctx.execute(wallet, action).is_ok() {
            self.memory.fired_at = Some(ctx.tick());
        }
    }
}

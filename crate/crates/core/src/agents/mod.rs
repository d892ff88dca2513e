//! Strategic actors. Each agent owns explicit, serializable memory and acts
//! through a [`Ctx`] that executes and logs actions one at a time, so later
//! actions in a step see the effects of earlier ones.

mod defender;
mod governance;
mod liquidator;
mod loop_attack;
mod passive;
mod squeezer;

use serde::{Deserialize, Serialize};

use crate::fixed::FixedDec;
use crate::pool::{AccountId, AssetId, PoolError, Prices};
use crate::world::{Action, ActionError, Outcome, World};

pub use defender::{Defender, DefenderMemory, DefenderParams};
pub use governance::{FlagChange, Governance, GovernanceMemory, GovernanceParams, Trigger};
pub use liquidator::{Liquidator, LiquidatorMemory, LiquidatorParams};
pub use loop_attack::{LoopAttacker, LoopMemory, LoopParams};
pub use passive::{PassiveLp, PassiveMemory, PassiveParams};
pub use squeezer::{ShortSqueezer, SqueezePhase, SqueezerMemory, SqueezerParams, SecondBorrow};

/// One executed (or rejected) action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub tick: u64,
    pub agent: String,
    pub actor: String,
    pub action: String,
    pub detail: String,
    pub result: String,
}

/// Execution context handed to an agent for one step.
pub struct Ctx<'a> {
    world: &'a mut World,
    agent: &'a str,
    log: &'a mut Vec<ActionRecord>,
    fatal: Option<ActionError>,
}

impl<'a> Ctx<'a> {
    pub fn new(world: &'a mut World, agent: &'a str, log: &'a mut Vec<ActionRecord>) -> Self {
        Self { world, agent, log, fatal: None }
    }

    pub fn world(&self) -> &World {
        self.world
    }

    pub fn prices(&self) -> Prices {
        self.world.prices()
    }

    pub fn tick(&self) -> u64 {
        self.world.tick
    }

    /// Runs `action` for `actor` and logs the result. Rejections come back
    /// as errors for the agent to react to; fatal errors are also kept so
    /// the engine can abort once the step returns.
    pub fn execute(&mut self, actor: &AccountId, action: Action) -> Result<Outcome, ActionError> {
        let result = self.world.apply(actor, &action);
        let summary = match &result {
            Ok(Outcome::Swapped(fill)) => format!("ok out={}", fill.amount_out),
            Ok(Outcome::Liquidated(r)) => format!("ok seized={} via {:?}", r.seized, r.delivery).to_lowercase(),
            Ok(Outcome::Scheduled { effective_at }) => format!("ok effective_at={effective_at}"),
            Ok(Outcome::Done) => "ok".to_owned(),
            Err(e) => format!("rejected: {e}"),
        };
        self.log.push(ActionRecord {
            tick: self.world.tick,
            agent: self.agent.to_owned(),
            actor: actor.to_string(),
            action: action.label().to_owned(),
            detail: action.describe(),
            result: summary,
        });
        if let Err(e) = &result {
            if e.is_fatal() && self.fatal.is_none() {
                self.fatal = Some(e.clone());
            }
        }
        result
    }

    pub fn take_fatal(&mut self) -> Option<ActionError> {
        self.fatal.take()
    }

    pub fn balance(&self, account: &AccountId, asset: &AssetId) -> FixedDec {
        self.world.balance(account, asset)
    }

    pub fn max_borrow(&self, account: &AccountId, asset: &AssetId) -> Result<FixedDec, PoolError> {
        self.world.pool.max_borrow(account, asset, &self.prices())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    ShortSqueezer(ShortSqueezer),
    LoopAttacker(LoopAttacker),
    Liquidator(Liquidator),
    Defender(Defender),
    Governance(Governance),
    PassiveLp(PassiveLp),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub name: String,
    pub wallets: Vec<AccountId>,
    pub start_tick: u64,
    pub end_tick: Option<u64>,
    pub strategy: Strategy,
}

impl Agent {
    pub fn is_active(&self, tick: u64) -> bool {
        tick >= self.start_tick && self.end_tick.is_none_or(|end| tick <= end)
    }

    /// Liquidators act in their own phase after every other agent.
    pub fn is_liquidator(&self) -> bool {
        matches!(self.strategy, Strategy::Liquidator(_))
    }

    pub fn step(&mut self, ctx: &mut Ctx<'_>) {
        let w = &self.wallets;
        match &mut self.strategy {
            Strategy::ShortSqueezer(s) => s.step(&w[0], ctx),
            Strategy::LoopAttacker(s) => s.step(&w[0], &w[1], ctx),
            Strategy::Liquidator(s) => s.step(&w[0], ctx),
            Strategy::Defender(s) => s.step(&w[0], ctx),
            Strategy::Governance(s) => s.step(&w[0], ctx),
            Strategy::PassiveLp(s) => s.step(&w[0], ctx),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.strategy {
            Strategy::ShortSqueezer(_) => "short_squeezer",
            Strategy::LoopAttacker(_) => "loop_attacker",
            Strategy::Liquidator(_) => "liquidator",
            Strategy::Defender(_) => "defender",
            Strategy::Governance(_) => "governance",
            Strategy::PassiveLp(_) => "passive_lp",
        }
    }

    /// Number of wallets the strategy needs.
    pub fn required_wallets(&self) -> usize {
        match self.strategy {
            Strategy::LoopAttacker(_) => 2,
            _ => 1,
        }
    }
}

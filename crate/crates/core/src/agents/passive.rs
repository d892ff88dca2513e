use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Ctx;
use crate::fixed::FixedDec;
use crate::pool::{AccountId, AssetId};
use crate::world::Action;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassiveParams {
    /// Amounts supplied on the first active tick.
    pub deposits: BTreeMap<AssetId, FixedDec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PassiveMemory {
    pub done: bool,
}

/// Supplies liquidity once and then holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassiveLp {
    pub params: PassiveParams,
    #[serde(default)]
    pub memory: PassiveMemory,
}

impl PassiveLp {
    pub fn new(params: PassiveParams) -> Self {
        Self { params, memory: PassiveMemory::default() }
    }

    pub fn step(&mut self, wallet: &AccountId, ctx: &mut Ctx<'_>) {
        if self.memory.done {
            return;
        }
        self.memory.done = true;
        for (asset, amount) in &self.params.deposits {
            let amount = (*amount).min(ctx.balance(wallet, asset));
            if amount.is_positive() {
                let _ = ctx.execute(wallet, Action::Deposit { asset: asset.clone(), amount });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::*;
    use super::super::{Agent, Strategy};
    use super::*;

    #[test]
    fn deposits_once() {
        let mut w = world();
        fund(&mut w, "carol", "USDC", "300");
        let mut agent = Agent {
            name: "carol".into(),
            wallets: vec!["carol".into()],
            start_tick: 0,
            end_tick: None,
            strategy: Strategy::PassiveLp(PassiveLp::new(PassiveParams {
                deposits: [("USDC".into(), d("200"))].into(),
            })),
        };
        let mut log = Vec::new();
        run(&mut agent, &mut w, &mut log);
        run(&mut agent, &mut w, &mut log);
        assert_eq!(log.len(), 1);
        assert_eq!(w.pool.deposit_of(&"carol".into(), &"USDC".into()).unwrap(), d("200"));
        assert_eq!(w.balance(&"carol".into(), &"USDC".into()), d("100"));
    }
}

use serde::{Deserialize, Serialize};

use super::Ctx;
use crate::fixed::FixedDec;
use crate::pool::{AccountId, AssetId};
use crate::venue::Direction;
use crate::world::{Action, Outcome};

fn fifty() -> u32 {
    50
}

fn one_iteration() -> u32 {
    1
}

fn tiny() -> FixedDec {
    FixedDec::from_ratio(1, 1_000_000_000_000)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopParams {
    pub stable: AssetId,
    pub target: AssetId,
    /// Venue with `target` as base and `stable` as quote.
    pub venue: String,
    /// Stable deposited by wallet A; defaults to its whole balance.
    #[serde(default)]
    pub capital: Option<FixedDec>,
    #[serde(default = "fifty")]
    pub max_iterations: u32,
    /// Stop once a stable borrow falls below this amount.
    #[serde(default = "tiny")]
    pub epsilon: FixedDec,
    /// Caps wallet B's first stable borrow at this fraction of capital
    /// instead of its full borrowing power.
    #[serde(default)]
    pub first_borrow_fraction: Option<FixedDec>,
    #[serde(default = "one_iteration")]
    pub iterations_per_tick: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoopMemory {
    pub iterations: u32,
    pub capital: FixedDec,
    pub target_borrowed_a: FixedDec,
    pub stable_borrowed_b: FixedDec,
    pub last_borrow: FixedDec,
    pub done: bool,
}

/// Two-wallet leverage loop. A borrows the target against stable collateral
/// and hands it to B; B repeatedly borrows stable against target collateral
/// and buys more target with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopAttacker {
    pub params: LoopParams,
    #[serde(default)]
    pub memory: LoopMemory,
}

impl LoopAttacker {
    pub fn new(params: LoopParams) -> Self {
        Self { params, memory: LoopMemory::default() }
    }

    /// B borrows stable, bounded by its power and by `cap`.
    fn borrow_stable(&mut self, b: &AccountId, cap: Option<FixedDec>, ctx: &mut Ctx<'_>) -> bool {
        let p = &self.params;
        let mut amount = ctx.max_borrow(b, &p.stable).unwrap_or_default();
        if let Some(cap) = cap {
            amount = amount.min(cap);
        }
        if !amount.is_positive() || ctx.execute(b, Action::Borrow { asset: p.stable.clone(), amount }).is_err() {
            return false;
        }
        self.memory.last_borrow = amount;
        self.memory.stable_borrowed_b = self.memory.stable_borrowed_b.add(amount).unwrap_or(self.memory.stable_borrowed_b);
        true
    }

    fn deposit_all(&self, who: &AccountId, asset: &AssetId, ctx: &mut Ctx<'_>) -> bool {
        let amount = ctx.balance(who, asset);
        amount.is_positive() && ctx.execute(who, Action::Deposit { asset: asset.clone(), amount }).is_ok()
    }

    fn first_iteration(&mut self, a: &AccountId, b: &AccountId, ctx: &mut Ctx<'_>) -> bool {
        let p = self.params.clone();
        let held = ctx.balance(a, &p.stable);
        let capital = p.capital.map_or(held, |c| c.min(held));
        if !capital.is_positive() || ctx.execute(a, Action::Deposit { asset: p.stable.clone(), amount: capital }).is_err() {
            return false;
        }
        self.memory.capital = capital;
        let amount = ctx.max_borrow(a, &p.target).unwrap_or_default();
        if !amount.is_positive() || ctx.execute(a, Action::Borrow { asset: p.target.clone(), amount }).is_err() {
            return false;
        }
        self.memory.target_borrowed_a = amount;
        let transfer = Action::Transfer { to: b.clone(), asset: p.target.clone(), amount };
        if ctx.execute(a, transfer).is_err() || !self.deposit_all(b, &p.target, ctx) {
            return false;
        }
        let cap = p.first_borrow_fraction.map(|f| capital.mul(f).unwrap_or_default());
        self.borrow_stable(b, cap, ctx)
    }

    /// Stable credit opened by depositing `amount` of target.
    fn credit_of(&self, amount: FixedDec, ctx: &Ctx<'_>) -> Option<FixedDec> {
        let p = &self.params;
        let prices = ctx.prices();
        let ltv = ctx.world().pool.reserve(&p.target).ok()?.config.ltv;
        let value = amount.mul(prices.get(&p.target).ok()?).ok()?.mul(ltv).ok()?;
        value.div(prices.get(&p.stable).ok()?).ok()
    }

    fn next_iteration(&mut self, b: &AccountId, ctx: &mut Ctx<'_>) -> bool {
        let p = self.params.clone();
        let spend = self.memory.last_borrow.min(ctx.balance(b, &p.stable));
        if !spend.is_positive() {
            return false;
        }
        let swap = Action::Swap { venue: p.venue.clone(), direction: Direction::BuyBase, amount_in: spend };
        let Ok(Outcome::Swapped(fill)) = ctx.execute(b, swap) else {
            return false;
        };
        if !self.deposit_all(b, &p.target, ctx) {
            return false;
        }
        // Each round only borrows against what it just bought, so unused
        // headroom from a capped first round stays unused.
        let cap = self.credit_of(fill.amount_out, ctx);
        self.borrow_stable(b, cap, ctx)
    }

    pub fn step(&mut self, a: &AccountId, b: &AccountId, ctx: &mut Ctx<'_>) {
        for _ in 0..self.params.iterations_per_tick {
            if self.memory.done || self.memory.iterations >= self.params.max_iterations {
                self.memory.done = true;
                return;
            }
            let progressed = if self.memory.iterations == 0 {
                self.first_iteration(a, b, ctx)
            } else {
                self.next_iteration(b, ctx)
            };
            if !progressed {
                self.memory.done = true;
                return;
            }
            self.memory.iterations += 1;
            if self.memory.last_borrow < self.params.epsilon {
                self.memory.done = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::*;
    use super::super::{Agent, Strategy};
    use super::*;
    use crate::fixed::Rounding;

    fn looper(max_iterations: u32, first_borrow_fraction: Option<&str>) -> Agent {
        Agent {
            name: "loop".into(),
            wallets: vec!["a".into(), "b".into()],
            start_tick: 0,
            end_tick: None,
            strategy: Strategy::LoopAttacker(LoopAttacker::new(LoopParams {
                stable: "USDC".into(),
                target: "REN".into(),
                venue: "ren_usdc".into(),
                capital: None,
                max_iterations,
                epsilon: tiny(),
                first_borrow_fraction: first_borrow_fraction.map(d),
                iterations_per_tick: max_iterations.max(1),
            })),
        }
    }

    fn memory(agent: &Agent) -> &LoopMemory {
        match &agent.strategy {
            Strategy::LoopAttacker(s) => &s.memory,
            _ => unreachable!(),
        }
    }

    fn attack(n: u32, fraction: Option<&str>) -> (Agent, crate::world::World) {
        let mut w = world();
        fund(&mut w, "a", "USDC", "100");
        let mut agent = looper(n, fraction);
        run(&mut agent, &mut w, &mut Vec::new());
        w.check_conservation().unwrap();
        (agent, w)
    }

    #[test]
    fn zero_iterations_do_nothing() {
        let (agent, w) = attack(0, None);
        assert_eq!(memory(&agent).stable_borrowed_b, FixedDec::ZERO);
        assert!(w.pool.positions().all(|p| !p.has_debt()));
    }

    #[test]
    fn one_iteration_borrows_51() {
        let (agent, w) = attack(1, None);
        assert_eq!(memory(&agent).target_borrowed_a, d("85"));
        assert_eq!(memory(&agent).stable_borrowed_b, d("51"));
        assert_eq!(w.pool.debt_of(&"b".into(), &"USDC".into()).unwrap(), d("51"));
    }

    #[test]
    fn partial_sums_follow_geometric_series() {
        for n in 1..=30u32 {
            let (agent, _) = attack(n, None);
            // 100 * 0.85 * 0.6 * (1 - 0.6^n) / 0.4
            let ratio = d("0.6").pow_int(n.into()).unwrap();
            let expected = d("127.5").mul(FixedDec::ONE.sub(ratio).unwrap()).unwrap();
            let got = memory(&agent).stable_borrowed_b;
            assert!(got.ulps_from(expected) <= 10 * u128::from(n), "n={n}: {got} vs {expected}");
        }
    }

    #[test]
    fn converges_to_127_5_and_125_with_rounded_seed() {
        let (agent, _) = attack(50, None);
        let total = memory(&agent).stable_borrowed_b;
        let rel = total.sub(d("127.5")).unwrap().abs().div_rounded(d("127.5"), Rounding::AwayFromZero).unwrap();
        assert!(rel <= d("0.000000001"), "{total}");

        let (agent, _) = attack(50, Some("0.5"));
        let total = memory(&agent).stable_borrowed_b;
        let rel = total.sub(d("125")).unwrap().abs().div_rounded(d("125"), Rounding::AwayFromZero).unwrap();
        assert!(rel <= d("0.000000001"), "{total}");
    }
}

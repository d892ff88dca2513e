#![allow(dead_code)]

use std::collections::BTreeMap;

use lendsim::pool::{AccountId, AssetId, Delivery, LendingPool, PoolError, Prices, ReserveConfig};
use lendsim::rates::RateParams;
use lendsim::FixedDec;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const ASSETS: [&str; 3] = ["USDC", "CRV", "REN"];

pub fn d(s: &str) -> FixedDec {
    s.parse().unwrap()
}

/// A position imported into a deep three-reserve pool, plus the prices it is
/// valued at and one liquidation to attempt against it.
#[derive(Debug, Clone)]
pub struct Case {
    pub deposits: BTreeMap<AssetId, FixedDec>,
    pub debts: BTreeMap<AssetId, FixedDec>,
    pub prices: Prices,
    pub elapsed: u64,
    pub repay_fraction: FixedDec,
    pub underlying: bool,
}

impl Case {
    pub fn single_crv(&self) -> bool {
        self.deposits.len() == 1 && self.deposits.contains_key(&AssetId::from("CRV")) && self.debts.len() == 1
    }
}

fn milli(lo: i128, hi: i128) -> impl Strategy<Value = FixedDec> {
    (lo..hi).prop_map(|n| FixedDec::from_ratio(n, 1000))
}

fn prices() -> impl Strategy<Value = Prices> {
    (milli(50, 5000), milli(10, 2000)).prop_map(|(crv, ren)| {
        let mut p = Prices::new();
        p.insert("USDC".into(), FixedDec::ONE);
        p.insert("CRV".into(), crv);
        p.insert("REN".into(), ren);
        p
    })
}

fn subset() -> impl Strategy<Value = Vec<AssetId>> {
    prop::sample::subsequence(ASSETS.to_vec(), 1..=3).prop_map(|v| v.into_iter().map(AssetId::from).collect())
}

/// Debt is sized as a fraction of collateral value so that health factors
/// straddle both 1 and the liquidation thresholds.
#[allow(clippy::too_many_arguments)]
fn build(
    deposit_assets: Vec<AssetId>,
    debt_assets: Vec<AssetId>,
    amounts: Vec<FixedDec>,
    leverage: FixedDec,
    prices: Prices,
    elapsed: u64,
    repay_fraction: FixedDec,
    underlying: bool,
) -> Case {
    let deposits: BTreeMap<AssetId, FixedDec> = deposit_assets.into_iter().zip(amounts).collect();
    let collateral_value = FixedDec::checked_sum(deposits.iter().map(|(a, x)| x.mul(prices.get(a).unwrap()).unwrap())).unwrap();
    let share = collateral_value.mul(leverage).unwrap().div(FixedDec::from_integer(debt_assets.len() as i128)).unwrap();
    let debts = debt_assets
        .into_iter()
        .map(|a| {
            let amount = share.div(prices.get(&a).unwrap()).unwrap().max(FixedDec::ULP);
            (a, amount)
        })
        .collect();
    Case { deposits, debts, prices, elapsed, repay_fraction, underlying }
}

pub fn case() -> impl Strategy<Value = Case> {
    (
        subset(),
        subset(),
        prop::collection::vec(milli(1, 100_000_000), 3),
        milli(200, 1600),
        prices(),
        0u64..2_592_000,
        milli(1, 1001),
        any::<bool>(),
    )
        .prop_map(|(dep, debt, amounts, lev, p, t, f, u)| build(dep, debt, amounts, lev, p, t, f, u))
}

pub fn single_collateral_case() -> impl Strategy<Value = Case> {
    (
        prop::sample::select(ASSETS.to_vec()),
        milli(1, 100_000_000),
        milli(200, 1600),
        prices(),
        0u64..2_592_000,
        milli(1, 1001),
        any::<bool>(),
    )
        .prop_map(|(debt, amount, lev, p, t, f, u)| {
            build(vec!["CRV".into()], vec![debt.into()], vec![amount], lev, p, t, f, u)
        })
}

pub fn pool_for(case: &Case) -> (LendingPool, AccountId) {
    let mut pool = LendingPool::new(0);
    for (asset, ltv, lt) in [("USDC", "0.85", "0.88"), ("CRV", "0.55", "0.89"), ("REN", "0.60", "0.65")] {
        pool.list_reserve(asset.into(), ReserveConfig::new(d(ltv), d(lt), RateParams::crv())).unwrap();
        pool.deposit(&"lp".into(), &asset.into(), d("1000000000000")).unwrap();
    }
    let who = AccountId::from("target");
    pool.import_position(&who, &case.deposits, &case.debts).unwrap();
    pool.advance_to(case.elapsed).unwrap();
    (pool, who)
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

/// Liquidatability matches `H < 1` exactly, and a liquidation at unchanged
/// prices never enlarges the pool's total shortfall.
pub fn check_liquidation(case: &Case) -> Result<(), TestCaseError> {
    let (pool, who) = pool_for(case);
    let h = pool.health_factor(&who, &case.prices).map_err(fail)?;
    let bad_before = pool.bad_debt(&case.prices).map_err(fail)?.total;
    let (debt_asset, debt) = case.debts.iter().next().map(|(a, _)| (a.clone(), pool.debt_of(&who, a).unwrap())).unwrap();
    let collateral = case.deposits.keys().next().unwrap().clone();
    let repay = debt.mul(d("0.5")).unwrap().mul(case.repay_fraction).unwrap().max(FixedDec::ULP);
    let delivery = if case.underlying { Delivery::Underlying } else { Delivery::Deposit };
    let mut after = pool.clone();
    match after.liquidate(&"liq".into(), &who, &debt_asset, &collateral, repay, &case.prices, delivery) {
        Ok(_) => {
            prop_assert!(h < FixedDec::ONE, "liquidated at H = {}", h);
            let bad_after = after.bad_debt(&case.prices).map_err(fail)?.total;
            prop_assert!(bad_after <= bad_before, "shortfall grew {} -> {}", bad_before, bad_after);
            after.check_invariants().map_err(fail)?;
        }
        Err(PoolError::NotLiquidatable { .. }) => prop_assert!(h >= FixedDec::ONE, "refused at H = {}", h),
        Err(e) => return Err(fail(format!("unexpected {e} at H = {h}"))),
    }
    Ok(())
}

/// With CRV as the only collateral, the position is insolvent exactly when
/// its health factor is below CRV's liquidation threshold. Cases within a few
/// ulps of the boundary are skipped: there `C·l` and `H` round independently.
pub fn check_threshold(case: &Case) -> Result<(), TestCaseError> {
    let (pool, who) = pool_for(case);
    let v = pool.valuation(&who, &case.prices).map_err(fail)?;
    prop_assume!(v.collateral_value.ulps_from(v.debt_value) > 1000);
    let h = v.health_factor().map_err(fail)?;
    let shortfall = v.shortfall().map_err(fail)?;
    prop_assert_eq!(shortfall.is_positive(), h < d("0.89"), "H = {}, shortfall = {}", h, shortfall);
    Ok(())
}

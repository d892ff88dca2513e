use super::*;
use crate::rates::RateParams;

fn d(s: &str) -> FixedDec {
    s.parse().unwrap()
}

fn a(s: &str) -> AssetId {
    AssetId::from(s)
}

fn acct(s: &str) -> AccountId {
    AccountId::from(s)
}

fn config(ltv: &str, lt: &str) -> ReserveConfig {
    ReserveConfig::new(d(ltv), d(lt), RateParams::crv())
}

/// USDC (ltv 0.85 / lt 0.88), CRV (0.55 / 0.89), REN (0.60 / 0.65), all at price 1.
fn market() -> (LendingPool, Prices) {
    let mut pool = LendingPool::new(0);
    pool.list_reserve(a("USDC"), config("0.85", "0.88")).unwrap();
    pool.list_reserve(a("CRV"), config("0.55", "0.89")).unwrap();
    pool.list_reserve(a("REN"), config("0.60", "0.65")).unwrap();
    let lp = acct("lp");
    for asset in ["USDC", "CRV", "REN"] {
        pool.deposit(&lp, &a(asset), d("1000000")).unwrap();
    }
    let prices = [("USDC", "1"), ("CRV", "1"), ("REN", "1")]
        .into_iter()
        .map(|(k, v)| (a(k), d(v)))
        .collect();
    (pool, prices)
}

#[test]
fn large_stable_deposit_is_collateral() {
    let (mut pool, prices) = market();
    let attacker = acct("attacker");
    pool.deposit(&attacker, &a("USDC"), d("39000000")).unwrap();
    assert_eq!(pool.valuation(&attacker, &prices).unwrap().collateral_value, d("39000000"));
}

#[test]
fn zero_deposit_rejected() {
    let (mut pool, _) = market();
    assert_eq!(pool.deposit(&acct("x"), &a("USDC"), FixedDec::ZERO), Err(PoolError::InvalidAmount(FixedDec::ZERO)));
}

#[test]
fn split_deposit_equivalent_to_single() {
    let (mut one, _) = market();
    let (mut two, _) = market();
    one.deposit(&acct("u"), &a("CRV"), d("100")).unwrap();
    two.deposit(&acct("u"), &a("CRV"), d("50")).unwrap();
    two.deposit(&acct("u"), &a("CRV"), d("50")).unwrap();
    assert_eq!(one, two);
}

#[test]
fn borrow_at_ltv_boundary() {
    let (mut pool, prices) = market();
    let u = acct("u");
    pool.deposit(&u, &a("USDC"), d("100")).unwrap();
    assert_eq!(
        pool.borrow(&u, &a("REN"), d("85.000000000000000001"), &prices),
        Err(PoolError::CollateralInsufficient(u.clone()))
    );
    pool.borrow(&u, &a("REN"), d("85"), &prices).unwrap();
    assert_eq!(pool.debt_of(&u, &a("REN")).unwrap(), d("85"));
    assert_eq!(pool.max_borrow(&u, &a("USDC"), &prices).unwrap(), FixedDec::ZERO);
}

#[test]
fn borrow_beyond_available_liquidity() {
    let (mut pool, prices) = market();
    let whale = acct("whale");
    pool.deposit(&whale, &a("USDC"), d("10000000")).unwrap();
    let err = pool.borrow(&whale, &a("CRV"), d("1000000.5"), &prices).unwrap_err();
    assert!(matches!(err, PoolError::LiquidityExhausted { .. }));
    pool.borrow(&whale, &a("CRV"), d("1000000"), &prices).unwrap();
    let state = &pool.reserve(&a("CRV")).unwrap().state;
    assert_eq!(state.available_liquidity(), FixedDec::ZERO);
    assert_eq!(state.utilization().unwrap(), FixedDec::ONE);
    let err = pool.borrow(&whale, &a("CRV"), d("0.000000000000000001"), &prices).unwrap_err();
    assert!(matches!(err, PoolError::LiquidityExhausted { .. }));
}

#[test]
fn borrow_without_collateral() {
    let (mut pool, prices) = market();
    assert_eq!(
        pool.borrow(&acct("nobody"), &a("CRV"), d("1"), &prices),
        Err(PoolError::CollateralInsufficient(acct("nobody")))
    );
}

#[test]
fn repay_then_withdraw_empties_position() {
    let (mut pool, prices) = market();
    let u = acct("u");
    pool.deposit(&u, &a("USDC"), d("100")).unwrap();
    pool.borrow(&u, &a("CRV"), d("40"), &prices).unwrap();
    pool.advance_to(86_400 * 7).unwrap();
    let debt = pool.debt_of(&u, &a("CRV")).unwrap();
    assert!(debt > d("40"));
    pool.repay(&u, &a("CRV"), debt).unwrap();
    let deposit = pool.deposit_of(&u, &a("USDC")).unwrap();
    pool.withdraw(&u, &a("USDC"), deposit, &prices).unwrap();
    assert!(pool.position(&u).unwrap().is_empty());
}

#[test]
fn over_repay_and_over_withdraw() {
    let (mut pool, prices) = market();
    let u = acct("u");
    pool.deposit(&u, &a("USDC"), d("100")).unwrap();
    pool.borrow(&u, &a("CRV"), d("10"), &prices).unwrap();
    assert!(matches!(pool.repay(&u, &a("CRV"), d("10.1")), Err(PoolError::AmountExceedsBalance { .. })));
    assert!(matches!(
        pool.withdraw(&u, &a("USDC"), d("100.1"), &prices),
        Err(PoolError::AmountExceedsBalance { .. })
    ));
}

#[test]
fn withdraw_blocked_below_health_one() {
    let (mut pool, prices) = market();
    let u = acct("u");
    pool.deposit(&u, &a("CRV"), d("100")).unwrap();
    pool.borrow(&u, &a("USDC"), d("50"), &prices).unwrap();
    // Price drop puts the position between LTV (0.55) and threshold (0.89):
    // H = 80 * 0.89 / 50 = 1.424.
    let mut low = prices.clone();
    low.insert(a("CRV"), d("0.8"));
    // Leaving 56.179775... CRV * 0.8 * 0.89 = 40 gives H just above 0.8; any
    // withdrawal here breaks the LTV limit first.
    assert_eq!(
        pool.withdraw(&u, &a("CRV"), d("1"), &low),
        Err(PoolError::CollateralInsufficient(u.clone()))
    );
    // At the original price the LTV boundary is 50 / 0.55 = 90.909..., so
    // withdrawing 9 passes and 10 fails.
    pool.withdraw(&u, &a("CRV"), d("9"), &prices).unwrap();
    assert_eq!(
        pool.withdraw(&u, &a("CRV"), d("1"), &prices),
        Err(PoolError::CollateralInsufficient(u.clone()))
    );
    // With no LTV cushion (ltv == threshold) the health-factor bound binds:
    // 89 CRV * 0.89 = 79.21 ≥ 79.21 debt, one more ulp breaks H >= 1.
    let mut pool = LendingPool::new(0);
    pool.list_reserve(a("CRV"), config("0.89", "0.89")).unwrap();
    pool.list_reserve(a("USDC"), config("0.85", "0.88")).unwrap();
    pool.deposit(&acct("lp"), &a("USDC"), d("1000")).unwrap();
    pool.deposit(&u, &a("CRV"), d("100")).unwrap();
    pool.borrow(&u, &a("USDC"), d("79.21"), &prices).unwrap();
    assert_eq!(
        pool.withdraw(&u, &a("CRV"), d("11.000000000000000001"), &prices),
        Err(PoolError::CollateralInsufficient(u.clone()))
    );
    pool.withdraw(&u, &a("CRV"), d("11"), &prices).unwrap();
    assert_eq!(pool.health_factor(&u, &prices).unwrap(), FixedDec::ONE);
}

#[test]
fn partial_repay_at_index() {
    let (mut pool, prices) = market();
    let u = acct("u");
    pool.deposit(&u, &a("USDC"), d("2000000")).unwrap();
    pool.borrow(&u, &a("CRV"), d("1000000"), &prices).unwrap();
    pool.advance_to(86_400).unwrap();
    assert_eq!(pool.reserve(&a("CRV")).unwrap().state.borrow_index, d("1.008410958904109589"));
    let before = pool.debt_of(&u, &a("CRV")).unwrap();
    pool.repay(&u, &a("CRV"), d("1234.5")).unwrap();
    let after = pool.debt_of(&u, &a("CRV")).unwrap();
    assert!(before.sub(d("1234.5")).unwrap().ulps_from(after) <= 1);

    let (mut fresh, _) = market();
    fresh.deposit(&u, &a("USDC"), d("100")).unwrap();
    fresh.borrow(&u, &a("CRV"), d("50"), &prices).unwrap();
    fresh.repay(&u, &a("CRV"), d("20")).unwrap();
    assert_eq!(fresh.debt_of(&u, &a("CRV")).unwrap(), d("30"));
}

#[test]
fn health_factor_examples() {
    let (mut pool, prices) = market();
    let u = acct("u");
    pool.deposit(&u, &a("CRV"), d("100")).unwrap();
    assert_eq!(pool.health_factor(&u, &prices).unwrap(), FixedDec::INF);
    pool.import_position(&u, &BTreeMap::new(), &[(a("USDC"), d("89"))].into()).unwrap();
    assert_eq!(pool.health_factor(&u, &prices).unwrap(), FixedDec::ONE);

    let mut pool = LendingPool::new(0);
    pool.list_reserve(a("X"), config("0.7", "0.8")).unwrap();
    pool.list_reserve(a("Y"), config("0.5", "0.6")).unwrap();
    pool.list_reserve(a("Z"), config("0.5", "0.6")).unwrap();
    pool.deposit(&acct("lp"), &a("Z"), d("1000")).unwrap();
    pool.deposit(&u, &a("X"), d("100")).unwrap();
    pool.deposit(&u, &a("Y"), d("50")).unwrap();
    let prices: Prices = [(a("X"), d("1")), (a("Y"), d("1")), (a("Z"), d("1"))].into_iter().collect();
    pool.borrow(&u, &a("Z"), d("55"), &prices).unwrap();
    assert_eq!(pool.health_factor(&u, &prices).unwrap(), d("2"));
}

#[test]
fn missing_price() {
    let (mut pool, _) = market();
    let u = acct("u");
    pool.deposit(&u, &a("CRV"), d("100")).unwrap();
    let partial: Prices = [(a("USDC"), d("1"))].into_iter().collect();
    assert_eq!(pool.health_factor(&u, &partial), Err(PoolError::OracleMissing(a("CRV"))));
}

fn underwater_market(collateral: &str, debt: &str) -> (LendingPool, Prices, AccountId) {
    let (mut pool, prices) = market();
    let u = acct("target");
    pool.import_position(&u, &[(a("CRV"), d(collateral))].into(), &[(a("USDC"), d(debt))].into()).unwrap();
    (pool, prices, u)
}

#[test]
fn liquidation_with_bonus() {
    // H = 106 * 0.89 / 100 = 0.9434
    let (mut pool, prices, u) = underwater_market("106", "100");
    let liq = acct("liq");
    let r = pool
        .liquidate(&liq, &u, &a("USDC"), &a("CRV"), d("50"), &prices, Delivery::Underlying)
        .unwrap();
    assert_eq!(r.seized, d("52.5"));
    assert_eq!(r.delivery, Delivery::Underlying);
    assert_eq!(pool.debt_of(&u, &a("USDC")).unwrap(), d("50"));
    assert_eq!(pool.deposit_of(&u, &a("CRV")).unwrap(), d("53.5"));
}

#[test]
fn health_exactly_one_is_safe() {
    let (mut pool, prices, u) = underwater_market("100", "89");
    assert_eq!(pool.health_factor(&u, &prices).unwrap(), FixedDec::ONE);
    let err = pool
        .liquidate(&acct("liq"), &u, &a("USDC"), &a("CRV"), d("1"), &prices, Delivery::Underlying)
        .unwrap_err();
    assert!(matches!(err, PoolError::NotLiquidatable { .. }));
}

#[test]
fn close_factor_enforced() {
    let (mut pool, prices, u) = underwater_market("106", "100");
    let err = pool
        .liquidate(&acct("liq"), &u, &a("USDC"), &a("CRV"), d("50.000000000000000001"), &prices, Delivery::Underlying)
        .unwrap_err();
    assert!(matches!(err, PoolError::CloseFactorExceeded { .. }));
}

#[test]
fn seizure_capped_at_collateral_balance() {
    let (mut pool, prices) = market();
    let u = acct("target");
    pool.import_position(
        &u,
        &[(a("USDC"), d("51")), (a("CRV"), d("60"))].into(),
        &[(a("REN"), d("100"))].into(),
    )
    .unwrap();
    // H = (51*0.88 + 60*0.89) / 100 = 0.9828; equity 11 covers the bonus.
    let r = pool
        .liquidate(&acct("liq"), &u, &a("REN"), &a("USDC"), d("50"), &prices, Delivery::Underlying)
        .unwrap();
    assert_eq!(r.seized, d("51"));
    assert_eq!(pool.deposit_of(&u, &a("USDC")).unwrap(), FixedDec::ZERO);
}

#[test]
fn underwater_liquidation_pays_no_bonus() {
    let (mut pool, prices, u) = underwater_market("80", "89");
    let before = pool.bad_debt(&prices).unwrap().total;
    assert_eq!(before, d("9"));
    let r = pool
        .liquidate(&acct("liq"), &u, &a("USDC"), &a("CRV"), d("40"), &prices, Delivery::Underlying)
        .unwrap();
    assert_eq!(r.seized, d("40"));
    assert_eq!(pool.bad_debt(&prices).unwrap().total, before);
}

#[test]
fn seized_as_deposit_when_cash_short() {
    let (mut pool, prices, u) = underwater_market("106", "100");
    let whale = acct("whale");
    pool.deposit(&whale, &a("USDC"), d("5000000")).unwrap();
    let cash = pool.reserve(&a("CRV")).unwrap().state.cash;
    pool.borrow(&whale, &a("CRV"), cash, &prices).unwrap();
    let liq = acct("liq");
    let r = pool
        .liquidate(&liq, &u, &a("USDC"), &a("CRV"), d("50"), &prices, Delivery::Underlying)
        .unwrap();
    assert_eq!(r.delivery, Delivery::Deposit);
    assert_eq!(pool.deposit_of(&liq, &a("CRV")).unwrap(), d("52.5"));
}

#[test]
fn bad_debt_examples() {
    let (pool, prices, u) = underwater_market("80", "89");
    let report = pool.bad_debt(&prices).unwrap();
    assert_eq!(report.total, d("9"));
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.records[0].account, u);

    let (pool, prices, _) = underwater_market("106", "100");
    assert!(pool.bad_debt(&prices).unwrap().records.is_empty());
}

#[test]
fn reserve_flags() {
    let (mut pool, prices) = market();
    let u = acct("u");
    pool.deposit(&u, &a("USDC"), d("100")).unwrap();
    pool.borrow(&u, &a("CRV"), d("10"), &prices).unwrap();
    pool.set_reserve_flags(&a("CRV"), false, true).unwrap();
    assert_eq!(pool.borrow(&u, &a("CRV"), d("1"), &prices), Err(PoolError::ReserveFrozen(a("CRV"))));
    assert_eq!(pool.deposit(&u, &a("CRV"), d("1")), Err(PoolError::ReserveFrozen(a("CRV"))));
    pool.repay(&u, &a("CRV"), d("5")).unwrap();
    pool.set_reserve_flags(&a("CRV"), false, false).unwrap();
    assert_eq!(pool.borrow(&u, &a("CRV"), d("1"), &prices), Err(PoolError::BorrowingDisabled(a("CRV"))));
    pool.set_reserve_flags(&a("CRV"), true, false).unwrap();
    pool.borrow(&u, &a("CRV"), d("1"), &prices).unwrap();
    assert_eq!(pool.set_reserve_flags(&a("DOGE"), true, true), Err(PoolError::NotFound(a("DOGE"))));
}

#[test]
fn debt_sums_to_reserve_total() {
    let (mut pool, prices) = market();
    for (i, amt) in ["123.456", "7890.1", "0.000001", "55555"].iter().enumerate() {
        let u = acct(&format!("b{i}"));
        pool.deposit(&u, &a("USDC"), d("100000")).unwrap();
        pool.borrow(&u, &a("CRV"), d(amt), &prices).unwrap();
        pool.advance_to(3_600 * (i as u64 + 1)).unwrap();
    }
    let state = &pool.reserve(&a("CRV")).unwrap().state;
    let sum = FixedDec::checked_sum((0..4).map(|i| pool.debt_of(&acct(&format!("b{i}")), &a("CRV")).unwrap())).unwrap();
    assert!(sum.ulps_from(state.total_debt) <= 4);
    assert_eq!(state.total_liquidity.sub(state.total_debt).unwrap(), state.cash);
}

#[test]
fn snapshot_round_trip_and_rejection() {
    let (mut pool, prices) = market();
    let u = acct("u");
    pool.deposit(&u, &a("USDC"), d("100")).unwrap();
    pool.borrow(&u, &a("CRV"), d("10"), &prices).unwrap();
    pool.advance_to(1000).unwrap();
    let text = pool.to_snapshot();
    assert_eq!(LendingPool::from_snapshot(&text).unwrap(), pool);

    let tampered = text.replacen("\"cash\": \"999990\"", "\"cash\": \"5\"", 1);
    assert_ne!(tampered, text);
    assert!(matches!(LendingPool::from_snapshot(&tampered), Err(PoolError::InvalidState(_))));
    assert!(LendingPool::from_snapshot("{not json").is_err());
}

#![no_main]

use libfuzzer_sys::fuzz_target;
use lendsim::pool::LendingPool;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(pool) = LendingPool::from_snapshot(text) {
        pool.check_invariants().unwrap();
        assert_eq!(LendingPool::from_snapshot(&pool.to_snapshot()).unwrap(), pool);
    }
});

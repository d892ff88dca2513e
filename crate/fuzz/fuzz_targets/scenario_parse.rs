#![no_main]

use libfuzzer_sys::fuzz_target;
use lendsim::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Scenario::from_toml_str(text) {
        assert_eq!(s.hash.len(), 64);
        assert!(s.horizon_ticks > 0);
    }
});

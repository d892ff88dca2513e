#![no_main]

use libfuzzer_sys::fuzz_target;
use lendsim::scenario::{self, Scenario};

// Each input line is one `path=value` override against a bundled scenario.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(overrides) = text.lines().map(scenario::parse_override).collect::<Result<Vec<_>, _>>() else { return };
    let source = scenario::bundled_source("governance_sweep").unwrap();
    let _ = Scenario::from_toml_with_overrides(source, &overrides);
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use lendsim::feasibility::{self, Thresholds};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(snaps) = feasibility::parse_snapshot_csv(text) else { return };
    if let Ok(rows) = feasibility::rank(&snaps, &Thresholds::default()) {
        assert_eq!(rows.len(), snaps.len());
        let _ = feasibility::render_table(&rows);
    }
});

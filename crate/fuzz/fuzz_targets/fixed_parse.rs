#![no_main]

use libfuzzer_sys::fuzz_target;
use lendsim::FixedDec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = text.parse::<FixedDec>() {
        let shown = x.to_string();
        assert_eq!(shown.parse::<FixedDec>().unwrap(), x, "{text:?} displayed as {shown:?}");
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(serde_json::from_str::<FixedDec>(&json).unwrap(), x);
    }
});

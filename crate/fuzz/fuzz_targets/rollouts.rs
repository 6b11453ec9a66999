#![no_main]

use libfuzzer_sys::fuzz_target;
use lts_core::lti::RolloutSet;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = RolloutSet::from_json(text) {
        assert_eq!(RolloutSet::from_json(&x.to_json()).unwrap(), x);
    }
});

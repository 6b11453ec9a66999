#![no_main]

use libfuzzer_sys::fuzz_target;
use lts_core::control::DynamicController;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = DynamicController::from_json(text) {
        assert_eq!(DynamicController::from_json(&x.to_json()).unwrap(), x);
    }
});

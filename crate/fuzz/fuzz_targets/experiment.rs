#![no_main]

use libfuzzer_sys::fuzz_target;
use lts_core::bench::ExperimentSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = ExperimentSpec::from_json(text) {
        assert_eq!(ExperimentSpec::from_json(&x.to_json()).unwrap(), x);
    }
});

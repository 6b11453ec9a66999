#![no_main]

use libfuzzer_sys::fuzz_target;
use lts_core::lti::GenSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<GenSpec>(data) else { return };
    let again: GenSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(again, spec);
    let _ = spec.validate();
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use lts_core::sysid::IdentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = serde_json::from_slice::<IdentConfig>(data) else { return };
    let again: IdentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(again, cfg);
    // validation must not panic for any lengths
    for t in [0, 1, 16, usize::MAX] {
        let _ = cfg.validate(t).and_then(|_| cfg.check_order(1, 1));
    }
});

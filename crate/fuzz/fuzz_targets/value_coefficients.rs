#![no_main]

use actguide::hjb::ValueCoefficients;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = ValueCoefficients::from_json(text) {
        let again = ValueCoefficients::from_json(&c.to_json()).expect("re-parse");
        assert_eq!(c, again);
        let t = c.grid[0];
        let _ = c.value(&vec![0.5; c.num_users()], t);
    }
});

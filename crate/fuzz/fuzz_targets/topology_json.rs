#![no_main]

use actguide::network::NetworkTopology;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(top) = NetworkTopology::from_json(text) {
        let again = NetworkTopology::from_json(&top.to_json()).expect("re-parse");
        assert_eq!(top, again);
    }
});

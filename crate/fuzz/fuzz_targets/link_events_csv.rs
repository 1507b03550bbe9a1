#![no_main]

use actguide::dynnet::LinkEvents;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, body)) = data.split_first() else {
        return;
    };
    let users = n as usize % 16 + 1;
    if let Ok(ev) = LinkEvents::read_csv(body, (0.0, 10.0), users) {
        let mut out = Vec::new();
        ev.write_csv(&mut out).expect("write");
        let again = LinkEvents::read_csv(out.as_slice(), (0.0, 10.0), users).expect("re-parse");
        assert_eq!(ev, again);
    }
});

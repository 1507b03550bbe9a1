#![no_main]

use actguide::pointproc::EventLog;
use libfuzzer_sys::fuzz_target;

// First byte picks the user count; the rest is the CSV document.
fuzz_target!(|data: &[u8]| {
    let Some((&n, body)) = data.split_first() else {
        return;
    };
    let users = n as usize % 16 + 1;
    if let Ok(log) = EventLog::read_csv(body, (0.0, 100.0), users) {
        log.validate(users).expect("parsed log is valid");
        // times are written with fixed precision, so one round trip normalizes
        let text = log.to_csv_string();
        let again = EventLog::read_csv(text.as_bytes(), (0.0, 100.0), users).expect("re-parse");
        assert_eq!(text, again.to_csv_string());
    }
});

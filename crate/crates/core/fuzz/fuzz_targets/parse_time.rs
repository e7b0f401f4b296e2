#![no_main]

use libfuzzer_sys::fuzz_target;
use stockout::io::parse_time;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Some(t) = parse_time(text) {
            assert!(t.is_finite());
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use stockout::io::scenario_from_toml;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = scenario_from_toml(text) {
            let _ = spec.validate();
        }
    }
});

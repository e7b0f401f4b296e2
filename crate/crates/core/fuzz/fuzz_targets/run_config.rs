#![no_main]

use libfuzzer_sys::fuzz_target;
use stockout::io::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = RunConfig::from_toml(text) {
            let _ = config.rate_model();
            let _ = config.clock();
        }
    }
});

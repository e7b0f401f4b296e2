#![no_main]

use libfuzzer_sys::fuzz_target;
use stockout::io::{parse_transactions, Clock, TransactionOptions};

fuzz_target!(|data: &[u8]| {
    let plain = TransactionOptions::new(10.0);
    if let Ok(parsed) = parse_transactions(data, &plain) {
        parsed.validate().expect("parsed datasets are valid");
    }
    let clocked = TransactionOptions { clock: Some(Clock { open: 7.0, close: 19.0 }), ..TransactionOptions::new(12.0) };
    let _ = parse_transactions(data, &clocked);
});

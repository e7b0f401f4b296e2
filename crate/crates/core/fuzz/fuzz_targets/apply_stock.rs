#![no_main]

use libfuzzer_sys::fuzz_target;
use stockout::io::{apply_stock, parse_transactions, ColumnMap, TransactionOptions};

const TRANSACTIONS: &str = "store_id,period_id,item_id,purchase_time\n1,1,a,1.5\n1,2,b,3\n2,1,a,9.5\n";

fuzz_target!(|data: &[u8]| {
    let mut parsed = parse_transactions(TRANSACTIONS.as_bytes(), &TransactionOptions::new(10.0)).unwrap();
    if apply_stock(&mut parsed, data, &ColumnMap::default()).is_ok() {
        parsed.validate().expect("stocked datasets are valid");
    }
});

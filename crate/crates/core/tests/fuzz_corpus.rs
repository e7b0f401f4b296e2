//! The checked-in fuzz seeds go through the same entry points as the fuzz
//! targets, and the well-formed ones parse.

use std::fs;
use std::path::{Path, PathBuf};

use stockout::io::{
    apply_stock, parse_time, parse_transactions, read_samples, scenario_from_toml, ColumnMap, RunConfig,
    TransactionOptions,
};
use stockout::model::{ChoiceSpec, ModelSpec};
use stockout::RateModel;

fn seeds(target: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<PathBuf> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn transaction_seeds_parse() {
    for path in seeds("parse_transactions") {
        let data = parse_transactions(fs::read(&path).unwrap().as_slice(), &TransactionOptions::new(24.0));
        data.unwrap_or_else(|e| panic!("{}: {e}", path.display())).validate().unwrap();
    }
}

#[test]
fn stock_seeds_reach_the_checks() {
    let tx = "store_id,period_id,item_id,purchase_time\n1,1,a,1.5\n1,2,b,3\n2,1,a,9.5\n";
    for path in seeds("apply_stock") {
        let mut data = parse_transactions(tx.as_bytes(), &TransactionOptions::new(10.0)).unwrap();
        let result = apply_stock(&mut data, fs::read(&path).unwrap().as_slice(), &ColumnMap::default());
        assert_eq!(result.is_ok(), path.to_string_lossy().contains("full"), "{}", path.display());
    }
}

#[test]
fn sample_seeds_parse() {
    let spec = ModelSpec::new(RateModel::homogeneous(), ChoiceSpec::Exogenous { segments: 1 }, 2, 1).unwrap();
    let names = spec.natural_names(&["1".into()], &["a".into(), "b".into()]);
    for path in seeds("read_samples") {
        let (samples, prov) = read_samples(fs::read(&path).unwrap().as_slice(), &spec, &names).unwrap();
        assert_eq!(samples.chains.len(), 2);
        assert!(prov.iter().any(|(k, _)| k == "command"));
    }
}

#[test]
fn config_seeds_parse() {
    for path in seeds("run_config") {
        RunConfig::from_toml(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
    for path in seeds("scenario_toml") {
        scenario_from_toml(&fs::read_to_string(&path).unwrap()).unwrap().validate().unwrap();
    }
}

#[test]
fn time_seeds_parse() {
    for path in seeds("parse_time") {
        assert!(parse_time(&fs::read_to_string(&path).unwrap()).is_some(), "{}", path.display());
    }
}

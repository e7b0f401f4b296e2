//! End-to-end runs of the `stockout` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = r#"
stores = 2
items = 3
horizon = 50.0
periods = 10
seed = 4

[rate]
kind = "homogeneous"
ranges = [[2.0, 4.0]]

[choice]
family = "exogenous"
prefs = [[0.6, 0.3, 0.1]]
substitution = [0.7]

[weights]
rule = "fixed"
values = [1.0]

[stock]
rule = "uniform"
min = 0
max = 60
"#;

const FIT: &str = r#"
seed = 2
split = 0.8
output = "run"

[data]
transactions = "sim/transactions.csv"
stock = "sim/stock.csv"
horizon = 50.0

[model]
rate = "homogeneous"
choice = "exogenous"

[sampler]
iterations = 300
chains = 2
"#;

fn stockout(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stockout")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), stderr(&out));
    stdout(&out)
}

/// Data rows of a CSV file written by the tool, without `#` comments.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("scenario.toml"), SCENARIO).unwrap();
    fs::write(dir.join("fit.toml"), FIT).unwrap();

    let said = ok(stockout(dir, &["simulate", "--config", "scenario.toml", "--out", "sim"]));
    assert!(said.contains("simulated 2 stores"));
    for f in ["transactions.csv", "stock.csv", "truth.csv", "scenario.toml"] {
        assert!(dir.join("sim").join(f).is_file(), "{f} missing");
    }
    let tx = fs::read_to_string(dir.join("sim/transactions.csv")).unwrap();
    assert!(tx.lines().any(|l| l.starts_with("# seed=4")));

    let said = ok(stockout(dir, &["fit", "--config", "fit.toml"]));
    assert!(said.contains("holdout_perplexity="));
    for f in ["samples.csv", "rhat.csv", "rate_curve.csv", "fit_summary.txt"] {
        assert!(dir.join("run").join(f).is_file(), "{f} missing");
    }
    // 2 chains x 150 kept draws.
    assert_eq!(rows(&dir.join("run/samples.csv")).len(), 300);

    let said = ok(stockout(dir, &["diagnose", "--config", "fit.toml"]));
    assert!(said.contains("draws=300 chains=2"));
    assert!(!rows(&dir.join("run/diagnostics.csv")).is_empty());

    ok(stockout(dir, &["predict", "--config", "fit.toml", "--stock", "1,1,1", "--stock", "0,0,0"]));
    let predicted = rows(&dir.join("run/predict.csv"));
    let expected = |cond: &str, item: &str| -> f64 {
        predicted.iter().find(|r| r[0] == cond && r[3] == item).unwrap()[5].parse().unwrap()
    };
    assert!(expected("0", "total") > 0.0);
    assert_eq!(expected("1", "total"), 0.0);
    let draws = rows(&dir.join("run/predict_draws.csv"));
    assert!(draws.iter().filter(|r| r[0] == "1").all(|r| r[2..].iter().all(|c| c == "0")));

    ok(stockout(dir, &["predict", "--config", "fit.toml", "--from-data", "--store", "store2"]));
    assert!(rows(&dir.join("run/predict.csv")).iter().any(|r| !r[4].is_empty()));

    ok(stockout(dir, &["lost-sales", "--config", "fit.toml"]));
    assert_eq!(rows(&dir.join("run/lost_sales.csv")).len(), 6);

    let said = ok(stockout(dir, &["baseline-fit", "--config", "fit.toml", "--tau-grid", "0.3,0.6"]));
    assert!(said.contains("best_tau="));
    assert_eq!(rows(&dir.join("run/baseline.csv")).len(), 2);
}

#[test]
fn errors_are_one_categorized_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = stockout(dir, &["fit", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("stockout: error[config]"), "{err}");
    assert!(err.contains("missing.toml"));
    assert_eq!(err.trim_end().lines().count(), 1);

    let out = stockout(dir, &["fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("stockout: error[usage]"), "{}", stderr(&out));
    assert!(stderr(&out).contains("--config"));

    let out = stockout(dir, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.join("bad.toml"), "seed = 1\n[data]\nhorizon = 1.0\n").unwrap();
    let out = stockout(dir, &["fit", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("stockout: error[config]"), "{}", stderr(&out));

    fs::write(dir.join("tx.csv"), "store_id,period_id,item_id,purchase_time\n1,1,a,5\n1,1,a,99\n").unwrap();
    fs::write(
        dir.join("run.toml"),
        "[data]\ntransactions = \"tx.csv\"\nhorizon = 10.0\n[model]\nrate = \"homogeneous\"\nchoice = \"exogenous\"\n",
    )
    .unwrap();
    let out = stockout(dir, &["fit", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("error[parse]") && err.contains("line 3"), "{err}");
}

#[test]
fn help_and_version_go_to_stdout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stockout(tmp.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("baseline-fit"));
    let out = stockout(tmp.path(), &["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("stockout "));
}

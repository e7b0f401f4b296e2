//! File round trips, parse failures and end-to-end sampler behavior.

use stockout::io::{
    apply_stock, parse_transactions, read_samples, write_samples, write_stock, write_transactions, ColumnMap,
    TransactionOptions,
};
use stockout::likelihood::Hyperparams;
use stockout::sampler::{run_chains, SamplerConfig, Schedule};
use stockout::simulator::{simulate_dataset, ScenarioSpec, StockRule};
use stockout::{Error, ModelSpec};

fn small_scenario(seed: u64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::scenario_one(seed);
    spec.horizon = 20.0;
    spec.periods = 6;
    spec.stock = StockRule::Uniform { min: 0, max: 40 };
    spec
}

#[test]
fn simulated_data_round_trips_through_csv() {
    let (data, _) = simulate_dataset(&small_scenario(3)).unwrap();
    let prov = vec![("seed".to_string(), "3".to_string())];
    let mut tx = Vec::new();
    write_transactions(&data, &prov, &mut tx).unwrap();
    let mut stock = Vec::new();
    write_stock(&data, &prov, &mut stock).unwrap();

    let opts = TransactionOptions { items: Some(data.item_names.clone()), ..TransactionOptions::new(data.horizon) };
    let mut parsed = parse_transactions(tx.as_slice(), &opts).unwrap();
    apply_stock(&mut parsed, stock.as_slice(), &ColumnMap::default()).unwrap();
    assert_eq!(parsed, data);
}

fn parse(text: &str) -> stockout::Result<stockout::Dataset> {
    parse_transactions(text.as_bytes(), &TransactionOptions::new(10.0))
}

#[test]
fn parse_errors_name_the_line() {
    let cases = [
        ("store_id,period_id,item_id,purchase_time\n1,1,a,2.5\n1,1,a,11\n", 3),
        ("store_id,period_id,item_id,purchase_time\n1,1,a,soon\n", 2),
        ("# note\nstore_id,period_id,item_id,purchase_time\n1,1,a,1\n1,1,b,-1\n", 4),
    ];
    for (text, line) in cases {
        match parse(text) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
            other => panic!("expected a parse error for {text:?}, got {other:?}"),
        }
    }
    assert!(parse("store_id,period_id,purchase_time\n1,1,2\n").is_err());
}

#[test]
fn header_only_file_has_no_stores() {
    let data = parse("store_id,period_id,item_id,purchase_time\n").unwrap();
    assert_eq!(data.store_count(), 0);
    assert_eq!(data.total_purchases(), 0);
}

#[test]
fn clock_times_and_ties_are_normalized() {
    let text = "store_id,period_id,item_id,purchase_time\n1,1,a,09:00\n1,1,a,09:00\n1,1,b,13:30\n";
    let opts = TransactionOptions {
        clock: Some(stockout::io::Clock { open: 7.0, close: 19.0 }),
        ..TransactionOptions::new(12.0)
    };
    let data = parse_transactions(text.as_bytes(), &opts).unwrap();
    let p = &data.stores[0].periods[0];
    assert_eq!(p.purchase_times[0].len(), 2);
    assert!(p.purchase_times[0][0] < p.purchase_times[0][1]);
    assert!((p.purchase_times[0][0] - 2.0).abs() < 1e-6);
    assert!((p.purchase_times[1][0] - 6.5).abs() < 1e-12);
    assert_eq!(p.initial_stock, vec![2, 1]);
}

fn short_run(seed: u64) -> (ModelSpec, stockout::sampler::PosteriorSamples) {
    let scenario = small_scenario(5);
    let (data, truth) = simulate_dataset(&scenario).unwrap();
    let spec = truth.spec(data.item_count());
    let hyper = Hyperparams::for_data(spec.rate.kind(), &data);
    let mut config = SamplerConfig::new(Schedule::scaled_to(&data), 200, seed, hyper);
    config.chains = 2;
    config.map.restarts = 1;
    (spec.clone(), run_chains(&spec, &data, &config).unwrap())
}

#[test]
fn sampler_is_deterministic_under_the_seed() {
    let (_, a) = short_run(9);
    let (_, b) = short_run(9);
    let (_, c) = short_run(10);
    assert_eq!(a.chains, b.chains);
    assert_ne!(a.chains, c.chains);
    assert_eq!(a.draw_count(), 200);
    for p in a.params() {
        let p = p.unwrap();
        assert!(p.eta.iter().flatten().all(|v| *v > 0.0));
        assert!(p.weights.iter().flatten().all(|v| *v > 0.0));
    }
}

#[test]
fn samples_round_trip_through_csv() {
    let (spec, samples) = short_run(4);
    let prov = vec![("command".to_string(), "fit".to_string())];
    let mut buf = Vec::new();
    write_samples(&samples, &prov, &mut buf).unwrap();
    let (back, read_prov) = read_samples(buf.as_slice(), &spec, &samples.names).unwrap();
    assert_eq!(read_prov, prov);
    assert_eq!(back.chains, samples.chains);
    assert_eq!(back.iterations, samples.iterations);

    let mut wrong = samples.names.clone();
    wrong.swap(0, 1);
    assert!(read_samples(buf.as_slice(), &spec, &wrong).is_err());
}

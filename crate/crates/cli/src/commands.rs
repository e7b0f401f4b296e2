use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use stockout::baseline::{baseline_over_grid, default_tau_grid};
use stockout::io::{
    load_scenario, read_provenance, read_samples, scenario_to_toml, sha256_hex, write_provenance, write_rhat,
    write_samples, write_stock, write_transactions, LoadedConfig, Provenance, RunConfig,
};
use stockout::predictive::{
    average_purchase_rate_curve, conditions_from_data, lost_sales, predict_counts, quantile, StockCondition, Summary,
};
use stockout::sampler::{holdout_perplexity, run_chains, tune_schedule, PosteriorSamples, Schedule};
use stockout::simulator::simulate_dataset;
use stockout::{Dataset, Error, ModelSpec};

use crate::{Command, Common};

/// A categorized failure for the one-line error report.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub detail: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { category: e.category(), detail: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { category: "io", detail: e.to_string() }
    }
}

fn usage(detail: impl Into<String>) -> CliError {
    CliError { category: "usage", detail: detail.into() }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Simulate { common } => simulate(&common),
        Command::Fit { common } => fit(&common),
        Command::Diagnose { common, samples } => diagnose(&common, samples),
        Command::Predict { common, samples, stocks, intervals, from_data, store } => {
            predict(&common, samples, &stocks, &intervals, from_data, store)
        }
        Command::LostSales { common, samples } => lost_sales_cmd(&common, samples),
        Command::BaselineFit { common, tau_grid } => baseline(&common, tau_grid),
    }
}

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn warn(msg: &str) {
    eprintln!("stockout: warning: {msg}");
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError { category: "io", detail: format!("cannot create `{}`: {e}", path.display()) })
}

fn out_dir(common: &Common, configured: Option<&Path>) -> CliResult<PathBuf> {
    let dir = common.out.clone().or_else(|| configured.map(Path::to_path_buf)).unwrap_or_else(|| "out".into());
    fs::create_dir_all(&dir)
        .map_err(|e| CliError { category: "io", detail: format!("cannot create `{}`: {e}", dir.display()) })?;
    Ok(dir)
}

fn provenance(command: &str, sha256: &str, seed: u64) -> Provenance {
    vec![("command".into(), command.into()), ("config_sha256".into(), sha256.into()), ("seed".into(), seed.to_string())]
}

fn simulate(common: &Common) -> CliResult {
    let text = fs::read(&common.config).map_err(|e| CliError {
        category: "config",
        detail: format!("cannot read `{}`: {e}", common.config.display()),
    })?;
    let mut spec = load_scenario(&common.config)?;
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let dir = out_dir(common, None)?;
    let (data, truth) = simulate_dataset(&spec)?;
    let prov = provenance("simulate", &sha256_hex(&text), spec.seed);
    write_transactions(&data, &prov, create(&dir.join("transactions.csv"))?)?;
    write_stock(&data, &prov, create(&dir.join("stock.csv"))?)?;

    let truth_spec = truth.spec(data.item_count());
    let store_ids: Vec<String> = data.stores.iter().map(|s| s.store_id.clone()).collect();
    let mut w = create(&dir.join("truth.csv"))?;
    write_provenance(&mut w, &prov)?;
    writeln!(w, "parameter,value")?;
    for (name, v) in
        truth_spec.natural_names(&store_ids, &data.item_names).iter().zip(truth_spec.natural_vector(&truth))
    {
        writeln!(w, "{name},{v}")?;
    }
    w.flush()?;
    fs::write(dir.join("scenario.toml"), scenario_to_toml(&spec)?)?;
    say!(
        "simulated {} stores x {} periods, {} purchases -> {}",
        data.store_count(),
        spec.periods,
        data.total_purchases(),
        dir.display()
    );
    Ok(())
}

/// Configuration, data and model for the commands that work on a run.
struct Run {
    loaded: LoadedConfig,
    data: Dataset,
    spec: ModelSpec,
    names: Vec<String>,
    dir: PathBuf,
}

impl Run {
    fn config(&self) -> &RunConfig {
        &self.loaded.config
    }

    fn split(&self) -> (Dataset, Dataset) {
        self.data.split(self.config().split)
    }

    fn provenance(&self, command: &str) -> Provenance {
        provenance(command, &self.loaded.sha256, self.config().seed)
    }

    fn samples(&self, path: Option<PathBuf>) -> CliResult<PosteriorSamples> {
        let path = path.unwrap_or_else(|| self.dir.join("samples.csv"));
        let file = File::open(&path)
            .map_err(|e| CliError { category: "io", detail: format!("cannot open `{}`: {e}", path.display()) })?;
        let prov = read_provenance(BufReader::new(File::open(&path)?))?;
        if let Some((_, hash)) = prov.iter().find(|(k, _)| k == "config_sha256") {
            if *hash != self.loaded.sha256 {
                warn(&format!("`{}` was produced with a different configuration", path.display()));
            }
        }
        Ok(read_samples(file, &self.spec, &self.names)?.0)
    }

    fn store_index(&self, id: Option<&str>) -> CliResult<usize> {
        match id {
            None => Ok(0),
            Some(id) => self
                .data
                .stores
                .iter()
                .position(|s| s.store_id == id)
                .ok_or_else(|| usage(format!("unknown store `{id}`"))),
        }
    }
}

fn load_run(common: &Common) -> CliResult<Run> {
    let mut loaded = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        loaded.config.seed = seed;
    }
    let (data, warnings) = loaded.config.load_dataset(&loaded.base_dir)?;
    for w in &warnings {
        warn(w);
    }
    if data.store_count() == 0 {
        return Err(CliError { category: "data", detail: "no transactions".into() });
    }
    let spec = loaded.config.model_spec(&data)?;
    let store_ids: Vec<String> = data.stores.iter().map(|s| s.store_id.clone()).collect();
    let names = spec.natural_names(&store_ids, &data.item_names);
    let dir = out_dir(common, loaded.config.output.as_deref())?;
    Ok(Run { loaded, data, spec, names, dir })
}

fn fit(common: &Common) -> CliResult {
    let run = load_run(common)?;
    let (train, holdout) = run.split();
    let prov = run.provenance("fit");
    let mut sampler = run.config().sampler_config(&train);
    let has_holdout = holdout.total_purchases() > 0;

    if run.config().sampler.tune {
        if !has_holdout {
            return Err(CliError { category: "config", detail: "tuning needs holdout periods with purchases".into() });
        }
        let (best, scores) = tune_schedule(&run.spec, &train, &holdout, &sampler, &Schedule::default_grid())?;
        let mut w = create(&run.dir.join("tuning.csv"))?;
        write_provenance(&mut w, &prov)?;
        writeln!(w, "a,b,c,perplexity")?;
        for (s, p) in &scores {
            writeln!(w, "{},{},{},{p}", s.a, s.b, s.c)?;
        }
        w.flush()?;
        sampler.schedule = scores[best].0;
    }

    let samples = run_chains(&run.spec, &train, &sampler)?;
    write_samples(&samples, &prov, create(&run.dir.join("samples.csv"))?)?;
    write_rhat(&samples, &prov, create(&run.dir.join("rhat.csv"))?)?;
    write_rate_curves(&run, &samples, &train, &prov)?;

    let max_rhat = samples.rhat.iter().flatten().fold(f64::NAN, |m, &r| if m.is_nan() { r } else { m.max(r) });
    let mut report = String::new();
    writeln!(report, "chains={}", sampler.chains).ok();
    writeln!(report, "draws={}", samples.draw_count()).ok();
    writeln!(report, "schedule_a={}", sampler.schedule.a).ok();
    writeln!(report, "schedule_b={}", sampler.schedule.b).ok();
    writeln!(report, "schedule_c={}", sampler.schedule.c).ok();
    writeln!(report, "max_rhat={max_rhat}").ok();
    writeln!(report, "converged={}", samples.converged()).ok();
    writeln!(report, "nonfinite_steps={}", samples.nonfinite_steps).ok();
    if has_holdout {
        writeln!(report, "holdout_perplexity={}", holdout_perplexity(&samples, &holdout)?).ok();
    }
    let mut w = create(&run.dir.join("fit_summary.txt"))?;
    write_provenance(&mut w, &prov)?;
    w.write_all(report.as_bytes())?;
    w.flush()?;
    say!("{}", report.trim_end());
    if !samples.converged() {
        warn("some R-hat values exceed 1.1; consider more iterations");
    }
    Ok(())
}

/// Posterior mean and 95% band of the average total purchase rate per
/// store, on 101 evenly spaced times.
fn write_rate_curves(run: &Run, samples: &PosteriorSamples, data: &Dataset, prov: &Provenance) -> CliResult {
    let t = data.horizon;
    let grid: Vec<f64> = (0..=100).map(|k| t * k as f64 / 100.0).collect();
    let mut w = create(&run.dir.join("rate_curve.csv"))?;
    write_provenance(&mut w, prov)?;
    writeln!(w, "store_id,time,mean,q025,q975")?;
    for (s, store) in data.stores.iter().enumerate() {
        if store.periods.is_empty() {
            continue;
        }
        let curves = average_purchase_rate_curve(samples, data, s, &grid)?;
        for (g, &time) in grid.iter().enumerate() {
            let mut col: Vec<f64> = curves.iter().map(|c| c[g]).collect();
            col.sort_by(f64::total_cmp);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            writeln!(w, "{},{time},{mean},{},{}", store.store_id, quantile(&col, 0.025), quantile(&col, 0.975))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn diagnose(common: &Common, samples: Option<PathBuf>) -> CliResult {
    let run = load_run(common)?;
    let samples = run.samples(samples)?;
    let mut w = create(&run.dir.join("diagnostics.csv"))?;
    write_provenance(&mut w, &run.provenance("diagnose"))?;
    let chain_cols: Vec<String> = (0..samples.chains.len()).map(|c| format!("chain{c}_mean")).collect();
    writeln!(w, "parameter,mean,sd,q025,median,q975,rhat,{}", chain_cols.join(","))?;
    for (j, name) in samples.names.iter().enumerate() {
        let col = samples.column(j);
        let s = Summary::of(&col)?;
        let var = col.iter().map(|v| (v - s.mean).powi(2)).sum::<f64>() / (col.len().max(2) - 1) as f64;
        let chain_means: Vec<String> = samples
            .chains
            .iter()
            .map(|c| (c.iter().map(|d| d[j]).sum::<f64>() / c.len().max(1) as f64).to_string())
            .collect();
        let rhat = samples.rhat[j].map(|r| r.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{name},{},{},{},{},{},{rhat},{}",
            s.mean,
            var.sqrt(),
            s.q025,
            s.median,
            s.q975,
            chain_means.join(",")
        )?;
    }
    w.flush()?;
    let flagged: Vec<&str> = samples
        .names
        .iter()
        .zip(&samples.rhat)
        .filter(|(_, r)| r.is_some_and(|r| r > 1.1))
        .map(|(n, _)| n.as_str())
        .collect();
    say!("draws={} chains={}", samples.draw_count(), samples.chains.len());
    say!("converged={}", flagged.is_empty());
    if !flagged.is_empty() {
        say!("rhat_above_1.1={}", flagged.join(";"));
    }
    Ok(())
}

fn parse_stock(text: &str, items: usize) -> CliResult<Vec<bool>> {
    let stock = text
        .split(',')
        .map(|f| match f.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(usage(format!("stock indicator `{other}` must be 0 or 1"))),
        })
        .collect::<CliResult<Vec<bool>>>()?;
    if stock.len() != items {
        return Err(usage(format!("stock `{text}` has {} entries, expected {items}", stock.len())));
    }
    Ok(stock)
}

fn parse_interval(text: &str) -> CliResult<(f64, f64)> {
    let (a, b) = text.split_once(':').ok_or_else(|| usage(format!("interval `{text}` must be a:b")))?;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| usage(format!("invalid interval bound `{s}`")));
    Ok((parse(a)?, parse(b)?))
}

fn stock_label(stock: &[bool]) -> String {
    stock.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join("")
}

fn predict(
    common: &Common,
    samples: Option<PathBuf>,
    stocks: &[String],
    intervals: &[String],
    from_data: bool,
    store: Option<String>,
) -> CliResult {
    let run = load_run(common)?;
    let store = run.store_index(store.as_deref())?;
    let samples = run.samples(samples)?;
    let n = run.data.item_count();
    let horizon = run.data.horizon;

    let mut conditions: Vec<(StockCondition, Option<Vec<u64>>)> = Vec::new();
    if from_data {
        let (_, holdout) = run.split();
        for (cond, actual) in conditions_from_data(&holdout, store)? {
            conditions.push((cond, Some(actual)));
        }
    }
    let spans = if intervals.is_empty() {
        vec![(0.0, horizon)]
    } else {
        intervals.iter().map(|s| parse_interval(s)).collect::<CliResult<Vec<_>>>()?
    };
    for text in stocks {
        let cond = StockCondition { stock: parse_stock(text, n)?, intervals: spans.clone() };
        cond.validate(n, horizon)?;
        conditions.push((cond, None));
    }
    if conditions.is_empty() {
        return Err(usage("give at least one --stock or --from-data"));
    }

    let prov = run.provenance("predict");
    let mut summary = create(&run.dir.join("predict.csv"))?;
    write_provenance(&mut summary, &prov)?;
    writeln!(summary, "condition,stock,duration,item,actual,expected,mean,q025,q25,median,q75,q975")?;
    let mut draws = create(&run.dir.join("predict_draws.csv"))?;
    write_provenance(&mut draws, &prov)?;
    writeln!(draws, "condition,draw,{}", run.data.item_names.join(","))?;
    for (c, (cond, actual)) in conditions.iter().enumerate() {
        let dist = predict_counts(&samples, cond, store, run.config().seed.wrapping_add(c as u64))?;
        let expected = dist.mean_per_item();
        let label = stock_label(&cond.stock);
        let mut rows: Vec<(String, Option<u64>, f64, Summary)> = Vec::new();
        for (i, s) in dist.item_summaries()?.into_iter().enumerate() {
            rows.push((run.data.item_names[i].clone(), actual.as_ref().map(|a| a[i]), expected[i], s));
        }
        rows.push((
            "total".into(),
            actual.as_ref().map(|a| a.iter().sum()),
            expected.iter().sum(),
            dist.total_summary()?,
        ));
        for (item, act, exp, s) in rows {
            let act = act.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                summary,
                "{c},{label},{},{item},{act},{exp},{},{},{},{},{},{}",
                cond.duration(),
                s.mean,
                s.q025,
                s.q25,
                s.median,
                s.q75,
                s.q975
            )?;
        }
        for (d, counts) in dist.counts.iter().enumerate() {
            let cells: Vec<String> = counts.iter().map(u64::to_string).collect();
            writeln!(draws, "{c},{d},{}", cells.join(","))?;
        }
        say!(
            "condition {c} stock={label} duration={} expected_total={}",
            cond.duration(),
            expected.iter().sum::<f64>()
        );
    }
    summary.flush()?;
    draws.flush()?;
    Ok(())
}

fn lost_sales_cmd(common: &Common, samples: Option<PathBuf>) -> CliResult {
    let run = load_run(common)?;
    let samples = run.samples(samples)?;
    let mut w = create(&run.dir.join("lost_sales.csv"))?;
    write_provenance(&mut w, &run.provenance("lost-sales"))?;
    writeln!(w, "store_id,item,actual,full_stock_mean,q025,median,q975,lost_mean")?;
    for (s, store) in run.data.stores.iter().enumerate() {
        for row in lost_sales(&samples, &run.data, s, run.config().seed)? {
            let f = row.full_stock;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                store.store_id, row.item, row.actual, f.mean, f.q025, f.median, f.q975, row.lost_mean
            )?;
            say!(
                "store {} item {}: actual {} full-stock mean {:.1} [{:.0}, {:.0}] lost {:.1}",
                store.store_id,
                row.item,
                row.actual,
                f.mean,
                f.q025,
                f.q975,
                row.lost_mean
            );
        }
    }
    w.flush()?;
    Ok(())
}

fn baseline(common: &Common, tau_grid: Option<String>) -> CliResult {
    let run = load_run(common)?;
    let taus = match tau_grid {
        Some(text) => text
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| usage(format!("invalid tau `{s}`"))))
            .collect::<CliResult<Vec<f64>>>()?,
        None => run.config().model.tau_grid.clone().unwrap_or_else(default_tau_grid),
    };
    if taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(usage("tau values must be positive"));
    }
    let (train, holdout) = run.split();
    if holdout.total_purchases() == 0 {
        return Err(CliError { category: "config", detail: "baseline needs holdout periods with purchases".into() });
    }
    let (best, fits) = baseline_over_grid(&train, &holdout, &taus, run.config().seed)?;
    let mut w = create(&run.dir.join("baseline.csv"))?;
    write_provenance(&mut w, &run.provenance("baseline-fit"))?;
    let rate_cols: Vec<String> = train.stores.iter().map(|s| format!("rate.{}", s.store_id)).collect();
    let pref_cols: Vec<String> = train.item_names.iter().map(|i| format!("phi.{i}")).collect();
    writeln!(w, "tau,deviation,log_posterior,{},{}", rate_cols.join(","), pref_cols.join(","))?;
    for fit in &fits {
        let rates: Vec<String> = fit.params.eta.iter().map(|e| e[0].to_string()).collect();
        let prefs: Vec<String> = match &fit.params.segments[0] {
            stockout::Segment::Mnl { prefs, .. } => prefs.iter().map(f64::to_string).collect(),
            _ => Vec::new(),
        };
        writeln!(w, "{},{},{},{},{}", fit.tau, fit.deviation, fit.map.log_posterior, rates.join(","), prefs.join(","))?;
        say!("tau={} deviation={:.3}", fit.tau, fit.deviation);
    }
    w.flush()?;
    say!("best_tau={}", fits[best].tau);
    Ok(())
}

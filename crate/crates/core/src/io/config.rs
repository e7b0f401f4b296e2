//! TOML run configuration and scenario files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::choice::{enumerate_rankings, ChoiceFamily};
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::Hyperparams;
use crate::model::{ChoiceSpec, ModelSpec};
use crate::rate::{PeakTemplate, RateKind, RateModel};
use crate::sampler::{SamplerConfig, Schedule};
use crate::simulator::ScenarioSpec;

use super::transactions::{apply_stock, parse_time, parse_transactions, Clock, ColumnMap, TransactionOptions};

/// Directory that relative data paths are resolved against when set.
pub const DATA_DIR_ENV: &str = "STOCKOUT_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Fraction of each store's periods used for training.
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub prior: PriorSettings,
}

fn default_split() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub transactions: PathBuf,
    /// Without a stock file, each item is taken to sell out at its last
    /// purchase of the period.
    #[serde(default)]
    pub stock: Option<PathBuf>,
    /// Period length `T` in model time units.
    pub horizon: f64,
    /// Opening and closing clock times; both or neither.
    #[serde(default)]
    pub open: Option<String>,
    #[serde(default)]
    pub close: Option<String>,
    #[serde(default)]
    pub items: Option<Vec<String>>,
    #[serde(default)]
    pub columns: ColumnMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub rate: RateKind,
    pub choice: ChoiceFamily,
    #[serde(default = "one_segment")]
    pub segments: usize,
    /// Fixed MNL no-purchase weight.
    #[serde(default)]
    pub no_purchase: Option<f64>,
    /// No-purchase weights tried by the baseline fit.
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
    /// Longest ranking enumerated by the nonparametric model.
    #[serde(default)]
    pub max_ranking_length: Option<usize>,
    /// Peak centers and widths in model time units.
    #[serde(default)]
    pub peak_centers: Vec<f64>,
    #[serde(default)]
    pub peak_widths: Vec<f64>,
}

fn one_segment() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSettings {
    /// Step-size schedule; missing values come from the data-scaled default.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub iterations: usize,
    pub chains: usize,
    pub burn_in: f64,
    pub thin: usize,
    pub minibatch: usize,
    /// Pick the schedule by holdout perplexity over the default grid.
    pub tune: bool,
    pub align_labels: bool,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            a: None,
            b: None,
            c: None,
            iterations: 4000,
            chains: 3,
            burn_in: 0.5,
            thin: 1,
            minibatch: 3,
            tune: false,
            align_labels: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: [f64; 2],
    /// Rate-parameter boxes; missing means scaled to the data.
    pub eta_bounds: Option<Vec<(f64, f64)>>,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: [1.0, 1.0], eta_bounds: None }
    }
}

/// A parsed configuration with the hash of its source text and the
/// directory relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub base_dir: PathBuf,
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = fs::read(path).map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Config("config is not UTF-8".into()))?;
        let config = Self::from_toml(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, sha256: sha256_hex(&bytes), base_dir })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split {} not in (0, 1)", self.split)));
        }
        if !(self.data.horizon > 0.0 && self.data.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon {} must be positive", self.data.horizon)));
        }
        self.clock()?;
        let m = &self.model;
        if m.segments == 0 {
            return Err(Error::Config("at least one segment is required".into()));
        }
        if let Some(t) = m.no_purchase {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("no-purchase weight {t} must be positive")));
            }
        }
        if let Some(grid) = &m.tau_grid {
            if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(Error::Config("tau grid needs positive values".into()));
            }
        }
        if m.peak_centers.len() != m.peak_widths.len() {
            return Err(Error::Config("peak centers and widths differ in length".into()));
        }
        if m.rate == RateKind::HillPlusPeaks && m.peak_centers.is_empty() {
            return Err(Error::Config("hill_plus_peaks needs peak_centers and peak_widths".into()));
        }
        let s = &self.sampler;
        if s.iterations == 0 || s.chains == 0 || s.thin == 0 || s.minibatch == 0 {
            return Err(Error::Config("iterations, chains, thin and minibatch must be positive".into()));
        }
        if !(0.0..1.0).contains(&s.burn_in) {
            return Err(Error::Config(format!("burn-in fraction {} not in [0, 1)", s.burn_in)));
        }
        Ok(())
    }

    /// Business hours parsed from `open` and `close`.
    pub fn clock(&self) -> Result<Option<Clock>> {
        match (&self.data.open, &self.data.close) {
            (None, None) => Ok(None),
            (Some(o), Some(c)) => {
                let open = parse_time(o).ok_or_else(|| Error::Config(format!("invalid opening time `{o}`")))?;
                let close = parse_time(c).ok_or_else(|| Error::Config(format!("invalid closing time `{c}`")))?;
                if close <= open {
                    return Err(Error::Config(format!("closing time `{c}` not after opening time `{o}`")));
                }
                Ok(Some(Clock { open, close }))
            }
            _ => Err(Error::Config("set both `open` and `close` or neither".into())),
        }
    }

    pub fn transaction_options(&self) -> Result<TransactionOptions> {
        Ok(TransactionOptions {
            columns: self.data.columns.clone(),
            horizon: self.data.horizon,
            clock: self.clock()?,
            items: self.data.items.clone(),
        })
    }

    /// Reads the transactions and, if configured, the stock file. Returns
    /// warnings for the caller to report.
    pub fn load_dataset(&self, base_dir: &Path) -> Result<(Dataset, Vec<String>)> {
        let path = resolve_data_path(base_dir, &self.data.transactions);
        let file = fs::File::open(&path)
            .map_err(|e| Error::Config(format!("cannot open transactions `{}`: {e}", path.display())))?;
        let mut data = parse_transactions(file, &self.transaction_options()?)?;
        let mut warnings = Vec::new();
        match &self.data.stock {
            Some(stock) => {
                let path = resolve_data_path(base_dir, stock);
                let file = fs::File::open(&path)
                    .map_err(|e| Error::Config(format!("cannot open stock `{}`: {e}", path.display())))?;
                apply_stock(&mut data, file, &self.data.columns)?;
            }
            None => warnings.push(
                "no stock file: initial stock set to purchase counts, so every item sells out at its last purchase"
                    .to_string(),
            ),
        }
        data.validate()?;
        Ok((data, warnings))
    }

    pub fn rate_model(&self) -> Result<RateModel> {
        let peaks = match self.model.rate {
            RateKind::HillPlusPeaks => Some(PeakTemplate::new(
                self.model.peak_centers.clone(),
                self.model.peak_widths.clone(),
                self.data.horizon,
            )?),
            _ => None,
        };
        RateModel::new(self.model.rate, peaks)
    }

    pub fn choice_spec(&self, items: usize) -> Result<ChoiceSpec> {
        let m = &self.model;
        Ok(match m.choice {
            ChoiceFamily::Mnl => ChoiceSpec::Mnl {
                segments: m.segments,
                no_purchase: m.no_purchase.ok_or_else(|| Error::Config("mnl needs `no_purchase`".into()))?,
            },
            ChoiceFamily::Exogenous => ChoiceSpec::Exogenous { segments: m.segments },
            ChoiceFamily::Nonparametric => {
                ChoiceSpec::Nonparametric { rankings: enumerate_rankings(items, m.max_ranking_length.unwrap_or(items)) }
            }
        })
    }

    pub fn model_spec(&self, data: &Dataset) -> Result<ModelSpec> {
        ModelSpec::new(self.rate_model()?, self.choice_spec(data.item_count())?, data.item_count(), data.store_count())
    }

    pub fn hyperparams(&self, data: &Dataset) -> Hyperparams {
        let scaled = Hyperparams::for_data(self.model.rate, data);
        Hyperparams {
            alpha: self.prior.alpha,
            beta: self.prior.beta,
            gamma: self.prior.gamma,
            eta_bounds: self.prior.eta_bounds.clone().unwrap_or(scaled.eta_bounds),
        }
    }

    /// Sampler configuration; `data` is the training set the default
    /// schedule is scaled to.
    pub fn sampler_config(&self, data: &Dataset) -> SamplerConfig {
        let s = &self.sampler;
        let scaled = Schedule::scaled_to(data);
        let schedule = Schedule { a: s.a.unwrap_or(scaled.a), b: s.b.unwrap_or(scaled.b), c: s.c.unwrap_or(scaled.c) };
        let mut config = SamplerConfig::new(schedule, s.iterations, self.seed, self.hyperparams(data));
        config.chains = s.chains;
        config.burn_in = s.burn_in;
        config.thin = s.thin;
        config.minibatch = s.minibatch;
        config.align_labels = s.align_labels;
        config
    }
}

/// Absolute paths are kept. Relative paths resolve against
/// `$STOCKOUT_DATA_DIR` when set, otherwise against `base_dir`.
pub fn resolve_data_path(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Path::new(&dir).join(path),
        _ => base_dir.join(path),
    }
}

pub fn scenario_from_toml(text: &str) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
    scenario_from_toml(&text)
}

pub fn scenario_to_toml(spec: &ScenarioSpec) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data]
        transactions = "tx.csv"
        horizon = 8.0
        open = "11:00"
        close = "19:00"

        [model]
        rate = "hill"
        choice = "exogenous"
    "#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.model.segments, 1);
        assert_eq!(c.split, 0.8);
        assert_eq!(c.sampler.chains, 3);
        assert_eq!(c.clock().unwrap(), Some(Clock { open: 11.0, close: 19.0 }));
    }

    #[test]
    fn rejects_unknown_keys_and_half_clock() {
        let bad = MINIMAL.replace("horizon = 8.0", "horizon = 8.0\nhorizen = 1");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("close = \"19:00\"", "");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn mnl_requires_no_purchase_weight() {
        let c = RunConfig::from_toml(&MINIMAL.replace("exogenous", "mnl")).unwrap();
        assert!(c.choice_spec(3).is_err());
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn scenario_round_trips_through_toml() {
        let s = ScenarioSpec::scenario_one(7);
        let text = scenario_to_toml(&s).unwrap();
        assert_eq!(scenario_from_toml(&text).unwrap(), s);
        let s = ScenarioSpec::scenario_two(25, 7);
        assert_eq!(scenario_from_toml(&scenario_to_toml(&s).unwrap()).unwrap(), s);
    }
}

//! Synthetic transaction data from the generative model: NHPP arrivals by
//! thinning, a segment per arrival, a choice against the current stock, and
//! stock depletion on purchase.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::choice::{enumerate_rankings, Segment};
use crate::domain::{Dataset, StoreData, TimePeriod};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rate::{PeakTemplate, RateKind, RateModel};

/// Rate family plus either fixed parameters or sampling ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateScenario {
    pub kind: RateKind,
    /// Parameters shared by every store.
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    /// Per-parameter `[lo, hi]`; each store draws uniformly.
    #[serde(default)]
    pub ranges: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub peak_centers: Vec<f64>,
    #[serde(default)]
    pub peak_widths: Vec<f64>,
}

impl RateScenario {
    pub fn model(&self, horizon: f64) -> Result<RateModel> {
        let peaks = if self.kind == RateKind::HillPlusPeaks {
            Some(PeakTemplate::new(self.peak_centers.clone(), self.peak_widths.clone(), horizon)?)
        } else {
            None
        };
        RateModel::new(self.kind, peaks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ChoiceScenario {
    Mnl {
        no_purchase: f64,
        prefs: Vec<Vec<f64>>,
    },
    Exogenous {
        prefs: Vec<Vec<f64>>,
        substitution: Vec<f64>,
    },
    /// All rankings of length up to `max_length`, in
    /// [`enumerate_rankings`] order.
    Nonparametric {
        max_length: usize,
    },
}

impl ChoiceScenario {
    pub fn segments(&self, items: usize) -> Result<Vec<Segment>> {
        let segs: Vec<Segment> = match self {
            ChoiceScenario::Mnl { no_purchase, prefs } => {
                prefs.iter().map(|p| Segment::Mnl { prefs: p.clone(), no_purchase: *no_purchase }).collect()
            }
            ChoiceScenario::Exogenous { prefs, substitution } => {
                if prefs.len() != substitution.len() {
                    return Err(Error::Config(format!(
                        "{} preference vectors but {} substitution probabilities",
                        prefs.len(),
                        substitution.len()
                    )));
                }
                prefs
                    .iter()
                    .zip(substitution)
                    .map(|(p, &t)| Segment::Exogenous { prefs: p.clone(), substitution: t })
                    .collect()
            }
            ChoiceScenario::Nonparametric { max_length } => {
                enumerate_rankings(items, *max_length).into_iter().map(Segment::Ranking).collect()
            }
        };
        for s in &segs {
            s.validate(items)?;
        }
        Ok(segs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightScenario {
    /// Independent uniform Dirichlet draw per store.
    Dirichlet,
    /// The same weights for every store.
    Fixed { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StockRule {
    /// The same initial stock for every period.
    Fixed { levels: Vec<u32> },
    /// Independent uniform integers on `[min, max]` per item and period.
    Uniform { min: u32, max: u32 },
}

/// Everything needed to generate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub stores: usize,
    pub items: usize,
    pub horizon: f64,
    /// Periods per store.
    pub periods: usize,
    pub seed: u64,
    pub rate: RateScenario,
    pub choice: ChoiceScenario,
    pub weights: WeightScenario,
    pub stock: StockRule,
    #[serde(default)]
    pub item_names: Option<Vec<String>>,
}

impl ScenarioSpec {
    /// Three stores, two exogenous segments, homogeneous rates drawn from
    /// `[2, 4]`, Dirichlet segment weights, 25 periods of length 1000 with
    /// stock uniform on `[0, 500]`.
    pub fn scenario_one(seed: u64) -> Self {
        Self {
            stores: 3,
            items: 3,
            horizon: 1000.0,
            periods: 25,
            seed,
            rate: RateScenario {
                kind: RateKind::Homogeneous,
                eta: None,
                ranges: Some(vec![[2.0, 4.0]]),
                peak_centers: Vec::new(),
                peak_widths: Vec::new(),
            },
            choice: ChoiceScenario::Exogenous {
                prefs: vec![vec![0.75, 0.2, 0.05], vec![0.33, 0.33, 0.34]],
                substitution: vec![0.75, 0.75],
            },
            weights: WeightScenario::Dirichlet,
            stock: StockRule::Uniform { min: 0, max: 500 },
            item_names: None,
        }
    }

    /// One store with a Hill rate and the nine rankings of length at most 2
    /// over three items; equal weight on {1}, {1,2} and {3,2}. The rate
    /// parameters and stock rule are free choices.
    pub fn scenario_two(periods: usize, seed: u64) -> Self {
        let rankings = enumerate_rankings(3, 2);
        let mut values = vec![0.0; rankings.len()];
        for target in [vec![0], vec![0, 1], vec![2, 1]] {
            if let Some(k) = rankings.iter().position(|r| *r == target) {
                values[k] = 1.0 / 3.0;
            }
        }
        Self {
            stores: 1,
            items: 3,
            horizon: 1000.0,
            periods,
            seed,
            rate: RateScenario {
                kind: RateKind::Hill,
                eta: Some(vec![2000.0, 2.0, 500.0]),
                ranges: None,
                peak_centers: Vec::new(),
                peak_widths: Vec::new(),
            },
            choice: ChoiceScenario::Nonparametric { max_length: 2 },
            weights: WeightScenario::Fixed { values },
            stock: StockRule::Uniform { min: 0, max: 500 },
            item_names: None,
        }
    }

    pub fn item_names(&self) -> Vec<String> {
        self.item_names.clone().unwrap_or_else(|| (1..=self.items).map(|i| format!("item{i}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.stores == 0 || self.items == 0 {
            return Err(Error::Config("scenario needs at least one store and one item".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon {} must be positive", self.horizon)));
        }
        if self.item_names.as_ref().is_some_and(|n| n.len() != self.items) {
            return Err(Error::Config("item_names length differs from items".into()));
        }
        let d = self.rate.kind.param_count();
        match (&self.rate.eta, &self.rate.ranges) {
            (Some(eta), None) if eta.len() == d => {}
            (None, Some(r)) if r.len() == d && r.iter().all(|[lo, hi]| lo <= hi) => {}
            _ => return Err(Error::Config(format!("rate needs exactly one of `eta` or `ranges` with {d} entries"))),
        }
        let k = self.choice.segments(self.items)?.len();
        if let WeightScenario::Fixed { values } = &self.weights {
            if values.len() != k {
                return Err(Error::Config(format!("{} weights for {k} segments", values.len())));
            }
        }
        match &self.stock {
            StockRule::Fixed { levels } if levels.len() != self.items => {
                Err(Error::Config(format!("{} stock levels for {} items", levels.len(), self.items)))
            }
            StockRule::Uniform { min, max } if min > max => Err(Error::Config("stock min exceeds max".into())),
            _ => Ok(()),
        }
    }

    /// Generating parameters; random draws use stream 0 of the seed.
    pub fn draw_params(&self) -> Result<ModelParams> {
        self.validate()?;
        let mut rng = substream(self.seed, 0);
        let rate = self.rate.model(self.horizon)?;
        let segments = self.choice.segments(self.items)?;
        let mut eta = Vec::with_capacity(self.stores);
        let mut weights = Vec::with_capacity(self.stores);
        for _ in 0..self.stores {
            eta.push(match (&self.rate.eta, &self.rate.ranges) {
                (Some(e), _) => e.clone(),
                (None, Some(r)) => {
                    r.iter().map(|[lo, hi]| if lo == hi { *lo } else { rng.random_range(*lo..*hi) }).collect()
                }
                (None, None) => unreachable!("validated"),
            });
            weights.push(match &self.weights {
                WeightScenario::Fixed { values } => values.clone(),
                WeightScenario::Dirichlet => {
                    let g: Vec<f64> = (0..segments.len()).map(|_| Exp1.sample(&mut rng)).collect();
                    let total: f64 = g.iter().sum();
                    g.iter().map(|x| x / total).collect()
                }
            });
        }
        let params = ModelParams { rate, eta, weights, segments };
        params.validate(self.items)?;
        Ok(params)
    }
}

/// Arrivals of one simulated period, including those that bought nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPeriod {
    pub arrivals: Vec<f64>,
    pub segments: Vec<usize>,
    /// 0 for no purchase, `i + 1` for item `i`.
    pub choices: Vec<usize>,
    /// The observed purchases and initial stock.
    pub period: TimePeriod,
}

/// Arrival times on `[0, horizon]` by thinning a homogeneous process at the
/// rate's upper bound.
pub fn sample_nhpp<R: Rng + ?Sized>(rate: &RateModel, eta: &[f64], horizon: f64, rng: &mut R) -> Result<Vec<f64>> {
    rate.validate(eta)?;
    let bound = rate.upper_bound(eta, horizon)?;
    let mut out = Vec::new();
    if bound <= 0.0 {
        return Ok(out);
    }
    if !bound.is_finite() {
        return Err(Error::InvalidParams("rate is unbounded on the horizon".into()));
    }
    let gap = Exp::new(bound).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let homogeneous = rate.kind() == RateKind::Homogeneous;
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t > horizon {
            break;
        }
        let accepted = homogeneous || rng.random::<f64>() * bound < rate.rate_unchecked(eta, t);
        if accepted && out.last().is_none_or(|&prev| t > prev) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Simulates one period for `store` of `params` from `initial_stock`.
pub fn simulate_period<R: Rng + ?Sized>(
    params: &ModelParams,
    store: usize,
    initial_stock: &[u32],
    horizon: f64,
    rng: &mut R,
) -> Result<SimulatedPeriod> {
    let n = initial_stock.len();
    params.validate(n)?;
    let eta = params.eta.get(store).ok_or_else(|| Error::Dimension(format!("store {store} out of range")))?;
    let theta = &params.weights[store];
    let arrivals = sample_nhpp(&params.rate, eta, horizon, rng)?;
    let mut remaining = initial_stock.to_vec();
    let mut purchase_times = vec![Vec::new(); n];
    let mut segments = Vec::with_capacity(arrivals.len());
    let mut choices = Vec::with_capacity(arrivals.len());
    for &t in &arrivals {
        let k = categorical(theta, rng);
        let stock: Vec<bool> = remaining.iter().map(|&r| r > 0).collect();
        let probs = params.segments[k].probs(&stock)?;
        let mut outcome: Vec<f64> = Vec::with_capacity(n + 1);
        outcome.push(probs.no_purchase.max(0.0));
        outcome.extend(probs.items.iter().map(|p| p.max(0.0)));
        let choice = categorical(&outcome, rng);
        if choice > 0 {
            let i = choice - 1;
            remaining[i] -= 1;
            purchase_times[i].push(t);
        }
        segments.push(k);
        choices.push(choice);
    }
    Ok(SimulatedPeriod { arrivals, segments, choices, period: TimePeriod::new(purchase_times, initial_stock.to_vec()) })
}

/// Simulates every period of every store. Period `l` of store `σ` uses its
/// own random stream, so the result is deterministic under the seed and
/// independent of generation order.
pub fn simulate_dataset(spec: &ScenarioSpec) -> Result<(Dataset, ModelParams)> {
    let params = spec.draw_params()?;
    let dataset = simulate_with(spec, &params)?;
    Ok((dataset, params))
}

/// Like [`simulate_dataset`] but with given generating parameters.
pub fn simulate_with(spec: &ScenarioSpec, params: &ModelParams) -> Result<Dataset> {
    spec.validate()?;
    let mut stores = Vec::with_capacity(spec.stores);
    for s in 0..spec.stores {
        let mut periods = Vec::with_capacity(spec.periods);
        for l in 0..spec.periods {
            let mut rng = substream(spec.seed, 1 + ((s as u64) << 32) + l as u64);
            let stock: Vec<u32> = match &spec.stock {
                StockRule::Fixed { levels } => levels.clone(),
                StockRule::Uniform { min, max } => (0..spec.items).map(|_| rng.random_range(*min..=*max)).collect(),
            };
            periods
                .push(simulate_period(params, s, &stock, spec.horizon, &mut rng)?.period.with_id((l + 1).to_string()));
        }
        stores.push(StoreData { store_id: format!("store{}", s + 1), periods });
    }
    Ok(Dataset { horizon: spec.horizon, item_names: spec.item_names(), stores })
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Index drawn with probability proportional to `weights`.
fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

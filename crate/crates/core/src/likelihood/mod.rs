//! Observed purchase rates, their mean functions, the log-likelihood of
//! purchase times under stockouts, and its (minibatched) gradient.
//!
//! An arrival at time `t` in store `σ` buys item `i` with probability
//! `π_i(s(t))`, so purchases of item `i` form an NHPP with rate
//! `λ̃_i(t) = λ(t | η^σ) π_i(s(t))`. Because the stock is piecewise constant,
//! the mean function is an exact finite sum over constant-stock intervals.
//!
//! Gradients are reported in the natural layout documented in
//! [`crate::model`]; [`latent_objective`] applies the chain rule to the
//! expanded-mean coordinates.

pub mod prior;

use crate::choice::{mixture_probs, ChoiceProbs};
use crate::domain::{Dataset, StockTrajectory, StockVector};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ModelSpec};

pub use prior::{log_prior_and_grad, log_simplex_prior_and_grad, Hyperparams};

/// Expected number of arrivals resolving to each item and to no purchase.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub items: Vec<f64>,
    pub no_purchase: f64,
}

impl ExpectedCounts {
    /// Expected arrivals of every kind; equals `Λ` over the covered time.
    pub fn total(&self) -> f64 {
        self.items.iter().sum::<f64>() + self.no_purchase
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLikResult {
    pub value: f64,
    /// Aligned to the natural layout of [`crate::model`].
    pub gradient: Vec<f64>,
}

/// Which periods enter a gradient evaluation.
#[derive(Debug, Clone, Copy)]
pub enum PeriodSelection<'a> {
    All,
    /// Period indices per store. Each store's contribution is scaled by
    /// `L^σ / |subset^σ|`.
    Subset(&'a [Vec<usize>]),
}

/// `λ̃_i(t)` for every item, with the stock an arrival at `t` would see.
pub fn observed_rate(params: &ModelParams, traj: &StockTrajectory, store: usize, t: f64) -> Result<Vec<f64>> {
    let eta = store_eta(params, store)?;
    let stock = traj.stock_at(t)?;
    let rate = params.rate.rate(eta, t)?;
    let pi = mixture_probs(&stock, &params.weights[store], &params.segments)?;
    Ok(pi.items.iter().map(|p| rate * p).collect())
}

/// `Λ̃_i(0, T)` for every item (and the no-purchase outcome) over one period.
pub fn mean_function(params: &ModelParams, traj: &StockTrajectory, store: usize) -> Result<ExpectedCounts> {
    let eta = store_eta(params, store)?;
    params.rate.validate(eta)?;
    let n = traj.stock_vectors().first().map_or(0, Vec::len);
    let mut out = ExpectedCounts { items: vec![0.0; n], no_purchase: 0.0 };
    for (start, end, stock) in traj.intervals() {
        let mass = params.rate.integral_unchecked(eta, start, end);
        let pi = mixture_probs(stock, &params.weights[store], &params.segments)?;
        for (acc, p) in out.items.iter_mut().zip(&pi.items) {
            *acc += mass * p;
        }
        out.no_purchase += mass * pi.no_purchase;
    }
    Ok(out)
}

/// Log-likelihood of every purchase time in `data`, evaluated purchase by
/// purchase. Returns `-inf` when some purchase has zero modeled rate.
pub fn log_likelihood(params: &ModelParams, data: &Dataset) -> Result<f64> {
    check_dims(params, data)?;
    params.validate(data.item_count())?;
    let n = data.item_count();
    let mut total = 0.0;
    for (s, store) in data.stores.iter().enumerate() {
        let eta = &params.eta[s];
        for period in &store.periods {
            let traj = StockTrajectory::build(period, n, data.horizon)?;
            for (i, times) in period.purchase_times.iter().enumerate() {
                for &t in times {
                    let stock = traj.stock_before(t);
                    let pi = mixture_probs(&stock, &params.weights[s], &params.segments)?;
                    let rate = params.rate.rate_unchecked(eta, t) * pi.items[i];
                    total += rate.ln();
                }
            }
            total -= mean_function(params, &traj, s)?.items.iter().sum::<f64>();
        }
    }
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}

/// Log-likelihood and its natural-layout gradient over the selected periods.
pub fn grad_log_likelihood(
    params: &ModelParams,
    data: &PreparedData,
    periods: PeriodSelection<'_>,
) -> Result<LogLikResult> {
    if params.eta.len() != data.stores.len() || params.weights.len() != data.stores.len() {
        return Err(Error::Dimension(format!(
            "parameters cover {} stores, data has {}",
            params.eta.len(),
            data.stores.len()
        )));
    }
    params.validate(data.items)?;
    let spec = params.spec(data.items);
    let mut grad = vec![0.0; spec.natural_len()];
    let value = accumulate(&spec, params, data, periods, &mut grad)?;
    Ok(LogLikResult { value, gradient: grad })
}

/// Log-likelihood and gradient with respect to expanded-mean coordinates `z`
/// (see [`crate::model`]). Invalid `z` yields a `-inf` value.
pub fn latent_objective(
    spec: &ModelSpec,
    z: &[f64],
    data: &PreparedData,
    periods: PeriodSelection<'_>,
) -> Result<LogLikResult> {
    let params = match spec.untransform(z) {
        Ok(p) => p,
        Err(Error::InvalidParams(_)) => {
            return Ok(LogLikResult { value: f64::NEG_INFINITY, gradient: vec![f64::NAN; z.len()] })
        }
        Err(e) => return Err(e),
    };
    for eta in &params.eta {
        if spec.rate.validate(eta).is_err() {
            return Ok(LogLikResult { value: f64::NEG_INFINITY, gradient: vec![f64::NAN; z.len()] });
        }
    }
    let mut natural = vec![0.0; spec.natural_len()];
    let value = accumulate(spec, &params, data, periods, &mut natural)?;
    Ok(LogLikResult { value, gradient: spec.latent_gradient(z, &natural) })
}

/// Purchases made under one stock vector, and the time spent in it.
#[derive(Debug, Clone)]
struct StockState {
    stock: StockVector,
    counts: Vec<f64>,
    intervals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct PeriodSummary {
    times: Vec<f64>,
    states: Vec<StockState>,
}

/// Per-period sufficient statistics for repeated likelihood evaluations.
#[derive(Debug, Clone)]
pub struct PreparedData {
    items: usize,
    stores: Vec<Vec<PeriodSummary>>,
}

impl PreparedData {
    pub fn new(data: &Dataset) -> Result<Self> {
        data.validate()?;
        let n = data.item_count();
        let stores = data
            .stores
            .iter()
            .map(|store| {
                store
                    .periods
                    .iter()
                    .map(|period| {
                        let traj = StockTrajectory::build(period, n, data.horizon)?;
                        let mut states: Vec<StockState> = Vec::new();
                        let state_index = |stock: &[bool], states: &mut Vec<StockState>| -> usize {
                            match states.iter().position(|s| s.stock == stock) {
                                Some(k) => k,
                                None => {
                                    states.push(StockState {
                                        stock: stock.to_vec(),
                                        counts: vec![0.0; n],
                                        intervals: Vec::new(),
                                    });
                                    states.len() - 1
                                }
                            }
                        };
                        for (start, end, stock) in traj.intervals() {
                            let k = state_index(stock, &mut states);
                            states[k].intervals.push((start, end));
                        }
                        let mut times = Vec::with_capacity(period.total_purchases());
                        for (i, ts) in period.purchase_times.iter().enumerate() {
                            for &t in ts {
                                let k = state_index(&traj.stock_before(t), &mut states);
                                states[k].counts[i] += 1.0;
                                times.push(t);
                            }
                        }
                        Ok(PeriodSummary { times, states })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { items: n, stores })
    }

    pub fn item_count(&self) -> usize {
        self.items
    }

    pub fn store_count(&self) -> usize {
        self.stores.len()
    }

    pub fn period_counts(&self) -> Vec<usize> {
        self.stores.iter().map(Vec::len).collect()
    }

    pub fn total_purchases(&self) -> usize {
        self.stores.iter().flatten().map(|p| p.times.len()).sum()
    }
}

fn store_eta(params: &ModelParams, store: usize) -> Result<&[f64]> {
    if store >= params.eta.len() || store >= params.weights.len() {
        return Err(Error::Dimension(format!("store {store} out of range")));
    }
    Ok(&params.eta[store])
}

fn check_dims(params: &ModelParams, data: &Dataset) -> Result<()> {
    if params.eta.len() != data.store_count() || params.weights.len() != data.store_count() {
        return Err(Error::Dimension(format!(
            "parameters cover {} stores, data has {}",
            params.eta.len(),
            data.store_count()
        )));
    }
    Ok(())
}

fn accumulate(
    spec: &ModelSpec,
    params: &ModelParams,
    data: &PreparedData,
    periods: PeriodSelection<'_>,
    grad: &mut [f64],
) -> Result<f64> {
    let mut value = 0.0;
    for (s, store) in data.stores.iter().enumerate() {
        match periods {
            PeriodSelection::All => {
                for period in store {
                    value += period_term(spec, params, s, period, 1.0, grad)?;
                }
            }
            PeriodSelection::Subset(subsets) => {
                let subset =
                    subsets.get(s).ok_or_else(|| Error::Dimension(format!("no period subset for store {s}")))?;
                if store.is_empty() {
                    continue;
                }
                if subset.is_empty() {
                    return Err(Error::InvalidParams(format!("empty period subset for store {s}")));
                }
                let scale = store.len() as f64 / subset.len() as f64;
                for &l in subset {
                    let period = store
                        .get(l)
                        .ok_or_else(|| Error::Dimension(format!("period {l} out of range for store {s}")))?;
                    value += period_term(spec, params, s, period, scale, grad)?;
                }
            }
        }
    }
    Ok(if value.is_nan() { f64::NEG_INFINITY } else { value })
}

// One period's contribution, grouped by stock state:
//   Σ_j ln λ(t_j) + Σ_states [ Σ_i c_i ln π_i(s) − Λ(s) Σ_i π_i(s) ].
fn period_term(
    spec: &ModelSpec,
    params: &ModelParams,
    store: usize,
    period: &PeriodSummary,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let eta = &params.eta[store];
    let theta = &params.weights[store];
    let n = spec.items;
    let eta_off = spec.eta_offset(store);
    let theta_off = spec.theta_offset(store);

    let mut g_eta = vec![0.0; eta.len()];
    let mut value = params.rate.sum_log_rate(eta, &period.times, &mut g_eta);

    let mut weights = vec![0.0; n];
    for state in &period.states {
        let seg_probs: Vec<ChoiceProbs> =
            params.segments.iter().map(|seg| seg.probs(&state.stock)).collect::<Result<_>>()?;
        let mut pi = vec![0.0; n];
        for (w, f) in theta.iter().zip(&seg_probs) {
            for (acc, p) in pi.iter_mut().zip(&f.items) {
                *acc += w * p;
            }
        }
        let pi_total: f64 = pi.iter().sum();
        let exposure: f64 = state.intervals.iter().map(|&(a, b)| params.rate.integral_unchecked(eta, a, b)).sum();

        for i in 0..n {
            if state.counts[i] > 0.0 {
                value += state.counts[i] * pi[i].ln();
            }
        }
        value -= exposure * pi_total;

        for &(a, b) in &state.intervals {
            params.rate.add_integral_gradient(eta, a, b, -pi_total, &mut g_eta);
        }
        for (i, w) in weights.iter_mut().enumerate() {
            let ratio = if state.counts[i] > 0.0 { state.counts[i] / pi[i] } else { 0.0 };
            *w = ratio - exposure;
        }
        for (k, f) in seg_probs.iter().enumerate() {
            let g: f64 = f.items.iter().zip(&weights).map(|(p, w)| p * w).sum();
            grad[theta_off + k] += scale * g;
            if spec.segment_offset(k + 1) > spec.segment_offset(k) {
                let scaled: Vec<f64> = weights.iter().map(|w| scale * theta[k] * w).collect();
                let o = spec.segment_offset(k);
                params.segments[k].add_weighted_gradient(
                    &state.stock,
                    &scaled,
                    &mut grad[o..spec.segment_offset(k + 1)],
                )?;
            }
        }
    }
    for (j, g) in g_eta.iter().enumerate() {
        grad[eta_off + j] += scale * g;
    }
    Ok(scale * value)
}

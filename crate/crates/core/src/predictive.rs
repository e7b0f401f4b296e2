//! Posterior-predictive purchase counts under given stock levels, average
//! purchase-rate curves, and full-stock (lost-sales) predictions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::choice::mixture_probs;
use crate::domain::{Dataset, StockTrajectory, StockVector};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::sampler::PosteriorSamples;

/// A stock vector held fixed over a set of time intervals, possibly spread
/// over several periods.
#[derive(Debug, Clone, PartialEq)]
pub struct StockCondition {
    pub stock: StockVector,
    pub intervals: Vec<(f64, f64)>,
}

impl StockCondition {
    pub fn validate(&self, items: usize, horizon: f64) -> Result<()> {
        if self.stock.len() != items {
            return Err(Error::Dimension(format!("stock vector has {} items, expected {items}", self.stock.len())));
        }
        for &(a, b) in &self.intervals {
            if !(0.0 <= a && a <= b && b <= horizon) {
                return Err(Error::InvalidParams(format!("interval [{a}, {b}] not within [0, {horizon}]")));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

/// Per-draw Poisson means and sampled counts, per item.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub means: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
}

/// Summary of one predicted quantity across draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub q025: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q975: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParams("cannot summarize zero values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            q025: quantile(&sorted, 0.025),
            q25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
            q975: quantile(&sorted, 0.975),
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }

    /// Whether `x` lies in the central 95% interval.
    pub fn covers(&self, x: f64) -> bool {
        self.q025 <= x && x <= self.q975
    }
}

/// Linearly interpolated quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl PredictiveDistribution {
    pub fn items(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn total_counts(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c.iter().sum::<u64>() as f64).collect()
    }

    pub fn total_means(&self) -> Vec<f64> {
        self.means.iter().map(|m| m.iter().sum()).collect()
    }

    pub fn item_counts(&self, item: usize) -> Vec<f64> {
        self.counts.iter().map(|c| c[item] as f64).collect()
    }

    /// Summaries of sampled counts per item.
    pub fn item_summaries(&self) -> Result<Vec<Summary>> {
        (0..self.items()).map(|i| Summary::of(&self.item_counts(i))).collect()
    }

    pub fn total_summary(&self) -> Result<Summary> {
        Summary::of(&self.total_counts())
    }

    /// Posterior mean of the expected count per item.
    pub fn mean_per_item(&self) -> Vec<f64> {
        let n = self.items();
        let mut acc = vec![0.0; n];
        for m in &self.means {
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / self.means.len().max(1) as f64).collect()
    }
}

/// Expected purchases per item under `cond` for one parameter set:
/// `Σ_intervals π_i(s) Λ(interval)`.
pub fn expected_counts(params: &ModelParams, cond: &StockCondition, store: usize) -> Result<Vec<f64>> {
    let eta = params.eta.get(store).ok_or_else(|| Error::Dimension(format!("store {store} out of range")))?;
    params.rate.validate(eta)?;
    let mass: f64 = cond.intervals.iter().map(|&(a, b)| params.rate.integral_unchecked(eta, a, b)).sum();
    let pi = mixture_probs(&cond.stock, &params.weights[store], &params.segments)?;
    Ok(pi.items.iter().map(|p| p * mass).collect())
}

fn draw_counts(means: Vec<Vec<f64>>, seed: u64) -> Result<PredictiveDistribution> {
    let mut counts = Vec::with_capacity(means.len());
    for (d, m) in means.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(d as u64);
        let c = m
            .iter()
            .map(|&mu| {
                if mu <= 0.0 {
                    return Ok(0);
                }
                let p = Poisson::new(mu).map_err(|e| Error::NonFinite(format!("poisson mean {mu}: {e}")))?;
                Ok(p.sample(&mut rng) as u64)
            })
            .collect::<Result<Vec<u64>>>()?;
        counts.push(c);
    }
    Ok(PredictiveDistribution { means, counts })
}

/// Posterior predictive purchase counts under `cond` in `store`; draw `d`
/// samples its Poisson counts from stream `d` of `seed`.
pub fn predict_counts(
    samples: &PosteriorSamples,
    cond: &StockCondition,
    store: usize,
    seed: u64,
) -> Result<PredictiveDistribution> {
    cond.validate(samples.spec.items, f64::INFINITY)?;
    let means = samples.params().map(|p| expected_counts(&p?, cond, store)).collect::<Result<Vec<_>>>()?;
    draw_counts(means, seed)
}

/// Per-draw predictive purchase counts with no stockouts over `periods`
/// full periods of length `horizon`.
pub fn full_stock_sales(
    samples: &PosteriorSamples,
    store: usize,
    periods: usize,
    horizon: f64,
    seed: u64,
) -> Result<PredictiveDistribution> {
    let cond = StockCondition { stock: vec![true; samples.spec.items], intervals: vec![(0.0, horizon)] };
    let means = samples
        .params()
        .map(|p| Ok(expected_counts(&p?, &cond, store)?.iter().map(|m| m * periods as f64).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    draw_counts(means, seed)
}

/// Lost sales for one item: full-stock prediction against actual sales.
#[derive(Debug, Clone, PartialEq)]
pub struct LostSales {
    pub item: String,
    pub actual: u64,
    pub full_stock: Summary,
    /// Full-stock predictive mean minus actual purchases.
    pub lost_mean: f64,
}

/// Full-stock predictions for `store` over all its periods in `data`,
/// compared with the purchases actually recorded.
pub fn lost_sales(samples: &PosteriorSamples, data: &Dataset, store: usize, seed: u64) -> Result<Vec<LostSales>> {
    let st = data.stores.get(store).ok_or_else(|| Error::Dimension(format!("store {store} out of range")))?;
    let dist = full_stock_sales(samples, store, st.periods.len(), data.horizon, seed)?;
    let summaries = dist.item_summaries()?;
    let means = dist.mean_per_item();
    Ok(data
        .item_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let actual: u64 = st.periods.iter().map(|p| p.purchases(i) as u64).sum();
            LostSales { item: name.clone(), actual, full_stock: summaries[i], lost_mean: means[i] - actual as f64 }
        })
        .collect())
}

/// For each draw, the total purchase rate `Σ_i λ̃_i(t)` averaged over every
/// period of `store`, at each grid time.
pub fn average_purchase_rate_curve(
    samples: &PosteriorSamples,
    data: &Dataset,
    store: usize,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let st = data.stores.get(store).ok_or_else(|| Error::Dimension(format!("store {store} out of range")))?;
    if st.periods.is_empty() {
        return Err(Error::InvalidData(format!("store {} has no periods", st.store_id)));
    }
    let n = data.item_count();
    let trajectories =
        st.periods.iter().map(|p| StockTrajectory::build(p, n, data.horizon)).collect::<Result<Vec<_>>>()?;
    // Per grid point: distinct stock vectors and their period frequency.
    let mut stocks: Vec<StockVector> = Vec::new();
    let mut freq: Vec<Vec<(usize, f64)>> = Vec::with_capacity(grid.len());
    let share = 1.0 / trajectories.len() as f64;
    for &t in grid {
        let mut here: Vec<(usize, f64)> = Vec::new();
        for traj in &trajectories {
            let s = traj.stock_at(t)?;
            let k = match stocks.iter().position(|x| *x == s) {
                Some(k) => k,
                None => {
                    stocks.push(s);
                    stocks.len() - 1
                }
            };
            match here.iter_mut().find(|(j, _)| *j == k) {
                Some(entry) => entry.1 += share,
                None => here.push((k, share)),
            }
        }
        freq.push(here);
    }
    samples
        .params()
        .map(|p| {
            let p = p?;
            let eta = &p.eta[store];
            p.rate.validate(eta)?;
            let totals = stocks
                .iter()
                .map(|s| Ok(mixture_probs(s, &p.weights[store], &p.segments)?.purchase_total()))
                .collect::<Result<Vec<f64>>>()?;
            Ok(grid
                .iter()
                .zip(&freq)
                .map(|(&t, here)| p.rate.rate_unchecked(eta, t) * here.iter().map(|&(k, w)| w * totals[k]).sum::<f64>())
                .collect())
        })
        .collect()
}

/// Stock conditions that occurred in `store`'s periods, with the purchases
/// observed under each. Time spent at each stock vector is pooled across
/// periods; a purchase counts toward the stock in effect just before it.
pub fn conditions_from_data(data: &Dataset, store: usize) -> Result<Vec<(StockCondition, Vec<u64>)>> {
    let st = data.stores.get(store).ok_or_else(|| Error::Dimension(format!("store {store} out of range")))?;
    let n = data.item_count();
    let mut out: Vec<(StockCondition, Vec<u64>)> = Vec::new();
    let slot = |stock: &[bool], out: &mut Vec<(StockCondition, Vec<u64>)>| -> usize {
        match out.iter().position(|(c, _)| c.stock == stock) {
            Some(k) => k,
            None => {
                out.push((StockCondition { stock: stock.to_vec(), intervals: Vec::new() }, vec![0; n]));
                out.len() - 1
            }
        }
    };
    for period in &st.periods {
        let traj = StockTrajectory::build(period, n, data.horizon)?;
        for (a, b, s) in traj.intervals() {
            let k = slot(s, &mut out);
            out[k].0.intervals.push((a, b));
        }
        for (i, times) in period.purchase_times.iter().enumerate() {
            for &t in times {
                let k = slot(&traj.stock_before(t), &mut out);
                out[k].1[i] += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&v, 0.125), 1.5);
        let s = Summary::of(&v).unwrap();
        assert_eq!(s.iqr(), 2.0);
        assert!(s.covers(1.2) && !s.covers(0.5));
    }
}

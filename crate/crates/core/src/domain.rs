//! Transaction data model: stores, time periods, purchase times, initial
//! stocks, and the stock-indicator step function derived from them.
//!
//! Items are indexed `0..n` throughout the crate.

use crate::error::{Error, Result};

/// Availability of every item at one instant; `true` means in stock.
pub type StockVector = Vec<bool>;

/// Observed purchases and initial stock for one store over one period `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePeriod {
    /// Per item, strictly increasing purchase times.
    pub purchase_times: Vec<Vec<f64>>,
    /// Per item, stock on hand at the start of the period.
    pub initial_stock: Vec<u32>,
    /// Identifier from the source file; empty for generated periods.
    pub id: String,
}

impl TimePeriod {
    pub fn new(purchase_times: Vec<Vec<f64>>, initial_stock: Vec<u32>) -> Self {
        Self { purchase_times, initial_stock, id: String::new() }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn item_count(&self) -> usize {
        self.initial_stock.len()
    }

    pub fn purchases(&self, item: usize) -> usize {
        self.purchase_times[item].len()
    }

    pub fn total_purchases(&self) -> usize {
        self.purchase_times.iter().map(Vec::len).sum()
    }

    /// Checks the period against an `n`-item catalog and horizon.
    pub fn validate(&self, n: usize, horizon: f64) -> Result<()> {
        if self.purchase_times.len() != n || self.initial_stock.len() != n {
            return Err(Error::Dimension(format!(
                "period has {} purchase lists and {} stocks, expected {n}",
                self.purchase_times.len(),
                self.initial_stock.len()
            )));
        }
        for (item, times) in self.purchase_times.iter().enumerate() {
            for (index, &t) in times.iter().enumerate() {
                if !(0.0..=horizon).contains(&t) {
                    return Err(Error::TimeOutOfRange { time: t, horizon });
                }
                if index > 0 && times[index - 1] >= t {
                    return Err(Error::UnsortedTimes { item, index });
                }
            }
            let stock = self.initial_stock[item];
            if times.len() > stock as usize {
                return Err(Error::OverSold { item, purchases: times.len(), stock });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreData {
    pub store_id: String,
    pub periods: Vec<TimePeriod>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub horizon: f64,
    pub item_names: Vec<String>,
    pub stores: Vec<StoreData>,
}

impl Dataset {
    pub fn item_count(&self) -> usize {
        self.item_names.len()
    }

    pub fn store_count(&self) -> usize {
        self.stores.len()
    }

    pub fn total_purchases(&self) -> usize {
        self.stores.iter().flat_map(|s| &s.periods).map(TimePeriod::total_purchases).sum()
    }

    pub fn period_count(&self) -> usize {
        self.stores.iter().map(|s| s.periods.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidData(format!("horizon {} must be positive", self.horizon)));
        }
        let n = self.item_count();
        for store in &self.stores {
            for period in &store.periods {
                period.validate(n, self.horizon)?;
            }
        }
        Ok(())
    }

    /// Splits every store's periods into a leading training part and a trailing
    /// holdout part; `fraction` of each store's periods (rounded) go to training.
    /// Both halves keep every store, possibly with no periods, so store
    /// indices line up with the full dataset.
    pub fn split(&self, fraction: f64) -> (Dataset, Dataset) {
        let mut train = Dataset { stores: Vec::new(), ..self.clone() };
        let mut test = train.clone();
        for store in &self.stores {
            let cut = ((store.periods.len() as f64) * fraction).round() as usize;
            let cut = cut.min(store.periods.len());
            train.stores.push(StoreData { store_id: store.store_id.clone(), periods: store.periods[..cut].to_vec() });
            test.stores.push(StoreData { store_id: store.store_id.clone(), periods: store.periods[cut..].to_vec() });
        }
        (train, test)
    }
}

/// The stock step function `s(t)` of one period, with the changepoints that
/// delimit its intervals of constant stock.
///
/// Intervals are left-closed: an item whose last unit sells at time `t` is
/// unavailable to any arrival at or after `t`, while the exhausting purchase
/// itself saw the item in stock (see [`StockTrajectory::stock_before`]).
#[derive(Debug, Clone, PartialEq)]
pub struct StockTrajectory {
    changepoints: Vec<f64>,
    stocks: Vec<StockVector>,
    // Per item: -inf if never stocked, +inf if never exhausted.
    depleted_at: Vec<f64>,
    horizon: f64,
}

impl StockTrajectory {
    pub fn build(period: &TimePeriod, n: usize, horizon: f64) -> Result<Self> {
        period.validate(n, horizon)?;
        let depleted_at: Vec<f64> = (0..n)
            .map(|i| {
                let stock = period.initial_stock[i] as usize;
                let times = &period.purchase_times[i];
                if stock == 0 {
                    f64::NEG_INFINITY
                } else if times.len() == stock {
                    times[stock - 1]
                } else {
                    f64::INFINITY
                }
            })
            .collect();

        let mut changepoints = vec![0.0, horizon];
        changepoints.extend(depleted_at.iter().copied().filter(|&d| d > 0.0 && d < horizon));
        changepoints.sort_by(f64::total_cmp);
        changepoints.dedup();

        let stocks = changepoints[..changepoints.len() - 1]
            .iter()
            .map(|&q| depleted_at.iter().map(|&d| q < d).collect())
            .collect();
        Ok(Self { changepoints, stocks, depleted_at, horizon })
    }

    pub fn changepoints(&self) -> &[f64] {
        &self.changepoints
    }

    /// Stock vector on each interval `[q_r, q_{r+1})`.
    pub fn stock_vectors(&self) -> &[StockVector] {
        &self.stocks
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn interval_count(&self) -> usize {
        self.stocks.len()
    }

    /// `(start, end, stock)` for each interval of constant stock.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, &[bool])> + '_ {
        self.changepoints.windows(2).zip(&self.stocks).map(|(w, s)| (w[0], w[1], s.as_slice()))
    }

    /// Stock seen by an arrival at time `t`.
    pub fn stock_at(&self, t: f64) -> Result<StockVector> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { time: t, horizon: self.horizon });
        }
        Ok(self.depleted_at.iter().map(|&d| t < d).collect())
    }

    /// Left limit `s(t-)`: the stock in effect for a purchase recorded at `t`.
    pub fn stock_before(&self, t: f64) -> StockVector {
        self.depleted_at.iter().map(|&d| t <= d).collect()
    }

    /// Time at which each item ran out: `None` if it never did within the
    /// period, `Some(0.0)` if it started without stock.
    pub fn stockout_times(&self) -> Vec<Option<f64>> {
        self.depleted_at
            .iter()
            .map(|&d| {
                if d == f64::NEG_INFINITY {
                    Some(0.0)
                } else if d.is_finite() {
                    Some(d)
                } else {
                    None
                }
            })
            .collect()
    }
}

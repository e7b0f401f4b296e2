//! Transaction and stock CSV files.
//!
//! Transactions have one row per purchase with a store, period, item and
//! time column. Times are decimal hours or `HH:MM[:SS]`; with a configured
//! clock they are rescaled from `[open, close]` to `[0, T]`. Stocks have one
//! row per `(store, period, item)` with the initial stock.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, StoreData, TimePeriod};
use crate::error::{Error, Result};

use super::samples::{write_provenance, Provenance};

/// Header names of the transaction and stock columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    /// `None` or an empty name puts every row in a single store named `1`.
    pub store: Option<String>,
    pub period: String,
    pub item: String,
    pub time: String,
    pub stock: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            store: Some("store_id".into()),
            period: "period_id".into(),
            item: "item_id".into(),
            time: "purchase_time".into(),
            stock: "initial_stock".into(),
        }
    }
}

/// Business hours, in hours since midnight, mapped onto `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clock {
    pub open: f64,
    pub close: f64,
}

impl Clock {
    pub fn rescale(&self, hours: f64, horizon: f64) -> f64 {
        (hours - self.open) * (horizon / (self.close - self.open))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransactionOptions {
    pub columns: ColumnMap,
    pub horizon: f64,
    pub clock: Option<Clock>,
    /// Item catalog in model order; `None` collects items from the file.
    pub items: Option<Vec<String>>,
}

impl TransactionOptions {
    pub fn new(horizon: f64) -> Self {
        Self { columns: ColumnMap::default(), horizon, clock: None, items: None }
    }
}

/// Parses decimal hours (`13.5`) or a clock time (`13:30`, `13:30:15`).
pub fn parse_time(text: &str) -> Option<f64> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return None;
        }
        let h: u32 = parts[0].parse().ok()?;
        let m: u32 = parts[1].parse().ok()?;
        let s: f64 = if parts.len() == 3 { parts[2].parse().ok()? } else { 0.0 };
        if m >= 60 || !(0.0..60.0).contains(&s) {
            return None;
        }
        Some(h as f64 + m as f64 / 60.0 + s / 3600.0)
    } else {
        text.parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

/// Orders identifiers numerically when all are integers, else
/// lexicographically.
pub fn sort_ids(ids: &mut [String]) {
    if ids.iter().all(|s| s.trim().parse::<i64>().is_ok()) {
        ids.sort_by_key(|s| s.trim().parse::<i64>().unwrap_or(0));
    } else {
        ids.sort();
    }
}

type Raw = BTreeMap<String, BTreeMap<String, Vec<(usize, f64)>>>;

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse { line: 1, msg: format!("missing column `{name}`") })
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, name: &str) -> Result<&'r str> {
    record
        .get(idx)
        .map(str::trim)
        .ok_or_else(|| Error::Parse { line: line_of(record), msg: format!("missing `{name}` field") })
}

/// Reads a transactions file. Initial stocks are set to the purchase counts
/// (see [`derive_stock_from_last_purchase`]); use [`apply_stock`] to load
/// recorded stocks instead.
pub fn parse_transactions<R: Read>(reader: R, options: &TransactionOptions) -> Result<Dataset> {
    if !(options.horizon > 0.0 && options.horizon.is_finite()) {
        return Err(Error::Config(format!("horizon {} must be positive", options.horizon)));
    }
    if let Some(c) = options.clock {
        if !(c.close > c.open) {
            return Err(Error::Config(format!("closing time {} not after opening time {}", c.close, c.open)));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = &options.columns;
    let store_col = cols.store.as_deref().filter(|s| !s.is_empty()).map(|s| column(&headers, s)).transpose()?;
    let period_col = column(&headers, &cols.period)?;
    let item_col = column(&headers, &cols.item)?;
    let time_col = column(&headers, &cols.time)?;

    let mut raw: Raw = BTreeMap::new();
    let mut seen_items: Vec<String> = options.items.clone().unwrap_or_default();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let store = match store_col {
            Some(c) => field(&record, c, "store")?.to_string(),
            None => "1".to_string(),
        };
        let period = field(&record, period_col, &cols.period)?.to_string();
        let item = field(&record, item_col, &cols.item)?;
        let time_text = field(&record, time_col, &cols.time)?;
        let hours =
            parse_time(time_text).ok_or_else(|| Error::Parse { line, msg: format!("invalid time `{time_text}`") })?;
        let t = match options.clock {
            Some(c) => {
                if hours < c.open || hours > c.close {
                    return Err(Error::Parse {
                        line,
                        msg: format!("time `{time_text}` outside business hours [{}, {}]", c.open, c.close),
                    });
                }
                c.rescale(hours, options.horizon).clamp(0.0, options.horizon)
            }
            None => {
                if !(0.0..=options.horizon).contains(&hours) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("time `{time_text}` outside [0, {}]", options.horizon),
                    });
                }
                hours
            }
        };
        let idx = match seen_items.iter().position(|s| s == item) {
            Some(i) => i,
            None if options.items.is_some() => {
                return Err(Error::Parse { line, msg: format!("unknown item `{item}`") })
            }
            None => {
                seen_items.push(item.to_string());
                seen_items.len() - 1
            }
        };
        raw.entry(store).or_default().entry(period).or_default().push((idx, t));
    }

    // Catalog order: as given, or sorted when collected from the file.
    let item_names = match &options.items {
        Some(items) => items.clone(),
        None => {
            let mut sorted = seen_items.clone();
            sort_ids(&mut sorted);
            sorted
        }
    };
    let remap: Vec<usize> =
        seen_items.iter().map(|s| item_names.iter().position(|x| x == s).expect("catalog covers items")).collect();
    let n = item_names.len();

    let mut store_ids: Vec<String> = raw.keys().cloned().collect();
    sort_ids(&mut store_ids);
    let stores = store_ids
        .into_iter()
        .map(|sid| {
            let periods_raw = &raw[&sid];
            let mut period_ids: Vec<String> = periods_raw.keys().cloned().collect();
            sort_ids(&mut period_ids);
            let periods = period_ids
                .iter()
                .map(|pid| {
                    let mut times = vec![Vec::new(); n];
                    for &(idx, t) in &periods_raw[pid] {
                        times[remap[idx]].push(t);
                    }
                    for ts in &mut times {
                        ts.sort_by(f64::total_cmp);
                    }
                    let stock = times.iter().map(|ts| ts.len() as u32).collect();
                    for ts in &mut times {
                        break_ties(ts, options.horizon);
                    }
                    TimePeriod::new(times, stock).with_id(pid.clone())
                })
                .collect();
            (sid, periods)
        })
        .map(|(store_id, periods)| StoreData { store_id, periods })
        .collect();
    Ok(Dataset { horizon: options.horizon, item_names, stores })
}

/// Spreads equal timestamps of one item (clock times are often recorded to
/// the minute) so the times are strictly increasing, staying within
/// `[0, horizon]`. Ties move by a few multiples of `1e-9 · horizon`.
pub fn break_ties(times: &mut [f64], horizon: f64) {
    let delta = 1e-9 * horizon;
    for k in 1..times.len() {
        if times[k] <= times[k - 1] {
            times[k] = times[k - 1] + delta;
        }
    }
    if let Some(last) = times.last_mut() {
        *last = last.min(horizon);
    }
    for k in (0..times.len().saturating_sub(1)).rev() {
        if times[k] >= times[k + 1] {
            times[k] = times[k + 1] - delta;
        }
    }
}

/// Sets every initial stock to the period's purchase count, so each item
/// is treated as stocked out after its last recorded purchase.
pub fn derive_stock_from_last_purchase(data: &mut Dataset) {
    for period in data.stores.iter_mut().flat_map(|s| s.periods.iter_mut()) {
        period.initial_stock = period.purchase_times.iter().map(|t| t.len() as u32).collect();
    }
}

/// Replaces initial stocks with those in a stock file. Every
/// `(store, period, item)` of the dataset must be covered; periods listed
/// only in the stock file are added without purchases.
pub fn apply_stock<R: Read>(data: &mut Dataset, reader: R, columns: &ColumnMap) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let store_col = columns.store.as_deref().filter(|s| !s.is_empty()).map(|s| column(&headers, s)).transpose()?;
    let period_col = column(&headers, &columns.period)?;
    let item_col = column(&headers, &columns.item)?;
    let stock_col = column(&headers, &columns.stock)?;
    let n = data.item_count();

    let mut table: BTreeMap<(String, String), Vec<Option<u32>>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let store = match store_col {
            Some(c) => field(&record, c, "store")?.to_string(),
            None => "1".to_string(),
        };
        let period = field(&record, period_col, &columns.period)?.to_string();
        let item = field(&record, item_col, &columns.item)?;
        let i = data
            .item_names
            .iter()
            .position(|s| s == item)
            .ok_or_else(|| Error::Parse { line, msg: format!("unknown item `{item}`") })?;
        let text = field(&record, stock_col, &columns.stock)?;
        let level: u32 =
            text.parse().map_err(|_| Error::Parse { line, msg: format!("invalid initial stock `{text}`") })?;
        let slot = &mut table.entry((store, period)).or_insert_with(|| vec![None; n])[i];
        if slot.is_some() {
            return Err(Error::Parse { line, msg: format!("duplicate stock row for item `{item}`") });
        }
        *slot = Some(level);
    }

    // Periods present only in the stock file.
    for (store_id, period_id) in table.keys() {
        let store = match data.stores.iter_mut().position(|s| &s.store_id == store_id) {
            Some(k) => &mut data.stores[k],
            None => {
                data.stores.push(StoreData { store_id: store_id.clone(), periods: Vec::new() });
                data.stores.last_mut().expect("just pushed")
            }
        };
        if !store.periods.iter().any(|p| &p.id == period_id) {
            store.periods.push(TimePeriod::new(vec![Vec::new(); n], vec![0; n]).with_id(period_id.clone()));
        }
    }
    for store in &mut data.stores {
        let mut ids: Vec<String> = store.periods.iter().map(|p| p.id.clone()).collect();
        sort_ids(&mut ids);
        store.periods.sort_by_key(|p| ids.iter().position(|x| *x == p.id));
        for period in store.periods.iter_mut() {
            let pid = &period.id;
            let levels = table.get(&(store.store_id.clone(), pid.clone())).ok_or_else(|| {
                Error::InvalidData(format!("no stock rows for store `{}` period `{pid}`", store.store_id))
            })?;
            for (i, level) in levels.iter().enumerate() {
                let level = level.ok_or_else(|| {
                    Error::InvalidData(format!(
                        "no stock row for store `{}` period `{pid}` item `{}`",
                        store.store_id, data.item_names[i]
                    ))
                })?;
                period.initial_stock[i] = level;
            }
        }
    }
    let mut ids: Vec<String> = data.stores.iter().map(|s| s.store_id.clone()).collect();
    sort_ids(&mut ids);
    data.stores.sort_by_key(|s| ids.iter().position(|x| *x == s.store_id));
    data.validate()
}

fn period_label(period: &TimePeriod, index: usize) -> String {
    if period.id.is_empty() {
        (index + 1).to_string()
    } else {
        period.id.clone()
    }
}

/// Writes purchases in the default transaction format, times unscaled,
/// after `#` provenance lines.
pub fn write_transactions<W: Write>(data: &Dataset, provenance: &Provenance, mut writer: W) -> Result<()> {
    write_provenance(&mut writer, provenance)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["store_id", "period_id", "item_id", "purchase_time"])?;
    for store in &data.stores {
        for (l, period) in store.periods.iter().enumerate() {
            let pid = period_label(period, l);
            let mut rows: Vec<(f64, usize)> =
                period.purchase_times.iter().enumerate().flat_map(|(i, ts)| ts.iter().map(move |&t| (t, i))).collect();
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (t, i) in rows {
                w.write_record([store.store_id.as_str(), pid.as_str(), data.item_names[i].as_str(), &t.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes initial stocks in the default stock format, after `#`
/// provenance lines.
pub fn write_stock<W: Write>(data: &Dataset, provenance: &Provenance, mut writer: W) -> Result<()> {
    write_provenance(&mut writer, provenance)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["store_id", "period_id", "item_id", "initial_stock"])?;
    for store in &data.stores {
        for (l, period) in store.periods.iter().enumerate() {
            let pid = period_label(period, l);
            for (i, level) in period.initial_stock.iter().enumerate() {
                w.write_record([
                    store.store_id.as_str(),
                    pid.as_str(),
                    data.item_names[i].as_str(),
                    &level.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

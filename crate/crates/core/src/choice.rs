//! Purchase probabilities `f_i(s, φ, τ)` for the multinomial logit, exogenous
//! proportional-substitution and nonparametric ranking models, and their
//! segment mixtures `π_i(s) = Σ_k θ_k f_i(s, φ^k, τ^k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceFamily {
    Mnl,
    Exogenous,
    Nonparametric,
}

/// Purchase probabilities for every item plus the no-purchase outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbs {
    pub items: Vec<f64>,
    pub no_purchase: f64,
}

impl ChoiceProbs {
    /// Probability of purchasing anything.
    pub fn purchase_total(&self) -> f64 {
        self.items.iter().sum()
    }
}

/// Choice parameters of one customer segment.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// Preference `prefs` over items, fixed no-purchase weight.
    Mnl { prefs: Vec<f64>, no_purchase: f64 },
    /// First-choice preference `prefs`; `substitution` is the probability of
    /// trying a second choice after a stockout.
    Exogenous { prefs: Vec<f64>, substitution: f64 },
    /// Buy the first in-stock item of the ranking, else leave.
    Ranking(Vec<usize>),
}

fn check_stock_len(stock: &[bool], n: usize) -> Result<()> {
    if stock.len() != n {
        return Err(Error::Dimension(format!("stock vector has {} items, expected {n}", stock.len())));
    }
    Ok(())
}

fn check_simplex(prefs: &[f64]) -> Result<()> {
    if prefs.is_empty() || prefs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
        return Err(Error::InvalidParams(format!("preferences {prefs:?} must be nonnegative")));
    }
    let total: f64 = prefs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParams(format!("preferences sum to {total}, not 1")));
    }
    Ok(())
}

fn check_unit(value: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidParams(format!("{what} {value} outside [0, 1]")));
    }
    Ok(())
}

pub fn mnl_probs(stock: &[bool], prefs: &[f64], tau: f64) -> Result<ChoiceProbs> {
    check_simplex(prefs)?;
    check_stock_len(stock, prefs.len())?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParams(format!("no-purchase weight {tau} must be nonnegative")));
    }
    mnl_unchecked(stock, prefs, tau)
}

pub(crate) fn mnl_unchecked(stock: &[bool], prefs: &[f64], tau: f64) -> Result<ChoiceProbs> {
    let denom = tau + available_mass(stock, prefs);
    if denom <= 0.0 {
        return Err(Error::DegenerateChoice("mnl with zero no-purchase weight and nothing in stock".into()));
    }
    let items: Vec<f64> = stock.iter().zip(prefs).map(|(&s, &p)| if s { p / denom } else { 0.0 }).collect();
    Ok(ChoiceProbs { no_purchase: tau / denom, items })
}

/// `(∂f_i/∂φ, ∂f_i/∂τ)` for the MNL model.
pub fn mnl_gradient(stock: &[bool], prefs: &[f64], tau: f64, item: usize) -> Result<(Vec<f64>, f64)> {
    check_stock_len(stock, prefs.len())?;
    let denom = tau + available_mass(stock, prefs);
    if denom <= 0.0 {
        return Err(Error::DegenerateChoice("mnl with zero no-purchase weight and nothing in stock".into()));
    }
    let n = prefs.len();
    if !stock[item] {
        return Ok((vec![0.0; n], 0.0));
    }
    let f = prefs[item] / denom;
    let d_prefs = (0..n)
        .map(|v| {
            let direct = if v == item { 1.0 / denom } else { 0.0 };
            let through = if stock[v] { f / denom } else { 0.0 };
            direct - through
        })
        .collect();
    Ok((d_prefs, -f / denom))
}

pub fn exogenous_probs(stock: &[bool], prefs: &[f64], tau: f64) -> Result<ChoiceProbs> {
    check_simplex(prefs)?;
    check_stock_len(stock, prefs.len())?;
    check_unit(tau, "substitution probability")?;
    exogenous_unchecked(stock, prefs, tau)
}

// Σ_{j out of stock} φ_j / Σ_{v≠j} φ_v; `None` when no item is in stock.
fn substitution_pressure(stock: &[bool], prefs: &[f64]) -> Result<Option<f64>> {
    if !stock.iter().any(|&s| s) {
        return Ok(None);
    }
    let mut pressure = 0.0;
    for (j, (&s, &p)) in stock.iter().zip(prefs).enumerate() {
        if s || p == 0.0 {
            continue;
        }
        let rest = others_mass(prefs, j);
        if rest <= 0.0 {
            return Err(Error::DegenerateChoice(format!(
                "item {j} holds all first-choice preference and is out of stock"
            )));
        }
        pressure += p / rest;
    }
    Ok(Some(pressure))
}

fn others_mass(prefs: &[f64], j: usize) -> f64 {
    prefs.iter().enumerate().filter(|&(v, _)| v != j).map(|(_, &p)| p).sum()
}

fn available_mass(stock: &[bool], prefs: &[f64]) -> f64 {
    stock.iter().zip(prefs).filter(|(&s, _)| s).map(|(_, &p)| p).sum()
}

pub(crate) fn exogenous_unchecked(stock: &[bool], prefs: &[f64], tau: f64) -> Result<ChoiceProbs> {
    let n = prefs.len();
    let Some(pressure) = substitution_pressure(stock, prefs)? else {
        return Ok(ChoiceProbs { items: vec![0.0; n], no_purchase: 1.0 });
    };
    let boost = 1.0 + tau * pressure;
    let items: Vec<f64> = stock.iter().zip(prefs).map(|(&s, &p)| if s { p * boost } else { 0.0 }).collect();
    let no_purchase = if stock.iter().all(|&s| s) { 0.0 } else { (1.0 - items.iter().sum::<f64>()).max(0.0) };
    Ok(ChoiceProbs { items, no_purchase })
}

/// `(∂f_i/∂φ, ∂f_i/∂τ)` for the exogenous model. Valid for any nonnegative
/// `prefs`; the second-choice normalizer is the literal `Σ_{v≠j} φ_v`.
pub fn exogenous_gradient(stock: &[bool], prefs: &[f64], tau: f64, item: usize) -> Result<(Vec<f64>, f64)> {
    check_stock_len(stock, prefs.len())?;
    let n = prefs.len();
    let Some(pressure) = substitution_pressure(stock, prefs)? else {
        return Ok((vec![0.0; n], 0.0));
    };
    if !stock[item] {
        return Ok((vec![0.0; n], 0.0));
    }
    let f_i = prefs[item];
    let rests: Vec<f64> = (0..n).map(|j| others_mass(prefs, j)).collect();
    let d_prefs = (0..n)
        .map(|v| {
            let mut d_pressure = if stock[v] { 0.0 } else { 1.0 / rests[v] };
            for j in 0..n {
                if j != v && !stock[j] && prefs[j] > 0.0 {
                    d_pressure -= prefs[j] / (rests[j] * rests[j]);
                }
            }
            let direct = if v == item { 1.0 + tau * pressure } else { 0.0 };
            direct + f_i * tau * d_pressure
        })
        .collect();
    Ok((d_prefs, f_i * pressure))
}

pub fn ranking_probs(stock: &[bool], ranking: &[usize]) -> Result<ChoiceProbs> {
    check_ranking(ranking, stock.len())?;
    Ok(ranking_unchecked(stock, ranking))
}

fn check_ranking(ranking: &[usize], n: usize) -> Result<()> {
    if ranking.is_empty() {
        return Err(Error::InvalidParams("empty ranking".into()));
    }
    for (k, &item) in ranking.iter().enumerate() {
        if item >= n || ranking[..k].contains(&item) {
            return Err(Error::InvalidParams(format!("ranking {ranking:?} is not a set of distinct items < {n}")));
        }
    }
    Ok(())
}

fn ranking_unchecked(stock: &[bool], ranking: &[usize]) -> ChoiceProbs {
    let mut items = vec![0.0; stock.len()];
    match ranking.iter().find(|&&i| stock[i]) {
        Some(&i) => {
            items[i] = 1.0;
            ChoiceProbs { items, no_purchase: 0.0 }
        }
        None => ChoiceProbs { items, no_purchase: 1.0 },
    }
}

/// All rankings of length `1..=max_len` over `n` items, shortest first, each
/// length in lexicographic order. There are `Σ_d n!/(n-d)!` of them.
pub fn enumerate_rankings(n: usize, max_len: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, len: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == len {
            out.push(prefix.clone());
            return;
        }
        for i in 0..n {
            if !prefix.contains(&i) {
                prefix.push(i);
                extend(prefix, len, n, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    for len in 1..=max_len.min(n) {
        extend(&mut Vec::with_capacity(len), len, n, &mut out);
    }
    out
}

impl Segment {
    pub fn family(&self) -> ChoiceFamily {
        match self {
            Segment::Mnl { .. } => ChoiceFamily::Mnl,
            Segment::Exogenous { .. } => ChoiceFamily::Exogenous,
            Segment::Ranking(_) => ChoiceFamily::Nonparametric,
        }
    }

    /// Number of inferred continuous parameters. The MNL no-purchase weight
    /// and the ranking orders are fixed.
    pub fn free_param_count(&self, n: usize) -> usize {
        match self {
            Segment::Mnl { .. } => n,
            Segment::Exogenous { .. } => n + 1,
            Segment::Ranking(_) => 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Segment::Mnl { prefs, no_purchase } => {
                check_simplex(prefs)?;
                if prefs.len() != n {
                    return Err(Error::Dimension(format!("{} preferences for {n} items", prefs.len())));
                }
                if !(*no_purchase >= 0.0 && no_purchase.is_finite()) {
                    return Err(Error::InvalidParams(format!("no-purchase weight {no_purchase} must be nonnegative")));
                }
                Ok(())
            }
            Segment::Exogenous { prefs, substitution } => {
                check_simplex(prefs)?;
                if prefs.len() != n {
                    return Err(Error::Dimension(format!("{} preferences for {n} items", prefs.len())));
                }
                if n >= 2 && prefs.iter().any(|&p| p >= 1.0) {
                    return Err(Error::DegenerateChoice(
                        "a first-choice preference of exactly 1 leaves no second choice".into(),
                    ));
                }
                check_unit(*substitution, "substitution probability")
            }
            Segment::Ranking(r) => check_ranking(r, n),
        }
    }

    pub fn probs(&self, stock: &[bool]) -> Result<ChoiceProbs> {
        match self {
            Segment::Mnl { prefs, no_purchase } => mnl_unchecked(stock, prefs, *no_purchase),
            Segment::Exogenous { prefs, substitution } => exogenous_unchecked(stock, prefs, *substitution),
            Segment::Ranking(r) => Ok(ranking_unchecked(stock, r)),
        }
    }

    /// Adds `Σ_i weights[i] · ∂f_i/∂ψ` into `out`, where `ψ` are the segment's
    /// free parameters (`φ`, then `τ` for the exogenous model).
    pub(crate) fn add_weighted_gradient(&self, stock: &[bool], weights: &[f64], out: &mut [f64]) -> Result<()> {
        let n = stock.len();
        match self {
            Segment::Ranking(_) => {}
            Segment::Mnl { prefs, no_purchase } => {
                for (i, &w) in weights.iter().enumerate() {
                    if w == 0.0 || !stock[i] {
                        continue;
                    }
                    let (dp, _) = mnl_gradient(stock, prefs, *no_purchase, i)?;
                    for v in 0..n {
                        out[v] += w * dp[v];
                    }
                }
            }
            Segment::Exogenous { prefs, substitution } => {
                for (i, &w) in weights.iter().enumerate() {
                    if w == 0.0 || !stock[i] {
                        continue;
                    }
                    let (dp, dt) = exogenous_gradient(stock, prefs, *substitution, i)?;
                    for v in 0..n {
                        out[v] += w * dp[v];
                    }
                    out[n] += w * dt;
                }
            }
        }
        Ok(())
    }
}

/// `π_i(s)`: segment probabilities averaged with weights `θ`.
pub fn mixture_probs(stock: &[bool], weights: &[f64], segments: &[Segment]) -> Result<ChoiceProbs> {
    if weights.len() != segments.len() {
        return Err(Error::Dimension(format!("{} weights for {} segments", weights.len(), segments.len())));
    }
    let n = stock.len();
    let mut items = vec![0.0; n];
    let mut no_purchase = 0.0;
    for (&w, seg) in weights.iter().zip(segments) {
        if w == 0.0 {
            continue;
        }
        let p = seg.probs(stock)?;
        for (acc, v) in items.iter_mut().zip(&p.items) {
            *acc += w * v;
        }
        no_purchase += w * p.no_purchase;
    }
    Ok(ChoiceProbs { items, no_purchase })
}

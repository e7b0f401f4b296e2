//! The homogeneous-rate, single-segment MNL baseline: MAP fits for each
//! fixed no-purchase weight `τ` on a grid, scored by absolute deviation of
//! predicted from actual purchase counts on holdout periods.

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{Hyperparams, PreparedData};
use crate::model::{ChoiceSpec, ModelParams, ModelSpec};
use crate::predictive::{conditions_from_data, expected_counts};
use crate::rate::{RateKind, RateModel};
use crate::sampler::{chain_rng, map_from_prior, MapOptions, MapResult};

/// `τ ∈ {0.1, 0.2, ..., 0.9}`.
pub fn default_tau_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub tau: f64,
    pub params: ModelParams,
    pub map: MapResult,
    /// Holdout absolute deviation; see [`holdout_deviation`].
    pub deviation: f64,
}

/// Sum over stores, observed stock conditions and items of
/// `|predicted − actual|` purchases on `holdout`, where `predict(store,
/// condition)` gives the expected count per item.
pub fn holdout_deviation<F>(holdout: &Dataset, mut predict: F) -> Result<f64>
where
    F: FnMut(usize, &crate::predictive::StockCondition) -> Result<Vec<f64>>,
{
    let mut total = 0.0;
    for store in 0..holdout.store_count() {
        for (cond, actual) in conditions_from_data(holdout, store)? {
            let predicted = predict(store, &cond)?;
            total += predicted.iter().zip(&actual).map(|(p, &a)| (p - a as f64).abs()).sum::<f64>();
        }
    }
    Ok(total)
}

/// MAP fit of the baseline with no-purchase weight `tau`, best of
/// `restarts` prior-drawn starting points.
pub fn fit_baseline(train: &Dataset, tau: f64, seed: u64, restarts: usize) -> Result<(ModelParams, MapResult)> {
    let spec = ModelSpec::new(
        RateModel::homogeneous(),
        ChoiceSpec::Mnl { segments: 1, no_purchase: tau },
        train.item_count(),
        train.store_count(),
    )?;
    let hyper = Hyperparams::for_data(RateKind::Homogeneous, train);
    let prepared = PreparedData::new(train)?;
    let options = MapOptions { restarts, ..MapOptions::default() };
    let map = map_from_prior(&spec, &prepared, &hyper, &options, &mut chain_rng(seed, 0))?;
    Ok((spec.untransform(&map.z)?, map))
}

/// Fits the baseline for every `τ` and returns the fits with the index of
/// the one with the smallest holdout deviation.
pub fn baseline_over_grid(
    train: &Dataset,
    holdout: &Dataset,
    taus: &[f64],
    seed: u64,
) -> Result<(usize, Vec<BaselineFit>)> {
    if taus.is_empty() {
        return Err(Error::Config("empty tau grid".into()));
    }
    let mut fits = Vec::with_capacity(taus.len());
    for &tau in taus {
        let (params, map) = fit_baseline(train, tau, seed, 3)?;
        let deviation = holdout_deviation(holdout, |store, cond| expected_counts(&params, cond, store))?;
        fits.push(BaselineFit { tau, params, map, deviation });
    }
    let best = fits
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.deviation.total_cmp(&b.1.deviation))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    Ok((best, fits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{StoreData, TimePeriod};

    fn toy() -> Dataset {
        // Item 0 sells steadily; item 1 sells out early in every period.
        let period = |shift: f64| {
            TimePeriod::new(
                vec![(0..20).map(|k| shift + k as f64 * 0.45).collect(), vec![0.1 + shift, 0.3 + shift]],
                vec![30, 2],
            )
        };
        Dataset {
            horizon: 10.0,
            item_names: vec!["a".into(), "b".into()],
            stores: vec![StoreData {
                store_id: "1".into(),
                periods: (0..6).map(|l| period(0.01 * l as f64)).collect(),
            }],
        }
    }

    #[test]
    fn grid_is_tenths() {
        assert_eq!(default_tau_grid().len(), 9);
        assert!((default_tau_grid()[3] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn deviation_is_zero_for_exact_predictions() {
        let data = toy();
        let d = holdout_deviation(&data, |store, cond| {
            let all = conditions_from_data(&data, store)?;
            Ok(all.iter().find(|(c, _)| c == cond).unwrap().1.iter().map(|&a| a as f64).collect())
        })
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn grid_fit_picks_a_finite_best() {
        let (train, holdout) = toy().split(0.5);
        let (best, fits) = baseline_over_grid(&train, &holdout, &[0.2, 0.5, 0.8], 3).unwrap();
        assert_eq!(fits.len(), 3);
        assert!(fits.iter().all(|f| f.deviation.is_finite()));
        assert!(fits.iter().all(|f| fits[best].deviation <= f.deviation));
    }
}

//! Analytic log-likelihood gradients against central differences of the
//! naive per-purchase log-likelihood.

mod common;

use common::{gradient_discrepancy, random_instance, rng};
use stockout::likelihood::{grad_log_likelihood, log_likelihood, PeriodSelection, PreparedData};
use stockout::{ChoiceFamily, RateKind};

fn check(kind: RateKind, family: ChoiceFamily, seed: u64, cases: usize) {
    let mut r = rng(seed);
    for case in 0..cases {
        let inst = random_instance(&mut r, kind, family);
        let err = gradient_discrepancy(&inst.params, &inst.data);
        assert!(err < 1e-5, "{kind:?}/{family:?} case {case}: discrepancy {err:e}");
    }
}

#[test]
fn mnl_gradients() {
    check(RateKind::Homogeneous, ChoiceFamily::Mnl, 1, 30);
    check(RateKind::Hill, ChoiceFamily::Mnl, 2, 30);
}

#[test]
fn exogenous_gradients() {
    check(RateKind::Homogeneous, ChoiceFamily::Exogenous, 3, 30);
    check(RateKind::HillPlusPeaks, ChoiceFamily::Exogenous, 4, 30);
}

#[test]
fn ranking_mixture_gradients() {
    check(RateKind::Hill, ChoiceFamily::Nonparametric, 5, 30);
    check(RateKind::HillPlusPeaks, ChoiceFamily::Nonparametric, 6, 30);
}

#[test]
fn fast_path_value_matches_naive_likelihood() {
    let mut r = rng(7);
    for family in [ChoiceFamily::Mnl, ChoiceFamily::Exogenous, ChoiceFamily::Nonparametric] {
        for kind in [RateKind::Homogeneous, RateKind::Hill, RateKind::HillPlusPeaks] {
            for _ in 0..10 {
                let inst = random_instance(&mut r, kind, family);
                let naive = log_likelihood(&inst.params, &inst.data).unwrap();
                let prepared = PreparedData::new(&inst.data).unwrap();
                let fast = grad_log_likelihood(&inst.params, &prepared, PeriodSelection::All).unwrap().value;
                assert!((naive - fast).abs() <= 1e-9 * naive.abs().max(1.0), "{naive} vs {fast}");
            }
        }
    }
}

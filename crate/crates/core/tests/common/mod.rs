//! Random instances and independent oracles shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use stockout::choice::{enumerate_rankings, Segment};
use stockout::likelihood::{latent_objective, log_likelihood, PeriodSelection, PreparedData};
use stockout::simulator::simulate_period;
use stockout::{ChoiceFamily, Dataset, ModelParams, ModelSpec, PeakTemplate, RateKind, RateModel, StoreData};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from the simplex, kept away from the boundary.
pub fn simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..k)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e + 0.05
        })
        .collect();
    let total: f64 = g.iter().sum();
    g.iter().map(|x| x / total).collect()
}

pub fn rate_model<R: Rng>(rng: &mut R, kind: RateKind, horizon: f64) -> RateModel {
    match kind {
        RateKind::Homogeneous => RateModel::homogeneous(),
        RateKind::Hill => RateModel::hill(),
        RateKind::HillPlusPeaks => {
            let p = rng.random_range(1..=2);
            let centers = (0..p).map(|_| rng.random_range(0.1..0.9) * horizon).collect();
            let widths = (0..p).map(|_| rng.random_range(0.03..0.2) * horizon).collect();
            RateModel::hill_plus_peaks(PeakTemplate::new(centers, widths, horizon).unwrap())
        }
    }
}

/// Rate parameters giving roughly `expected` arrivals per period.
pub fn rate_params<R: Rng>(rng: &mut R, kind: RateKind, horizon: f64, expected: f64) -> Vec<f64> {
    match kind {
        RateKind::Homogeneous => vec![expected / horizon * rng.random_range(0.5..1.5)],
        RateKind::Hill | RateKind::HillPlusPeaks => {
            let mut eta = vec![
                expected * rng.random_range(0.8..2.0),
                rng.random_range(1.2..4.0),
                horizon * rng.random_range(0.2..0.9),
            ];
            if kind == RateKind::HillPlusPeaks {
                eta.push(expected * rng.random_range(0.1..0.5));
            }
            eta
        }
    }
}

pub fn segments<R: Rng>(rng: &mut R, family: ChoiceFamily, n: usize, k: usize) -> Vec<Segment> {
    match family {
        ChoiceFamily::Mnl => {
            let tau = rng.random_range(0.1..2.0);
            (0..k).map(|_| Segment::Mnl { prefs: simplex(rng, n), no_purchase: tau }).collect()
        }
        ChoiceFamily::Exogenous => (0..k)
            .map(|_| Segment::Exogenous { prefs: simplex(rng, n), substitution: rng.random_range(0.05..0.95) })
            .collect(),
        ChoiceFamily::Nonparametric => enumerate_rankings(n, 2).into_iter().map(Segment::Ranking).collect(),
    }
}

/// A random model and a small dataset simulated from an independent
/// parameter draw of the same structure, so every purchase has positive
/// probability under both.
pub struct Instance {
    pub params: ModelParams,
    pub truth: ModelParams,
    pub data: Dataset,
}

pub fn random_instance<R: Rng>(rng: &mut R, kind: RateKind, family: ChoiceFamily) -> Instance {
    let n = rng.random_range(2..=3);
    let stores = rng.random_range(1..=2);
    let periods = rng.random_range(2..=4);
    let horizon = rng.random_range(5.0..20.0);
    let k = match family {
        ChoiceFamily::Nonparametric => enumerate_rankings(n, 2).len(),
        _ => rng.random_range(1..=2),
    };
    let rate = rate_model(rng, kind, horizon);
    let segs = segments(rng, family, n, k);
    let draw = |rng: &mut R, segs: Vec<Segment>| ModelParams {
        rate: rate.clone(),
        eta: (0..stores).map(|_| rate_params(rng, kind, horizon, 12.0)).collect(),
        weights: (0..stores).map(|_| simplex(rng, k)).collect(),
        segments: segs,
    };
    let truth = draw(rng, segs.clone());
    // Keep fixed structure (rankings, MNL no-purchase weight) shared.
    let other = match family {
        ChoiceFamily::Nonparametric => segs,
        ChoiceFamily::Mnl => {
            let tau = match &segs[0] {
                Segment::Mnl { no_purchase, .. } => *no_purchase,
                _ => unreachable!(),
            };
            (0..k).map(|_| Segment::Mnl { prefs: simplex(rng, n), no_purchase: tau }).collect()
        }
        ChoiceFamily::Exogenous => segments(rng, family, n, k),
    };
    let params = draw(rng, other);
    let data = Dataset {
        horizon,
        item_names: (0..n).map(|i| format!("item{i}")).collect(),
        stores: (0..stores)
            .map(|s| StoreData {
                store_id: format!("s{s}"),
                periods: (0..periods)
                    .map(|_| {
                        let stock: Vec<u32> = (0..n).map(|_| rng.random_range(0..6)).collect();
                        simulate_period(&truth, s, &stock, horizon, rng).unwrap().period
                    })
                    .collect(),
            })
            .collect(),
    };
    Instance { params, truth, data }
}

/// Worst scaled discrepancy between the fast-path latent gradient and
/// central differences of the naive per-purchase log-likelihood, taken in
/// expanded-mean coordinates. Each coordinate's error is divided by
/// `max(|analytic|, |fd|, 1)`.
pub fn gradient_discrepancy(params: &ModelParams, data: &Dataset) -> f64 {
    let spec: ModelSpec = params.spec(data.item_count());
    let z = spec.transform(params).unwrap();
    let prepared = PreparedData::new(data).unwrap();
    let analytic = latent_objective(&spec, &z, &prepared, PeriodSelection::All).unwrap().gradient;
    let naive = |z: &[f64]| log_likelihood(&spec.untransform(z).unwrap(), data).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..z.len() {
        let h = 1e-5 * z[j].abs().max(1e-3);
        let mut up = z.clone();
        let mut dn = z.clone();
        up[j] += h;
        dn[j] -= h;
        let fd = (naive(&up) - naive(&dn)) / (2.0 * h);
        let err = (analytic[j] - fd).abs() / analytic[j].abs().max(fd.abs()).max(1.0);
        worst = worst.max(err);
    }
    worst
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance
/// `tol`. Knows nothing about where `f` jumps.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 60)
}

/// [`adaptive_simpson`] over `panels` equal panels, so that a short
/// in-stock stretch cannot hide between the first few samples.
pub fn paneled_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|k| adaptive_simpson(f, a + k as f64 * h, a + (k + 1) as f64 * h, tol / panels as f64)).sum()
}

/// Relative difference `|a - b| / max(|a|, |b|)`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Monte Carlo purchase frequencies of the two-stage exogenous narrative:
/// a first choice drawn from `prefs`; if it is out of stock, with
/// probability `tau` a second choice drawn from `prefs` without the first;
/// buy the second choice if it is in stock, else leave.
pub fn exogenous_narrative<R: Rng>(rng: &mut R, prefs: &[f64], tau: f64, stock: &[bool], draws: usize) -> Vec<u64> {
    let n = prefs.len();
    let mut counts = vec![0u64; n];
    let pick = |rng: &mut R, skip: Option<usize>| -> usize {
        let total: f64 = prefs.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, p)| p).sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = 0;
        for (i, &p) in prefs.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            last = i;
            if u < p {
                return i;
            }
            u -= p;
        }
        last
    };
    for _ in 0..draws {
        let first = pick(rng, None);
        if stock[first] {
            counts[first] += 1;
        } else if n > 1 && rng.random::<f64>() < tau {
            let second = pick(rng, Some(first));
            if stock[second] {
                counts[second] += 1;
            }
        }
    }
    counts
}

/// Exact purchase probabilities of the same narrative, by enumerating the
/// first and second choices.
pub fn exogenous_enumerated(prefs: &[f64], tau: f64, stock: &[bool]) -> Vec<f64> {
    let n = prefs.len();
    let mut out = vec![0.0; n];
    for first in 0..n {
        if stock[first] {
            out[first] += prefs[first];
            continue;
        }
        for second in (0..n).filter(|&s| s != first && stock[s]) {
            out[second] += prefs[first] * tau * prefs[second] / (1.0 - prefs[first]);
        }
    }
    out
}

/// Every size-`k` subset of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

//! Stochastic-gradient Riemannian Langevin dynamics in expanded-mean
//! coordinates.
//!
//! Each iteration draws a fresh minibatch of periods per store, evaluates the
//! rescaled log-posterior gradient at the latent state `z`, and applies
//!
//! ```text
//! z ← z + ε/2 (z ⊙ ∇ log p(z) + 1) + sqrt(ε z) ⊙ ξ,   ξ ~ N(0, I)
//! ```
//!
//! Negative expanded-mean proposals are mirrored about zero; rate parameters
//! are reflected at the edges of their prior box. Chains start from a local
//! MAP estimate found from a prior draw.

mod diagnostics;
mod map;

pub use diagnostics::gelman_rubin;
pub use map::{map_estimate, map_objective, MapOptions, MapResult};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{
    latent_objective, log_likelihood, log_prior_and_grad, Hyperparams, PeriodSelection, PreparedData,
};
use crate::model::{ChoiceSpec, ModelParams, ModelSpec};

const MAP_INIT_ATTEMPTS: usize = 20;

/// Step-size schedule `ε_w = a (1 + w/b)^(-c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.c > 0.0) || ![self.a, self.b, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("step-size constants must be positive, got {self:?}")));
        }
        Ok(())
    }

    /// A schedule whose initial step is `0.5 / m`, where `m` is the largest
    /// per-store purchase count. Drift terms scale with purchase counts, so
    /// this keeps the first steps stable across data sizes.
    pub fn scaled_to(data: &Dataset) -> Self {
        let m = data
            .stores
            .iter()
            .map(|s| s.periods.iter().map(|p| p.total_purchases()).sum::<usize>())
            .max()
            .unwrap_or(0)
            .max(1);
        Self { a: 0.5 / m as f64, b: 1000.0, c: 0.51 }
    }

    /// Candidate schedules for holdout tuning.
    pub fn default_grid() -> Vec<Schedule> {
        let mut grid = Vec::new();
        for a in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
            for b in [1e2, 1e3, 1e4] {
                for c in [0.51, 0.6, 0.8] {
                    grid.push(Schedule { a, b, c });
                }
            }
        }
        grid
    }
}

/// `a (1 + w/b)^(-c)` for iteration `w`.
pub fn step_size(schedule: &Schedule, w: usize) -> f64 {
    schedule.a * (1.0 + w as f64 / schedule.b).powf(-schedule.c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub schedule: Schedule,
    /// Periods per store in each stochastic gradient; clamped to the
    /// store's period count.
    pub minibatch: usize,
    /// Iterations per chain, burn-in included.
    pub iterations: usize,
    pub chains: usize,
    /// Leading fraction of each chain discarded.
    pub burn_in: f64,
    /// Keep every `thin`-th post-burn-in iteration.
    pub thin: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
    pub map: MapOptions,
    /// Align exchangeable segment labels across chains before merging.
    pub align_labels: bool,
}

impl SamplerConfig {
    pub fn new(schedule: Schedule, iterations: usize, seed: u64, hyper: Hyperparams) -> Self {
        Self {
            schedule,
            minibatch: 3,
            iterations,
            chains: 3,
            burn_in: 0.5,
            thin: 1,
            seed,
            hyper,
            map: MapOptions::default(),
            align_labels: true,
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        self.schedule.validate()?;
        self.hyper.validate(spec)?;
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch size must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be positive".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("need at least one chain".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Config(format!("burn-in fraction {} outside [0, 1)", self.burn_in)));
        }
        if self.kept_per_chain() == 0 {
            return Err(Error::Config("no iterations remain after burn-in".into()));
        }
        Ok(())
    }

    pub fn burn_in_iterations(&self) -> usize {
        (self.iterations as f64 * self.burn_in).floor() as usize
    }

    /// Iterations whose state is kept.
    pub fn kept_iterations(&self) -> impl Iterator<Item = usize> {
        (self.burn_in_iterations()..self.iterations).step_by(self.thin.max(1))
    }

    pub fn kept_per_chain(&self) -> usize {
        self.kept_iterations().count()
    }
}

/// One update with explicit standard-normal noise `xi`.
///
/// Coordinates below `spec.theta_offset(0)` are rate parameters and are
/// reflected into their prior box; the rest are mirrored about zero.
/// Non-finite gradients drop the drift term for this step.
pub fn sgrld_update(spec: &ModelSpec, hyper: &Hyperparams, z: &[f64], grad: &[f64], eps: f64, xi: &[f64]) -> Vec<f64> {
    let drift_ok = grad.iter().all(|g| g.is_finite());
    let d = spec.rate_dim();
    z.iter()
        .enumerate()
        .map(|(j, &zj)| {
            let drift = if drift_ok { zj * grad[j] + 1.0 } else { 1.0 };
            let proposal = zj + 0.5 * eps * drift + (eps * zj).sqrt() * xi[j];
            if spec.is_rate_coordinate(j) {
                let (lo, hi) = hyper.eta_bounds[j % d];
                positive(reflect(proposal, lo, hi))
            } else {
                positive(proposal.abs())
            }
        })
        .collect()
}

/// One update drawing its noise from `rng`.
pub fn sgrld_step<R: Rng + ?Sized>(
    spec: &ModelSpec,
    hyper: &Hyperparams,
    z: &[f64],
    grad: &[f64],
    eps: f64,
    rng: &mut R,
) -> Vec<f64> {
    let xi: Vec<f64> = (0..z.len()).map(|_| rng.sample(StandardNormal)).collect();
    sgrld_update(spec, hyper, z, grad, eps, &xi)
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    if !x.is_finite() {
        return 0.5 * (lo + hi);
    }
    let width = hi - lo;
    for _ in 0..64 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
    lo + (x - lo).rem_euclid(width)
}

// The metric degenerates at exactly zero; nudge to the smallest positive.
fn positive(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        f64::MIN_POSITIVE
    }
}

/// A latent state drawn from the prior: rate parameters uniform on their
/// box, expanded-mean coordinates Gamma(concentration, 1).
pub fn sample_prior<R: Rng + ?Sized>(spec: &ModelSpec, hyper: &Hyperparams, rng: &mut R) -> Result<Vec<f64>> {
    hyper.validate(spec)?;
    let d = spec.rate_dim();
    hyper
        .latent_concentrations(spec)
        .into_iter()
        .enumerate()
        .map(|(j, conc)| match conc {
            None => {
                let (lo, hi) = hyper.eta_bounds[j % d];
                Ok(positive(rng.random_range(lo..hi)))
            }
            Some(a) => {
                let g = Gamma::new(a, 1.0).map_err(|e| Error::Config(e.to_string()))?;
                Ok(positive(g.sample(rng)))
            }
        })
        .collect()
}

/// Log posterior (minibatch log-likelihood plus latent prior) and its
/// gradient in the latent layout.
pub fn log_posterior_and_grad(
    spec: &ModelSpec,
    z: &[f64],
    data: &PreparedData,
    hyper: &Hyperparams,
    periods: PeriodSelection<'_>,
) -> Result<(f64, Vec<f64>)> {
    let (lp, lp_grad) = log_prior_and_grad(spec, z, hyper);
    if !lp.is_finite() {
        return Ok((f64::NEG_INFINITY, vec![f64::NAN; z.len()]));
    }
    let ll = latent_objective(spec, z, data, periods)?;
    let grad = ll.gradient.iter().zip(&lp_grad).map(|(a, b)| a + b).collect();
    Ok((ll.value + lp, grad))
}

/// Draws from all chains in the natural layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub spec: ModelSpec,
    /// Column names of the natural layout.
    pub names: Vec<String>,
    /// `chains[c][draw]` is a natural-layout vector.
    pub chains: Vec<Vec<Vec<f64>>>,
    /// Iteration index of each kept draw (shared by all chains).
    pub iterations: Vec<usize>,
    /// `R̂` per natural coordinate; `None` when undefined (one chain or
    /// constant coordinate).
    pub rhat: Vec<Option<f64>>,
    /// Steps whose gradient was not finite, summed over chains.
    pub nonfinite_steps: usize,
    /// Log posterior at each chain's MAP starting point.
    pub start_log_posterior: Vec<f64>,
}

impl PosteriorSamples {
    pub fn new(
        spec: ModelSpec,
        names: Vec<String>,
        chains: Vec<Vec<Vec<f64>>>,
        iterations: Vec<usize>,
    ) -> Result<Self> {
        let len = spec.natural_len();
        if names.len() != len {
            return Err(Error::Dimension(format!("{} names for {len} parameters", names.len())));
        }
        if chains.iter().flatten().any(|d| d.len() != len) {
            return Err(Error::Dimension(format!("draws must have {len} entries")));
        }
        let rhat = compute_rhat(&chains, len);
        Ok(Self { spec, names, chains, iterations, rhat, nonfinite_steps: 0, start_log_posterior: Vec::new() })
    }

    pub fn draw_count(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// Whether every defined `R̂` is at most 1.1.
    pub fn converged(&self) -> bool {
        self.rhat.iter().flatten().all(|&r| r <= 1.1)
    }

    /// Natural-layout vectors of all chains, merged in chain order.
    pub fn merged(&self) -> impl Iterator<Item = &Vec<f64>> + '_ {
        self.chains.iter().flatten()
    }

    /// Parameter sets of all chains, merged in chain order.
    pub fn params(&self) -> impl Iterator<Item = Result<ModelParams>> + '_ {
        self.merged().map(|v| self.spec.params_from_natural(v))
    }

    /// Posterior mean of every natural coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.spec.natural_len()];
        for d in self.merged() {
            for (a, v) in acc.iter_mut().zip(d) {
                *a += v;
            }
        }
        let n = self.draw_count().max(1) as f64;
        acc.iter().map(|a| a / n).collect()
    }

    /// All merged draws of coordinate `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.merged().map(|d| d[j]).collect()
    }
}

fn compute_rhat(chains: &[Vec<Vec<f64>>], len: usize) -> Vec<Option<f64>> {
    (0..len)
        .map(|j| {
            let series: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
            gelman_rubin(&series).ok()
        })
        .collect()
}

/// Segment labels of MNL and exogenous mixtures are exchangeable, so chains
/// started from different optima can settle on permuted labelings. Permutes
/// each chain's segments to best match chain 0's posterior mean (squared
/// distance over θ, φ and τ). Rankings are labeled by construction and are
/// left alone, as are mixtures with more than `MAX_ALIGN_SEGMENTS` segments.
pub fn align_segment_labels(spec: &ModelSpec, chains: &mut [Vec<Vec<f64>>]) {
    let k = spec.segments();
    if !(2..=MAX_ALIGN_SEGMENTS).contains(&k)
        || chains.len() < 2
        || matches!(spec.choice, ChoiceSpec::Nonparametric { .. })
    {
        return;
    }
    let chain_mean = |c: &[Vec<f64>]| -> Vec<f64> {
        let mut m = vec![0.0; spec.natural_len()];
        for d in c {
            for (a, v) in m.iter_mut().zip(d) {
                *a += v;
            }
        }
        m.iter().map(|a| a / c.len().max(1) as f64).collect()
    };
    let pivot = chain_mean(&chains[0]);
    let perms = permutations(k);
    for chain in chains.iter_mut().skip(1) {
        let mean = chain_mean(chain);
        let best = perms
            .iter()
            .min_by(|a, b| {
                let da = sq_dist(&permute_segments(spec, &mean, a), &pivot);
                let db = sq_dist(&permute_segments(spec, &mean, b), &pivot);
                da.total_cmp(&db)
            })
            .expect("at least one permutation");
        if best.iter().enumerate().any(|(i, &p)| i != p) {
            for draw in chain.iter_mut() {
                *draw = permute_segments(spec, draw, best);
            }
        }
    }
}

const MAX_ALIGN_SEGMENTS: usize = 6;

// New segment `j` takes old segment `perm[j]`.
fn permute_segments(spec: &ModelSpec, v: &[f64], perm: &[usize]) -> Vec<f64> {
    let mut out = v.to_vec();
    let k = spec.segments();
    for s in 0..spec.stores {
        let o = spec.theta_offset(s);
        for j in 0..k {
            out[o + j] = v[o + perm[j]];
        }
    }
    let width = spec.segment_offset(1) - spec.segment_offset(0);
    for j in 0..k {
        let (dst, src) = (spec.segment_offset(j), spec.segment_offset(perm[j]));
        out[dst..dst + width].copy_from_slice(&v[src..src + width]);
    }
    out
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Result of running a single chain.
#[derive(Debug, Clone)]
struct ChainOutput {
    draws: Vec<Vec<f64>>,
    nonfinite: usize,
    start: f64,
}

/// Runs `config.chains` independent chains and merges their post-burn-in
/// draws. Chain `c` uses stream `c` of a ChaCha8 generator seeded with
/// `config.seed`, so results are bit-reproducible.
pub fn run_chains(spec: &ModelSpec, data: &Dataset, config: &SamplerConfig) -> Result<PosteriorSamples> {
    config.validate(spec)?;
    let prepared = PreparedData::new(data)?;
    check_structure(spec, &prepared)?;
    let outputs: Vec<Result<ChainOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| {
                let prepared = &prepared;
                scope.spawn(move || run_chain(spec, prepared, config, c as u64))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let mut chains = Vec::with_capacity(config.chains);
    let mut nonfinite = 0;
    let mut starts = Vec::with_capacity(config.chains);
    for out in outputs {
        let out = out?;
        nonfinite += out.nonfinite;
        starts.push(out.start);
        chains.push(out.draws);
    }
    if config.align_labels {
        align_segment_labels(spec, &mut chains);
    }
    let store_ids: Vec<String> = data.stores.iter().map(|s| s.store_id.clone()).collect();
    let names = spec.natural_names(&store_ids, &data.item_names);
    let iterations = config.kept_iterations().collect();
    let mut samples = PosteriorSamples::new(spec.clone(), names, chains, iterations)?;
    samples.nonfinite_steps = nonfinite;
    samples.start_log_posterior = starts;
    Ok(samples)
}

fn check_structure(spec: &ModelSpec, data: &PreparedData) -> Result<()> {
    if spec.items != data.item_count() || spec.stores != data.store_count() {
        return Err(Error::Dimension(format!(
            "model has {} items and {} stores, data has {} and {}",
            spec.items,
            spec.stores,
            data.item_count(),
            data.store_count()
        )));
    }
    Ok(())
}

/// A chain's generator: stream `chain` of ChaCha8 seeded with `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Best of `options.restarts` MAP estimates, each started from a prior
/// draw. Draws where the posterior is not finite are redrawn.
pub fn map_from_prior<R: Rng + ?Sized>(
    spec: &ModelSpec,
    data: &PreparedData,
    hyper: &Hyperparams,
    options: &MapOptions,
    rng: &mut R,
) -> Result<MapResult> {
    let mut best: Option<MapResult> = None;
    let mut last_err = None;
    let mut attempts = 0;
    let mut found = 0;
    while found < options.restarts.max(1) && attempts < MAP_INIT_ATTEMPTS * options.restarts.max(1) {
        attempts += 1;
        let init = sample_prior(spec, hyper, rng)?;
        match map_estimate(spec, data, hyper, &init, options) {
            Ok(r) => {
                found += 1;
                if best.as_ref().is_none_or(|b| r.log_posterior > b.log_posterior) {
                    best = Some(r);
                }
            }
            Err(e @ Error::NonFinite(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::NonFinite("no finite initialization found".into())))
}

fn run_chain(spec: &ModelSpec, data: &PreparedData, config: &SamplerConfig, chain: u64) -> Result<ChainOutput> {
    let mut rng = chain_rng(config.seed, chain);
    let start = map_from_prior(spec, data, &config.hyper, &config.map, &mut rng)?;
    let mut z = start.z;
    let counts = data.period_counts();
    let burn = config.burn_in_iterations();
    let mut draws = Vec::with_capacity(config.kept_per_chain());
    let mut nonfinite = 0;
    let mut subsets: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for w in 0..config.iterations {
        for (subset, &l) in subsets.iter_mut().zip(&counts) {
            *subset = if config.minibatch >= l {
                (0..l).collect()
            } else {
                sample_indices(&mut rng, l, config.minibatch).into_vec()
            };
        }
        let (_, grad) = log_posterior_and_grad(spec, &z, data, &config.hyper, PeriodSelection::Subset(&subsets))?;
        if grad.iter().any(|g| !g.is_finite()) {
            nonfinite += 1;
        }
        z = sgrld_step(spec, &config.hyper, &z, &grad, step_size(&config.schedule, w), &mut rng);
        if w >= burn && (w - burn).is_multiple_of(config.thin) {
            draws.push(spec.natural_vector(&spec.untransform(&z)?));
        }
    }
    Ok(ChainOutput { draws, nonfinite, start: start.log_posterior })
}

/// `exp(-mean_draws loglik(holdout) / M)` with `M` the holdout purchase
/// count.
pub fn holdout_perplexity(samples: &PosteriorSamples, holdout: &Dataset) -> Result<f64> {
    let m = holdout.total_purchases();
    if m == 0 {
        return Err(Error::InvalidData("holdout has no purchases".into()));
    }
    if samples.draw_count() == 0 {
        return Err(Error::InvalidParams("no posterior draws".into()));
    }
    let mut total = 0.0;
    for params in samples.params() {
        total += log_likelihood(&params?, holdout)?;
    }
    let mean = total / samples.draw_count() as f64;
    Ok((-mean / m as f64).exp())
}

/// Runs the sampler for each schedule on `train` and scores it on
/// `holdout`. Returns every `(schedule, perplexity)` and the index of the
/// best one.
pub fn tune_schedule(
    spec: &ModelSpec,
    train: &Dataset,
    holdout: &Dataset,
    base: &SamplerConfig,
    grid: &[Schedule],
) -> Result<(usize, Vec<(Schedule, f64)>)> {
    if grid.is_empty() {
        return Err(Error::Config("empty step-size grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for schedule in grid {
        let config = SamplerConfig { schedule: *schedule, ..base.clone() };
        let samples = run_chains(spec, train, &config)?;
        let p = holdout_perplexity(&samples, holdout)?;
        scores.push((*schedule, if p.is_nan() { f64::INFINITY } else { p }));
    }
    let best = scores.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).unwrap_or(0);
    Ok((best, scores))
}

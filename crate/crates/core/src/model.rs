//! Model structure, parameter sets, and the two flat parameter layouts.
//!
//! **Natural layout** (probability space, used for likelihood gradients and
//! posterior sample columns):
//!
//! ```text
//! [η^1 .. η^S][θ^1 .. θ^S][ψ^1 .. ψ^K]
//! ```
//!
//! where each `η^σ` has the rate family's parameter count, each `θ^σ` has `K`
//! entries, and `ψ^k` holds the segment's free choice parameters: `φ^k` (n) for
//! MNL, `φ^k` (n) then `τ^k` (1) for the exogenous model, nothing for rankings.
//!
//! **Latent layout** (expanded-mean coordinates sampled by the Langevin chain):
//!
//! ```text
//! [η^1 .. η^S][θ̃^1 .. θ̃^S][φ̃^1, τ̃^1 .. φ̃^K, τ̃^K]
//! ```
//!
//! with `θ = θ̃ / Σ θ̃`, `φ = φ̃ / Σ φ̃` and `τ = τ̃_1 / (τ̃_1 + τ̃_2)`. The `τ̃`
//! pair is present only for the exogenous model.

use crate::choice::{ChoiceFamily, Segment};
use crate::error::{Error, Result};
use crate::rate::RateModel;

const SIMPLEX_TOL: f64 = 1e-9;

/// Choice-model structure: the family plus everything that is held fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum ChoiceSpec {
    /// `segments` MNL segments sharing a fixed no-purchase weight.
    Mnl {
        segments: usize,
        no_purchase: f64,
    },
    Exogenous {
        segments: usize,
    },
    /// One segment per fixed ranking.
    Nonparametric {
        rankings: Vec<Vec<usize>>,
    },
}

impl ChoiceSpec {
    pub fn family(&self) -> ChoiceFamily {
        match self {
            ChoiceSpec::Mnl { .. } => ChoiceFamily::Mnl,
            ChoiceSpec::Exogenous { .. } => ChoiceFamily::Exogenous,
            ChoiceSpec::Nonparametric { .. } => ChoiceFamily::Nonparametric,
        }
    }

    pub fn segment_count(&self) -> usize {
        match self {
            ChoiceSpec::Mnl { segments, .. } | ChoiceSpec::Exogenous { segments } => *segments,
            ChoiceSpec::Nonparametric { rankings } => rankings.len(),
        }
    }
}

/// Fixed structure of a model: dimensions, rate family and choice family.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub rate: RateModel,
    pub choice: ChoiceSpec,
    pub items: usize,
    pub stores: usize,
}

/// One full parameter set `(η, θ, φ, τ)` in probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub rate: RateModel,
    /// Rate parameters per store.
    pub eta: Vec<Vec<f64>>,
    /// Segment weights per store.
    pub weights: Vec<Vec<f64>>,
    /// Segments shared by all stores.
    pub segments: Vec<Segment>,
}

impl ModelParams {
    /// The structure these parameters instantiate over `items` items.
    pub fn spec(&self, items: usize) -> ModelSpec {
        let choice = match self.segments.first() {
            Some(Segment::Mnl { no_purchase, .. }) => {
                ChoiceSpec::Mnl { segments: self.segments.len(), no_purchase: *no_purchase }
            }
            Some(Segment::Exogenous { .. }) => ChoiceSpec::Exogenous { segments: self.segments.len() },
            _ => ChoiceSpec::Nonparametric {
                rankings: self
                    .segments
                    .iter()
                    .filter_map(|s| match s {
                        Segment::Ranking(r) => Some(r.clone()),
                        _ => None,
                    })
                    .collect(),
            },
        };
        ModelSpec { rate: self.rate.clone(), choice, items, stores: self.eta.len() }
    }

    pub fn validate(&self, items: usize) -> Result<()> {
        if let Some(first) = self.segments.first() {
            if self.segments.iter().any(|s| s.family() != first.family()) {
                return Err(Error::InvalidParams("all segments must share one choice family".into()));
            }
            if let Segment::Mnl { no_purchase, .. } = first {
                if self.segments.iter().any(|s| !matches!(s, Segment::Mnl { no_purchase: t, .. } if t == no_purchase)) {
                    return Err(Error::InvalidParams("mnl segments must share the no-purchase weight".into()));
                }
            }
        }
        if self.eta.len() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "{} rate blocks but {} weight blocks",
                self.eta.len(),
                self.weights.len()
            )));
        }
        for eta in &self.eta {
            self.rate.validate(eta)?;
        }
        let k = self.segments.len();
        for theta in &self.weights {
            if theta.len() != k {
                return Err(Error::Dimension(format!("{} segment weights for {k} segments", theta.len())));
            }
            if theta.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::InvalidParams(format!("segment weights {theta:?} must be nonnegative")));
            }
            let total: f64 = theta.iter().sum();
            if (total - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidParams(format!("segment weights sum to {total}")));
            }
        }
        for seg in &self.segments {
            seg.validate(items)?;
        }
        Ok(())
    }
}

impl ModelSpec {
    pub fn new(rate: RateModel, choice: ChoiceSpec, items: usize, stores: usize) -> Result<Self> {
        if items == 0 {
            return Err(Error::InvalidParams("model needs at least one item".into()));
        }
        if choice.segment_count() == 0 {
            return Err(Error::InvalidParams("model needs at least one segment".into()));
        }
        if let ChoiceSpec::Nonparametric { rankings } = &choice {
            for r in rankings {
                Segment::Ranking(r.clone()).validate(items)?;
            }
        }
        if let ChoiceSpec::Mnl { no_purchase, .. } = choice {
            if !(no_purchase >= 0.0 && no_purchase.is_finite()) {
                return Err(Error::InvalidParams(format!("mnl no-purchase weight {no_purchase}")));
            }
        }
        Ok(Self { rate, choice, items, stores })
    }

    pub fn segments(&self) -> usize {
        self.choice.segment_count()
    }

    pub fn rate_dim(&self) -> usize {
        self.rate.param_count()
    }

    fn segment_natural_dim(&self) -> usize {
        match self.choice {
            ChoiceSpec::Mnl { .. } => self.items,
            ChoiceSpec::Exogenous { .. } => self.items + 1,
            ChoiceSpec::Nonparametric { .. } => 0,
        }
    }

    fn segment_latent_dim(&self) -> usize {
        match self.choice {
            ChoiceSpec::Mnl { .. } => self.items,
            ChoiceSpec::Exogenous { .. } => self.items + 2,
            ChoiceSpec::Nonparametric { .. } => 0,
        }
    }

    pub fn eta_offset(&self, store: usize) -> usize {
        store * self.rate_dim()
    }

    pub fn theta_offset(&self, store: usize) -> usize {
        self.stores * self.rate_dim() + store * self.segments()
    }

    pub fn segment_offset(&self, k: usize) -> usize {
        self.theta_offset(self.stores) + k * self.segment_natural_dim()
    }

    pub fn latent_segment_offset(&self, k: usize) -> usize {
        self.theta_offset(self.stores) + k * self.segment_latent_dim()
    }

    pub fn natural_len(&self) -> usize {
        self.segment_offset(self.segments())
    }

    pub fn latent_len(&self) -> usize {
        self.latent_segment_offset(self.segments())
    }

    /// Whether latent coordinate `idx` is a rate parameter (as opposed to an
    /// expanded-mean coordinate).
    pub fn is_rate_coordinate(&self, idx: usize) -> bool {
        idx < self.theta_offset(0)
    }

    /// Column names for the natural layout.
    pub fn natural_names(&self, store_ids: &[String], item_names: &[String]) -> Vec<String> {
        let mut names = Vec::with_capacity(self.natural_len());
        for s in 0..self.stores {
            let sid = store_ids.get(s).cloned().unwrap_or_else(|| s.to_string());
            for p in self.rate.kind().param_names() {
                names.push(format!("eta.{sid}.{p}"));
            }
        }
        for s in 0..self.stores {
            let sid = store_ids.get(s).cloned().unwrap_or_else(|| s.to_string());
            for k in 0..self.segments() {
                names.push(format!("theta.{sid}.{k}"));
            }
        }
        for k in 0..self.segments() {
            if self.segment_natural_dim() > 0 {
                for i in 0..self.items {
                    let item = item_names.get(i).cloned().unwrap_or_else(|| i.to_string());
                    names.push(format!("phi.{k}.{item}"));
                }
            }
            if matches!(self.choice, ChoiceSpec::Exogenous { .. }) {
                names.push(format!("tau.{k}"));
            }
        }
        names
    }

    /// Flattens `params` into the natural layout.
    pub fn natural_vector(&self, params: &ModelParams) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.natural_len());
        for eta in &params.eta {
            v.extend_from_slice(eta);
        }
        for theta in &params.weights {
            v.extend_from_slice(theta);
        }
        for seg in &params.segments {
            match seg {
                Segment::Mnl { prefs, .. } => v.extend_from_slice(prefs),
                Segment::Exogenous { prefs, substitution } => {
                    v.extend_from_slice(prefs);
                    v.push(*substitution);
                }
                Segment::Ranking(_) => {}
            }
        }
        v
    }

    /// Inverse of [`ModelSpec::natural_vector`]; no simplex validation.
    pub fn params_from_natural(&self, v: &[f64]) -> Result<ModelParams> {
        if v.len() != self.natural_len() {
            return Err(Error::Dimension(format!(
                "natural vector has {} entries, expected {}",
                v.len(),
                self.natural_len()
            )));
        }
        let d = self.rate_dim();
        let k = self.segments();
        let eta = (0..self.stores).map(|s| v[self.eta_offset(s)..self.eta_offset(s) + d].to_vec()).collect();
        let weights = (0..self.stores).map(|s| v[self.theta_offset(s)..self.theta_offset(s) + k].to_vec()).collect();
        let n = self.items;
        let segments = (0..k)
            .map(|j| {
                let o = self.segment_offset(j);
                match &self.choice {
                    ChoiceSpec::Mnl { no_purchase, .. } => {
                        Segment::Mnl { prefs: v[o..o + n].to_vec(), no_purchase: *no_purchase }
                    }
                    ChoiceSpec::Exogenous { .. } => {
                        Segment::Exogenous { prefs: v[o..o + n].to_vec(), substitution: v[o + n] }
                    }
                    ChoiceSpec::Nonparametric { rankings } => Segment::Ranking(rankings[j].clone()),
                }
            })
            .collect();
        Ok(ModelParams { rate: self.rate.clone(), eta, weights, segments })
    }

    /// Maps an expanded-mean state to probability space.
    pub fn untransform(&self, z: &[f64]) -> Result<ModelParams> {
        if z.len() != self.latent_len() {
            return Err(Error::Dimension(format!(
                "latent vector has {} entries, expected {}",
                z.len(),
                self.latent_len()
            )));
        }
        let rate_end = self.theta_offset(0);
        if let Some(bad) = z[rate_end..].iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParams(format!("expanded-mean coordinate {bad} must be positive")));
        }
        let d = self.rate_dim();
        let k = self.segments();
        let n = self.items;
        let eta = (0..self.stores).map(|s| z[self.eta_offset(s)..self.eta_offset(s) + d].to_vec()).collect();
        let weights =
            (0..self.stores).map(|s| normalized(&z[self.theta_offset(s)..self.theta_offset(s) + k])).collect();
        let segments = (0..k)
            .map(|j| {
                let o = self.latent_segment_offset(j);
                match &self.choice {
                    ChoiceSpec::Mnl { no_purchase, .. } => {
                        Segment::Mnl { prefs: normalized(&z[o..o + n]), no_purchase: *no_purchase }
                    }
                    ChoiceSpec::Exogenous { .. } => Segment::Exogenous {
                        prefs: normalized(&z[o..o + n]),
                        substitution: z[o + n] / (z[o + n] + z[o + n + 1]),
                    },
                    ChoiceSpec::Nonparametric { rankings } => Segment::Ranking(rankings[j].clone()),
                }
            })
            .collect();
        Ok(ModelParams { rate: self.rate.clone(), eta, weights, segments })
    }

    /// Maps probability-space parameters to expanded-mean coordinates with
    /// total mass `K` per `θ̃` block, `n` per `φ̃` block and 2 per `τ̃` pair.
    pub fn transform(&self, params: &ModelParams) -> Result<Vec<f64>> {
        params.validate(self.items)?;
        if params.eta.len() != self.stores || params.segments.len() != self.segments() {
            return Err(Error::Dimension("parameters do not match the model structure".into()));
        }
        let k = self.segments() as f64;
        let n = self.items as f64;
        let mut z = Vec::with_capacity(self.latent_len());
        for eta in &params.eta {
            z.extend_from_slice(eta);
        }
        for theta in &params.weights {
            z.extend(theta.iter().map(|w| w * k));
        }
        for seg in &params.segments {
            match seg {
                Segment::Mnl { prefs, .. } => z.extend(prefs.iter().map(|p| p * n)),
                Segment::Exogenous { prefs, substitution } => {
                    z.extend(prefs.iter().map(|p| p * n));
                    z.push(2.0 * substitution);
                    z.push(2.0 * (1.0 - substitution));
                }
                Segment::Ranking(_) => {}
            }
        }
        if let Some(bad) = z[self.theta_offset(0)..].iter().find(|&&x| x <= 0.0) {
            return Err(Error::InvalidParams(format!(
                "probability {bad} on the simplex boundary has no expanded-mean representation"
            )));
        }
        Ok(z)
    }

    /// Chain rule from a natural-layout gradient to the latent layout at `z`.
    pub fn latent_gradient(&self, z: &[f64], natural: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.latent_len()];
        let rate_end = self.theta_offset(0);
        g[..rate_end].copy_from_slice(&natural[..rate_end]);
        let k = self.segments();
        for s in 0..self.stores {
            let o = self.theta_offset(s);
            normalize_pullback(&z[o..o + k], &natural[o..o + k], &mut g[o..o + k]);
        }
        let n = self.items;
        for j in 0..k {
            let lo = self.latent_segment_offset(j);
            let no = self.segment_offset(j);
            match self.choice {
                ChoiceSpec::Mnl { .. } => {
                    normalize_pullback(&z[lo..lo + n], &natural[no..no + n], &mut g[lo..lo + n]);
                }
                ChoiceSpec::Exogenous { .. } => {
                    normalize_pullback(&z[lo..lo + n], &natural[no..no + n], &mut g[lo..lo + n]);
                    let (a, b) = (z[lo + n], z[lo + n + 1]);
                    let d_tau = natural[no + n];
                    let sum2 = (a + b) * (a + b);
                    g[lo + n] = d_tau * b / sum2;
                    g[lo + n + 1] = -d_tau * a / sum2;
                }
                ChoiceSpec::Nonparametric { .. } => {}
            }
        }
        g
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

// ∂/∂x_j of f(x / Σx) = (g_j - Σ_k p_k g_k) / Σx.
fn normalize_pullback(x: &[f64], g: &[f64], out: &mut [f64]) {
    let total: f64 = x.iter().sum();
    let mean: f64 = x.iter().zip(g).map(|(xi, gi)| xi * gi).sum::<f64>() / total;
    for (o, gi) in out.iter_mut().zip(g) {
        *o = (gi - mean) / total;
    }
}

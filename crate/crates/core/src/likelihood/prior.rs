//! Priors: uniform boxes on rate parameters, Gamma(α, 1) on expanded-mean
//! coordinates (equivalently Dirichlet / Beta on the normalized blocks).

use serde::{Deserialize, Serialize};

use crate::choice::Segment;
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::model::{ChoiceSpec, ModelParams, ModelSpec};
use crate::rate::RateKind;

/// Prior hyperparameters. Concentrations are symmetric within a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Segment-weight concentration `α`.
    #[serde(default = "one")]
    pub alpha: f64,
    /// Preference concentration `β`.
    #[serde(default = "one")]
    pub beta: f64,
    /// Substitution-probability Beta parameters `γ`.
    #[serde(default = "ones")]
    pub gamma: [f64; 2],
    /// Closed box `[lo, hi]` for each rate parameter.
    pub eta_bounds: Vec<(f64, f64)>,
}

fn one() -> f64 {
    1.0
}

fn ones() -> [f64; 2] {
    [1.0, 1.0]
}

impl Hyperparams {
    /// Flat simplex priors and rate boxes scaled to the data: rate
    /// magnitudes up to 20 times the busiest period, Hill shapes in
    /// `[1, 10]` and half-saturation times in `[T/1000, 2T]`.
    pub fn for_data(kind: RateKind, data: &Dataset) -> Self {
        let busiest =
            data.stores.iter().flat_map(|s| &s.periods).map(|p| p.total_purchases()).max().unwrap_or(0).max(1) as f64;
        let t = data.horizon;
        let eta_bounds = match kind {
            RateKind::Homogeneous => vec![(0.0, 20.0 * busiest / t)],
            RateKind::Hill => vec![(0.0, 20.0 * busiest), (1.0, 10.0), (t / 1000.0, 2.0 * t)],
            RateKind::HillPlusPeaks => {
                vec![(0.0, 20.0 * busiest), (1.0, 10.0), (t / 1000.0, 2.0 * t), (0.0, 20.0 * busiest)]
            }
        };
        Self { alpha: 1.0, beta: 1.0, gamma: [1.0, 1.0], eta_bounds }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.eta_bounds.len() != spec.rate_dim() {
            return Err(Error::Config(format!(
                "{} rate bounds for {} rate parameters",
                self.eta_bounds.len(),
                spec.rate_dim()
            )));
        }
        if let Some((lo, hi)) = self.eta_bounds.iter().find(|(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite())) {
            return Err(Error::Config(format!("invalid rate bound [{lo}, {hi}]")));
        }
        for c in [self.alpha, self.beta, self.gamma[0], self.gamma[1]] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("prior concentration {c} must be positive")));
            }
        }
        Ok(())
    }

    pub(crate) fn eta_in_box(&self, eta: &[f64]) -> bool {
        eta.iter().zip(&self.eta_bounds).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Concentration of each expanded-mean coordinate in the latent layout;
    /// `None` for rate coordinates.
    pub(crate) fn latent_concentrations(&self, spec: &ModelSpec) -> Vec<Option<f64>> {
        let mut out = vec![None; spec.theta_offset(0)];
        out.extend(std::iter::repeat_n(Some(self.alpha), spec.stores * spec.segments()));
        for _ in 0..spec.segments() {
            match spec.choice {
                ChoiceSpec::Mnl { .. } => out.extend(std::iter::repeat_n(Some(self.beta), spec.items)),
                ChoiceSpec::Exogenous { .. } => {
                    out.extend(std::iter::repeat_n(Some(self.beta), spec.items));
                    out.push(Some(self.gamma[0]));
                    out.push(Some(self.gamma[1]));
                }
                ChoiceSpec::Nonparametric { .. } => {}
            }
        }
        out
    }
}

/// Log prior density of expanded-mean state `z` and its gradient.
///
/// Each expanded-mean coordinate contributes `(α-1) ln z - z - ln Γ(α)`; the
/// rate block contributes 0 inside its box and `-inf` outside.
pub fn log_prior_and_grad(spec: &ModelSpec, z: &[f64], hyper: &Hyperparams) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; z.len()];
    let d = spec.rate_dim();
    let mut value = 0.0;
    for s in 0..spec.stores {
        let o = spec.eta_offset(s);
        if !hyper.eta_in_box(&z[o..o + d]) {
            value = f64::NEG_INFINITY;
        }
    }
    for (j, conc) in hyper.latent_concentrations(spec).into_iter().enumerate() {
        let Some(a) = conc else { continue };
        let x = z[j];
        if x <= 0.0 {
            value = f64::NEG_INFINITY;
            grad[j] = f64::NAN;
            continue;
        }
        value += (a - 1.0) * x.ln() - x - libm::lgamma(a);
        grad[j] = (a - 1.0) / x - 1.0;
    }
    (value, grad)
}

/// Log prior density of probability-space parameters up to a constant:
/// Dirichlet on `θ` and `φ`, Beta on `τ`, boxes on `η`. The gradient is in the
/// natural layout.
pub fn log_simplex_prior_and_grad(params: &ModelParams, spec: &ModelSpec, hyper: &Hyperparams) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; spec.natural_len()];
    let mut value = 0.0;
    let mut term = |a: f64, x: f64, g: &mut f64| {
        if a != 1.0 {
            value += (a - 1.0) * x.ln();
            *g += (a - 1.0) / x;
        }
    };
    for (s, theta) in params.weights.iter().enumerate() {
        for (k, &w) in theta.iter().enumerate() {
            term(hyper.alpha, w, &mut grad[spec.theta_offset(s) + k]);
        }
    }
    for (k, seg) in params.segments.iter().enumerate() {
        let o = spec.segment_offset(k);
        match seg {
            Segment::Mnl { prefs, .. } => {
                for (i, &p) in prefs.iter().enumerate() {
                    term(hyper.beta, p, &mut grad[o + i]);
                }
            }
            Segment::Exogenous { prefs, substitution } => {
                for (i, &p) in prefs.iter().enumerate() {
                    term(hyper.beta, p, &mut grad[o + i]);
                }
                let n = prefs.len();
                let mut g_up = 0.0;
                let mut g_down = 0.0;
                term(hyper.gamma[0], *substitution, &mut g_up);
                term(hyper.gamma[1], 1.0 - substitution, &mut g_down);
                grad[o + n] += g_up - g_down;
            }
            Segment::Ranking(_) => {}
        }
    }
    if params.eta.iter().any(|eta| !hyper.eta_in_box(eta)) {
        value = f64::NEG_INFINITY;
    }
    (value, grad)
}

//! Local maximum a posteriori search.
//!
//! The objective is the log-likelihood plus the probability-space prior
//! (Dirichlet / Beta / box), maximized over `x = ln z` with `z` in the latent
//! layout. Working in log coordinates keeps every coordinate positive and
//! makes the gradient `z ⊙ ∇_z`, the same natural gradient the sampler uses.
//! The objective is invariant to rescaling each expanded-mean block, so the
//! result is renormalized to the default block masses.

use crate::error::{Error, Result};
use crate::likelihood::{latent_objective, log_simplex_prior_and_grad, Hyperparams, PeriodSelection, PreparedData};
use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct MapOptions {
    pub max_iterations: usize,
    /// Stop when the largest natural-gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an iteration improves the objective by less than this
    /// relative amount.
    pub value_tolerance: f64,
    /// L-BFGS history length.
    pub memory: usize,
    /// Starting points tried by [`super::map_from_prior`]; the best optimum
    /// is kept. Log coordinates flatten the objective near the simplex
    /// boundary, so single starts can stall at a segment weight near zero.
    pub restarts: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { max_iterations: 500, gradient_tolerance: 1e-7, value_tolerance: 1e-13, memory: 10, restarts: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    /// Optimum in the latent layout, blocks rescaled to default masses.
    pub z: Vec<f64>,
    pub log_posterior: f64,
    pub iterations: usize,
    /// Largest component of `z ⊙ ∇_z` at the optimum.
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Log posterior (log-likelihood plus probability-space log prior) at latent
/// `z` and its gradient with respect to `z`.
pub fn map_objective(spec: &ModelSpec, z: &[f64], data: &PreparedData, hyper: &Hyperparams) -> Result<(f64, Vec<f64>)> {
    let ll = latent_objective(spec, z, data, PeriodSelection::All)?;
    if !ll.value.is_finite() {
        return Ok((f64::NEG_INFINITY, ll.gradient));
    }
    let params = spec.untransform(z)?;
    let (lp, lp_natural) = log_simplex_prior_and_grad(&params, spec, hyper);
    if !lp.is_finite() {
        return Ok((f64::NEG_INFINITY, ll.gradient));
    }
    let lp_latent = spec.latent_gradient(z, &lp_natural);
    let grad = ll.gradient.iter().zip(&lp_latent).map(|(a, b)| a + b).collect();
    Ok((ll.value + lp, grad))
}

/// L-BFGS ascent with backtracking (Armijo) line search from `init`.
pub fn map_estimate(
    spec: &ModelSpec,
    data: &PreparedData,
    hyper: &Hyperparams,
    init: &[f64],
    options: &MapOptions,
) -> Result<MapResult> {
    let eval = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let z: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let (f, g) = map_objective(spec, &z, data, hyper)?;
        Ok((f, g.iter().zip(&z).map(|(gi, zi)| gi * zi).collect()))
    };
    if init.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParams("map initialization needs positive coordinates".into()));
    }
    let mut x: Vec<f64> = init.iter().map(|v| v.ln()).collect();
    let (mut f, mut g) = eval(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log posterior is not finite at the initial point".into()));
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        if inf_norm(&g) <= options.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = two_loop(&g, &s_hist, &y_hist);
        let mut slope = dot(&dir, &g);
        if !(slope > 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = g.clone();
            slope = dot(&g, &g);
        }
        let mut step = if s_hist.is_empty() { (1.0 / inf_norm(&dir)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (ft, gt) = eval(&trial)?;
            if ft.is_finite() && ft >= f + 1e-4 * step * slope && gt.iter().all(|v| v.is_finite()) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // No ascent possible along any tried step: numerically stationary.
            converged = inf_norm(&g) <= options.gradient_tolerance.sqrt();
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // Ascent on f is descent on -f: curvature pairs use -Δg.
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > options.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let improvement = fn_ - f;
        x = xn;
        f = fn_;
        g = gn;
        if improvement.abs() <= options.value_tolerance * f.abs().max(1.0) {
            converged = inf_norm(&g) <= options.gradient_tolerance.sqrt();
            break;
        }
    }
    let z: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let z = spec.untransform(&z).and_then(|p| spec.transform(&p)).unwrap_or(z);
    Ok(MapResult { z, log_posterior: f, iterations, gradient_norm: inf_norm(&g), converged })
}

fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    for j in (0..k).rev() {
        let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
        alphas[j] = rho * dot(&s_hist[j], &q);
        for (qi, yi) in q.iter_mut().zip(&y_hist[j]) {
            *qi -= alphas[j] * yi;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for j in 0..k {
        let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
        let beta = rho * dot(&y_hist[j], &q);
        for (qi, si) in q.iter_mut().zip(&s_hist[j]) {
            *qi += (alphas[j] - beta) * si;
        }
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

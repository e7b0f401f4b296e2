//! Arrival intensity functions `λ(t | η)` with closed-form integrals
//! `Λ(t0, t1 | η)` and analytic gradients in `η`.
//!
//! Three families are supported:
//!
//! * `Homogeneous`: `λ(t) = η1`.
//! * `Hill`: the derivative of the Hill equation,
//!   `λ(t) = η1 (η2/η3) (t/η3)^(η2-1) (1 + (t/η3)^η2)^-2`, whose antiderivative is
//!   `η1 H(t)` with `H(t) = u / (1 + u)`, `u = (t/η3)^η2`. Here `η1` is the total
//!   mass over `[0, ∞)`, `η2` the shape and `η3` the half-mass time.
//! * `HillPlusPeaks`: the Hill rate plus `η4` times a fixed [`PeakTemplate`].
//!
//! The Hill terms are evaluated through `x = η2 ln(t/η3)` so that `H = sigmoid(x)`,
//! which stays accurate for arbitrarily large or small `t / η3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Homogeneous,
    Hill,
    HillPlusPeaks,
}

impl RateKind {
    pub fn param_count(self) -> usize {
        match self {
            RateKind::Homogeneous => 1,
            RateKind::Hill => 3,
            RateKind::HillPlusPeaks => 4,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            RateKind::Homogeneous => &["rate"],
            RateKind::Hill => &["scale", "shape", "half_time"],
            RateKind::HillPlusPeaks => &["scale", "shape", "half_time", "peak_weight"],
        }
    }
}

/// A fixed sum of Gaussian bumps truncated to `[0, T]`, each with unit mass there.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakTemplate {
    centers: Vec<f64>,
    widths: Vec<f64>,
    horizon: f64,
    // Mass of each untruncated bump inside [0, T].
    masses: Vec<f64>,
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

fn std_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * std::f64::consts::FRAC_1_SQRT_2)
}

/// `Φ(b) - Φ(a)` for `a <= b`, computed on whichever tail loses less precision.
fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

impl PeakTemplate {
    pub fn new(centers: Vec<f64>, widths: Vec<f64>, horizon: f64) -> Result<Self> {
        if centers.len() != widths.len() {
            return Err(Error::InvalidParams("peak centers and widths differ in length".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParams(format!("peak horizon {horizon} must be positive")));
        }
        for (&c, &w) in centers.iter().zip(&widths) {
            if !(c > 0.0 && c < horizon) {
                return Err(Error::InvalidParams(format!("peak center {c} outside (0, {horizon})")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParams(format!("peak width {w} must be positive")));
            }
        }
        let masses = centers.iter().zip(&widths).map(|(&c, &w)| std_normal_mass(-c / w, (horizon - c) / w)).collect();
        Ok(Self { centers, widths, horizon, masses })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn peak_count(&self) -> usize {
        self.centers.len()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.bumps()
            .map(|(c, w, m)| {
                let z = (t - c) / w;
                (-0.5 * z * z).exp() * FRAC_1_SQRT_2PI / (w * m)
            })
            .sum()
    }

    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        self.bumps().map(|(c, w, m)| std_normal_mass((t0 - c) / w, (t1 - c) / w) / m).sum()
    }

    /// Sum of the individual bump maxima; an upper bound on [`PeakTemplate::value`].
    pub fn max_height(&self) -> f64 {
        self.bumps().map(|(_, w, m)| FRAC_1_SQRT_2PI / (w * m)).sum()
    }

    fn bumps(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.centers.iter().zip(&self.widths).zip(&self.masses).map(|((&c, &w), &m)| (c, w, m))
    }
}

/// Intensity family together with any fixed, non-inferred shape components.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    kind: RateKind,
    peaks: Option<PeakTemplate>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// Hill pieces at a point: (H, 1 - H, ln(t/η3)); t = 0 maps to H = 0.
fn hill_parts(shape: f64, half: f64, t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 1.0, f64::NEG_INFINITY);
    }
    let log_ratio = (t / half).ln();
    let x = shape * log_ratio;
    (sigmoid(x), sigmoid(-x), log_ratio)
}

impl RateModel {
    pub fn new(kind: RateKind, peaks: Option<PeakTemplate>) -> Result<Self> {
        match (kind, &peaks) {
            (RateKind::HillPlusPeaks, None) => {
                Err(Error::InvalidParams("hill_plus_peaks requires a peak template".into()))
            }
            (RateKind::Homogeneous | RateKind::Hill, Some(_)) => {
                Err(Error::InvalidParams(format!("{kind:?} rate takes no peak template")))
            }
            _ => Ok(Self { kind, peaks }),
        }
    }

    pub fn homogeneous() -> Self {
        Self { kind: RateKind::Homogeneous, peaks: None }
    }

    pub fn hill() -> Self {
        Self { kind: RateKind::Hill, peaks: None }
    }

    pub fn hill_plus_peaks(template: PeakTemplate) -> Self {
        Self { kind: RateKind::HillPlusPeaks, peaks: Some(template) }
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    pub fn peaks(&self) -> Option<&PeakTemplate> {
        self.peaks.as_ref()
    }

    pub fn param_count(&self) -> usize {
        self.kind.param_count()
    }

    pub fn validate(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.param_count() {
            return Err(Error::InvalidParams(format!(
                "{:?} rate takes {} parameters, got {}",
                self.kind,
                self.param_count(),
                eta.len()
            )));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite rate parameter in {eta:?}")));
        }
        match self.kind {
            RateKind::Homogeneous if eta[0] < 0.0 => {
                Err(Error::InvalidParams(format!("negative homogeneous rate {}", eta[0])))
            }
            RateKind::Hill | RateKind::HillPlusPeaks if eta[..3].iter().any(|&v| v <= 0.0) => {
                Err(Error::InvalidParams(format!("hill parameters must be positive, got {eta:?}")))
            }
            RateKind::HillPlusPeaks if eta[3] < 0.0 => {
                Err(Error::InvalidParams(format!("negative peak weight {}", eta[3])))
            }
            _ => Ok(()),
        }
    }

    pub fn rate(&self, eta: &[f64], t: f64) -> Result<f64> {
        self.validate(eta)?;
        Ok(self.rate_unchecked(eta, t))
    }

    pub fn integral(&self, eta: &[f64], t0: f64, t1: f64) -> Result<f64> {
        self.validate(eta)?;
        check_interval(t0, t1)?;
        Ok(self.integral_unchecked(eta, t0, t1))
    }

    /// `∂λ(t)/∂η`.
    pub fn rate_gradient(&self, eta: &[f64], t: f64) -> Result<Vec<f64>> {
        self.validate(eta)?;
        let mut grad = vec![0.0; eta.len()];
        match self.kind {
            RateKind::Homogeneous => grad[0] = 1.0,
            RateKind::Hill | RateKind::HillPlusPeaks => {
                let hill = hill_rate(eta, t);
                if t > 0.0 {
                    let (h, _, log_ratio) = hill_parts(eta[1], eta[2], t);
                    let tilt = 1.0 - 2.0 * h;
                    grad[0] = hill / eta[0];
                    grad[1] = hill * (1.0 / eta[1] + log_ratio * tilt);
                    grad[2] = -hill * (eta[1] / eta[2]) * tilt;
                } else if eta[1] > 1.0 {
                    // λ and all its partials vanish at the origin.
                } else {
                    grad[0] = hill / eta[0];
                    grad[1] = f64::NAN;
                    grad[2] = -hill / eta[2];
                }
                if let Some(peaks) = &self.peaks {
                    grad[3] = peaks.value(t);
                }
            }
        }
        Ok(grad)
    }

    /// `∂Λ(t0, t1)/∂η`.
    pub fn integral_gradient(&self, eta: &[f64], t0: f64, t1: f64) -> Result<Vec<f64>> {
        self.validate(eta)?;
        check_interval(t0, t1)?;
        let mut grad = vec![0.0; eta.len()];
        self.add_integral_gradient(eta, t0, t1, 1.0, &mut grad);
        Ok(grad)
    }

    /// Tight upper bound of `λ` on `[0, horizon]`, used as the thinning envelope.
    pub fn upper_bound(&self, eta: &[f64], horizon: f64) -> Result<f64> {
        self.validate(eta)?;
        let bound = match self.kind {
            RateKind::Homogeneous => eta[0],
            RateKind::Hill | RateKind::HillPlusPeaks => {
                let (shape, half) = (eta[1], eta[2]);
                let hill_max = if shape > 1.0 {
                    let mode = half * ((shape - 1.0) / (shape + 1.0)).powf(1.0 / shape);
                    hill_rate(eta, mode.min(horizon))
                } else if shape == 1.0 {
                    eta[0] / half
                } else {
                    return Err(Error::InvalidParams(format!(
                        "hill rate with shape {shape} < 1 is unbounded at t = 0"
                    )));
                };
                hill_max + self.peaks.as_ref().map_or(0.0, |p| eta[3] * p.max_height())
            }
        };
        Ok(bound)
    }

    pub(crate) fn rate_unchecked(&self, eta: &[f64], t: f64) -> f64 {
        match self.kind {
            RateKind::Homogeneous => eta[0],
            RateKind::Hill => hill_rate(eta, t),
            RateKind::HillPlusPeaks => hill_rate(eta, t) + eta[3] * self.peaks.as_ref().map_or(0.0, |p| p.value(t)),
        }
    }

    pub(crate) fn integral_unchecked(&self, eta: &[f64], t0: f64, t1: f64) -> f64 {
        match self.kind {
            RateKind::Homogeneous => eta[0] * (t1 - t0),
            RateKind::Hill => eta[0] * hill_mass(eta[1], eta[2], t0, t1),
            RateKind::HillPlusPeaks => {
                eta[0] * hill_mass(eta[1], eta[2], t0, t1)
                    + eta[3] * self.peaks.as_ref().map_or(0.0, |p| p.integral(t0, t1))
            }
        }
    }

    /// Adds `weight * ∂Λ(t0, t1)/∂η` into `grad`.
    pub(crate) fn add_integral_gradient(&self, eta: &[f64], t0: f64, t1: f64, weight: f64, grad: &mut [f64]) {
        match self.kind {
            RateKind::Homogeneous => grad[0] += weight * (t1 - t0),
            RateKind::Hill | RateKind::HillPlusPeaks => {
                let (h0, c0, l0) = hill_parts(eta[1], eta[2], t0);
                let (h1, c1, l1) = hill_parts(eta[1], eta[2], t1);
                let spread = |h: f64, c: f64, l: f64| if h > 0.0 { h * c * l } else { 0.0 };
                grad[0] += weight * hill_mass(eta[1], eta[2], t0, t1);
                grad[1] += weight * eta[0] * (spread(h1, c1, l1) - spread(h0, c0, l0));
                grad[2] -= weight * eta[0] * (eta[1] / eta[2]) * (h1 * c1 - h0 * c0);
                if let Some(p) = &self.peaks {
                    grad[3] += weight * p.integral(t0, t1);
                }
            }
        }
    }

    /// `ln λ(t)`, adding `∂ ln λ(t)/∂η` into `grad`.
    pub(crate) fn log_rate_with_gradient(&self, eta: &[f64], t: f64, grad: &mut [f64]) -> f64 {
        match self.kind {
            RateKind::Homogeneous => {
                grad[0] += 1.0 / eta[0];
                eta[0].ln()
            }
            RateKind::Hill => {
                if t <= 0.0 {
                    return self.log_rate_fallback(eta, t, grad);
                }
                let (shape, half) = (eta[1], eta[2]);
                let log_ratio = (t / half).ln();
                let x = shape * log_ratio;
                let tilt = 1.0 - 2.0 * sigmoid(x);
                grad[0] += 1.0 / eta[0];
                grad[1] += 1.0 / shape + log_ratio * tilt;
                grad[2] -= (shape / half) * tilt;
                eta[0].ln() + shape.ln() - t.ln() - softplus(-x) - softplus(x)
            }
            RateKind::HillPlusPeaks => self.log_rate_fallback(eta, t, grad),
        }
    }

    fn log_rate_fallback(&self, eta: &[f64], t: f64, grad: &mut [f64]) -> f64 {
        let rate = self.rate_unchecked(eta, t);
        if rate <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let g = self.rate_gradient(eta, t).unwrap_or_else(|_| vec![f64::NAN; eta.len()]);
        for (acc, gv) in grad.iter_mut().zip(g) {
            *acc += gv / rate;
        }
        rate.ln()
    }

    /// `Σ_j ln λ(t_j)`, adding its gradient into `grad`.
    pub(crate) fn sum_log_rate(&self, eta: &[f64], times: &[f64], grad: &mut [f64]) -> f64 {
        if times.is_empty() {
            return 0.0;
        }
        if self.kind == RateKind::Homogeneous {
            let m = times.len() as f64;
            grad[0] += m / eta[0];
            return m * eta[0].ln();
        }
        times.iter().map(|&t| self.log_rate_with_gradient(eta, t, grad)).sum()
    }
}

fn check_interval(t0: f64, t1: f64) -> Result<()> {
    if t0 > t1 || t0 < 0.0 || !t1.is_finite() {
        return Err(Error::InvalidParams(format!("invalid interval [{t0}, {t1}]")));
    }
    Ok(())
}

fn hill_rate(eta: &[f64], t: f64) -> f64 {
    let (scale, shape, half) = (eta[0], eta[1], eta[2]);
    if t <= 0.0 {
        return if shape > 1.0 {
            0.0
        } else if shape == 1.0 {
            scale / half
        } else {
            f64::INFINITY
        };
    }
    let (h, c, _) = hill_parts(shape, half, t);
    scale * shape / t * h * c
}

// H(t1) - H(t0), taking the difference of complements in the upper tail.
fn hill_mass(shape: f64, half: f64, t0: f64, t1: f64) -> f64 {
    let (h0, c0, _) = hill_parts(shape, half, t0);
    let (h1, c1, _) = hill_parts(shape, half, t1);
    if h0 > 0.5 {
        c0 - c1
    } else {
        h1 - h0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bakery_peaks() -> PeakTemplate {
        PeakTemplate::new(vec![3.5, 5.0], vec![0.15, 0.1], 8.0).unwrap()
    }

    #[test]
    fn homogeneous_is_constant() {
        let m = RateModel::homogeneous();
        assert_eq!(m.rate(&[3.2], 17.0).unwrap(), 3.2);
        assert_eq!(m.integral(&[3.2], 1.0, 3.0).unwrap(), 6.4);
        assert_eq!(m.rate_gradient(&[3.2], 0.3).unwrap(), vec![1.0]);
        assert_eq!(m.integral_gradient(&[3.2], 1.0, 4.0).unwrap(), vec![3.0]);
    }

    #[test]
    fn hill_point_values() {
        let m = RateModel::hill();
        let eta = [1.0, 2.0, 1.0];
        assert_relative_eq!(m.rate(&eta, 1.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(m.rate(&eta, 0.0).unwrap(), 0.0);
        assert_relative_eq!(m.integral(&eta, 0.0, 1.0).unwrap(), 0.5, max_relative = 1e-15);
        assert!((m.integral(&eta, 0.0, 1e6).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(m.integral(&eta, 0.7, 0.7).unwrap(), 0.0);
        assert_relative_eq!(m.rate_gradient(&eta, 1.0).unwrap()[0], 0.5, max_relative = 1e-15);
    }

    #[test]
    fn hill_gradient_matches_central_differences() {
        let m = RateModel::hill();
        let eta = [1.0, 2.0, 1.0];
        let t = 0.5;
        let g = m.rate_gradient(&eta, t).unwrap();
        for v in 0..3 {
            let h = 1e-5;
            let mut up = eta;
            let mut dn = eta;
            up[v] += h;
            dn[v] -= h;
            let fd = (m.rate(&up, t).unwrap() - m.rate(&dn, t).unwrap()) / (2.0 * h);
            assert_relative_eq!(g[v], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(RateModel::hill().rate(&[1.0, 0.0, 1.0], 1.0).is_err());
        assert!(RateModel::hill().rate(&[1.0, 2.0], 1.0).is_err());
        assert!(RateModel::homogeneous().rate(&[-1.0], 1.0).is_err());
        assert!(RateModel::homogeneous().integral(&[1.0], 2.0, 1.0).is_err());
        assert!(RateModel::new(RateKind::HillPlusPeaks, None).is_err());
        assert!(PeakTemplate::new(vec![9.0], vec![0.1], 8.0).is_err());
    }

    #[test]
    fn peak_template_has_unit_mass_per_peak() {
        let p = PeakTemplate::new(vec![0.05, 5.0], vec![0.5, 0.1], 8.0).unwrap();
        assert_relative_eq!(p.integral(0.0, 8.0), 2.0, max_relative = 1e-14);
        assert!(p.value(5.0) <= p.max_height());
    }

    #[test]
    fn upper_bounds_dominate() {
        let cases: Vec<(RateModel, Vec<f64>)> = vec![
            (RateModel::homogeneous(), vec![2.0]),
            (RateModel::hill(), vec![50.0, 2.0, 1.0]),
            (RateModel::hill(), vec![50.0, 4.0, 20.0]),
            (RateModel::hill(), vec![50.0, 1.0, 3.0]),
            (RateModel::hill_plus_peaks(bakery_peaks()), vec![200.0, 3.0, 3.0, 20.0]),
        ];
        for (m, eta) in cases {
            let bound = m.upper_bound(&eta, 8.0).unwrap();
            let mut max_seen: f64 = 0.0;
            for k in 0..=8000 {
                let t = 8.0 * k as f64 / 8000.0;
                let r = m.rate(&eta, t).unwrap();
                assert!(r <= bound * (1.0 + 1e-12), "{r} > {bound}");
                max_seen = max_seen.max(r);
            }
            if m.kind() == RateKind::Hill {
                assert_relative_eq!(max_seen, bound, max_relative = 1e-4);
            }
        }
        assert!(RateModel::hill().upper_bound(&[1.0, 0.5, 1.0], 8.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_model() -> impl Strategy<Value = (RateModel, Vec<f64>)> {
            prop_oneof![
                (0.0f64..10.0).prop_map(|r| (RateModel::homogeneous(), vec![r])),
                (0.1f64..100.0, 1.0f64..6.0, 0.2f64..6.0).prop_map(|(a, b, c)| (RateModel::hill(), vec![a, b, c])),
                (0.1f64..100.0, 1.0f64..6.0, 0.2f64..6.0, 0.0f64..30.0).prop_map(|(a, b, c, d)| {
                    (
                        RateModel::hill_plus_peaks(PeakTemplate::new(vec![3.5, 5.0], vec![0.3, 0.2], 8.0).unwrap()),
                        vec![a, b, c, d],
                    )
                }),
            ]
        }

        fn sorted3() -> impl Strategy<Value = (f64, f64, f64)> {
            (0.0f64..8.0, 0.0f64..8.0, 0.0f64..8.0).prop_map(|(a, b, c)| {
                let mut v = [a, b, c];
                v.sort_by(f64::total_cmp);
                (v[0], v[1], v[2])
            })
        }

        proptest! {
            #[test]
            fn integral_is_additive((m, eta) in arb_model(), (t0, t1, t2) in sorted3()) {
                let whole = m.integral(&eta, t0, t2).unwrap();
                let parts = m.integral(&eta, t0, t1).unwrap() + m.integral(&eta, t1, t2).unwrap();
                prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1e-300) + 1e-300);
            }

            #[test]
            fn rate_is_nonnegative((m, eta) in arb_model(), t in 0.0f64..8.0) {
                prop_assert!(m.rate(&eta, t).unwrap() >= 0.0);
            }

            #[test]
            fn gradients_match_finite_differences((m, eta) in arb_model(), t in 0.05f64..8.0, t0 in 0.0f64..4.0) {
                let g = m.rate_gradient(&eta, t).unwrap();
                let gi = m.integral_gradient(&eta, t0, t0 + 3.0).unwrap();
                for v in 0..eta.len() {
                    let h = 1e-6 * eta[v].abs().max(1e-2);
                    let mut up = eta.clone();
                    let mut dn = eta.clone();
                    up[v] += h;
                    dn[v] -= h;
                    if m.validate(&dn).is_err() { continue; }
                    let fd = (m.rate(&up, t).unwrap() - m.rate(&dn, t).unwrap()) / (2.0 * h);
                    let fdi = (m.integral(&up, t0, t0 + 3.0).unwrap() - m.integral(&dn, t0, t0 + 3.0).unwrap()) / (2.0 * h);
                    let scale = g.iter().map(|x| x.abs()).fold(1e-8, f64::max);
                    let scale_i = gi.iter().map(|x| x.abs()).fold(1e-8, f64::max);
                    prop_assert!((g[v] - fd).abs() <= 1e-5 * scale, "rate grad {v}: {} vs {fd}", g[v]);
                    prop_assert!((gi[v] - fdi).abs() <= 1e-5 * scale_i, "integral grad {v}: {} vs {fdi}", gi[v]);
                }
            }

            #[test]
            fn log_rate_gradient_is_consistent((m, eta) in arb_model(), t in 0.05f64..8.0) {
                let rate = m.rate(&eta, t).unwrap();
                prop_assume!(rate > 1e-200);
                let mut g = vec![0.0; eta.len()];
                let lr = m.log_rate_with_gradient(&eta, t, &mut g);
                prop_assert!((lr - rate.ln()).abs() <= 1e-10 * lr.abs().max(1.0));
                let rg = m.rate_gradient(&eta, t).unwrap();
                for v in 0..eta.len() {
                    prop_assert!((g[v] - rg[v] / rate).abs() <= 1e-9 * (rg[v] / rate).abs().max(1.0));
                }
            }
        }
    }
}

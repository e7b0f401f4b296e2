use crate::error::{Error, Result};

/// Potential scale reduction factor `R̂` of equal-length chains:
/// `sqrt(((n-1)/n W + B/n) / W)`, with `W` the mean within-chain variance and
/// `B` the between-chain variance of chain means times `n`.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 chains, got {m}")));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParams("chains must share a length of at least 2".into()));
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let between = nf / (m as f64 - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if within <= 0.0 {
        return Err(Error::DegenerateVariance("every chain is constant".into()));
    }
    Ok((((nf - 1.0) / nf * within + between / nf) / within).sqrt())
}

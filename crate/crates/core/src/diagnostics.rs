//! Convergence and Monte Carlo error diagnostics.

use crate::error::{Error, Result};
use crate::sampler::ChainOutput;
use crate::state::ModelState;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Potential scale reduction `sqrt(1 + B / (n W))` of equal-length series.
///
/// `B/n` is the variance of the chain means and `W` the mean within-chain
/// variance, so identical chains give exactly 1.
pub fn potential_scale_reduction(series: &[Vec<f64>]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Config("R-hat needs at least two chains; set n_chains >= 2".into()));
    }
    let n = series[0].len();
    if n < 2 || series.iter().any(|s| s.len() != n) {
        return Err(Error::Domain("R-hat needs equal-length chains with at least two draws".into()));
    }
    let m = series.len() as f64;
    let means: Vec<f64> = series.iter().map(|s| mean(s)).collect();
    let grand = mean(&means);
    let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let w = series
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        // constant chains: converged if they agree
        return Ok(if b_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((1.0 + b_over_n / w).sqrt())
}

/// R-hat of one scalar summary across chains.
pub fn gelman_rubin(chains: &[ChainOutput], select: impl Fn(&ModelState) -> f64) -> Result<f64> {
    let series: Vec<Vec<f64>> = chains.iter().map(|c| c.scalar(&select)).collect();
    potential_scale_reduction(&series)
}

/// R-hat of the precisions, product effects and coefficients, labelled.
pub fn rhat_table(chains: &[ChainOutput], design: &crate::design::Design) -> Result<Vec<(String, f64)>> {
    let mut out = vec![
        ("theta_l".to_string(), gelman_rubin(chains, |s| s.theta_l)?),
        ("theta_a".to_string(), gelman_rubin(chains, |s| s.theta_a)?),
        ("theta_b".to_string(), gelman_rubin(chains, |s| s.theta_b)?),
    ];
    for (n, name) in design.products.iter().enumerate() {
        out.push((format!("tau:{name}"), gelman_rubin(chains, |s| s.tau[n])?));
    }
    for (k, name) in design.covariate_names.iter().enumerate() {
        out.push((format!("beta:{name}"), gelman_rubin(chains, |s| s.beta[k])?));
    }
    Ok(out)
}

/// Standard error of the mean of `x` from `n_batches` non-overlapping batches.
pub fn batch_means_se(x: &[f64], n_batches: usize) -> Result<f64> {
    if n_batches < 2 || x.len() < 2 * n_batches {
        return Err(Error::Domain(format!("{} draws are too few for {n_batches} batches", x.len())));
    }
    let size = x.len() / n_batches;
    let batch: Vec<f64> = x.chunks_exact(size).take(n_batches).map(mean).collect();
    let mu = mean(&batch);
    let var = batch.iter().map(|b| (b - mu).powi(2)).sum::<f64>() / (n_batches as f64 - 1.0);
    Ok((var / n_batches as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_chains_give_one() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(potential_scale_reduction(&[s.clone(), s]).unwrap(), 1.0);
    }

    #[test]
    fn single_chain_is_rejected() {
        let err = potential_scale_reduction(&[vec![1.0, 2.0]]).unwrap_err();
        assert!(err.to_string().contains("n_chains"));
    }

    #[test]
    fn batch_means_of_iid_noise() {
        // alternating sequence: every batch has mean exactly 0
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(batch_means_se(&x, 10).unwrap(), 0.0);
    }
}

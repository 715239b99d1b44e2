//! Spike-and-slab selection of country covariates.
//!
//! Working model for the country-year effects `B` (n cells, K covariates):
//! `B = X beta + e`, `e ~ N(0, theta_B^{-1} I)`,
//! `beta_A | gamma, theta_B ~ N(0, theta_B^{-1} upsilon R_AA)` with
//! `R = (X^T X)^{-1}`, inactive coefficients pinned at zero,
//! `theta_B ~ Ga(a0, b0)` and `gamma_k ~ Bernoulli(w)`.
//! Both `beta` and `theta_B` integrate out in closed form, which gives the
//! collapsed `gamma` conditional used below.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, InverseGamma};

use crate::error::{Error, Result};
use crate::model::HyperParams;

/// Diagonal of `D_gamma` squared: `upsilon` where included, 0 elsewhere.
pub fn d_gamma(gamma: &[bool], upsilon: f64) -> Vec<f64> {
    gamma.iter().map(|&g| if g { upsilon } else { 0.0 }).collect()
}

/// Active-set indices of `gamma`.
pub fn active_set(gamma: &[bool]) -> Vec<usize> {
    gamma.iter().enumerate().filter(|(_, &g)| g).map(|(k, _)| k).collect()
}

fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Sufficient statistics of one working response against a fixed design.
pub struct SelectionSystem<'a> {
    pub xtx: &'a DMatrix<f64>,
    pub r: &'a DMatrix<f64>,
    pub xtb: DVector<f64>,
    pub btb: f64,
    pub n: usize,
}

/// Conjugate quantities for one inclusion pattern.
pub struct ActiveFit {
    pub active: Vec<usize>,
    /// Cholesky factor of `P = X_A^T X_A + (upsilon R_AA)^{-1}`.
    chol: Option<Cholesky<f64, Dyn>>,
    /// `P^{-1} X_A^T B`.
    pub mean: DVector<f64>,
    /// Residual sum of squares after shrinkage, `B^T B - mean^T X_A^T B`.
    pub s2: f64,
    /// `log |upsilon R_AA| + log |P|`.
    pub log_det: f64,
}

impl<'a> SelectionSystem<'a> {
    pub fn new(x: &DMatrix<f64>, xtx: &'a DMatrix<f64>, r: &'a DMatrix<f64>, b: &[f64]) -> Self {
        let bv = DVector::from_column_slice(b);
        Self { xtx, r, xtb: x.transpose() * &bv, btb: bv.dot(&bv), n: b.len() }
    }

    /// `None` when the active system is numerically singular.
    pub fn fit(&self, gamma: &[bool], upsilon: f64) -> Option<ActiveFit> {
        let active = active_set(gamma);
        if active.is_empty() {
            return Some(ActiveFit { active, chol: None, mean: DVector::zeros(0), s2: self.btb, log_det: 0.0 });
        }
        let sigma = submatrix(self.r, &active) * upsilon;
        let sigma_chol = sigma.cholesky()?;
        let sigma_log_det = 2.0 * sigma_chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let p = submatrix(self.xtx, &active) + sigma_chol.inverse();
        let chol = p.cholesky()?;
        let p_log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let xtb_a = DVector::from_iterator(active.len(), active.iter().map(|&k| self.xtb[k]));
        let mean = chol.solve(&xtb_a);
        let s2 = self.btb - mean.dot(&xtb_a);
        if !(s2.is_finite() && sigma_log_det.is_finite() && p_log_det.is_finite()) {
            return None;
        }
        Some(ActiveFit { active, chol: Some(chol), mean, s2: s2.max(0.0), log_det: sigma_log_det + p_log_det })
    }

    /// Collapsed log density of `gamma` given `B`, up to a constant.
    /// Singular configurations get `-inf` and a warning.
    pub fn log_gamma_density(&self, gamma: &[bool], hyper: &HyperParams) -> f64 {
        match self.fit(gamma, hyper.upsilon) {
            Some(fit) => self.log_density_of(&fit, gamma, hyper),
            None => {
                warn!("singular covariate system for inclusion pattern {:?}; density set to zero", active_set(gamma));
                f64::NEG_INFINITY
            }
        }
    }

    fn log_density_of(&self, fit: &ActiveFit, gamma: &[bool], hyper: &HyperParams) -> f64 {
        let (a0, b0) = (hyper.precision_shape, hyper.precision_rate);
        let prior: f64 = gamma.iter().map(|&g| if g { hyper.w.ln() } else { (1.0 - hyper.w).ln() }).sum();
        -0.5 * fit.log_det - (a0 + 0.5 * self.n as f64) * (2.0 * b0 + fit.s2).ln() + prior
    }
}

/// One sweep of single-site `gamma` updates in the given order.
///
/// Returns, per covariate, the conditional probability of inclusion used
/// for its update (a Rao-Blackwell ingredient).
pub fn gamma_full_conditional<R: Rng + ?Sized>(
    system: &SelectionSystem<'_>,
    gamma: &mut [bool],
    hyper: &HyperParams,
    order: &[usize],
    rng: &mut R,
) -> Vec<f64> {
    let mut probs = vec![0.0; gamma.len()];
    for &k in order {
        gamma[k] = true;
        let with = system.log_gamma_density(gamma, hyper);
        gamma[k] = false;
        let without = system.log_gamma_density(gamma, hyper);
        let p = inclusion_from_log_densities(with, without);
        probs[k] = p;
        gamma[k] = rng.random::<f64>() < p;
    }
    probs
}

/// `P(gamma_k = 1)` from the two unnormalized log densities.
pub fn inclusion_from_log_densities(with: f64, without: f64) -> f64 {
    match (with.is_finite(), without.is_finite()) {
        (true, true) => 1.0 / (1.0 + (without - with).exp()),
        (true, false) => 1.0,
        (false, true) => 0.0,
        (false, false) => 0.0,
    }
}

/// `theta_B | gamma, B` with `beta` integrated out.
pub fn draw_theta_b_collapsed<R: Rng + ?Sized>(
    system: &SelectionSystem<'_>,
    gamma: &[bool],
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let fit = system.fit(gamma, hyper.upsilon).ok_or_else(|| Error::Numerical("singular covariate system".into()))?;
    let shape = hyper.precision_shape + 0.5 * system.n as f64;
    let rate = hyper.precision_rate + 0.5 * fit.s2;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(format!("theta_B draw: {e}")))?;
    Ok(g.sample(rng))
}

/// `beta | gamma, theta_B, B`: Gaussian on the active set with precision
/// `theta_B P`, exact zeros elsewhere.
pub fn beta_full_conditional<R: Rng + ?Sized>(
    system: &SelectionSystem<'_>,
    gamma: &[bool],
    theta_b: f64,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut beta = vec![0.0; gamma.len()];
    // always consume one normal per covariate so streams stay aligned across patterns
    let normals: Vec<f64> = (0..gamma.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let fit = system.fit(gamma, hyper.upsilon).ok_or_else(|| Error::Numerical("singular covariate system".into()))?;
    let Some(chol) = &fit.chol else {
        return Ok(beta);
    };
    let p = fit.active.len();
    let z = DVector::from_iterator(p, normals.into_iter().take(p));
    let offset = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular coefficient precision".into()))?
        / theta_b.sqrt();
    for (i, &k) in fit.active.iter().enumerate() {
        beta[k] = fit.mean[i] + offset[i];
    }
    Ok(beta)
}

/// `beta^T (upsilon R_AA)^{-1} beta` over the active set.
pub fn slab_quadratic_form(r: &DMatrix<f64>, gamma: &[bool], beta: &[f64], upsilon: f64) -> Result<f64> {
    let active = active_set(gamma);
    if active.is_empty() {
        return Ok(0.0);
    }
    let chol = (submatrix(r, &active) * upsilon)
        .cholesky()
        .ok_or_else(|| Error::Numerical("slab covariance is not positive definite".into()))?;
    let b = DVector::from_iterator(active.len(), active.iter().map(|&k| beta[k]));
    Ok(b.dot(&chol.solve(&b)))
}

/// `upsilon = s_beta / theta_hat`.
pub fn slab_scale(beta_sd: f64, theta_hat: f64) -> f64 {
    beta_sd / theta_hat
}

/// Pilot-run calibration of the `theta_B` prior and slab scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Least-squares residual variance `s^2_LS`.
    pub kappa: f64,
    pub nu: f64,
    pub upsilon: f64,
    /// Sample variance of the pilot effects.
    pub s2_b: f64,
    pub beta_sd: f64,
    /// Default values, for comparison.
    pub default_upsilon: f64,
    pub default_w: f64,
    pub fell_back: bool,
}

/// Candidate degrees of freedom for the inverse-gamma `theta_B` prior.
const NU_GRID: [f64; 12] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 15.0, 20.0, 30.0, 50.0];

/// Calibrates `kappa`, `nu` and `upsilon` from pilot effects `b` on design `x`.
pub fn calibrate_hyperparams(b: &[f64], x: &DMatrix<f64>) -> Calibration {
    let defaults = HyperParams::default();
    let fallback = |why: &str| {
        warn!("degenerate pilot run ({why}); keeping default hyperparameters");
        Calibration {
            kappa: f64::NAN,
            nu: f64::NAN,
            upsilon: defaults.upsilon,
            s2_b: f64::NAN,
            beta_sd: f64::NAN,
            default_upsilon: defaults.upsilon,
            default_w: defaults.w,
            fell_back: true,
        }
    };
    let (n, k) = (x.nrows(), x.ncols());
    if b.len() != n || n <= k + 1 || k == 0 {
        return fallback("too few pilot cells");
    }
    let bv = DVector::from_column_slice(b);
    let Some(chol) = (x.transpose() * x).cholesky() else {
        return fallback("singular design");
    };
    let beta_ls = chol.solve(&(x.transpose() * &bv));
    let resid = &bv - x * &beta_ls;
    let kappa = resid.dot(&resid) / (n - k) as f64;
    let mean_b = bv.mean();
    let s2_b = bv.iter().map(|v| (v - mean_b).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mean_beta = beta_ls.mean();
    let beta_sd = (beta_ls.iter().map(|v| (v - mean_beta).powi(2)).sum::<f64>() / (k.max(2) - 1) as f64).sqrt();
    if !(kappa > 0.0 && s2_b > 0.0 && kappa.is_finite() && s2_b.is_finite() && beta_sd > 0.0) {
        return fallback("zero variance");
    }
    let (lo, hi) = (kappa.min(s2_b), kappa.max(s2_b));
    let mass = |nu: f64| InverseGamma::new(nu / 2.0, nu * kappa / 2.0).map(|d| d.cdf(hi) - d.cdf(lo)).unwrap_or(0.0);
    let nu = NU_GRID.iter().copied().max_by(|a, b| mass(*a).total_cmp(&mass(*b))).unwrap_or(NU_GRID[0]);
    Calibration {
        kappa,
        nu,
        upsilon: slab_scale(beta_sd, kappa),
        s2_b,
        beta_sd,
        default_upsilon: defaults.upsilon,
        default_w: defaults.w,
        fell_back: false,
    }
}

/// Proportion of draws with `gamma_k = 1`.
pub fn inclusion_probabilities(gammas: &[Vec<bool>]) -> Result<Vec<f64>> {
    let first = gammas.first().ok_or_else(|| Error::Domain("no gamma draws to summarize".into()))?;
    let mut acc = vec![0.0; first.len()];
    for g in gammas {
        for (a, &v) in acc.iter_mut().zip(g) {
            *a += v as u8 as f64;
        }
    }
    Ok(acc.into_iter().map(|a| a / gammas.len() as f64).collect())
}

/// Mean of the stored conditional inclusion probabilities.
pub fn rao_blackwell_inclusion(probs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = probs.first().ok_or_else(|| Error::Domain("no gamma draws to summarize".into()))?;
    let mut acc = vec![0.0; first.len()];
    for p in probs {
        for (a, &v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    Ok(acc.into_iter().map(|a| a / probs.len() as f64).collect())
}

//! Hierarchical parameter state and the observation likelihood.
//!
//! Speed decomposes as `lambda_in(t) = f(t) + B_i(t) + tau_n + tau_in(t)`,
//! with `B_i(t) = sum_k gamma_k beta_k X_ki(t) + tau_i(t)`. Every normal
//! distribution below is parameterized by its precision, except `theta_h`
//! which holds the (fixed) variance of `tau_in(t)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::spline::SplineState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Speed per slot (per observation, or per pair in the time-invariant variant).
    pub lambda: Vec<f64>,
    /// Adoption ceiling per pair.
    pub alpha: Vec<f64>,
    pub spline: SplineState,
    /// Country-year effects `B_i(t)`, one per effect cell.
    pub country_effects: Vec<f64>,
    /// Product effects `tau_n`.
    pub tau: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<bool>,
    pub theta_l: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    /// Variance of `tau_in(t)`.
    pub theta_h: f64,
}

impl ModelState {
    /// `f` evaluated at every grid abscissa of the design. Identically zero
    /// for the time-invariant variant.
    pub fn f_on_grid(&self, design: &Design) -> Result<Vec<f64>> {
        if !design.variant.has_time_effect() {
            return Ok(vec![0.0; design.grid.len()]);
        }
        let basis = self.spline.basis()?;
        design.grid.iter().map(|&t| basis.evaluate(&self.spline.omega, t)).collect()
    }

    /// `sum_k gamma_k beta_k X_k` for one effect cell.
    pub fn covariate_predictor(&self, design: &Design, effect: usize) -> f64 {
        (0..design.n_covariates()).filter(|&k| self.gamma[k]).map(|k| self.beta[k] * design.x[(effect, k)]).sum()
    }

    /// Checks the structural invariants of the state against `design`.
    pub fn check(&self, design: &Design) -> Result<()> {
        let dims = [
            ("lambda", self.lambda.len(), design.n_slots()),
            ("alpha", self.alpha.len(), design.pairs.len()),
            ("country_effects", self.country_effects.len(), design.effects.len()),
            ("tau", self.tau.len(), design.products.len()),
            ("beta", self.beta.len(), design.n_covariates()),
            ("gamma", self.gamma.len(), design.n_covariates()),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::Domain(format!("{name} has length {got}, design expects {want}")));
            }
        }
        self.spline.validate()?;
        for (p, &a) in self.alpha.iter().enumerate() {
            if !(a > design.pairs[p].alpha_floor && a <= 1.0) {
                return Err(Error::Domain(format!("alpha[{p}] = {a} outside ({}, 1]", design.pairs[p].alpha_floor)));
            }
        }
        for (name, v) in [("theta_L", self.theta_l), ("theta_A", self.theta_a), ("theta_B", self.theta_b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} = {v} is not a positive precision")));
            }
        }
        if let Some((s, v)) = self.lambda.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Domain(format!("lambda[{s}] = {v} is not positive")));
        }
        for (k, (&g, &b)) in self.gamma.iter().zip(&self.beta).enumerate() {
            if !g && b != 0.0 {
                return Err(Error::Domain(format!("beta[{k}] = {b} while gamma[{k}] = 0")));
            }
        }
        Ok(())
    }
}

/// Observation residual `y/Y(t-1) - lambda * (1 - Y(t-1) / (M alpha))`.
#[inline]
pub fn residual(ratio: f64, lambda: f64, saturation: f64, alpha: f64) -> f64 {
    ratio - lambda * (1.0 - saturation / alpha)
}

/// Gaussian log-likelihood of all usable observations at precision `theta_L`.
///
/// Returns `-inf` when a ceiling lies outside its support.
pub fn log_likelihood(design: &Design, state: &ModelState) -> f64 {
    for (p, &a) in state.alpha.iter().enumerate() {
        if !(a > design.pairs[p].alpha_floor && a <= 1.0) {
            return f64::NEG_INFINITY;
        }
    }
    let theta = state.theta_l;
    let norm = 0.5 * (theta / (2.0 * PI)).ln();
    design
        .obs
        .iter()
        .map(|o| {
            let e = residual(o.ratio, state.lambda[o.slot], o.saturation, state.alpha[o.pair]);
            norm - 0.5 * theta * e * e
        })
        .sum()
}

/// `-2 * log_likelihood`.
pub fn deviance(design: &Design, state: &ModelState) -> f64 {
    -2.0 * log_likelihood(design, state)
}

/// Sum of squared observation residuals.
pub fn residual_sum_of_squares(design: &Design, state: &ModelState) -> f64 {
    design.obs.iter().map(|o| residual(o.ratio, state.lambda[o.slot], o.saturation, state.alpha[o.pair]).powi(2)).sum()
}

//! Synthetic panels with known ground truth.
//!
//! Trajectories follow the discrete logistic recursion
//! `y(t) = Y(t-1) * (lambda(t) * (1 - Y(t-1) / (M(t) alpha)) + e(t))`,
//! `e ~ N(0, 1/theta_L)`, with `lambda` built from the same components the
//! sampler estimates. The common effect `f` is always indexed by years since
//! introduction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::model::{Covariates, PanelDataset, Series, TimeAxisMode, YearRecord};
use crate::spline::{NaturalBasis, SplineState};
use crate::state::ModelState;

/// Panel shape and nuisance settings of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_countries: usize,
    /// Inclusive series-length range per product; its length sets the product count.
    pub series_lengths: Vec<(usize, usize)>,
    pub last_year: i32,
    pub n_covariates: usize,
    /// How many of the covariates vary over time (the rest are broadcast).
    pub n_time_varying: usize,
    pub population_range: (f64, f64),
    pub population_growth: f64,
    /// Starting cumulative adoption as a fraction of the ceiling.
    pub initial_penetration: f64,
    pub time_axis_mode: TimeAxisMode,
    /// Redraws allowed per year before a noise draw is declared impossible.
    pub max_resamples: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_countries: 31,
            series_lengths: vec![(13, 17), (13, 17), (7, 10), (7, 10)],
            last_year: 2004,
            n_covariates: 10,
            n_time_varying: 4,
            population_range: (2.0e6, 8.0e7),
            population_growth: 0.01,
            initial_penetration: 0.01,
            time_axis_mode: TimeAxisMode::YearsSinceIntroduction,
            max_resamples: 1000,
        }
    }
}

impl GeneratorConfig {
    pub fn n_products(&self) -> usize {
        self.series_lengths.len()
    }

    pub fn max_length(&self) -> usize {
        self.series_lengths.iter().map(|r| r.1).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_countries == 0 || self.series_lengths.is_empty() {
            return Err(Error::Config("generator needs at least one country and product".into()));
        }
        if self.series_lengths.iter().any(|&(lo, hi)| lo < 3 || hi < lo) {
            return Err(Error::Config("series lengths must satisfy 3 <= min <= max".into()));
        }
        if self.n_time_varying > self.n_covariates {
            return Err(Error::Config("more time-varying covariates than covariates".into()));
        }
        let (lo, hi) = self.population_range;
        if !(lo >= 1.0 && hi >= lo) {
            return Err(Error::Config("population range must be positive and ordered".into()));
        }
        if !(self.initial_penetration > 0.0 && self.initial_penetration < 1.0) {
            return Err(Error::Config("initial penetration must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Ground-truth parameters fed to the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    /// Common time effect over years since introduction.
    pub f: SplineState,
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
    /// Standard deviation of the country-year residual `tau_i(t)`.
    pub country_sd: f64,
    /// Variance of the pair-year residual `tau_in(t)`.
    pub theta_h: f64,
    /// Observation precision; `f64::INFINITY` gives noise-free data.
    pub theta_l: f64,
    pub alpha_range: (f64, f64),
}

/// The U-shaped common effect used by [`default_truth`], before projection.
pub fn u_shape(s: f64, max_length: usize) -> f64 {
    let mid = (max_length as f64 - 1.0) / 2.0;
    0.35 + 0.15 * ((s - mid) / mid).powi(2)
}

/// Least-squares projection of `g` onto the natural spline with `knots` on `(a, b)`.
pub fn project_onto_spline(a: f64, b: f64, knots: &[f64], g: impl Fn(f64) -> f64) -> Result<SplineState> {
    let basis = NaturalBasis::new(a, b, knots)?;
    let ts: Vec<f64> = (0..=200).map(|i| a + (b - a) * i as f64 / 200.0).collect();
    let m = basis.matrix(&ts)?;
    let y = nalgebra::DVector::from_iterator(ts.len(), ts.iter().map(|&t| g(t)));
    let omega = (m.transpose() * &m)
        .cholesky()
        .ok_or_else(|| Error::Numerical("spline projection is singular".into()))?
        .solve(&(m.transpose() * y));
    Ok(SplineState { knots: knots.to_vec(), omega: omega.iter().copied().collect(), a, b })
}

/// U-shaped `f` on two knots, two active covariates (0.05 and -0.03), and
/// ceilings in the 0.68-0.80 range.
pub fn default_truth(config: &GeneratorConfig) -> Result<TruthParams> {
    let len = config.max_length();
    let (a, b) = (-0.5, len as f64 - 0.5);
    let knots = [a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0];
    let f = project_onto_spline(a, b, &knots, |s| u_shape(s, len))?;
    let mut beta = vec![0.0; config.n_covariates];
    if let Some(v) = beta.get_mut(0) {
        *v = 0.05;
    }
    if let Some(v) = beta.get_mut(1) {
        *v = -0.03;
    }
    let tau_pattern = [0.04, -0.03, 0.02, -0.03];
    let tau = (0..config.n_products()).map(|n| tau_pattern[n % tau_pattern.len()]).collect();
    Ok(TruthParams { f, beta, tau, country_sd: 0.015, theta_h: 1e-4, theta_l: 1.0e4, alpha_range: (0.68, 0.80) })
}

/// Realized ground truth of one synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: TruthParams,
    /// Ceiling per `(country, product)`.
    pub alpha: Vec<Vec<f64>>,
    /// Country-year effect `B_i(t)` keyed by country and calendar year.
    pub country_effects: Vec<Vec<(i32, f64)>>,
    /// Speed per series and record, in series order.
    pub lambda: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn country_effect(&self, country: usize, year: i32) -> Option<f64> {
        self.country_effects[country].iter().find(|(y, _)| *y == year).map(|e| e.1)
    }

    /// The true parameters laid out as a sampler state for `design`.
    /// In the time-invariant variant each pair's speed is its mean true speed.
    pub fn to_state(&self, panel: &PanelDataset, design: &Design) -> Result<ModelState> {
        let lookup = |country: usize, product: usize, year: i32| -> Option<f64> {
            let s = panel.series.iter().position(|s| s.country == country && s.product == product)?;
            let r = panel.series[s].records.iter().position(|r| r.year == year)?;
            Some(self.lambda[s][r])
        };
        let mut lambda = vec![0.0; design.n_slots()];
        let mut counts = vec![0usize; design.n_slots()];
        for o in &design.obs {
            let v = lookup(o.country, o.product, o.year)
                .ok_or_else(|| Error::Data("design does not match the simulated panel".into()))?;
            lambda[o.slot] += v;
            counts[o.slot] += 1;
        }
        for (l, c) in lambda.iter_mut().zip(&counts) {
            *l /= *c as f64;
        }
        let alpha = design.pairs.iter().map(|p| self.alpha[p.country][p.product]).collect();
        let country_effects =
            design.effects.iter().map(|e| self.country_effect(e.country, e.year).unwrap_or(0.0)).collect();
        let spline = if design.variant.has_time_effect() && design.variant != crate::design::ModelVariant::Calendar {
            self.params.f.clone()
        } else {
            SplineState::zero(design.bounds.0, design.bounds.1)
        };
        let tau_var = self.params.tau.iter().map(|t| t * t).sum::<f64>() / self.params.tau.len().max(1) as f64;
        let gamma = self.params.beta.iter().map(|&b| b != 0.0).collect();
        Ok(ModelState {
            lambda,
            alpha,
            spline,
            country_effects,
            tau: self.params.tau.clone(),
            beta: self.params.beta.clone(),
            gamma,
            theta_l: if self.params.theta_l.is_finite() { self.params.theta_l } else { 1e12 },
            theta_a: 1.0 / tau_var.max(1e-12),
            theta_b: 1.0 / self.params.country_sd.powi(2).max(1e-12),
            theta_h: self.params.theta_h,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPanel {
    pub panel: PanelDataset,
    pub truth: GroundTruth,
    /// Noise draws rejected because they made adoption negative or crossed the ceiling.
    pub truncation_events: usize,
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{:02}", i + 1)).collect()
}

/// Generates a panel from `truth`. Deterministic in `seed`.
pub fn simulate_panel(config: &GeneratorConfig, truth: &TruthParams, seed: u64) -> Result<SimulatedPanel> {
    config.validate()?;
    let n_products = config.n_products();
    if truth.beta.len() != config.n_covariates || truth.tau.len() != n_products {
        return Err(Error::Config("truth dimensions do not match the generator config".into()));
    }
    let (alo, ahi) = truth.alpha_range;
    if !(alo > 0.0 && ahi <= 1.0 && alo <= ahi) {
        return Err(Error::Config("alpha range must lie in (0, 1]".into()));
    }
    if !(truth.theta_l > 0.0) || !(truth.theta_h >= 0.0) || !(truth.country_sd >= 0.0) {
        return Err(Error::Config("truth precisions and variances must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // series layout
    let mut layout = Vec::new();
    for c in 0..config.n_countries {
        for (n, &(lo, hi)) in config.series_lengths.iter().enumerate() {
            let len = rng.random_range(lo..=hi);
            layout.push((c, n, config.last_year - len as i32 + 1, len));
        }
    }
    let first_year = layout.iter().map(|l| l.2).min().unwrap_or(config.last_year);
    let n_years = (config.last_year - first_year + 1) as usize;

    // raw covariates [k][country][year]
    let k_total = config.n_covariates;
    let mut raw = vec![0.0; k_total * config.n_countries * n_years];
    for k in 0..k_total {
        let centre = 10.0 * (k + 1) as f64;
        let spread = 1.0 + k as f64;
        for c in 0..config.n_countries {
            let level: f64 = rng.sample(StandardNormal);
            let trend: f64 = 0.05 * rng.sample::<f64, _>(StandardNormal);
            for y in 0..n_years {
                let v = if k < config.n_time_varying {
                    let wobble: f64 = rng.sample(StandardNormal);
                    level + trend * y as f64 + 0.3 * wobble
                } else {
                    level
                };
                raw[(k * config.n_countries + c) * n_years + y] = centre + spread * v;
            }
        }
    }
    let mut time_varying = vec![false; k_total];
    time_varying[..config.n_time_varying].fill(true);
    let covariates = Covariates::new(names("x", k_total), time_varying, config.n_countries, first_year, n_years, raw)?;
    let countries = names("C", config.n_countries);
    let products = names("P", n_products);

    // standardize over the final support by building a placeholder panel
    let placeholder: Vec<Series> = layout
        .iter()
        .map(|&(c, n, start, len)| Series {
            country: c,
            product: n,
            introduction_year: start,
            records: (0..len)
                .map(|t| YearRecord { year: start + t as i32, adopters: 0, cumulative_prev: 1, population: 1 })
                .collect(),
        })
        .collect();
    let standardized =
        PanelDataset::new(countries.clone(), products.clone(), placeholder, covariates.clone(), config.time_axis_mode)?
            .covariates;

    // country-year effects over the whole year span
    let country_noise =
        Normal::new(0.0, truth.country_sd.max(0.0)).map_err(|e| Error::Config(format!("country sd: {e}")))?;
    let mut country_effects = vec![Vec::with_capacity(n_years); config.n_countries];
    for (c, effects) in country_effects.iter_mut().enumerate() {
        for y in 0..n_years {
            let year = first_year + y as i32;
            let xb: f64 = (0..k_total).map(|k| truth.beta[k] * standardized.value(k, c, year).unwrap_or(0.0)).sum();
            effects.push((year, xb + country_noise.sample(&mut rng)));
        }
    }

    let pair_noise = Normal::new(0.0, truth.theta_h.sqrt()).map_err(|e| Error::Config(format!("theta_h: {e}")))?;
    let obs_sd = if truth.theta_l.is_finite() { truth.theta_l.sqrt().recip() } else { 0.0 };
    let basis = truth.f.basis()?;
    let mut alpha = vec![vec![0.0; n_products]; config.n_countries];
    let mut lambdas = Vec::with_capacity(layout.len());
    let mut series = Vec::with_capacity(layout.len());
    let mut truncation_events = 0;
    let (plo, phi) = config.population_range;
    let mut base_population = vec![0.0; config.n_countries];
    for p in base_population.iter_mut() {
        *p = (plo.ln() + (phi / plo).ln() * rng.random::<f64>()).exp();
    }

    for &(c, n, start, len) in &layout {
        let a = if ahi > alo { rng.random_range(alo..=ahi) } else { alo };
        alpha[c][n] = a;
        let population = |year: i32| -> u64 {
            let growth = (1.0 + config.population_growth).powi(year - first_year);
            (base_population[c] * growth).round() as u64
        };
        let mut cumulative = ((config.initial_penetration * a * population(start) as f64).round() as u64).max(1);
        let mut records = Vec::with_capacity(len);
        let mut lam_series = Vec::with_capacity(len);
        for t in 0..len {
            let year = start + t as i32;
            let m = population(year);
            let b = country_effects[c][(year - first_year) as usize].1;
            let f = basis.evaluate(&truth.f.omega, t as f64)?;
            let lam = f + b + truth.tau[n] + pair_noise.sample(&mut rng);
            if lam <= 0.0 {
                return Err(Error::Config(format!("true speed {lam} is not positive")));
            }
            let ceiling = m as f64 * a;
            let hazard = lam * (1.0 - cumulative as f64 / ceiling);
            let mut draws = 0;
            let adopters = loop {
                let e: f64 = obs_sd * rng.sample::<f64, _>(StandardNormal);
                let y = (cumulative as f64 * (hazard + e)).round();
                if y >= 0.0 && (cumulative as f64 + y) < ceiling {
                    break y as u64;
                }
                truncation_events += 1;
                draws += 1;
                if draws > config.max_resamples {
                    return Err(Error::Numerical(format!(
                        "noise cannot keep series {}/{} below its ceiling",
                        countries[c], products[n]
                    )));
                }
            };
            records.push(YearRecord { year, adopters, cumulative_prev: cumulative, population: m });
            lam_series.push(lam);
            cumulative += adopters;
        }
        lambdas.push(lam_series);
        series.push(Series { country: c, product: n, introduction_year: start, records });
    }

    let panel = PanelDataset::new(countries, products, series, covariates, config.time_axis_mode)?;
    Ok(SimulatedPanel {
        panel,
        truth: GroundTruth { params: truth.clone(), alpha, country_effects, lambda: lambdas },
        truncation_events,
    })
}

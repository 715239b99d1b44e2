//! Joint-distribution test of the sampler on a small panel.
//!
//! Two simulators target the same joint law of parameters and data:
//! the marginal-conditional one draws parameters from the prior and data
//! given parameters; the successive-conditional one alternates a full
//! sampler sweep with a fresh data draw. Moments of the parameters must
//! agree if every block leaves the posterior invariant.
//!
//! The joint includes the two support constraints the model imposes
//! (positive speeds, ceiling above the observed penetration), so both
//! simulators reject or redraw to honour them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::design::{Design, ModelVariant};
use crate::diagnostics::batch_means_se;
use crate::error::{Error, Result};
use crate::model::{Covariates, HyperParams, PanelDataset, Series, TimeAxisMode, YearRecord};
use crate::sampler::{self, Step, STEP_ORDER};
use crate::spline::SplineState;
use crate::state::ModelState;

/// 2 countries x 2 products x 5 years with 3 time-varying covariates.
pub fn toy_panel() -> Result<PanelDataset> {
    let (first_year, n_years, n_countries) = (2000, 5, 2);
    let mut raw = Vec::new();
    for k in 0..3 {
        for c in 0..n_countries {
            for y in 0..n_years {
                let t = (k * 10 + c * 5 + y) as f64;
                raw.push((1.3 * t + k as f64).sin() + 0.1 * (k as f64 + 1.0) * y as f64);
            }
        }
    }
    let covariates = Covariates::new(
        vec!["x1".into(), "x2".into(), "x3".into()],
        vec![true; 3],
        n_countries,
        first_year,
        n_years,
        raw,
    )?;
    let series = (0..n_countries)
        .flat_map(|c| {
            (0..2).map(move |n| Series {
                country: c,
                product: n,
                introduction_year: first_year,
                records: (0..n_years)
                    .map(|t| YearRecord {
                        year: first_year + t as i32,
                        adopters: 50,
                        cumulative_prev: 100 + 50 * t as u64,
                        population: 10_000,
                    })
                    .collect(),
            })
        })
        .collect();
    PanelDataset::new(
        vec!["C1".into(), "C2".into()],
        vec!["P1".into(), "P2".into()],
        series,
        covariates,
        TimeAxisMode::YearsSinceIntroduction,
    )
}

/// Proper priors and a wide speed residual so both simulators mix quickly.
/// The Gamma factor on speeds is flattened (shape 1, huge scale).
pub fn toy_hyper() -> HyperParams {
    HyperParams {
        upsilon: 7.0,
        w: 0.5,
        poisson_rate: 1.0,
        precision_shape: 20.0,
        precision_rate: 0.2,
        theta_h: 0.01,
        lambda_prior_shape: 1.0,
        lambda_prior_scale: 1e12,
        rw_step: 0.1,
        spline_coef_precision: 25.0,
        max_knots: 3,
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("valid gamma prior").sample(rng)
}

/// One parameter draw from the prior, conditioned on positive speeds.
pub fn draw_prior<R: Rng + ?Sized>(design: &Design, hyper: &HyperParams, rng: &mut R) -> Result<ModelState> {
    let (a0, b0) = (hyper.precision_shape, hyper.precision_rate);
    for _ in 0..1_000_000 {
        let theta_l = gamma(a0, b0, rng);
        let theta_a = gamma(a0, b0, rng);
        let theta_b = gamma(a0, b0, rng);
        let tau: Vec<f64> = (0..design.products.len()).map(|_| normal(rng) / theta_a.sqrt()).collect();

        let k_cov = design.n_covariates();
        let gamma_ind: Vec<bool> = (0..k_cov).map(|_| rng.random::<f64>() < hyper.w).collect();
        let mut beta = vec![0.0; k_cov];
        let active = crate::selection::active_set(&gamma_ind);
        if !active.is_empty() {
            let cov = nalgebra::DMatrix::from_fn(active.len(), active.len(), |i, j| {
                design.r[(active[i], active[j])] * hyper.upsilon / theta_b
            });
            let l = cov.cholesky().ok_or_else(|| Error::Numerical("slab covariance".into()))?.unpack();
            let z = nalgebra::DVector::from_iterator(active.len(), (0..active.len()).map(|_| normal(rng)));
            let b = l * z;
            for (i, &k) in active.iter().enumerate() {
                beta[k] = b[i];
            }
        }
        let mut state = ModelState {
            lambda: vec![0.0; design.n_slots()],
            alpha: design.pairs.iter().map(|_| 1.0 - rng.random::<f64>()).collect(),
            spline: SplineState::zero(design.bounds.0, design.bounds.1),
            country_effects: vec![0.0; design.effects.len()],
            tau,
            beta,
            gamma: gamma_ind,
            theta_l,
            theta_a,
            theta_b,
            theta_h: hyper.theta_h,
        };
        for e in 0..design.effects.len() {
            state.country_effects[e] = state.covariate_predictor(design, e) + normal(rng) / theta_b.sqrt();
        }
        if design.variant.has_time_effect() {
            let poisson = Poisson::new(hyper.poisson_rate).map_err(|e| Error::Config(e.to_string()))?;
            let k = loop {
                let k = poisson.sample(rng) as usize;
                if k <= hyper.max_knots {
                    break k;
                }
            };
            let (a, b) = design.bounds;
            let mut knots: Vec<f64> = (0..k).map(|_| rng.random_range(a..b)).collect();
            knots.sort_by(f64::total_cmp);
            let omega = (0..k + 2).map(|_| normal(rng) / hyper.spline_coef_precision.sqrt()).collect();
            state.spline = SplineState { knots, omega, a, b };
            if state.spline.validate().is_err() {
                continue;
            }
        }
        let f = state.f_on_grid(design)?;
        let mu = sampler::pull_means(design, &state, &f);
        let sd = state.theta_h.sqrt();
        for (s, obs) in design.slot_obs.iter().enumerate() {
            // one slot per observation in the time-varying variants
            state.lambda[s] = mu[obs[0]] + sd * normal(rng);
        }
        if state.lambda.iter().all(|&l| l > 0.0) {
            return Ok(state);
        }
    }
    Err(Error::Numerical("prior draws never produced positive speeds".into()))
}

/// Draws the ratios of pair `p` given `state`, running the saturation recursion.
pub fn draw_pair_ratios<R: Rng + ?Sized>(design: &Design, state: &ModelState, p: usize, rng: &mut R) -> Vec<f64> {
    let range = design.pairs[p].obs.clone();
    let alpha = state.alpha[p];
    let sd = 1.0 / state.theta_l.sqrt();
    let mut sat = design.obs[range.start].saturation;
    range
        .map(|j| {
            let r = state.lambda[design.obs[j].slot] * (1.0 - sat / alpha) + sd * normal(rng);
            sat *= 1.0 + r;
            r
        })
        .collect()
}

fn floor_of(design: &Design, p: usize, ratios: &[f64]) -> f64 {
    let mut sat = design.obs[design.pairs[p].obs.start].saturation;
    let mut floor = sat;
    for r in ratios {
        sat *= 1.0 + r;
        floor = floor.max(sat);
    }
    floor
}

/// A named scalar summary of a state.
pub type Scalar = (String, Box<dyn Fn(&ModelState) -> f64>);

/// Named scalar functions whose first and second moments are compared.
pub fn tested_scalars(design: &Design) -> Vec<Scalar> {
    let mut out: Vec<Scalar> = vec![
        ("theta_L".into(), Box::new(|s: &ModelState| s.theta_l)),
        ("theta_A".into(), Box::new(|s: &ModelState| s.theta_a)),
        ("theta_B".into(), Box::new(|s: &ModelState| s.theta_b)),
    ];
    for n in 0..design.products.len() {
        out.push((format!("tau[{n}]"), Box::new(move |s: &ModelState| s.tau[n])));
    }
    for k in 0..design.n_covariates() {
        out.push((format!("beta[{k}]"), Box::new(move |s: &ModelState| s.beta[k])));
    }
    for p in 0..design.pairs.len() {
        out.push((format!("alpha[{p}]"), Box::new(move |s: &ModelState| s.alpha[p])));
        let slot = design.obs[design.pairs[p].obs.start + 2].slot;
        out.push((format!("lambda[{p},2]"), Box::new(move |s: &ModelState| s.lambda[slot])));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct GewekeConfig {
    pub n_marginal: usize,
    pub n_successive: usize,
    pub n_batches: usize,
    pub seed: u64,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        Self { n_marginal: 100_000, n_successive: 200_000, n_batches: 50, seed: 2024 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub name: String,
    pub marginal: f64,
    pub successive: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeReport {
    pub checks: Vec<MomentCheck>,
}

impl GewekeReport {
    /// Share of moments with `|z| < threshold`.
    pub fn pass_fraction(&self, threshold: f64) -> f64 {
        let ok = self.checks.iter().filter(|c| c.z.abs() < threshold).count();
        ok as f64 / self.checks.len() as f64
    }
}

/// Marginal-conditional draws: prior parameters, then data, rejecting the
/// whole draw when a ceiling falls below the simulated penetration.
pub fn marginal_conditional<R: Rng + ?Sized>(
    design: &Design,
    hyper: &HyperParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ModelState>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let state = draw_prior(design, hyper, rng)?;
        let ok = (0..design.pairs.len()).all(|p| {
            let ratios = draw_pair_ratios(design, &state, p, rng);
            state.alpha[p] > floor_of(design, p, &ratios)
        });
        if ok {
            out.push(state);
        }
    }
    Ok(out)
}

/// Successive-conditional draws: sampler sweep, then fresh data given the
/// parameters (per pair, redrawn until the ceiling clears the penetration).
pub fn successive_conditional<R: Rng + ?Sized>(
    design: &mut Design,
    hyper: &HyperParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ModelState>> {
    let mut state = marginal_conditional(design, hyper, 1, rng)?.remove(0);
    refresh_data(design, &state, rng)?;
    let mut out = Vec::with_capacity(n);
    for it in 0..n {
        for step in STEP_ORDER {
            let ctx = |e: Error| e.context(format!("iteration {it}, {step:?}"));
            match step {
                Step::Precisions => sampler::draw_precisions(design, &mut state, hyper, rng).map_err(ctx)?,
                Step::RandomEffects => sampler::draw_random_effects(design, &mut state, hyper, rng).map_err(ctx)?,
                Step::Gamma => {
                    sampler::draw_gamma(design, &mut state, hyper, rng);
                }
                Step::Beta => sampler::draw_coefficients(design, &mut state, hyper, rng).map_err(ctx)?,
                Step::Spline => {
                    sampler::draw_spline(design, &mut state, hyper, rng).map_err(ctx)?;
                }
                Step::Alpha => {
                    sampler::mh_alpha(design, &mut state, rng);
                }
                Step::Lambda => {
                    sampler::mh_lambda(design, &mut state, hyper, hyper.rw_step, rng).map_err(ctx)?;
                }
            }
        }
        refresh_data(design, &state, rng)?;
        out.push(state.clone());
    }
    Ok(out)
}

fn refresh_data<R: Rng + ?Sized>(design: &mut Design, state: &ModelState, rng: &mut R) -> Result<()> {
    for p in 0..design.pairs.len() {
        let mut tries = 0;
        let ratios = loop {
            let ratios = draw_pair_ratios(design, state, p, rng);
            if state.alpha[p] > floor_of(design, p, &ratios) {
                break ratios;
            }
            tries += 1;
            if tries > 100_000 {
                return Err(Error::Numerical(format!("no data draw keeps pair {p} below its ceiling")));
            }
        };
        design.set_pair_ratios(p, &ratios);
    }
    Ok(())
}

/// Runs both simulators on the toy panel and compares first and second moments.
pub fn run_geweke(config: &GewekeConfig) -> Result<GewekeReport> {
    let panel = toy_panel()?;
    let mut design = Design::compile(&panel, ModelVariant::SinceIntro)?;
    let hyper = toy_hyper();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let marginal = marginal_conditional(&design, &hyper, config.n_marginal, &mut rng)?;
    let successive = successive_conditional(&mut design, &hyper, config.n_successive, &mut rng)?;

    let mut checks = Vec::new();
    for (name, g) in tested_scalars(&design) {
        for power in [1, 2] {
            let m: Vec<f64> = marginal.iter().map(|s| g(s).powi(power)).collect();
            let s: Vec<f64> = successive.iter().map(|s| g(s).powi(power)).collect();
            let mean_m = m.iter().sum::<f64>() / m.len() as f64;
            let mean_s = s.iter().sum::<f64>() / s.len() as f64;
            let se =
                (batch_means_se(&m, config.n_batches)?.powi(2) + batch_means_se(&s, config.n_batches)?.powi(2)).sqrt();
            let z = if se > 0.0 { (mean_s - mean_m) / se } else { 0.0 };
            let label = if power == 1 { name.clone() } else { format!("{name}^2") };
            checks.push(MomentCheck { name: label, marginal: mean_m, successive: mean_s, z });
        }
    }
    Ok(GewekeReport { checks })
}

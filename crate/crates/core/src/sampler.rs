//! Metropolis-within-Gibbs sampler.
//!
//! Each iteration runs the blocks of [`STEP_ORDER`]:
//! precisions, random effects, inclusion indicators, coefficients, the
//! spline, ceilings and finally the speed field. Random effects use the
//! standard conjugate updates for the stated model, followed by exact
//! translation moves along the directions the likelihood cannot see
//! (shifting a constant between `f`, the product effects and the country
//! effects).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bars::{self, WorkingData};
use crate::design::{Design, ModelVariant};
use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::selection::{self, SelectionSystem};
use crate::spline::SplineState;
use crate::state::{self, ModelState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Precisions,
    RandomEffects,
    Gamma,
    Beta,
    Spline,
    Alpha,
    Lambda,
}

/// Block order within one iteration.
pub const STEP_ORDER: [Step; 7] =
    [Step::Precisions, Step::RandomEffects, Step::Gamma, Step::Beta, Step::Spline, Step::Alpha, Step::Lambda];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub rng_seed: u64,
    pub model_variant: ModelVariant,
    /// Burn-in iterations between random-walk step adjustments.
    pub tune_interval: usize,
    pub target_acceptance: f64,
}

impl SamplerConfig {
    /// Thinning 10, burn-in 20% of the iterations, 4 chains.
    pub fn new(n_iterations: usize, model_variant: ModelVariant, rng_seed: u64) -> Self {
        Self {
            n_iterations,
            burn_in: n_iterations / 5,
            thin: 10,
            n_chains: 4,
            rng_seed,
            model_variant,
            tune_interval: 50,
            target_acceptance: 0.44,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 || self.thin == 0 || self.n_chains == 0 {
            return Err(Error::Config("iterations, thinning and chain count must be positive".into()));
        }
        if self.burn_in > self.n_iterations {
            return Err(Error::Config(format!(
                "burn-in {} exceeds the {} iterations",
                self.burn_in, self.n_iterations
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) || self.tune_interval == 0 {
            return Err(Error::Config("invalid random-walk tuning settings".into()));
        }
        Ok(())
    }

    /// Number of draws a chain keeps.
    pub fn n_draws(&self) -> usize {
        (self.n_iterations - self.burn_in.min(self.n_iterations)) / self.thin
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub alpha: f64,
    pub lambda: f64,
    pub knots: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    accepted: u64,
    proposed: u64,
}

impl Tally {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Thinned draws of one chain plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub chain: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub thin: usize,
    pub variant: ModelVariant,
    pub draws: Vec<ModelState>,
    /// `-2 log L` per stored draw.
    pub deviance: Vec<f64>,
    /// `f` on the design grid per stored draw.
    pub f_grid: Vec<Vec<f64>>,
    /// Conditional inclusion probabilities from the last sweep before each stored draw.
    pub inclusion_probs: Vec<Vec<f64>>,
    /// Post burn-in acceptance fractions.
    pub acceptance_rates: AcceptanceRates,
    /// Random-walk sd after burn-in tuning.
    pub rw_step: f64,
    /// Knot proposals refused as ill-conditioned or degenerate.
    pub refused_knot_moves: u64,
    /// Block order actually executed in one iteration.
    pub step_log: Vec<Step>,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn scalar(&self, select: impl Fn(&ModelState) -> f64) -> Vec<f64> {
        self.draws.iter().map(select).collect()
    }

    /// Share of draws including each covariate.
    pub fn inclusion(&self) -> Result<Vec<f64>> {
        let gammas: Vec<Vec<bool>> = self.draws.iter().map(|d| d.gamma.clone()).collect();
        selection::inclusion_probabilities(&gammas)
    }

    /// Mean conditional inclusion probability per covariate.
    pub fn inclusion_rao_blackwell(&self) -> Result<Vec<f64>> {
        selection::rao_blackwell_inclusion(&self.inclusion_probs)
    }
}

/// Independent random streams for one chain: one per block plus one for
/// the starting point. Runs that share a seed but differ in
/// hyperparameters then reuse the same random numbers block by block.
pub struct BlockRngs {
    pub init: ChaCha8Rng,
    blocks: Vec<ChaCha8Rng>,
}

impl BlockRngs {
    pub fn new(seed: u64, chain: usize) -> Self {
        let stream = |i: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((chain * (STEP_ORDER.len() + 1) + i) as u64);
            rng
        };
        Self { init: stream(0), blocks: (1..=STEP_ORDER.len()).map(stream).collect() }
    }

    pub fn block(&mut self, step: Step) -> &mut ChaCha8Rng {
        let i = STEP_ORDER.iter().position(|&s| s == step).expect("every step is listed");
        &mut self.blocks[i]
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, what: &str, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::Numerical(format!("{what}: Gamma({shape}, {rate}) is not a valid conditional")));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(format!("{what}: {e}")))?;
    Ok(g.sample(rng))
}

/// Per-observation pull mean `f + B + tau`.
pub fn pull_means(design: &Design, state: &ModelState, f_grid: &[f64]) -> Vec<f64> {
    design.obs.iter().map(|o| f_grid[o.grid] + state.country_effects[o.effect] + state.tau[o.product]).collect()
}

/// Residuals `B - X beta` over the effect cells.
fn country_residuals(design: &Design, state: &ModelState) -> Vec<f64> {
    (0..design.effects.len()).map(|e| state.country_effects[e] - state.covariate_predictor(design, e)).collect()
}

/// Step 1: conjugate Gamma draws of `theta_L`, `theta_A` and `theta_B`.
pub fn draw_precisions<R: Rng + ?Sized>(
    design: &Design,
    state: &mut ModelState,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let (a0, b0) = (hyper.precision_shape, hyper.precision_rate);
    let rss = state::residual_sum_of_squares(design, state);
    let tau_ss: f64 = state.tau.iter().map(|t| t * t).sum();
    let b_ss: f64 = country_residuals(design, state).iter().map(|r| r * r).sum();
    let slab = selection::slab_quadratic_form(&design.r, &state.gamma, &state.beta, hyper.upsilon)?;
    if !(rss.is_finite() && tau_ss.is_finite() && b_ss.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite residual sums (obs {rss}, product {tau_ss}, country {b_ss}); state: {}",
            serde_json::to_string(state).unwrap_or_default()
        )));
    }
    let p_active = state.gamma.iter().filter(|&&g| g).count();
    state.theta_l = gamma_draw(a0 + 0.5 * design.n_obs() as f64, b0 + 0.5 * rss, "theta_L", rng)?;
    state.theta_a = gamma_draw(a0 + 0.5 * state.tau.len() as f64, b0 + 0.5 * tau_ss, "theta_A", rng)?;
    state.theta_b =
        gamma_draw(a0 + 0.5 * (design.effects.len() + p_active) as f64, b0 + 0.5 * (b_ss + slab), "theta_B", rng)?;
    Ok(())
}

/// Step 2: product effects, then country-year effects, then translation moves.
pub fn draw_random_effects<R: Rng + ?Sized>(
    design: &Design,
    state: &mut ModelState,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let h = 1.0 / state.theta_h;
    let f = state.f_on_grid(design)?;
    for n in 0..state.tau.len() {
        let obs = &design.product_obs[n];
        let sum: f64 = obs
            .iter()
            .map(|&j| {
                let o = &design.obs[j];
                state.lambda[o.slot] - f[o.grid] - state.country_effects[o.effect]
            })
            .sum();
        let prec = state.theta_a + obs.len() as f64 * h;
        state.tau[n] = h * sum / prec + normal(rng) / prec.sqrt();
    }
    for e in 0..design.effects.len() {
        let cell = &design.effects[e];
        let sum: f64 = cell
            .obs
            .iter()
            .map(|&j| {
                let o = &design.obs[j];
                state.lambda[o.slot] - f[o.grid] - state.tau[o.product]
            })
            .sum();
        let prec = state.theta_b + cell.obs.len() as f64 * h;
        let mean = (state.theta_b * state.covariate_predictor(design, e) + h * sum) / prec;
        state.country_effects[e] = mean + normal(rng) / prec.sqrt();
    }
    if !state.tau.iter().chain(&state.country_effects).all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite random effect draw".into()));
    }
    translate_effects(design, state, hyper, rng)
}

/// Gaussian draw of a shift `c` with log density `-prec/2 c^2 + lin c`.
fn shift<R: Rng + ?Sized>(prec: f64, lin: f64, rng: &mut R) -> f64 {
    lin / prec + normal(rng) / prec.sqrt()
}

/// Exact moves along the three constant-shift ridges of the predictor.
/// Each keeps `f + B + tau` fixed, so only prior terms enter, and the shift
/// is drawn from its Gaussian conditional.
pub fn translate_effects<R: Rng + ?Sized>(
    design: &Design,
    state: &mut ModelState,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let n_tau = state.tau.len() as f64;
    let n_b = state.country_effects.len() as f64;
    let tau_sum: f64 = state.tau.iter().sum();
    let b_resid_sum: f64 = country_residuals(design, state).iter().sum();

    // tau <-> B
    let c =
        shift(n_tau * state.theta_a + n_b * state.theta_b, -state.theta_a * tau_sum + state.theta_b * b_resid_sum, rng);
    state.tau.iter_mut().for_each(|t| *t += c);
    state.country_effects.iter_mut().for_each(|b| *b -= c);

    if design.variant.has_time_effect() {
        let delta = state.spline.basis()?.constant_coefficients();
        let tp = hyper.spline_coef_precision;
        let dd: f64 = delta.iter().map(|d| d * d).sum();
        let omega_dot = |s: &SplineState| -> f64 { s.omega.iter().zip(&delta).map(|(w, d)| w * d).sum() };

        // tau <-> f
        let tau_sum: f64 = state.tau.iter().sum();
        let c = shift(n_tau * state.theta_a + tp * dd, -state.theta_a * tau_sum + tp * omega_dot(&state.spline), rng);
        state.tau.iter_mut().for_each(|t| *t += c);
        state.spline.omega.iter_mut().zip(&delta).for_each(|(w, d)| *w -= c * d);

        // B <-> f
        let b_resid_sum: f64 = country_residuals(design, state).iter().sum();
        let c = shift(n_b * state.theta_b + tp * dd, -state.theta_b * b_resid_sum + tp * omega_dot(&state.spline), rng);
        state.country_effects.iter_mut().for_each(|b| *b += c);
        state.spline.omega.iter_mut().zip(&delta).for_each(|(w, d)| *w -= c * d);
    }
    Ok(())
}

/// Step 3: inclusion indicators in a fresh random order, with `beta` and
/// `theta_B` integrated out. Returns the conditional inclusion probabilities
/// of the sweep.
pub fn draw_gamma<R: Rng + ?Sized>(
    design: &Design,
    state: &mut ModelState,
    hyper: &HyperParams,
    rng: &mut R,
) -> Vec<f64> {
    let k = design.n_covariates();
    if k == 0 {
        return Vec::new();
    }
    let system = SelectionSystem::new(&design.x, &design.xtx, &design.r, &state.country_effects);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    selection::gamma_full_conditional(&system, &mut state.gamma, hyper, &order, rng)
}

/// Step 4: `theta_B | gamma, B`, then `beta | gamma, theta_B, B`. Together
/// with step 3 this draws `(gamma, theta_B, beta)` jointly given `B`.
pub fn draw_coefficients<R: Rng + ?Sized>(
    design: &Design,
    state: &mut ModelState,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<()> {
    let system = SelectionSystem::new(&design.x, &design.xtx, &design.r, &state.country_effects);
    state.theta_b = selection::draw_theta_b_collapsed(&system, &state.gamma, hyper, rng)?;
    state.beta = selection::beta_full_conditional(&system, &state.gamma, state.theta_b, hyper, rng)?;
    Ok(())
}

/// Step 5: one knot move on the working response `lambda - B - tau`.
pub fn draw_spline<R: Rng + ?Sized>(
    design: &Design,
    state: &mut ModelState,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<bars::MoveOutcome> {
    if !design.variant.has_time_effect() {
        return Ok(bars::MoveOutcome::default());
    }
    let values: Vec<(usize, f64)> = design
        .obs
        .iter()
        .map(|o| (o.grid, state.lambda[o.slot] - state.country_effects[o.effect] - state.tau[o.product]))
        .collect();
    let data = WorkingData::from_values(design.grid.clone(), &values, 1.0 / state.theta_h);
    let (spline, _, outcome) = bars::bars_step(&state.spline, &data, hyper, rng)?;
    state.spline = spline;
    Ok(outcome)
}

fn pair_log_likelihood(design: &Design, state: &ModelState, pair: usize, alpha: f64) -> f64 {
    design.obs[design.pairs[pair].obs.clone()]
        .iter()
        .map(|o| {
            let e = state::residual(o.ratio, state.lambda[o.slot], o.saturation, alpha);
            -0.5 * state.theta_l * e * e
        })
        .sum()
}

/// Log acceptance ratio of moving pair `pair` to ceiling `proposal`.
pub fn alpha_log_acceptance(design: &Design, state: &ModelState, pair: usize, proposal: f64) -> f64 {
    pair_log_likelihood(design, state, pair, proposal) - pair_log_likelihood(design, state, pair, state.alpha[pair])
}

/// Step 6: independence proposals from the uniform prior on `(floor, 1]`.
/// Returns the number of accepted moves.
pub fn mh_alpha<R: Rng + ?Sized>(design: &Design, state: &mut ModelState, rng: &mut R) -> usize {
    let mut accepted = 0;
    for p in 0..design.pairs.len() {
        let floor = design.pairs[p].alpha_floor;
        let proposal = 1.0 - rng.random::<f64>() * (1.0 - floor);
        let log_a = alpha_log_acceptance(design, state, p, proposal);
        if rng.random::<f64>().ln() < log_a {
            state.alpha[p] = proposal;
            accepted += 1;
        }
    }
    accepted
}

/// Log target of one speed slot, up to a constant: observation term,
/// Gaussian pulls toward `f + B + tau`, and the Gamma prior factor.
#[derive(Debug, Clone, Copy)]
pub struct SpeedTarget {
    quad: f64,
    lin: f64,
    shape: f64,
    scale: f64,
}

impl SpeedTarget {
    pub fn new(design: &Design, state: &ModelState, hyper: &HyperParams, slot: usize, mu: &[f64]) -> Self {
        let h = 1.0 / state.theta_h;
        let (mut quad, mut lin) = (0.0, 0.0);
        for &j in &design.slot_obs[slot] {
            let o = &design.obs[j];
            let c = 1.0 - o.saturation / state.alpha[o.pair];
            quad += state.theta_l * c * c + h;
            lin += state.theta_l * o.ratio * c + h * mu[j];
        }
        Self { quad, lin, shape: hyper.lambda_prior_shape, scale: hyper.lambda_prior_scale }
    }

    pub fn log_density(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -0.5 * self.quad * lambda * lambda + self.lin * lambda + (self.shape - 1.0) * lambda.ln() - lambda / self.scale
    }
}

/// Step 7: random-walk Metropolis per speed slot. Returns accepted moves.
pub fn mh_lambda<R: Rng + ?Sized>(
    design: &Design,
    state: &mut ModelState,
    hyper: &HyperParams,
    rw_step: f64,
    rng: &mut R,
) -> Result<usize> {
    let f = state.f_on_grid(design)?;
    let mu = pull_means(design, state, &f);
    let mut accepted = 0;
    for s in 0..design.n_slots() {
        let target = SpeedTarget::new(design, state, hyper, s, &mu);
        let current = state.lambda[s];
        let proposal = current + rw_step * normal(rng);
        let log_u = rng.random::<f64>().ln();
        if proposal > 0.0 && log_u < target.log_density(proposal) - target.log_density(current) {
            state.lambda[s] = proposal;
            accepted += 1;
        }
    }
    Ok(accepted)
}

/// Dispersed but sensible starting point: random ceilings, speeds from the
/// observed ratios, and effects from their moment estimates.
pub fn initial_state<R: Rng + ?Sized>(design: &Design, hyper: &HyperParams, rng: &mut R) -> Result<ModelState> {
    let alpha: Vec<f64> = design.pairs.iter().map(|p| 1.0 - rng.random::<f64>() * (1.0 - p.alpha_floor)).collect();
    let mut lambda = vec![0.0; design.n_slots()];
    for (s, obs) in design.slot_obs.iter().enumerate() {
        let mean = obs
            .iter()
            .map(|&j| {
                let o = &design.obs[j];
                o.ratio / (1.0 - o.saturation / alpha[o.pair]).max(0.05)
            })
            .sum::<f64>()
            / obs.len() as f64;
        lambda[s] = (mean * (0.1 * normal(rng)).exp()).clamp(0.05, 2.0);
    }
    let (a, b) = design.bounds;
    let mut spline = SplineState::zero(a, b);
    let mean_lambda = lambda.iter().sum::<f64>() / lambda.len() as f64;
    let f_level = if design.variant.has_time_effect() { mean_lambda } else { 0.0 };
    spline.omega = spline.basis()?.constant_coefficients().iter().map(|d| d * f_level).collect();

    let mut country_effects = vec![0.0; design.effects.len()];
    for (e, cell) in design.effects.iter().enumerate() {
        let sum: f64 = cell.obs.iter().map(|&j| lambda[design.obs[j].slot] - f_level).sum();
        country_effects[e] = sum / cell.obs.len() as f64;
    }
    let tau: Vec<f64> = design
        .product_obs
        .iter()
        .map(|obs| {
            if obs.is_empty() {
                return 0.0;
            }
            obs.iter()
                .map(|&j| {
                    let o = &design.obs[j];
                    lambda[o.slot] - f_level - country_effects[o.effect]
                })
                .sum::<f64>()
                / obs.len() as f64
        })
        .collect();
    let k = design.n_covariates();
    let mut state = ModelState {
        lambda,
        alpha,
        spline,
        country_effects,
        tau,
        beta: vec![0.0; k],
        gamma: vec![false; k],
        theta_l: 1.0,
        theta_a: 1.0,
        theta_b: 1.0,
        theta_h: hyper.theta_h,
    };
    let mean_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64;
    state.theta_a = 1.0 / mean_sq(&state.tau).max(1e-4);
    let b_mean = state.country_effects.iter().sum::<f64>() / state.country_effects.len().max(1) as f64;
    let b_centered: Vec<f64> = state.country_effects.iter().map(|b| b - b_mean).collect();
    state.theta_b = 1.0 / mean_sq(&b_centered).max(1e-4);
    state.theta_l = design.n_obs() as f64 / state::residual_sum_of_squares(design, &state).max(1e-8);
    Ok(state)
}

/// Runs chain `chain` from its default starting point.
pub fn run_chain(design: &Design, hyper: &HyperParams, config: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rngs = BlockRngs::new(config.rng_seed, chain);
    let start = initial_state(design, hyper, &mut rngs.init)?;
    run_chain_from(design, hyper, config, chain, start, &mut rngs)
}

/// Runs one chain from `state`.
pub fn run_chain_from(
    design: &Design,
    hyper: &HyperParams,
    config: &SamplerConfig,
    chain: usize,
    mut state: ModelState,
    rngs: &mut BlockRngs,
) -> Result<ChainOutput> {
    config.validate()?;
    hyper.validate()?;
    if config.model_variant != design.variant {
        return Err(Error::Config(format!(
            "sampler configured for {} but the design was compiled for {}",
            config.model_variant, design.variant
        )));
    }
    state.check(design).map_err(|e| e.context("initial state"))?;

    let mut rw_step = hyper.rw_step;
    let (mut alpha_tally, mut lambda_tally, mut knot_tally) = (Tally::default(), Tally::default(), Tally::default());
    let mut window = Tally::default();
    let mut refused = 0u64;
    let n_draws = config.n_draws();
    let mut out = ChainOutput {
        chain,
        seed: config.rng_seed,
        burn_in: config.burn_in,
        thin: config.thin,
        variant: design.variant,
        draws: Vec::with_capacity(n_draws),
        deviance: Vec::with_capacity(n_draws),
        f_grid: Vec::with_capacity(n_draws),
        inclusion_probs: Vec::with_capacity(n_draws),
        acceptance_rates: AcceptanceRates::default(),
        rw_step,
        refused_knot_moves: 0,
        step_log: Vec::with_capacity(STEP_ORDER.len()),
    };
    let mut probs = vec![0.0; design.n_covariates()];

    for it in 0..config.n_iterations {
        let sampling = it >= config.burn_in;
        let log_steps = it == 0;
        for step in STEP_ORDER {
            let ctx = |e: Error| e.context(format!("iteration {it}, {step:?}"));
            let rng = rngs.block(step);
            match step {
                Step::Precisions => draw_precisions(design, &mut state, hyper, rng).map_err(ctx)?,
                Step::RandomEffects => draw_random_effects(design, &mut state, hyper, rng).map_err(ctx)?,
                Step::Gamma => probs = draw_gamma(design, &mut state, hyper, rng),
                Step::Beta => {
                    if design.n_covariates() > 0 {
                        draw_coefficients(design, &mut state, hyper, rng).map_err(ctx)?;
                    }
                }
                Step::Spline => {
                    if design.variant.has_time_effect() {
                        let outcome = draw_spline(design, &mut state, hyper, rng).map_err(ctx)?;
                        refused += outcome.refused as u64;
                        if sampling {
                            knot_tally.record(outcome.accepted);
                        }
                    }
                }
                Step::Alpha => {
                    let acc = mh_alpha(design, &mut state, rng);
                    if sampling {
                        alpha_tally.accepted += acc as u64;
                        alpha_tally.proposed += design.pairs.len() as u64;
                    }
                }
                Step::Lambda => {
                    let acc = mh_lambda(design, &mut state, hyper, rw_step, rng).map_err(ctx)? as u64;
                    let n = design.n_slots() as u64;
                    if sampling {
                        lambda_tally.accepted += acc;
                        lambda_tally.proposed += n;
                    } else {
                        window.accepted += acc;
                        window.proposed += n;
                    }
                }
            }
            if log_steps {
                out.step_log.push(step);
            }
        }
        if log_steps {
            assert_eq!(out.step_log, STEP_ORDER, "blocks ran out of order");
        }

        if !sampling && (it + 1) % config.tune_interval == 0 {
            let rate = window.rate();
            rw_step *= (rate / config.target_acceptance).clamp(0.5, 2.0);
            window = Tally::default();
        }

        if sampling && (it + 1 - config.burn_in).is_multiple_of(config.thin) {
            state.check(design).map_err(|e| e.context(format!("stored draw at iteration {it}")))?;
            let dev = state::deviance(design, &state);
            if !dev.is_finite() {
                return Err(Error::Numerical(format!("non-finite deviance at iteration {it}")));
            }
            out.f_grid.push(state.f_on_grid(design)?);
            out.deviance.push(dev);
            out.inclusion_probs.push(probs.clone());
            out.draws.push(state.clone());
        }
    }
    out.acceptance_rates =
        AcceptanceRates { alpha: alpha_tally.rate(), lambda: lambda_tally.rate(), knots: knot_tally.rate() };
    out.rw_step = rw_step;
    out.refused_knot_moves = refused;
    Ok(out)
}

/// Runs `config.n_chains` chains, in parallel when the `parallel` feature is on.
pub fn run_chains(design: &Design, hyper: &HyperParams, config: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    crate::par::map_indexed(config.n_chains, |c| run_chain(design, hyper, config, c)).into_iter().collect()
}

/// Runs the chains one after another on the calling thread.
pub fn run_chains_sequential(design: &Design, hyper: &HyperParams, config: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    crate::par::map_indexed_sequential(config.n_chains, |c| run_chain(design, hyper, config, c)).into_iter().collect()
}

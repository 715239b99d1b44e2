mod common;

use diffspeed::model::{country_year_support, diffusion_hazard};
use diffspeed::simulate::{simulate_panel, GeneratorConfig, TruthParams};
use diffspeed::spline::SplineState;
use diffspeed::state::{log_likelihood, residual};
use diffspeed::{Design, ModelVariant};
use proptest::prelude::*;
use statrs::distribution::{Continuous, Normal};

/// Speeds that zero every residual of `state`.
fn exact_fit(design: &Design, state: &mut diffspeed::ModelState) {
    for o in &design.obs {
        state.lambda[o.slot] = o.ratio / (1.0 - o.saturation / state.alpha[o.pair]);
    }
}

fn true_state(seed: u64) -> (Design, diffspeed::ModelState) {
    let sim = common::small_panel(seed);
    let design = Design::compile(&sim.panel, ModelVariant::SinceIntro).unwrap();
    let state = sim.truth.to_state(&sim.panel, &design).unwrap();
    (design, state)
}

#[test]
fn zero_residuals_give_gaussian_normalizer() {
    let (design, mut state) = true_state(3);
    exact_fit(&design, &mut state);
    state.theta_l = 1.0;
    let ll = log_likelihood(&design, &state);
    let per_point = -0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((ll - design.n_obs() as f64 * per_point).abs() < 1e-9 * design.n_obs() as f64);
    state.theta_l = 2.0;
    let doubled = log_likelihood(&design, &state);
    let gain = 0.5 * 2f64.ln() * design.n_obs() as f64;
    assert!((doubled - ll - gain).abs() < 1e-9 * design.n_obs() as f64);
}

#[test]
fn likelihood_matches_density_summation() {
    let (design, state) = true_state(4);
    let sd = state.theta_l.sqrt().recip();
    let oracle: f64 = design
        .obs
        .iter()
        .map(|o| {
            let mean = state.lambda[o.slot] * (1.0 - o.saturation / state.alpha[o.pair]);
            Normal::new(mean, sd).unwrap().ln_pdf(o.ratio)
        })
        .sum();
    let ll = log_likelihood(&design, &state);
    assert!((ll - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{ll} vs {oracle}");
}

#[test]
fn constant_speed_series_is_recovered_by_least_squares() {
    let config = GeneratorConfig {
        n_countries: 2,
        series_lengths: vec![(20, 20)],
        n_covariates: 1,
        n_time_varying: 1,
        ..Default::default()
    };
    let mut f = SplineState::zero(-0.5, 19.5);
    f.omega = f.basis().unwrap().constant_coefficients().iter().map(|d| 0.5 * d).collect();
    let truth = TruthParams {
        f,
        beta: vec![0.0],
        tau: vec![0.0],
        country_sd: 0.0,
        theta_h: 0.0,
        theta_l: 1e4,
        alpha_range: (0.8, 0.8),
    };
    let sim = simulate_panel(&config, &truth, 17).unwrap();
    let design = Design::compile(&sim.panel, ModelVariant::SinceIntro).unwrap();
    for p in &design.pairs {
        // ratio = lambda - (lambda / alpha) * saturation is linear in saturation
        let obs = &design.obs[p.obs.clone()];
        let n = obs.len() as f64;
        let (mx, my) =
            (obs.iter().map(|o| o.saturation).sum::<f64>() / n, obs.iter().map(|o| o.ratio).sum::<f64>() / n);
        let sxy: f64 = obs.iter().map(|o| (o.saturation - mx) * (o.ratio - my)).sum();
        let sxx: f64 = obs.iter().map(|o| (o.saturation - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let lambda = my - slope * mx;
        assert!((lambda - 0.5).abs() < 0.05, "lambda {lambda}");
    }
}

#[test]
fn standardized_covariates_have_unit_scale() {
    let sim = common::small_panel(8);
    let cov = &sim.panel.covariates;
    let support = country_year_support(&sim.panel.series);
    for k in 0..cov.len() {
        let v: Vec<f64> = support.iter().map(|&(c, y)| cov.value(k, c, y).unwrap()).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10, "{mean} {sd}");
        let s = cov.scaling()[k];
        let (c, y) = support[0];
        assert!((s.to_raw(cov.value(k, c, y).unwrap()) - cov.raw(k, c, y).unwrap()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hazard_is_linear_in_speed(l in 0.01f64..2.0, y in 0.0f64..500.0, a in 0.5f64..1.0) {
        let h1 = diffusion_hazard(l, y, 1000.0, a).unwrap();
        let h2 = diffusion_hazard(2.0 * l, y, 1000.0, a).unwrap();
        prop_assert!((h2 - 2.0 * h1).abs() < 1e-12);
        let h3 = diffusion_hazard(l, y + 10.0, 1000.0, a).unwrap();
        prop_assert!(h3 < h1);
    }

    #[test]
    fn growing_a_residual_lowers_the_likelihood(seed in 0u64..50, j in 0usize..40, bump in 0.001f64..0.1) {
        let (design, state) = true_state(seed);
        let o = &design.obs[j % design.n_obs()];
        let e = residual(o.ratio, state.lambda[o.slot], o.saturation, state.alpha[o.pair]);
        let mut worse = state.clone();
        // move the speed so this residual grows in magnitude
        let c = 1.0 - o.saturation / state.alpha[o.pair];
        worse.lambda[o.slot] -= e.signum() * bump / c;
        prop_assert!(log_likelihood(&design, &worse) < log_likelihood(&design, &state));
    }

    #[test]
    fn simulated_truth_has_finite_likelihood(seed in 0u64..1000) {
        let (design, state) = true_state(seed);
        prop_assert!(log_likelihood(&design, &state).is_finite());
        prop_assert!(state.check(&design).is_ok());
    }
}

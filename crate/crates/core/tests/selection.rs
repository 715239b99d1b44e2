use diffspeed::selection::{
    beta_full_conditional, calibrate_hyperparams, gamma_full_conditional, inclusion_from_log_densities,
    inclusion_probabilities, slab_scale, SelectionSystem,
};
use diffspeed::HyperParams;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy() -> (DMatrix<f64>, Vec<f64>) {
    let x = DMatrix::from_row_slice(6, 2, &[0.9, 0.3, -0.5, 1.2, 0.2, -0.7, 1.4, 0.1, -1.1, -0.4, -0.9, -0.5]);
    let b = vec![0.35, -0.1, 0.05, 0.5, -0.3, -0.25];
    (x, b)
}

fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().unwrap()
}

fn all_patterns(k: usize) -> Vec<Vec<bool>> {
    (0..1usize << k).map(|m| (0..k).map(|i| m >> i & 1 == 1).collect()).collect()
}

/// Marginal density of `b` with beta and theta_B integrated out, computed
/// from the dense n x n covariance `I + X_A (upsilon R_AA) X_A^T`.
fn oracle_log_density(x: &DMatrix<f64>, b: &[f64], r: &DMatrix<f64>, gamma: &[bool], hyper: &HyperParams) -> f64 {
    let n = b.len();
    let active: Vec<usize> = (0..gamma.len()).filter(|&k| gamma[k]).collect();
    let mut sigma = DMatrix::<f64>::identity(n, n);
    if !active.is_empty() {
        let xa = DMatrix::from_fn(n, active.len(), |i, j| x[(i, active[j])]);
        let ra = DMatrix::from_fn(active.len(), active.len(), |i, j| r[(active[i], active[j])]) * hyper.upsilon;
        sigma += &xa * ra * xa.transpose();
    }
    let bv = DVector::from_column_slice(b);
    let quad = bv.dot(&(inv(&sigma) * &bv));
    let prior: f64 = gamma.iter().map(|&g| if g { hyper.w.ln() } else { (1.0 - hyper.w).ln() }).sum();
    -0.5 * sigma.determinant().ln()
        - (hyper.precision_shape + 0.5 * n as f64) * (hyper.precision_rate + 0.5 * quad).ln()
        + prior
}

fn normalize(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

#[test]
fn collapsed_density_matches_enumeration_oracle() {
    let (x, b) = toy();
    let xtx = x.transpose() * &x;
    let r = inv(&xtx);
    let hyper = HyperParams { w: 0.3, upsilon: 4.0, ..Default::default() };
    let system = SelectionSystem::new(&x, &xtx, &r, &b);
    let patterns = all_patterns(2);
    let lib: Vec<f64> = patterns.iter().map(|g| system.log_gamma_density(g, &hyper)).collect();
    let oracle: Vec<f64> = patterns.iter().map(|g| oracle_log_density(&x, &b, &r, g, &hyper)).collect();
    for (p, q) in normalize(&lib).iter().zip(normalize(&oracle)) {
        assert!((p - q).abs() < 1e-10, "{p} vs {q}");
    }
}

fn visit_frequencies(order: &[usize], sweeps: usize, seed: u64) -> Vec<f64> {
    let (x, b) = toy();
    let xtx = x.transpose() * &x;
    let r = inv(&xtx);
    let hyper = HyperParams { w: 0.3, upsilon: 4.0, ..Default::default() };
    let system = SelectionSystem::new(&x, &xtx, &r, &b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gamma = vec![false; 2];
    let mut counts = vec![0usize; 4];
    for _ in 0..sweeps {
        gamma_full_conditional(&system, &mut gamma, &hyper, order, &mut rng);
        counts[gamma[0] as usize + 2 * gamma[1] as usize] += 1;
    }
    counts.into_iter().map(|c| c as f64 / sweeps as f64).collect()
}

#[test]
fn visit_frequencies_match_enumeration_for_both_orders() {
    let (x, b) = toy();
    let r = inv(&(x.transpose() * &x));
    let hyper = HyperParams { w: 0.3, upsilon: 4.0, ..Default::default() };
    let exact =
        normalize(&all_patterns(2).iter().map(|g| oracle_log_density(&x, &b, &r, g, &hyper)).collect::<Vec<_>>());
    for order in [[0, 1], [1, 0]] {
        let freq = visit_frequencies(&order, 20_000, 5);
        for (f, e) in freq.iter().zip(&exact) {
            assert!((f - e).abs() < 0.02, "order {order:?}: {f} vs {e}");
        }
    }
}

#[test]
fn beta_covariance_matches_g_prior_oracle() {
    let (x, b) = toy();
    let xtx = x.transpose() * &x;
    let r = inv(&xtx);
    let hyper = HyperParams { upsilon: 3.0, ..Default::default() };
    let system = SelectionSystem::new(&x, &xtx, &r, &b);
    let gamma = [true, true];
    // with R = (X^T X)^{-1} the full-model precision is (1 + 1/upsilon) X^T X
    let shrink = hyper.upsilon / (1.0 + hyper.upsilon);
    let cov = &r * shrink;
    let mean = &r * (x.transpose() * DVector::from_column_slice(&b)) * shrink;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 100_000;
    let draws: Vec<Vec<f64>> =
        (0..n).map(|_| beta_full_conditional(&system, &gamma, 1.0, &hyper, &mut rng).unwrap()).collect();
    let m: Vec<f64> = (0..2).map(|k| draws.iter().map(|d| d[k]).sum::<f64>() / n as f64).collect();
    let s = DMatrix::from_fn(2, 2, |i, j| {
        draws.iter().map(|d| (d[i] - m[i]) * (d[j] - m[j])).sum::<f64>() / (n - 1) as f64
    });
    assert!((&s - &cov).norm() / cov.norm() < 0.05, "{s} vs {cov}");
    for k in 0..2 {
        assert!((m[k] - mean[k]).abs() < 4.0 * (cov[(k, k)] / n as f64).sqrt() + 1e-12);
    }
}

#[test]
fn large_slab_limit_is_least_squares() {
    let (x, _) = toy();
    let beta_star = DVector::from_vec(vec![0.7, -0.4]);
    let b: Vec<f64> = (&x * &beta_star).iter().copied().collect();
    let xtx = x.transpose() * &x;
    let r = inv(&xtx);
    let hyper = HyperParams { upsilon: 1e9, ..Default::default() };
    let system = SelectionSystem::new(&x, &xtx, &r, &b);
    let fit = system.fit(&[true, true], hyper.upsilon).unwrap();
    let ls = x.clone().svd(true, true).solve(&DVector::from_column_slice(&b), 1e-14).unwrap();
    for k in 0..2 {
        assert!((fit.mean[k] - ls[k]).abs() < 1e-6, "{} vs {}", fit.mean[k], ls[k]);
        assert!((ls[k] - beta_star[k]).abs() < 1e-10);
    }
}

#[test]
fn inactive_coefficients_are_exact_zeros() {
    let (x, b) = toy();
    let xtx = x.transpose() * &x;
    let r = inv(&xtx);
    let system = SelectionSystem::new(&x, &xtx, &r, &b);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let beta = beta_full_conditional(&system, &[false, true], 2.0, &HyperParams::default(), &mut rng).unwrap();
    assert_eq!(beta[0], 0.0);
    assert_ne!(beta[1], 0.0);
}

#[test]
fn calibration_recovers_known_residual_variance() {
    // residual orthogonal to the design with sum of squares 0.04 * (n - k)
    let n = 12;
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 5.5 });
    let mut e = DVector::from_fn(n, |i, _| ((i * 7 % 5) as f64 - 2.0) + 0.3 * (i % 3) as f64);
    let hat = &x * inv(&(x.transpose() * &x)) * x.transpose();
    e = &e - &hat * &e;
    e *= (0.04 * (n - 2) as f64 / e.dot(&e)).sqrt();
    let b: Vec<f64> = (&x * DVector::from_vec(vec![0.2, 0.05]) + e).iter().copied().collect();
    let cal = calibrate_hyperparams(&b, &x);
    assert!(!cal.fell_back);
    assert!((cal.kappa - 0.04).abs() < 1e-12, "{}", cal.kappa);
    assert_eq!(cal.default_upsilon, 7.0);
    assert_eq!(cal.default_w, 0.1);
}

#[test]
fn degenerate_pilot_falls_back() {
    let x = DMatrix::from_fn(8, 2, |i, j| (i * (j + 1)) as f64);
    let cal = calibrate_hyperparams(&[0.0; 8], &x);
    assert!(cal.fell_back);
    assert_eq!(cal.upsilon, 7.0);
}

#[test]
fn slab_scale_from_reported_pilot() {
    assert!((slab_scale(0.122, 0.017) - 7.176).abs() < 1e-3);
}

#[test]
fn inclusion_summaries() {
    assert_eq!(inclusion_probabilities(&[vec![true], vec![true]]).unwrap(), vec![1.0]);
    let alt: Vec<Vec<bool>> = (0..10).map(|i| vec![i % 2 == 0]).collect();
    assert_eq!(inclusion_probabilities(&alt).unwrap(), vec![0.5]);
    assert!(inclusion_probabilities(&[]).is_err());
}

proptest! {
    #[test]
    fn two_point_conditionals_sum_to_one(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let s = inclusion_from_log_densities(a, b) + inclusion_from_log_densities(b, a);
        prop_assert!((s - 1.0).abs() < 1e-12);
    }
}

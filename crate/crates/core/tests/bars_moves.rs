use diffspeed::bars::{
    apply_move, bars_step, log_acceptance, move_probabilities, propose_move, reverse_proposal, MoveKind, WorkingData,
};
use diffspeed::spline::SplineState;
use diffspeed::HyperParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(values: &[f64]) -> WorkingData {
    let grid: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let pairs: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    WorkingData::from_values(grid, &pairs, 4.0)
}

fn state(knots: Vec<f64>, b: f64) -> SplineState {
    let p = knots.len() + 2;
    SplineState { knots, omega: vec![0.0; p], a: -0.5, b }
}

#[test]
fn move_probabilities_sum_to_one() {
    for max in 1..6 {
        for k in 0..=max {
            let p = move_probabilities(k, max);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(move_probabilities(0, max)[0], 1.0);
        assert_eq!(move_probabilities(max, max)[0], 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn moves_satisfy_detailed_balance(
        seed in any::<u64>(),
        k in 0usize..4,
        values in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let hyper = HyperParams { max_knots: 4, ..Default::default() };
        let b = 11.5;
        let knots: Vec<f64> = (1..=k).map(|j| -0.5 + 12.0 * j as f64 / (k + 1) as f64 + 0.01 * (seed % 7) as f64).collect();
        let current = state(knots, b);
        let data = data(&values);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proposal = propose_move(&current, hyper.max_knots, &mut rng);
        let Ok(new_knots) = apply_move(&current, &proposal) else { return Ok(()); };
        let forward = log_acceptance(&current, &proposal, &data, &hyper);
        prop_assume!(forward.is_finite());
        let proposed = state(new_knots.clone(), b);
        let reverse = reverse_proposal(&current, &proposal, &new_knots, hyper.max_knots);
        prop_assert_eq!(apply_move(&proposed, &reverse).unwrap(), current.knots.clone());
        let backward = log_acceptance(&proposed, &reverse, &data, &hyper);
        prop_assert!((forward + backward).abs() < 1e-9, "{:?}: {} vs {}", proposal.kind, forward, backward);
    }
}

#[test]
fn reverse_of_birth_is_death() {
    let current = state(vec![3.0], 10.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    loop {
        let p = propose_move(&current, 5, &mut rng);
        if p.kind == MoveKind::Birth {
            let knots = apply_move(&current, &p).unwrap();
            let r = reverse_proposal(&current, &p, &knots, 5);
            assert_eq!(r.kind, MoveKind::Death);
            assert!((r.log_proposal_ratio + p.log_proposal_ratio).abs() < 1e-12);
            break;
        }
    }
}

#[test]
fn flat_likelihood_recovers_knot_prior() {
    let hyper = HyperParams { max_knots: 8, ..Default::default() };
    let grid: Vec<f64> = (0..15).map(f64::from).collect();
    let flat = WorkingData::flat(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = state(Vec::new(), 14.5);
    let mut counts = vec![0usize; hyper.max_knots + 1];
    let n = 20_000;
    for it in 0..n + 1000 {
        s = bars_step(&s, &flat, &hyper, &mut rng).unwrap().0;
        if it >= 1000 {
            counts[s.k()] += 1;
        }
    }
    let weights: Vec<f64> =
        (0..=hyper.max_knots).map(|k| (0..k).fold(1.0, |acc, j| acc * hyper.poisson_rate / (j + 1) as f64)).collect();
    let z: f64 = weights.iter().sum();
    let tv: f64 = counts.iter().zip(&weights).map(|(&c, w)| (c as f64 / n as f64 - w / z).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.05, "total variation {tv}");
}

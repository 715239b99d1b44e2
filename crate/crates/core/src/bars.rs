//! Reversible-jump moves over the knot configuration of `f`.
//!
//! Priors: `k ~ Poisson(rate)` truncated to `k <= max_knots`, knots i.i.d.
//! uniform on `(a, b)` (kept sorted, so the density of the ordered
//! configuration is `k! / (b - a)^k`), and `omega ~ N(0, 1/coef_precision)`.
//!
//! The working model regresses `z = lambda - B - tau` on the natural basis
//! with precision `h`. The coefficients are integrated out of the acceptance
//! ratio, so every move is an ordinary Metropolis-Hastings step on `(k, xi)`
//! and no dimension-matching Jacobian is needed; `omega` is then redrawn from
//! its Gaussian full conditional.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::spline::{NaturalBasis, SplineState};

/// Posterior-precision condition number above which a configuration is refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    Birth,
    Death,
    Relocate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoveProposal {
    pub kind: MoveKind,
    /// Knot removed (death) or moved (relocate).
    pub target_index: Option<usize>,
    /// New knot location (birth, relocate).
    pub new_location: Option<f64>,
    /// `log q(reverse) - log q(forward)`.
    pub log_proposal_ratio: f64,
}

/// `(birth, death, relocate)` probabilities at `k` knots.
pub fn move_probabilities(k: usize, max_knots: usize) -> [f64; 3] {
    if k == 0 {
        [1.0, 0.0, 0.0]
    } else if k >= max_knots {
        [0.0, 0.5, 0.5]
    } else {
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
    }
}

fn birth_log_ratio(k: usize, max_knots: usize, width: f64) -> f64 {
    // forward: choose birth, location density 1/width; reverse: choose death, pick 1 of k+1
    let forward = move_probabilities(k, max_knots)[0] / width;
    let reverse = move_probabilities(k + 1, max_knots)[1] / (k + 1) as f64;
    reverse.ln() - forward.ln()
}

fn death_log_ratio(k: usize, max_knots: usize, width: f64) -> f64 {
    -birth_log_ratio(k - 1, max_knots, width)
}

pub fn propose_move<R: Rng + ?Sized>(state: &SplineState, max_knots: usize, rng: &mut R) -> MoveProposal {
    let k = state.k();
    let probs = move_probabilities(k, max_knots);
    let width = state.b - state.a;
    let u: f64 = rng.random();
    if u < probs[0] {
        let loc = rng.random_range(state.a..state.b);
        MoveProposal {
            kind: MoveKind::Birth,
            target_index: None,
            new_location: Some(loc),
            log_proposal_ratio: birth_log_ratio(k, max_knots, width),
        }
    } else if u < probs[0] + probs[1] {
        MoveProposal {
            kind: MoveKind::Death,
            target_index: Some(rng.random_range(0..k)),
            new_location: None,
            log_proposal_ratio: death_log_ratio(k, max_knots, width),
        }
    } else {
        let j = rng.random_range(0..k);
        let lo = if j == 0 { state.a } else { state.knots[j - 1] };
        let hi = if j + 1 == k { state.b } else { state.knots[j + 1] };
        MoveProposal {
            kind: MoveKind::Relocate,
            target_index: Some(j),
            new_location: Some(rng.random_range(lo..hi)),
            log_proposal_ratio: 0.0,
        }
    }
}

/// Knot vector after applying `proposal`. Errors if the move would leave
/// the domain or create coincident knots.
pub fn apply_move(state: &SplineState, proposal: &MoveProposal) -> Result<Vec<f64>> {
    let mut knots = state.knots.clone();
    match proposal.kind {
        MoveKind::Birth => {
            let x = proposal.new_location.ok_or_else(|| Error::Domain("birth without location".into()))?;
            let pos = knots.partition_point(|&v| v < x);
            knots.insert(pos, x);
        }
        MoveKind::Death => {
            let j = proposal.target_index.filter(|&j| j < knots.len());
            let j = j.ok_or_else(|| Error::Domain("death of a non-existent knot".into()))?;
            knots.remove(j);
        }
        MoveKind::Relocate => {
            let j = proposal.target_index.filter(|&j| j < knots.len());
            let j = j.ok_or_else(|| Error::Domain("relocation of a non-existent knot".into()))?;
            knots[j] = proposal.new_location.ok_or_else(|| Error::Domain("relocation without location".into()))?;
        }
    }
    crate::spline::validate_knots(state.a, state.b, &knots)?;
    Ok(knots)
}

/// The proposal that undoes `proposal` from the configuration it produces.
pub fn reverse_proposal(
    state: &SplineState,
    proposal: &MoveProposal,
    new_knots: &[f64],
    max_knots: usize,
) -> MoveProposal {
    let width = state.b - state.a;
    match proposal.kind {
        MoveKind::Birth => {
            let x = proposal.new_location.unwrap_or(f64::NAN);
            MoveProposal {
                kind: MoveKind::Death,
                target_index: new_knots.iter().position(|&v| v == x),
                new_location: None,
                log_proposal_ratio: death_log_ratio(new_knots.len(), max_knots, width),
            }
        }
        MoveKind::Death => {
            let j = proposal.target_index.unwrap_or(0);
            MoveProposal {
                kind: MoveKind::Birth,
                target_index: None,
                new_location: state.knots.get(j).copied(),
                log_proposal_ratio: birth_log_ratio(new_knots.len(), max_knots, width),
            }
        }
        MoveKind::Relocate => {
            let j = proposal.target_index.unwrap_or(0);
            MoveProposal {
                kind: MoveKind::Relocate,
                target_index: Some(j),
                new_location: state.knots.get(j).copied(),
                log_proposal_ratio: 0.0,
            }
        }
    }
}

/// Sufficient statistics of the working response, aggregated per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingData {
    pub grid: Vec<f64>,
    pub counts: Vec<f64>,
    pub sums: Vec<f64>,
    /// Precision of each working observation; 0 switches the likelihood off.
    pub precision: f64,
}

impl WorkingData {
    pub fn from_values(grid: Vec<f64>, values: &[(usize, f64)], precision: f64) -> Self {
        let mut counts = vec![0.0; grid.len()];
        let mut sums = vec![0.0; grid.len()];
        for &(g, z) in values {
            counts[g] += 1.0;
            sums[g] += z;
        }
        Self { grid, counts, sums, precision }
    }

    /// No data: the knot chain then samples its prior.
    pub fn flat(grid: Vec<f64>) -> Self {
        let n = grid.len();
        Self { grid, counts: vec![0.0; n], sums: vec![0.0; n], precision: 0.0 }
    }
}

/// Conjugate fit of the coefficients for one knot configuration.
pub struct KnotFit {
    pub basis: NaturalBasis,
    chol: Cholesky<f64, Dyn>,
    pub mean: DVector<f64>,
    /// Log marginal likelihood up to terms shared by every configuration.
    pub log_marginal: f64,
}

impl KnotFit {
    pub fn new(a: f64, b: f64, knots: &[f64], data: &WorkingData, coef_precision: f64) -> Result<Self> {
        let basis = NaturalBasis::new(a, b, knots)?;
        let p = basis.dim();
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut cross = DVector::<f64>::zeros(p);
        let h = data.precision;
        if h > 0.0 {
            for (g, &t) in data.grid.iter().enumerate() {
                if data.counts[g] == 0.0 {
                    continue;
                }
                let row = DVector::from_vec(basis.row(t)?);
                gram.ger(data.counts[g], &row, &row, 1.0);
                cross.axpy(data.sums[g], &row, 1.0);
            }
        }
        let mut precision = gram * h;
        for i in 0..p {
            precision[(i, i)] += coef_precision;
        }
        let bound = (coef_precision + precision.trace()) / coef_precision;
        if bound > MAX_CONDITION {
            let eig = precision.clone().symmetric_eigen();
            let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if !(lo > 0.0) || hi / lo > MAX_CONDITION {
                return Err(Error::Numerical(format!("knot configuration has condition number {}", hi / lo)));
            }
        }
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::Numerical("coefficient precision is not positive definite".into()))?;
        let rhs = cross * h;
        let mean = chol.solve(&rhs);
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let log_marginal = 0.5 * p as f64 * coef_precision.ln() - 0.5 * log_det + 0.5 * rhs.dot(&mean);
        Ok(Self { basis, chol, mean, log_marginal })
    }

    /// Draws coefficients from `N(mean, precision^{-1})`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.mean.len();
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let l_t = self.chol.l().transpose();
        let offset = l_t.solve_upper_triangular(&z).expect("cholesky factor is nonsingular");
        (&self.mean + offset).iter().copied().collect()
    }
}

/// Unnormalized log prior of `k` knots in an ordered configuration on `(a, b)`.
fn log_knot_prior(k: usize, rate: f64, width: f64) -> f64 {
    let log_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    // Poisson: k ln(rate) - ln k!; ordered uniform locations: ln k! - k ln(width)
    k as f64 * rate.ln() - log_fact + log_fact - k as f64 * width.ln()
}

/// Log acceptance ratio of moving from `current` to `proposed_knots`,
/// given the conjugate fits of both configurations.
pub fn log_acceptance_from_fits(
    current: &SplineState,
    proposed_knots: &[f64],
    proposal: &MoveProposal,
    current_fit: &KnotFit,
    proposed_fit: &KnotFit,
    hyper: &HyperParams,
) -> f64 {
    let width = current.b - current.a;
    proposed_fit.log_marginal - current_fit.log_marginal
        + log_knot_prior(proposed_knots.len(), hyper.poisson_rate, width)
        - log_knot_prior(current.k(), hyper.poisson_rate, width)
        + proposal.log_proposal_ratio
}

/// Log acceptance ratio of `proposal` from `current`; `-inf` for moves that
/// are invalid or numerically refused.
pub fn log_acceptance(current: &SplineState, proposal: &MoveProposal, data: &WorkingData, hyper: &HyperParams) -> f64 {
    let Ok(knots) = apply_move(current, proposal) else {
        return f64::NEG_INFINITY;
    };
    let cur = KnotFit::new(current.a, current.b, &current.knots, data, hyper.spline_coef_precision);
    let new = KnotFit::new(current.a, current.b, &knots, data, hyper.spline_coef_precision);
    match (cur, new) {
        (Ok(cur), Ok(new)) => log_acceptance_from_fits(current, &knots, proposal, &cur, &new, hyper),
        _ => f64::NEG_INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MoveOutcome {
    pub accepted: bool,
    /// Refused because the proposed configuration was ill-conditioned or degenerate.
    pub refused: bool,
}

/// Metropolis-Hastings-Green accept/reject of `proposal`, followed by a
/// conjugate draw of the coefficients for whichever configuration survives.
pub fn accept_move<R: Rng + ?Sized>(
    current: &SplineState,
    proposal: &MoveProposal,
    data: &WorkingData,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<(SplineState, MoveOutcome)> {
    let current_fit = KnotFit::new(current.a, current.b, &current.knots, data, hyper.spline_coef_precision)?;
    let mut outcome = MoveOutcome::default();
    let candidate = apply_move(current, proposal).and_then(|knots| {
        let fit = KnotFit::new(current.a, current.b, &knots, data, hyper.spline_coef_precision)?;
        Ok((knots, fit))
    });
    let (knots, fit) = match candidate {
        Ok((knots, fit)) => {
            let log_a = log_acceptance_from_fits(current, &knots, proposal, &current_fit, &fit, hyper);
            let log_u = rng.random::<f64>().ln();
            if log_a.is_nan() {
                return Err(Error::Numerical("knot move produced a NaN acceptance ratio".into()));
            }
            if log_u < log_a {
                outcome.accepted = true;
                (knots, fit)
            } else {
                (current.knots.clone(), current_fit)
            }
        }
        Err(_) => {
            outcome.refused = true;
            (current.knots.clone(), current_fit)
        }
    };
    let omega = fit.draw(rng);
    Ok((SplineState { knots, omega, a: current.a, b: current.b }, outcome))
}

/// One full knot update: propose, accept or reject, redraw coefficients.
pub fn bars_step<R: Rng + ?Sized>(
    current: &SplineState,
    data: &WorkingData,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<(SplineState, MoveProposal, MoveOutcome)> {
    let proposal = propose_move(current, hyper.max_knots, rng);
    let (state, outcome) = accept_move(current, &proposal, data, hyper, rng)?;
    Ok((state, proposal, outcome))
}

//! Cubic B-spline basis with natural boundary constraints.
//!
//! A cubic spline on `[a, b]` with `k` interior knots has `k + 4` B-spline
//! coefficients over the clamped knot vector `(a,a,a,a, xi_1..xi_k, b,b,b,b)`.
//! Requiring `f''(a) = f''(b) = 0` removes two degrees of freedom. We take an
//! orthonormal basis `T` of the null space of the two constraint rows, so the
//! natural basis is `b(t) = N(t) T` with exactly `k + 2` columns.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEGREE: usize = 3;

/// Knot configuration and coefficients of the common time effect `f(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineState {
    /// Interior knots, strictly increasing inside `(a, b)`.
    pub knots: Vec<f64>,
    /// Natural-basis coefficients, `knots.len() + 2` of them.
    pub omega: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl SplineState {
    /// Knot-free state with zero coefficients.
    pub fn zero(a: f64, b: f64) -> Self {
        Self { knots: Vec::new(), omega: vec![0.0; 2], a, b }
    }

    pub fn k(&self) -> usize {
        self.knots.len()
    }

    pub fn basis(&self) -> Result<NaturalBasis> {
        NaturalBasis::new(self.a, self.b, &self.knots)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega.len() != self.knots.len() + 2 {
            return Err(Error::Domain(format!(
                "{} coefficients for {} knots, expected {}",
                self.omega.len(),
                self.knots.len(),
                self.knots.len() + 2
            )));
        }
        validate_knots(self.a, self.b, &self.knots)
    }
}

pub(crate) fn validate_knots(a: f64, b: f64, knots: &[f64]) -> Result<()> {
    if !(a < b) {
        return Err(Error::Domain(format!("boundary interval [{a}, {b}] is empty")));
    }
    let mut prev = a;
    for &x in knots {
        if !(x > prev) {
            return Err(Error::Domain(format!(
                "knots must be strictly increasing inside ({a}, {b}); got {x} after {prev}"
            )));
        }
        prev = x;
    }
    if !(prev < b) && !knots.is_empty() {
        return Err(Error::Domain(format!("knot {prev} is not below the boundary {b}")));
    }
    Ok(())
}

/// Natural cubic spline basis for a fixed knot configuration.
#[derive(Debug, Clone)]
pub struct NaturalBasis {
    a: f64,
    b: f64,
    /// Clamped knot vector of the underlying B-spline basis.
    full_knots: Vec<f64>,
    /// `(k+4) x (k+2)` map from natural coefficients to B-spline coefficients.
    transform: DMatrix<f64>,
}

impl NaturalBasis {
    pub fn new(a: f64, b: f64, knots: &[f64]) -> Result<Self> {
        validate_knots(a, b, knots)?;
        let mut full_knots = Vec::with_capacity(knots.len() + 8);
        full_knots.extend_from_slice(&[a; DEGREE + 1]);
        full_knots.extend_from_slice(knots);
        full_knots.extend_from_slice(&[b; DEGREE + 1]);
        let n = knots.len() + DEGREE + 1;

        let constraints = second_derivative_rows(&full_knots, n);
        // Full Q of the QR factorization of C^T; its trailing n-2 columns span null(C).
        let qr = constraints.transpose().qr();
        let mut q_t = DMatrix::<f64>::identity(n, n);
        qr.q_tr_mul(&mut q_t);
        let q = q_t.transpose();
        let transform = q.columns(2, n - 2).into_owned();
        Ok(Self { a, b, full_knots, transform })
    }

    pub fn dim(&self) -> usize {
        self.transform.ncols()
    }

    pub fn n_bsplines(&self) -> usize {
        self.transform.nrows()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn full_knots(&self) -> &[f64] {
        &self.full_knots
    }

    /// Map from natural coefficients to B-spline coefficients.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if !(t >= self.a && t <= self.b) {
            return Err(Error::Domain(format!("t = {t} outside the spline domain [{}, {}]", self.a, self.b)));
        }
        Ok(())
    }

    /// Values of the `k + 4` cubic B-splines at `t`.
    pub fn bspline_row(&self, t: f64) -> Result<Vec<f64>> {
        self.check_range(t)?;
        let n = self.n_bsplines();
        let mut row = vec![0.0; n];
        let span = find_span(&self.full_knots, n, t);
        let vals = nonzero_basis(&self.full_knots, span, t);
        for (j, v) in vals.iter().enumerate() {
            row[span - DEGREE + j] = *v;
        }
        Ok(row)
    }

    /// Row `b_1(t) .. b_{k+2}(t)` of the natural basis.
    pub fn row(&self, t: f64) -> Result<Vec<f64>> {
        self.check_range(t)?;
        let n = self.n_bsplines();
        let span = find_span(&self.full_knots, n, t);
        let vals = nonzero_basis(&self.full_knots, span, t);
        let first = span - DEGREE;
        Ok((0..self.dim())
            .map(|j| vals.iter().enumerate().map(|(r, v)| v * self.transform[(first + r, j)]).sum())
            .collect())
    }

    pub fn matrix(&self, ts: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(ts.len(), self.dim());
        for (r, &t) in ts.iter().enumerate() {
            let row = self.row(t)?;
            for (c, v) in row.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }

    /// Coefficients `delta` with `sum_j delta_j b_j(t) = 1` for all `t`.
    ///
    /// B-splines form a partition of unity and constants satisfy the natural
    /// constraint, so projecting the all-ones B-spline coefficient vector onto
    /// the natural subspace is exact.
    pub fn constant_coefficients(&self) -> Vec<f64> {
        let ones = DVector::from_element(self.n_bsplines(), 1.0);
        (self.transform.transpose() * ones).iter().copied().collect()
    }

    pub fn evaluate(&self, omega: &[f64], t: f64) -> Result<f64> {
        if omega.len() != self.dim() {
            return Err(Error::Domain(format!("{} coefficients for a basis of dimension {}", omega.len(), self.dim())));
        }
        Ok(self.row(t)?.iter().zip(omega).map(|(b, w)| b * w).sum())
    }
}

/// Basis matrix `[len(ts) x (k+2)]` for the knot topology of `state`.
pub fn basis_matrix(state: &SplineState, ts: &[f64]) -> Result<DMatrix<f64>> {
    state.basis()?.matrix(ts)
}

/// `f(t) = sum_j omega_j b_j(t)`.
pub fn evaluate_f(state: &SplineState, t: f64) -> Result<f64> {
    state.basis()?.evaluate(&state.omega, t)
}

/// Index `i` with `u_i <= t < u_{i+1}`, clamped to the last non-empty span at `t = b`.
fn find_span(u: &[f64], n: usize, t: f64) -> usize {
    if t >= u[n] {
        return n - 1;
    }
    // u[DEGREE..=n] is non-decreasing; binary search the interval.
    let (mut lo, mut hi) = (DEGREE, n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if t < u[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// The four non-zero cubic B-splines on `span`, via the triangular
/// Cox-de Boor table.
fn nonzero_basis(u: &[f64], span: usize, t: f64) -> [f64; DEGREE + 1] {
    let mut n = [0.0; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = t - u[span + 1 - j];
        right[j] = u[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Rows mapping B-spline coefficients to `f''(a)` and `f''(b)`.
fn second_derivative_rows(u: &[f64], n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(2, n);
    for j in 0..n {
        let mut coef = vec![0.0; n];
        coef[j] = 1.0;
        // first derivative: degree 2 coefficients
        let d1: Vec<f64> = (0..n - 1).map(|i| 3.0 * (coef[i + 1] - coef[i]) / (u[i + 4] - u[i + 1])).collect();
        // second derivative: degree 1 coefficients
        let d2: Vec<f64> = (0..n - 2).map(|i| 2.0 * (d1[i + 1] - d1[i]) / (u[i + 4] - u[i + 2])).collect();
        c[(0, j)] = d2[0];
        c[(1, j)] = d2[n - 3];
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn second_derivative(state: &SplineState, t: f64, h: f64) -> f64 {
        let f = |x| evaluate_f(state, x).unwrap();
        (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h)
    }

    #[test]
    fn dimension_is_k_plus_two() {
        for k in 0..=10 {
            let knots: Vec<f64> = (1..=k).map(|j| j as f64 / (k + 1) as f64).collect();
            let basis = NaturalBasis::new(0.0, 1.0, &knots).unwrap();
            assert_eq!(basis.dim(), k + 2);
        }
    }

    #[test]
    fn k_zero_reproduces_linear_functions() {
        let basis = NaturalBasis::new(-0.5, 10.5, &[]).unwrap();
        let ts: Vec<f64> = (0..=10).map(f64::from).collect();
        let m = basis.matrix(&ts).unwrap();
        let y = DVector::from_iterator(ts.len(), ts.iter().map(|t| 3.0 - 0.7 * t));
        let coef = m.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        let resid = (&m * coef - y).amax();
        assert!(resid < 1e-10, "residual {resid}");
    }

    #[test]
    fn boundary_second_derivatives_vanish() {
        let state =
            SplineState { knots: vec![2.0, 3.5, 7.25], omega: vec![0.3, -1.2, 0.8, 2.0, -0.4], a: -0.5, b: 10.5 };
        let basis = state.basis().unwrap();
        // exact second derivative at the boundaries via B-spline coefficients
        let coef = basis.transform() * DVector::from_vec(state.omega.clone());
        let rows = second_derivative_rows(basis.full_knots(), basis.n_bsplines());
        let exact = &rows * coef;
        assert!(exact.amax() < 1e-12);
        // one-sided finite differences from inside the domain
        let h = 1e-4;
        let f = |x| evaluate_f(&state, x).unwrap();
        let fa = (f(state.a) - 2.0 * f(state.a + h) + f(state.a + 2.0 * h)) / (h * h);
        let fb = (f(state.b) - 2.0 * f(state.b - h) + f(state.b - 2.0 * h)) / (h * h);
        // the forward stencil measures f'' at a+h; f''' is bounded so scale accordingly
        assert!(fa.abs() < 1e-3 && fb.abs() < 1e-3, "{fa} {fb}");
    }

    #[test]
    fn second_derivative_continuous_across_knots() {
        let state = SplineState { knots: vec![1.3, 4.4], omega: vec![1.0, -0.5, 2.0, 0.25], a: 0.0, b: 6.0 };
        for &xi in &state.knots {
            let left = second_derivative(&state, xi - 1e-3, 1e-4);
            let right = second_derivative(&state, xi + 1e-3, 1e-4);
            assert!((left - right).abs() < 0.05, "jump at {xi}: {left} vs {right}");
        }
    }

    #[test]
    fn constant_coefficients_give_one() {
        let basis = NaturalBasis::new(0.0, 5.0, &[1.0, 2.5, 4.0]).unwrap();
        let delta = basis.constant_coefficients();
        for t in [0.0, 0.7, 2.5, 3.9, 5.0] {
            assert!((basis.evaluate(&delta, t).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_is_an_error() {
        let state = SplineState::zero(0.0, 1.0);
        assert!(evaluate_f(&state, 1.5).is_err());
        assert!(evaluate_f(&state, -0.1).is_err());
    }

    #[test]
    fn coincident_knots_rejected() {
        assert!(NaturalBasis::new(0.0, 1.0, &[0.4, 0.4]).is_err());
        assert!(NaturalBasis::new(0.0, 1.0, &[0.0]).is_err());
    }
}

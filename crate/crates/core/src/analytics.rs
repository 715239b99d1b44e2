//! Post-processing of fitted chains: DIC, speed trajectories and
//! time-to-penetration calculators.

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::sampler::ChainOutput;
use crate::state::{self, ModelState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DicResult {
    pub variant: String,
    pub d_bar: f64,
    pub p_d: f64,
    pub dic: f64,
}

impl DicResult {
    pub fn new(variant: impl Into<String>, d_bar: f64, p_d: f64) -> Self {
        Self { variant: variant.into(), d_bar, p_d, dic: d_bar + p_d }
    }
}

fn running_mean<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    let mut m = 0.0;
    for (i, v) in values.enumerate() {
        m += (v - m) / (i + 1) as f64;
    }
    m
}

fn pooled_draws(chains: &[ChainOutput]) -> Result<Vec<&ModelState>> {
    let draws: Vec<&ModelState> = chains.iter().flat_map(|c| c.draws.iter()).collect();
    if draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    Ok(draws)
}

/// Posterior mean of every continuous parameter, pooled across chains.
///
/// `gamma` is the most frequent inclusion pattern and `beta` the mean over
/// the draws having that pattern. The spline is the last draw's (knot
/// configurations differ between draws, so coefficients do not average).
pub fn posterior_mean_state(chains: &[ChainOutput]) -> Result<ModelState> {
    let draws = pooled_draws(chains)?;
    let mut out = draws[draws.len() - 1].clone();
    let avg = |get: &dyn Fn(&ModelState) -> &Vec<f64>, i: usize| running_mean(draws.iter().map(|d| &get(d)[i]));
    for i in 0..out.lambda.len() {
        out.lambda[i] = avg(&|d| &d.lambda, i);
    }
    for i in 0..out.alpha.len() {
        out.alpha[i] = avg(&|d| &d.alpha, i);
    }
    for i in 0..out.country_effects.len() {
        out.country_effects[i] = avg(&|d| &d.country_effects, i);
    }
    for i in 0..out.tau.len() {
        out.tau[i] = avg(&|d| &d.tau, i);
    }
    out.theta_l = running_mean(draws.iter().map(|d| &d.theta_l));
    out.theta_a = running_mean(draws.iter().map(|d| &d.theta_a));
    out.theta_b = running_mean(draws.iter().map(|d| &d.theta_b));

    let mut patterns: std::collections::BTreeMap<&[bool], usize> = std::collections::BTreeMap::new();
    for d in &draws {
        *patterns.entry(d.gamma.as_slice()).or_default() += 1;
    }
    let mode = patterns.iter().max_by_key(|(_, &n)| n).map(|(g, _)| g.to_vec()).unwrap_or_default();
    let matching: Vec<&&ModelState> = draws.iter().filter(|d| d.gamma == mode).collect();
    for (k, (b, &on)) in out.beta.iter_mut().zip(&mode).enumerate() {
        *b = if on { running_mean(matching.iter().map(|d| &d.beta[k])) } else { 0.0 };
    }
    out.gamma = mode;
    Ok(out)
}

/// `D_bar` over all pooled draws, `P_D = D_bar - D(plug_in)`.
pub fn compute_dic(chains: &[ChainOutput], design: &Design, plug_in: &ModelState) -> Result<DicResult> {
    let deviances: Vec<f64> = chains.iter().flat_map(|c| c.deviance.iter().copied()).collect();
    if deviances.is_empty() {
        return Err(Error::Domain("no deviance draws".into()));
    }
    let d_bar = running_mean(deviances.iter());
    let d_hat = state::deviance(design, plug_in);
    if !d_hat.is_finite() {
        return Err(Error::Numerical(format!(
            "plug-in deviance is {d_hat} (theta_L = {}, alpha range {:?})",
            plug_in.theta_l,
            plug_in.alpha.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
        )));
    }
    Ok(DicResult::new(design.variant.label(), d_bar, d_bar - d_hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedTransform {
    LinearSum,
    ExponentiatedSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub pair: String,
    pub years: Vec<i32>,
    pub abscissa: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Empirical quantile with linear interpolation; `sorted` must be ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Expected speed `f(t) + B_i(t) + tau_n` of one pair per year, with the
/// posterior mean and a pointwise 95% interval.
pub fn speed_trajectory(
    chains: &[ChainOutput],
    design: &Design,
    country: usize,
    product: usize,
    transform: SpeedTransform,
) -> Result<Trajectory> {
    let pair = design
        .pair_index(country, product)
        .ok_or_else(|| Error::Domain(format!("no series for country {country}, product {product}")))?;
    let pooled: Vec<(&ModelState, &Vec<f64>)> = chains.iter().flat_map(|c| c.draws.iter().zip(&c.f_grid)).collect();
    if pooled.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    let mut out = Trajectory {
        pair: design.pair_label(pair),
        years: Vec::new(),
        abscissa: Vec::new(),
        mean: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
    };
    for j in design.pairs[pair].obs.clone() {
        let o = &design.obs[j];
        let mut values: Vec<f64> = pooled
            .iter()
            .map(|(d, f)| {
                let s = f[o.grid] + d.country_effects[o.effect] + d.tau[o.product];
                match transform {
                    SpeedTransform::LinearSum => s,
                    SpeedTransform::ExponentiatedSum => s.exp(),
                }
            })
            .collect();
        out.mean.push(running_mean(values.iter()));
        values.sort_by(f64::total_cmp);
        out.lower.push(quantile(&values, 0.025));
        out.upper.push(quantile(&values, 0.975));
        out.years.push(o.year);
        out.abscissa.push(o.abscissa);
    }
    Ok(out)
}

/// Pointwise posterior summary of the common time effect at one abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub abscissa: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Posterior mean and central `level` interval of `f` on the design grid.
pub fn f_band(chains: &[ChainOutput], design: &Design, level: f64) -> Result<Vec<BandRow>> {
    let grids: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.f_grid.iter()).collect();
    if grids.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    let tail = 0.5 * (1.0 - level);
    Ok(design
        .grid
        .iter()
        .enumerate()
        .map(|(g, &abscissa)| {
            let mut v: Vec<f64> = grids.iter().map(|f| f[g]).collect();
            let mean = running_mean(v.iter());
            v.sort_by(f64::total_cmp);
            BandRow { abscissa, mean, lower: quantile(&v, tail), upper: quantile(&v, 1.0 - tail) }
        })
        .collect())
}

/// `ln[(1 - p1) p2 / ((1 - p2) p1)]`, the logit distance between two
/// penetration levels.
pub fn logit_distance(p1: f64, p2: f64) -> Result<f64> {
    if !(p1 > 0.0 && p1 <= p2 && p2 < 1.0) {
        return Err(Error::Domain(format!("need 0 < p1 <= p2 < 1, got p1 = {p1}, p2 = {p2}")));
    }
    Ok(((1.0 - p1) * p2 / ((1.0 - p2) * p1)).ln())
}

/// Years to move from penetration `p1` to `p2` at constant speed.
pub fn time_to_penetration_constant(lambda: f64, p1: f64, p2: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("speed must be positive, got {lambda}")));
    }
    Ok(logit_distance(p1, p2)? / lambda)
}

/// Years from `p1` to `p2` when the speed is `slope * t`, starting at `t1`.
/// Solves `slope (t2^2 - t1^2) / 2 = L` on the branch where `slope * t > 0`.
pub fn time_to_penetration_linear(slope: f64, t1: f64, p1: f64, p2: f64) -> Result<f64> {
    let l = logit_distance(p1, p2)?;
    if l == 0.0 {
        return Ok(0.0);
    }
    let disc = t1 * t1 + 2.0 * l / slope;
    let t2 = if slope > 0.0 && t1 >= 0.0 {
        disc.sqrt()
    } else if slope < 0.0 && t1 < 0.0 && disc >= 0.0 {
        -disc.sqrt()
    } else {
        return Err(Error::Domain(format!("speed {slope} * t is not positive on a bracket starting at t1 = {t1}")));
    };
    // same root, written to avoid cancellation when t2 is close to t1
    Ok(2.0 * l / (slope * (t1 + t2)))
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gauss_kronrod(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x)? + f(c + x)?;
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    Ok((kronrod * h, (kronrod - gauss).abs() * h))
}

fn adaptive(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64, depth: usize) -> Result<f64> {
    let (value, err) = gauss_kronrod(f, a, b)?;
    if err <= tol || depth == 0 {
        if err > tol {
            return Err(Error::Numerical(format!("quadrature did not converge on [{a}, {b}]")));
        }
        return Ok(value);
    }
    let m = 0.5 * (a + b);
    Ok(adaptive(f, a, m, 0.5 * tol, depth - 1)? + adaptive(f, m, b, 0.5 * tol, depth - 1)?)
}

/// Adaptive Gauss-Kronrod integral of `f` over `[a, b]`.
pub fn integrate(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    adaptive(f, a, b, tol, 40)
}

/// Years from `p1` to `p2` for an arbitrary positive speed curve, solving
/// `int_{t1}^{t1 + dt} lambda(t) dt = L` by quadrature and a safeguarded
/// Newton iteration inside a bracket.
pub fn time_to_penetration_numeric(lambda: impl Fn(f64) -> f64, p1: f64, p2: f64, t1: f64) -> Result<f64> {
    let target = logit_distance(p1, p2)?;
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut speed = |t: f64| -> Result<f64> {
        let v = lambda(t);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("speed curve is {v} at t = {t}; it must stay positive")));
        }
        Ok(v)
    };
    let tol = 1e-13 * target.max(1.0);
    let mut cumulative = |dt: f64| integrate(&mut speed, t1, t1 + dt, tol);

    // bracket [lo, hi] with F(lo) < L <= F(hi)
    let (mut lo, mut f_lo) = (0.0, 0.0);
    let mut hi = target / lambda(t1).max(1e-12);
    let mut f_hi = cumulative(hi)?;
    let mut doublings = 0;
    while f_hi < target {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = cumulative(hi)?;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numerical("cannot bracket the penetration time".into()));
        }
    }
    let mut x = lo + (hi - lo) * (target - f_lo) / (f_hi - f_lo);
    for _ in 0..200 {
        let fx = cumulative(x)? - target;
        if fx.abs() <= 1e-12 * target.max(1.0) {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / lambda(t1 + x);
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-14 * hi.max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::Numerical("penetration time iteration did not converge".into()))
}

/// Speed specification for a penetration query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpeedSpec {
    Constant(f64),
    /// `lambda(t) = slope * t`.
    Linear {
        slope: f64,
    },
    /// Piecewise-linear curve through `(t, lambda)` knots, held flat outside.
    Trajectory(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetrationQuery {
    pub p1: f64,
    pub p2: f64,
    pub t1: f64,
    pub speed: SpeedSpec,
}

fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    let i = points.partition_point(|p| p.0 < t);
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[points.len() - 1].1;
    }
    let (a, b) = (points[i - 1], points[i]);
    a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
}

pub fn time_to_penetration(query: &PenetrationQuery) -> Result<f64> {
    match &query.speed {
        SpeedSpec::Constant(l) => time_to_penetration_constant(*l, query.p1, query.p2),
        SpeedSpec::Linear { slope } => time_to_penetration_linear(*slope, query.t1, query.p1, query.p2),
        SpeedSpec::Trajectory(points) => {
            if points.is_empty() || points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                return Err(Error::Domain("trajectory needs increasing abscissae".into()));
            }
            time_to_penetration_numeric(|t| interpolate(points, t), query.p1, query.p2, query.t1)
        }
    }
}

/// Posterior-mean speed curve of a trajectory, for penetration queries.
pub fn trajectory_speed_points(trajectory: &Trajectory) -> Vec<(f64, f64)> {
    trajectory.abscissa.iter().copied().zip(trajectory.mean.iter().copied()).collect()
}

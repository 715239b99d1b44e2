//! Panel data model and the logistic diffusion hazard.
//!
//! The observation equation for country `i`, product `n`, year `t` is
//!
//! ```text
//! y(t) / Y(t-1) = lambda(t) * [1 - Y(t-1) / (M(t) * alpha)] + eps(t),   eps ~ N(0, 1/theta_L)
//! ```
//!
//! where `Y(t-1)` is the cumulative adopter count before year `t` and `M(t)`
//! the population. Years with `Y(t-1) = 0` carry no information about the
//! ratio and are dropped when the panel is compiled into a [`crate::Design`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which abscissa the common time effect `f(t)` is indexed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeAxisMode {
    CalendarYear,
    #[default]
    YearsSinceIntroduction,
}

/// One year of a country/product series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearRecord {
    pub year: i32,
    /// New adopters during `year`.
    pub adopters: u64,
    /// Cumulative adopters at the end of `year - 1`.
    pub cumulative_prev: u64,
    /// Population during `year`.
    pub population: u64,
}

impl YearRecord {
    pub fn penetration_prev(&self) -> f64 {
        self.cumulative_prev as f64 / self.population as f64
    }

    /// Penetration after this year's adoptions.
    pub fn penetration_after(&self) -> f64 {
        (self.cumulative_prev + self.adopters) as f64 / self.population as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub country: usize,
    pub product: usize,
    pub introduction_year: i32,
    pub records: Vec<YearRecord>,
}

impl Series {
    pub fn first_year(&self) -> i32 {
        self.records.first().map(|r| r.year).unwrap_or(self.introduction_year)
    }

    /// Highest observed penetration; the lower edge of the ceiling's support.
    pub fn max_penetration(&self) -> f64 {
        self.records.iter().map(|r| r.penetration_after().max(r.penetration_prev())).fold(0.0, f64::max)
    }
}

/// Mean and standard deviation used to standardize one covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn to_raw(&self, standardized: f64) -> f64 {
        standardized * self.sd + self.mean
    }

    /// Maps a coefficient on the standardized scale back to raw units.
    pub fn coefficient_to_raw(&self, beta: f64) -> f64 {
        beta / self.sd
    }
}

/// Country-level covariates on a dense `[k][country][year]` grid.
///
/// Raw values are kept so that a dataset can be written back out exactly;
/// standardized values are derived when the owning [`PanelDataset`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub names: Vec<String>,
    pub time_varying: Vec<bool>,
    pub n_countries: usize,
    pub first_year: i32,
    pub n_years: usize,
    raw: Vec<f64>,
    standardized: Vec<f64>,
    scaling: Vec<Standardization>,
}

impl Covariates {
    /// `raw` is laid out `[k][country][year - first_year]`; entries the panel
    /// never touches may be NaN. Time-invariant covariates must repeat their
    /// value across years.
    pub fn new(
        names: Vec<String>,
        time_varying: Vec<bool>,
        n_countries: usize,
        first_year: i32,
        n_years: usize,
        raw: Vec<f64>,
    ) -> Result<Self> {
        if names.len() != time_varying.len() {
            return Err(Error::Data("covariate names and flags differ in length".into()));
        }
        if raw.len() != names.len() * n_countries * n_years {
            return Err(Error::Data(format!(
                "covariate grid has {} values, expected {}",
                raw.len(),
                names.len() * n_countries * n_years
            )));
        }
        Ok(Self {
            names,
            time_varying,
            n_countries,
            first_year,
            n_years,
            standardized: raw.clone(),
            raw,
            scaling: Vec::new(),
        })
    }

    /// An empty covariate set (K = 0) spanning the given years.
    pub fn empty(n_countries: usize, first_year: i32, n_years: usize) -> Self {
        Self {
            names: Vec::new(),
            time_varying: Vec::new(),
            n_countries,
            first_year,
            n_years,
            raw: Vec::new(),
            standardized: Vec::new(),
            scaling: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn index(&self, k: usize, country: usize, year: i32) -> Option<usize> {
        let y = year - self.first_year;
        if y < 0 || y as usize >= self.n_years || country >= self.n_countries {
            return None;
        }
        Some((k * self.n_countries + country) * self.n_years + y as usize)
    }

    pub fn raw(&self, k: usize, country: usize, year: i32) -> Option<f64> {
        self.index(k, country, year).map(|ix| self.raw[ix])
    }

    pub fn value(&self, k: usize, country: usize, year: i32) -> Option<f64> {
        self.index(k, country, year).map(|ix| self.standardized[ix])
    }

    pub fn scaling(&self) -> &[Standardization] {
        &self.scaling
    }

    /// Standardizes every covariate to mean 0 and sd 1 over the pooled
    /// `(country, year)` cells in `support`. Missing values inside the
    /// support are rejected.
    fn standardize(&mut self, support: &[(usize, i32)]) -> Result<()> {
        self.scaling.clear();
        for k in 0..self.len() {
            let mut values = Vec::with_capacity(support.len());
            for &(c, year) in support {
                let v = self.raw(k, c, year).ok_or_else(|| {
                    Error::Data(format!("covariate '{}' has no entry for country {c} year {year}", self.names[k]))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "covariate '{}' is missing for country {c} year {year}",
                        self.names[k]
                    )));
                }
                values.push(v);
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::Data(format!(
                    "covariate '{}' is constant over the panel and cannot be standardized",
                    self.names[k]
                )));
            }
            let base = k * self.n_countries * self.n_years;
            for ix in base..base + self.n_countries * self.n_years {
                self.standardized[ix] = (self.raw[ix] - mean) / sd;
            }
            self.scaling.push(Standardization { mean, sd });
        }
        Ok(())
    }
}

/// Observed adoption panel plus country covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub series: Vec<Series>,
    pub covariates: Covariates,
    pub time_axis_mode: TimeAxisMode,
}

impl PanelDataset {
    /// Validates the panel and standardizes the covariates over the
    /// country-years it covers.
    pub fn new(
        countries: Vec<String>,
        products: Vec<String>,
        series: Vec<Series>,
        mut covariates: Covariates,
        time_axis_mode: TimeAxisMode,
    ) -> Result<Self> {
        if covariates.n_countries != countries.len() {
            return Err(Error::Data(format!(
                "covariates cover {} countries, panel has {}",
                covariates.n_countries,
                countries.len()
            )));
        }
        for s in &series {
            validate_series(s, countries.len(), products.len()).map_err(|msg| {
                Error::Data(format!(
                    "series {}/{}: {msg}",
                    countries.get(s.country).map(String::as_str).unwrap_or("?"),
                    products.get(s.product).map(String::as_str).unwrap_or("?")
                ))
            })?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &series {
            if !seen.insert((s.country, s.product)) {
                return Err(Error::Data(format!(
                    "duplicate series for {}/{}",
                    countries[s.country], products[s.product]
                )));
            }
        }
        let support = country_year_support(&series);
        covariates.standardize(&support)?;
        Ok(Self { countries, products, series, covariates, time_axis_mode })
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn series_for(&self, country: usize, product: usize) -> Option<&Series> {
        self.series.iter().find(|s| s.country == country && s.product == product)
    }

    pub fn year_range(&self) -> Option<(i32, i32)> {
        let years = self.series.iter().flat_map(|s| s.records.iter().map(|r| r.year));
        let (mut lo, mut hi) = (i32::MAX, i32::MIN);
        for y in years {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        (lo <= hi).then_some((lo, hi))
    }
}

/// Sorted, de-duplicated `(country, year)` cells present in the panel.
pub fn country_year_support(series: &[Series]) -> Vec<(usize, i32)> {
    let mut cells: Vec<(usize, i32)> =
        series.iter().flat_map(|s| s.records.iter().map(move |r| (s.country, r.year))).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

fn validate_series(s: &Series, n_countries: usize, n_products: usize) -> Result<(), String> {
    if s.country >= n_countries {
        return Err(format!("unknown country index {}", s.country));
    }
    if s.product >= n_products {
        return Err(format!("unknown product index {}", s.product));
    }
    if s.records.len() < 3 {
        return Err(format!("{} time points, at least 3 required", s.records.len()));
    }
    for (row, pair) in s.records.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if b.year != a.year + 1 {
            return Err(format!("row {}: year {} does not follow {}", row + 1, b.year, a.year));
        }
        if b.cumulative_prev < a.cumulative_prev {
            return Err(format!(
                "row {}: cumulative adopters decrease ({} -> {})",
                row + 1,
                a.cumulative_prev,
                b.cumulative_prev
            ));
        }
    }
    for (row, r) in s.records.iter().enumerate() {
        if r.population == 0 {
            return Err(format!("row {row}: population must be positive"));
        }
        if r.cumulative_prev + r.adopters > r.population {
            return Err(format!(
                "row {row}: cumulative adopters {} exceed population {}",
                r.cumulative_prev + r.adopters,
                r.population
            ));
        }
    }
    Ok(())
}

/// Fixed prior constants and sampler tuning defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Slab scale multiplier for the spike-and-slab prior.
    pub upsilon: f64,
    /// Prior inclusion probability.
    pub w: f64,
    /// Poisson mean of the interior knot count.
    pub poisson_rate: f64,
    pub precision_shape: f64,
    pub precision_rate: f64,
    /// Variance of the speed residual `tau_in(t)`; fixed, not sampled.
    pub theta_h: f64,
    pub lambda_prior_shape: f64,
    pub lambda_prior_scale: f64,
    /// Initial random-walk sd for speed proposals (tuned during burn-in).
    pub rw_step: f64,
    /// Prior precision of the spline coefficients.
    pub spline_coef_precision: f64,
    pub max_knots: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            upsilon: 7.0,
            w: 0.1,
            poisson_rate: 2.0,
            precision_shape: 1e-5,
            precision_rate: 1e-5,
            theta_h: 1e-4,
            lambda_prior_shape: 0.001,
            lambda_prior_scale: 1000.0,
            rw_step: 0.02,
            spline_coef_precision: 1.0,
            max_knots: 20,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("upsilon", self.upsilon),
            ("poisson_rate", self.poisson_rate),
            ("precision_shape", self.precision_shape),
            ("precision_rate", self.precision_rate),
            ("theta_h", self.theta_h),
            ("lambda_prior_shape", self.lambda_prior_shape),
            ("lambda_prior_scale", self.lambda_prior_scale),
            ("rw_step", self.rw_step),
            ("spline_coef_precision", self.spline_coef_precision),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::Config(format!("w must lie in (0,1), got {}", self.w)));
        }
        if self.max_knots == 0 {
            return Err(Error::Config("max_knots must be at least 1".into()));
        }
        Ok(())
    }

    /// Precision of the speed residual, `1 / theta_h`.
    pub fn pull_precision(&self) -> f64 {
        1.0 / self.theta_h
    }
}

/// Expected adoption ratio `y(t)/Y(t-1)` under the logistic model.
pub fn diffusion_hazard(lambda: f64, cumulative_prev: f64, population: f64, alpha: f64) -> Result<f64> {
    let capacity = population * alpha;
    if !(capacity > 0.0) {
        return Err(Error::Domain(format!(
            "population x ceiling must be positive (M = {population}, alpha = {alpha})"
        )));
    }
    if cumulative_prev < 0.0 {
        return Err(Error::Domain(format!("negative cumulative adopters {cumulative_prev}")));
    }
    Ok(lambda * (1.0 - cumulative_prev / capacity))
}

//! Index structures the sampler works on.
//!
//! A [`Design`] flattens a [`PanelDataset`] into the usable observations
//! (those with `Y(t-1) > 0`), the country/product pairs that own a ceiling,
//! the country-year cells that own a country effect `B_i(t)`, and the grid of
//! abscissae at which `f` is evaluated.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PanelDataset, TimeAxisMode};

/// Ridge added to `X^T X` before inverting it for the prior correlation.
pub const DESIGN_RIDGE: f64 = 1e-10;

/// Time measure of the model: the three variants compared by DIC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    SinceIntro,
    Calendar,
    Invariant,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::SinceIntro, ModelVariant::Calendar, ModelVariant::Invariant];

    pub fn has_time_effect(self) -> bool {
        self != ModelVariant::Invariant
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelVariant::SinceIntro => "since-intro",
            ModelVariant::Calendar => "calendar",
            ModelVariant::Invariant => "invariant",
        }
    }

    pub fn from_axis(mode: TimeAxisMode) -> Self {
        match mode {
            TimeAxisMode::CalendarYear => ModelVariant::Calendar,
            TimeAxisMode::YearsSinceIntroduction => ModelVariant::SinceIntro,
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "since-intro" | "since_intro" => Ok(ModelVariant::SinceIntro),
            "calendar" => Ok(ModelVariant::Calendar),
            "invariant" | "time-invariant" => Ok(ModelVariant::Invariant),
            other => {
                Err(Error::Config(format!("unknown variant '{other}' (expected since-intro, calendar or invariant)")))
            }
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pair: usize,
    pub country: usize,
    pub product: usize,
    pub year: i32,
    /// Abscissa fed to `f`.
    pub abscissa: f64,
    pub grid: usize,
    /// Index of the country-year effect.
    pub effect: usize,
    /// Index into the speed vector.
    pub slot: usize,
    /// `y(t) / Y(t-1)`.
    pub ratio: f64,
    /// `Y(t-1) / M(t)`.
    pub saturation: f64,
    /// `(Y(t-1) + y(t)) / M(t)`.
    pub penetration_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub country: usize,
    pub product: usize,
    pub introduction_year: i32,
    pub obs: Range<usize>,
    /// Lower edge of the ceiling's support: highest observed penetration.
    pub alpha_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectCell {
    pub country: usize,
    pub year: i32,
    pub obs: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub variant: ModelVariant,
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub covariate_names: Vec<String>,
    pub obs: Vec<Observation>,
    pub pairs: Vec<Pair>,
    pub effects: Vec<EffectCell>,
    pub product_obs: Vec<Vec<usize>>,
    pub slot_obs: Vec<Vec<usize>>,
    /// Distinct abscissae of `f`, ascending.
    pub grid: Vec<f64>,
    pub grid_obs: Vec<Vec<usize>>,
    /// Spline domain `(a, b)`.
    pub bounds: (f64, f64),
    /// Standardized covariates, one row per effect cell.
    pub x: DMatrix<f64>,
    pub xtx: DMatrix<f64>,
    /// Prior correlation `(X^T X)^{-1}` of the spike-and-slab prior.
    pub r: DMatrix<f64>,
}

impl Design {
    pub fn compile(panel: &PanelDataset, variant: ModelVariant) -> Result<Self> {
        let mut obs = Vec::new();
        let mut pairs = Vec::new();
        let mut effect_index: BTreeMap<(usize, i32), usize> = BTreeMap::new();

        let mut series: Vec<_> = panel.series.iter().collect();
        series.sort_by_key(|s| (s.country, s.product));

        // first pass: which country-years carry usable observations
        for s in &series {
            for r in &s.records {
                if r.cumulative_prev > 0 {
                    effect_index.insert((s.country, r.year), 0);
                }
            }
        }
        for (i, v) in effect_index.values_mut().enumerate() {
            *v = i;
        }

        let abscissa = |intro: i32, year: i32| -> f64 {
            match variant {
                ModelVariant::Calendar => year as f64,
                _ => (year - intro) as f64,
            }
        };
        let mut grid_values: Vec<f64> = Vec::new();
        for s in &series {
            let start = obs.len();
            for r in s.records.iter().filter(|r| r.cumulative_prev > 0) {
                let x = abscissa(s.introduction_year, r.year);
                grid_values.push(x);
                obs.push(Observation {
                    pair: pairs.len(),
                    country: s.country,
                    product: s.product,
                    year: r.year,
                    abscissa: x,
                    grid: 0,
                    effect: effect_index[&(s.country, r.year)],
                    slot: 0,
                    ratio: r.adopters as f64 / r.cumulative_prev as f64,
                    saturation: r.penetration_prev(),
                    penetration_after: r.penetration_after(),
                });
            }
            if obs.len() > start {
                pairs.push(Pair {
                    country: s.country,
                    product: s.product,
                    introduction_year: s.introduction_year,
                    obs: start..obs.len(),
                    alpha_floor: s.max_penetration(),
                });
            }
        }
        if obs.is_empty() {
            return Err(Error::Data("panel has no observation with Y(t-1) > 0".into()));
        }
        for p in &pairs {
            if !(p.alpha_floor < 1.0) {
                return Err(Error::Data(format!(
                    "{}/{} is fully saturated; the ceiling has empty support",
                    panel.countries[p.country], panel.products[p.product]
                )));
            }
        }

        grid_values.sort_by(f64::total_cmp);
        grid_values.dedup();
        for o in obs.iter_mut() {
            o.grid = grid_values.partition_point(|&g| g < o.abscissa);
        }
        let bounds = (grid_values[0] - 0.5, grid_values[grid_values.len() - 1] + 0.5);

        let k = panel.n_covariates();
        let mut effects: Vec<EffectCell> =
            effect_index.keys().map(|&(country, year)| EffectCell { country, year, obs: Vec::new() }).collect();
        let mut x = DMatrix::zeros(effects.len(), k);
        for (row, cell) in effects.iter().enumerate() {
            for j in 0..k {
                x[(row, j)] = panel.covariates.value(j, cell.country, cell.year).ok_or_else(|| {
                    Error::Data(format!(
                        "covariate '{}' missing for {} in {}",
                        panel.covariates.names[j], panel.countries[cell.country], cell.year
                    ))
                })?;
            }
        }
        for (j, o) in obs.iter().enumerate() {
            effects[o.effect].obs.push(j);
        }

        let mut design = Self {
            variant,
            countries: panel.countries.clone(),
            products: panel.products.clone(),
            covariate_names: panel.covariates.names.clone(),
            obs,
            pairs,
            effects,
            product_obs: Vec::new(),
            slot_obs: Vec::new(),
            grid: grid_values,
            grid_obs: Vec::new(),
            bounds,
            xtx: DMatrix::zeros(k, k),
            r: DMatrix::zeros(k, k),
            x,
        };
        design.rebuild_indices();
        design.rebuild_covariate_products()?;
        Ok(design)
    }

    fn rebuild_indices(&mut self) {
        let invariant = self.variant == ModelVariant::Invariant;
        let n_slots = if invariant { self.pairs.len() } else { self.obs.len() };
        self.slot_obs = vec![Vec::new(); n_slots];
        self.product_obs = vec![Vec::new(); self.products.len()];
        self.grid_obs = vec![Vec::new(); self.grid.len()];
        for (j, o) in self.obs.iter_mut().enumerate() {
            o.slot = if invariant { o.pair } else { j };
            self.slot_obs[o.slot].push(j);
            self.product_obs[o.product].push(j);
            self.grid_obs[o.grid].push(j);
        }
    }

    fn rebuild_covariate_products(&mut self) -> Result<()> {
        let k = self.x.ncols();
        self.xtx = self.x.transpose() * &self.x;
        if k == 0 {
            self.r = DMatrix::zeros(0, 0);
            return Ok(());
        }
        let ridged = &self.xtx + DMatrix::identity(k, k) * DESIGN_RIDGE;
        self.r = ridged.cholesky().ok_or_else(|| Error::Numerical("X^T X is not positive definite".into()))?.inverse();
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.obs.len()
    }

    pub fn n_slots(&self) -> usize {
        self.slot_obs.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn pair_index(&self, country: usize, product: usize) -> Option<usize> {
        self.pairs.iter().position(|p| p.country == country && p.product == product)
    }

    pub fn pair_label(&self, pair: usize) -> String {
        let p = &self.pairs[pair];
        format!("{}/{}", self.countries[p.country], self.products[p.product])
    }

    /// Replaces the observed ratios of one pair and recomputes saturation
    /// levels by running the cumulative recursion forward from the pair's
    /// first saturation level. Populations are taken as constant within the
    /// pair's window.
    pub fn set_pair_ratios(&mut self, pair: usize, ratios: &[f64]) {
        let range = self.pairs[pair].obs.clone();
        assert_eq!(range.len(), ratios.len());
        let mut sat = self.obs[range.start].saturation;
        let mut floor: f64 = 0.0;
        for (j, &r) in range.clone().zip(ratios) {
            let o = &mut self.obs[j];
            o.saturation = sat;
            o.ratio = r;
            o.penetration_after = sat * (1.0 + r);
            floor = floor.max(o.saturation).max(o.penetration_after);
            sat = o.penetration_after;
        }
        self.pairs[pair].alpha_floor = floor;
    }

    /// Column labels for the speed slots, in slot order.
    pub fn slot_labels(&self) -> Vec<String> {
        match self.variant {
            ModelVariant::Invariant => (0..self.pairs.len()).map(|p| self.pair_label(p)).collect(),
            _ => self
                .obs
                .iter()
                .map(|o| format!("{}/{}/{}", self.countries[o.country], self.products[o.product], o.year))
                .collect(),
        }
    }
}

//! Delimited-text panel files, TOML run configuration and result tables.
//!
//! Adoption file columns: `country, product, year, adopters, cumulative_prev,
//! population` plus an optional `introduction_year` (defaults to the first
//! year of the series). Covariate file columns: `covariate, country,
//! year_or_blank, value, time_varying`; a blank year marks a time-invariant
//! value that is broadcast over every year.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{DicResult, Trajectory};
use crate::design::{Design, ModelVariant};
use crate::error::{Error, Result};
use crate::model::{Covariates, HyperParams, PanelDataset, Series, TimeAxisMode, YearRecord};
use crate::sampler::{ChainOutput, SamplerConfig};
use crate::simulate::GeneratorConfig;

pub const ADOPTION_FILE: &str = "adoption.csv";
pub const COVARIATE_FILE: &str = "covariates.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdoptionRow {
    country: String,
    product: String,
    year: i32,
    adopters: u64,
    cumulative_prev: u64,
    population: u64,
    #[serde(default)]
    introduction_year: Option<i32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CovariateRow {
    covariate: String,
    country: String,
    year_or_blank: Option<i32>,
    value: f64,
    time_varying: bool,
}

fn row_error(file: &str, line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("{file} line {line}: {msg}"))
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map(|p| p.line()).unwrap_or(0)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Data(format!("cannot create {}: {e}", path.display())))
}

fn index_of(names: &mut Vec<String>, name: &str) -> usize {
    match names.iter().position(|n| n == name) {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    }
}

/// Reads an adoption table and a covariate table into a validated panel.
///
/// Countries, products and covariates are indexed in order of first
/// appearance. Every failure names the offending line.
pub fn read_panel(adoption: impl Read, covariates: impl Read, time_axis_mode: TimeAxisMode) -> Result<PanelDataset> {
    const ADOPT: &str = "adoption file";
    const COV: &str = "covariate file";
    let mut countries = Vec::new();
    let mut products = Vec::new();
    // (country, product) -> (introduction year, records, file line per record)
    type Pending = (Option<i32>, Vec<YearRecord>, Vec<u64>);
    let mut series: BTreeMap<(usize, usize), Pending> = BTreeMap::new();
    let mut order = Vec::new();

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(adoption);
    let header = rdr.headers().map_err(|e| row_error(ADOPT, 1, e))?.clone();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec).map_err(|e| row_error(ADOPT, csv_line(&e), e))? {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: AdoptionRow = rec.deserialize(Some(&header)).map_err(|e| row_error(ADOPT, line, e))?;
        if row.country.is_empty() || row.product.is_empty() {
            return Err(row_error(ADOPT, line, "country and product must be named"));
        }
        if !(1000..=9999).contains(&row.year) {
            return Err(row_error(ADOPT, line, format!("year {} is not a 4-digit year", row.year)));
        }
        let key = (index_of(&mut countries, &row.country), index_of(&mut products, &row.product));
        let entry = series.entry(key).or_insert_with(|| {
            order.push(key);
            (row.introduction_year, Vec::new(), Vec::new())
        });
        if entry.0 != row.introduction_year {
            return Err(row_error(ADOPT, line, "introduction_year differs from earlier rows of this series"));
        }
        if let (Some(prev), Some(&prev_line)) = (entry.1.last(), entry.2.last()) {
            if row.year != prev.year + 1 {
                return Err(row_error(
                    ADOPT,
                    line,
                    format!("year {} does not follow {} (line {prev_line})", row.year, prev.year),
                ));
            }
            if row.cumulative_prev < prev.cumulative_prev {
                return Err(row_error(
                    ADOPT,
                    line,
                    format!("cumulative adopters decrease from {} to {}", prev.cumulative_prev, row.cumulative_prev),
                ));
            }
        }
        if row.population == 0 {
            return Err(row_error(ADOPT, line, "population must be positive"));
        }
        if row.cumulative_prev + row.adopters > row.population {
            return Err(row_error(ADOPT, line, "cumulative adopters exceed population"));
        }
        entry.1.push(YearRecord {
            year: row.year,
            adopters: row.adopters,
            cumulative_prev: row.cumulative_prev,
            population: row.population,
        });
        entry.2.push(line);
    }
    if order.is_empty() {
        return Err(Error::Data(format!("{ADOPT} has no rows")));
    }

    let mut names: Vec<String> = Vec::new();
    let mut flags: Vec<bool> = Vec::new();
    let mut cells: Vec<(usize, usize, Option<i32>, f64, u64)> = Vec::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(covariates);
    let header = rdr.headers().map_err(|e| row_error(COV, 1, e))?.clone();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec).map_err(|e| row_error(COV, csv_line(&e), e))? {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: CovariateRow = rec.deserialize(Some(&header)).map_err(|e| row_error(COV, line, e))?;
        if !row.value.is_finite() {
            return Err(row_error(COV, line, "missing or non-finite value"));
        }
        let country = countries
            .iter()
            .position(|c| *c == row.country)
            .ok_or_else(|| row_error(COV, line, format!("unknown country '{}'", row.country)))?;
        let k = index_of(&mut names, &row.covariate);
        if k == flags.len() {
            flags.push(row.time_varying);
        } else if flags[k] != row.time_varying {
            return Err(row_error(COV, line, format!("time_varying flag of '{}' changes", row.covariate)));
        }
        match (row.time_varying, row.year_or_blank) {
            (true, None) => return Err(row_error(COV, line, "time-varying value needs a year")),
            (false, Some(_)) => return Err(row_error(COV, line, "time-invariant value must leave the year blank")),
            (_, Some(y)) if !(1000..=9999).contains(&y) => {
                return Err(row_error(COV, line, format!("year {y} is not a 4-digit year")))
            }
            _ => {}
        }
        cells.push((k, country, row.year_or_blank, row.value, line));
    }

    let years = series.values().flat_map(|s| s.1.iter().map(|r| r.year)).chain(cells.iter().filter_map(|c| c.2));
    let (lo, hi) = years.fold((i32::MAX, i32::MIN), |(lo, hi), y| (lo.min(y), hi.max(y)));
    let n_years = (hi - lo + 1) as usize;
    let n_countries = countries.len();
    let mut raw = vec![f64::NAN; names.len() * n_countries * n_years];
    let mut seen = vec![0u64; raw.len()];
    for &(k, c, year, value, line) in &cells {
        let base = (k * n_countries + c) * n_years;
        let span = match year {
            Some(y) => {
                let i = base + (y - lo) as usize;
                i..i + 1
            }
            None => base..base + n_years,
        };
        for i in span {
            if seen[i] != 0 {
                return Err(row_error(COV, line, format!("duplicates line {}", seen[i])));
            }
            seen[i] = line;
            raw[i] = value;
        }
    }
    let covariates = Covariates::new(names, flags, n_countries, lo, n_years, raw)?;

    let series: Vec<Series> = order
        .iter()
        .map(|key| {
            let (intro, records, _) = series.remove(key).expect("every key is ordered once");
            Series { country: key.0, product: key.1, introduction_year: intro.unwrap_or(records[0].year), records }
        })
        .collect();
    PanelDataset::new(countries, products, series, covariates, time_axis_mode)
}

/// Loads `adoption.csv`-style and `covariates.csv`-style files.
pub fn load_panel(adoption: &Path, covariates: &Path, time_axis_mode: TimeAxisMode) -> Result<PanelDataset> {
    read_panel(open(adoption)?, open(covariates)?, time_axis_mode)
        .map_err(|e| e.context(format!("loading {} and {}", adoption.display(), covariates.display())))
}

/// Writes the panel in the layout [`read_panel`] accepts, so that reading
/// the output reproduces the panel exactly.
pub fn write_panel(panel: &PanelDataset, adoption: impl Write, covariates: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(adoption);
    for s in &panel.series {
        for r in &s.records {
            w.serialize(AdoptionRow {
                country: panel.countries[s.country].clone(),
                product: panel.products[s.product].clone(),
                year: r.year,
                adopters: r.adopters,
                cumulative_prev: r.cumulative_prev,
                population: r.population,
                introduction_year: Some(s.introduction_year),
            })?;
        }
    }
    w.flush()?;

    let cov = &panel.covariates;
    let mut w = csv::Writer::from_writer(covariates);
    for k in 0..cov.len() {
        for c in 0..cov.n_countries {
            let years: Vec<Option<i32>> = if cov.time_varying[k] {
                (0..cov.n_years as i32).map(|y| Some(cov.first_year + y)).collect()
            } else {
                vec![None]
            };
            for year in years {
                let value = cov.raw(k, c, year.unwrap_or(cov.first_year)).unwrap_or(f64::NAN);
                if value.is_nan() {
                    continue;
                }
                w.serialize(CovariateRow {
                    covariate: cov.names[k].clone(),
                    country: panel.countries[c].clone(),
                    year_or_blank: year,
                    value,
                    time_varying: cov.time_varying[k],
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `adoption.csv` and `covariates.csv` into `dir`.
pub fn save_panel(panel: &PanelDataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let (a, c) = (dir.join(ADOPTION_FILE), dir.join(COVARIATE_FILE));
    write_panel(panel, create(&a)?, create(&c)?)?;
    Ok((a, c))
}

/// Sampler section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub iterations: usize,
    /// Defaults to a fifth of the iterations.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub variant: ModelVariant,
    pub tune_interval: usize,
    pub target_acceptance: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::new(10_000, ModelVariant::SinceIntro, 1);
        Self {
            iterations: d.n_iterations,
            burn_in: None,
            thin: d.thin,
            chains: d.n_chains,
            seed: d.rng_seed,
            variant: d.model_variant,
            tune_interval: d.tune_interval,
            target_acceptance: d.target_acceptance,
        }
    }
}

impl SamplerSection {
    pub fn to_config(&self, variant: ModelVariant) -> SamplerConfig {
        let mut c = SamplerConfig::new(self.iterations, variant, self.seed);
        if let Some(b) = self.burn_in {
            c.burn_in = b;
        }
        c.thin = self.thin;
        c.n_chains = self.chains;
        c.tune_interval = self.tune_interval;
        c.target_acceptance = self.target_acceptance;
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub adoption: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a CLI run needs, read from a TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub time_axis_mode: TimeAxisMode,
    pub hyper: HyperParams,
    pub sampler: SamplerSection,
    pub generator: GeneratorConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.hyper.validate()?;
        cfg.sampler.to_config(cfg.sampler.variant).validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// One row of `draws.csv`: the scalar and low-dimensional parts of a draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawRow {
    pub chain: usize,
    pub draw: usize,
    pub deviance: f64,
    pub theta_l: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_h: f64,
    pub n_knots: usize,
    pub tau: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<bool>,
    /// Conditional inclusion probabilities behind the draw.
    pub inclusion: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn draw_rows(chains: &[ChainOutput]) -> Vec<DrawRow> {
    let mut rows = Vec::new();
    for c in chains {
        for (i, d) in c.draws.iter().enumerate() {
            rows.push(DrawRow {
                chain: c.chain,
                draw: i,
                deviance: c.deviance[i],
                theta_l: d.theta_l,
                theta_a: d.theta_a,
                theta_b: d.theta_b,
                theta_h: d.theta_h,
                n_knots: d.spline.k(),
                tau: d.tau.clone(),
                beta: d.beta.clone(),
                gamma: d.gamma.clone(),
                inclusion: c.inclusion_probs[i].clone(),
                alpha: d.alpha.clone(),
            });
        }
    }
    rows
}

const DRAW_SCALARS: [&str; 8] = ["chain", "draw", "deviance", "theta_l", "theta_a", "theta_b", "theta_h", "n_knots"];

/// Writes `draws.csv`; column names carry product, covariate and pair labels.
pub fn write_draws(rows: &[DrawRow], design: &Design, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = DRAW_SCALARS.iter().map(|s| s.to_string()).collect();
    header.extend(design.products.iter().map(|p| format!("tau:{p}")));
    for prefix in ["beta", "gamma", "incl"] {
        header.extend(design.covariate_names.iter().map(|k| format!("{prefix}:{k}")));
    }
    header.extend((0..design.pairs.len()).map(|p| format!("alpha:{}", design.pair_label(p))));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.chain.to_string(),
            r.draw.to_string(),
            r.deviance.to_string(),
            r.theta_l.to_string(),
            r.theta_a.to_string(),
            r.theta_b.to_string(),
            r.theta_h.to_string(),
            r.n_knots.to_string(),
        ];
        rec.extend(r.tau.iter().map(f64::to_string));
        rec.extend(r.beta.iter().map(f64::to_string));
        rec.extend(r.gamma.iter().map(|&g| (g as u8).to_string()));
        rec.extend(r.inclusion.iter().map(f64::to_string));
        rec.extend(r.alpha.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, line: u64, column: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field.parse().map_err(|e| row_error("draws file", line, format!("column {column}: {e}")))
}

/// Reads `draws.csv` back. Returns the rows and the covariate names.
pub fn read_draws(input: impl Read) -> Result<(Vec<DrawRow>, Vec<String>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().take(DRAW_SCALARS.len()).ne(DRAW_SCALARS.iter().copied()) {
        return Err(Error::Data("draws file: unexpected leading columns".into()));
    }
    let group = |prefix: &str| -> Vec<usize> {
        header.iter().enumerate().filter(|(_, h)| h.starts_with(prefix)).map(|(i, _)| i).collect()
    };
    let (tau, beta, gamma, incl, alpha) =
        (group("tau:"), group("beta:"), group("gamma:"), group("incl:"), group("alpha:"));
    let names = beta.iter().map(|&i| header[i]["beta:".len()..].to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let f = |i: usize| parse::<f64>(&rec[i], line, &header[i]);
        let many = |idx: &[usize]| idx.iter().map(|&i| f(i)).collect::<Result<Vec<f64>>>();
        rows.push(DrawRow {
            chain: parse(&rec[0], line, "chain")?,
            draw: parse(&rec[1], line, "draw")?,
            deviance: f(2)?,
            theta_l: f(3)?,
            theta_a: f(4)?,
            theta_b: f(5)?,
            theta_h: f(6)?,
            n_knots: parse(&rec[7], line, "n_knots")?,
            tau: many(&tau)?,
            beta: many(&beta)?,
            gamma: gamma
                .iter()
                .map(|&i| parse::<u8>(&rec[i], line, &header[i]).map(|g| g == 1))
                .collect::<Result<_>>()?,
            inclusion: many(&incl)?,
            alpha: many(&alpha)?,
        });
    }
    Ok((rows, names))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionRow {
    pub covariate: String,
    /// Share of draws with the covariate included.
    pub frequency: f64,
    /// Mean conditional inclusion probability.
    pub rao_blackwell: f64,
}

pub fn inclusion_rows(chains: &[ChainOutput], design: &Design) -> Result<Vec<InclusionRow>> {
    let m = chains.len() as f64;
    let mut freq = vec![0.0; design.n_covariates()];
    let mut rb = vec![0.0; design.n_covariates()];
    for c in chains {
        for (k, (f, r)) in c.inclusion()?.into_iter().zip(c.inclusion_rao_blackwell()?).enumerate() {
            freq[k] += f / m;
            rb[k] += r / m;
        }
    }
    Ok(design
        .covariate_names
        .iter()
        .zip(freq.into_iter().zip(rb))
        .map(|(name, (frequency, rao_blackwell))| InclusionRow { covariate: name.clone(), frequency, rao_blackwell })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub pair: String,
    pub year: i32,
    pub abscissa: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn trajectory_rows(trajectories: &[Trajectory]) -> Vec<TrajectoryRow> {
    trajectories
        .iter()
        .flat_map(|t| {
            (0..t.years.len()).map(move |i| TrajectoryRow {
                pair: t.pair.clone(),
                year: t.years[i],
                abscissa: t.abscissa[i],
                mean: t.mean[i],
                lower: t.lower[i],
                upper: t.upper[i],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatRow {
    pub parameter: String,
    pub rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub chain: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub knots: f64,
    pub rw_step: f64,
    pub refused_knot_moves: u64,
}

pub fn acceptance_rows(chains: &[ChainOutput]) -> Vec<AcceptanceRow> {
    chains
        .iter()
        .map(|c| AcceptanceRow {
            chain: c.chain,
            alpha: c.acceptance_rates.alpha,
            lambda: c.acceptance_rates.lambda,
            knots: c.acceptance_rates.knots,
            rw_step: c.rw_step,
            refused_knot_moves: c.refused_knot_moves,
        })
        .collect()
}

/// Writes any serializable rows with a header line.
pub fn write_table<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<T: for<'de> Deserialize<'de>>(input: impl Read) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize().map(|r| r.map_err(|e| row_error("table", csv_line(&e), e))).collect()
}

pub fn write_table_file<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    write_table(rows, create(path)?)
}

pub fn read_table_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    read_table(open(path)?).map_err(|e| e.context(path.display()))
}

pub fn write_dic(rows: &[DicResult], path: &Path) -> Result<()> {
    write_table_file(rows, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADOPTION: &str = "country,product,year,adopters,cumulative_prev,population\n\
        A,tv,2000,10,5,1000\nA,tv,2001,20,15,1000\nA,tv,2002,30,35,1000\n";

    #[test]
    fn minimal_panel_loads() {
        let cov = "covariate,country,year_or_blank,value,time_varying\ngdp,A,,3.5,false\n";
        let p = read_panel(ADOPTION.as_bytes(), cov.as_bytes(), TimeAxisMode::YearsSinceIntroduction);
        // a single country makes every covariate constant, which cannot be standardized
        assert!(matches!(p, Err(Error::Data(m)) if m.contains("constant")));
        let p = read_panel(
            ADOPTION.as_bytes(),
            "covariate,country,year_or_blank,value,time_varying\n".as_bytes(),
            TimeAxisMode::YearsSinceIntroduction,
        )
        .unwrap();
        assert_eq!(p.series.len(), 1);
        assert_eq!(p.series[0].introduction_year, 2000);
        assert_eq!(p.series[0].records.len(), 3);
    }

    #[test]
    fn decreasing_cumulative_names_line() {
        let bad = ADOPTION.replace("2002,30,35", "2002,30,14");
        let err = read_panel(
            bad.as_bytes(),
            "covariate,country,year_or_blank,value,time_varying\n".as_bytes(),
            TimeAxisMode::CalendarYear,
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert_eq!(err.category(), "data");
    }

    #[test]
    fn missing_cell_is_rejected() {
        let bad = ADOPTION.replace("2001,20,15", "2001,,15");
        let err = read_panel(
            bad.as_bytes(),
            "covariate,country,year_or_blank,value,time_varying\n".as_bytes(),
            TimeAxisMode::CalendarYear,
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn unknown_country_in_covariates() {
        let cov = "covariate,country,year_or_blank,value,time_varying\ngdp,Z,,1,false\n";
        let err = read_panel(ADOPTION.as_bytes(), cov.as_bytes(), TimeAxisMode::CalendarYear).unwrap_err();
        assert!(err.to_string().contains("unknown country 'Z'"), "{err}");
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let cfg = RunConfig::from_toml("[sampler]\niterations = 500\nvariant = \"calendar\"\n").unwrap();
        assert_eq!(cfg.sampler.iterations, 500);
        assert_eq!(cfg.sampler.variant, ModelVariant::Calendar);
        assert_eq!(cfg.sampler.to_config(ModelVariant::Calendar).burn_in, 100);
        assert_eq!(cfg.hyper, HyperParams::default());
        let err = RunConfig::from_toml("[sampler]\niteratons = 5\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffspeed::analytics::{self, PenetrationQuery, SpeedSpec, SpeedTransform};
use diffspeed::diagnostics;
use diffspeed::io::{self, DrawRow, InclusionRow, RhatRow, RunConfig, TrajectoryRow};
use diffspeed::simulate::{default_truth, simulate_panel};
use diffspeed::{run_chains, Design, Error, ModelVariant, PanelDataset, Result};
use log::info;

#[derive(Parser)]
#[command(name = "diffspeed", version, about = "Bayesian diffusion-speed panel sampler")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Output directory (input directory for `report`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// since-intro, calendar or invariant.
    #[arg(long, global = true)]
    variant: Option<ModelVariant>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel with known truth.
    Simulate,
    /// Fit one model variant and write draws and summaries.
    Fit(DataArgs),
    /// Fit several variants and rank them by DIC.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated variants; at least two.
        #[arg(long, value_delimiter = ',', default_value = "since-intro,calendar,invariant")]
        variants: Vec<ModelVariant>,
    },
    /// Time to move from penetration p1 to p2.
    Ttp {
        /// Constant speed.
        #[arg(long, conflicts_with = "slope")]
        lambda: Option<f64>,
        /// Speed growing linearly in time, `lambda(t) = slope * t`.
        #[arg(long)]
        slope: Option<f64>,
        #[arg(long)]
        p1: f64,
        #[arg(long)]
        p2: f64,
        /// Time at which penetration equals p1.
        #[arg(long, default_value_t = 0.0)]
        t1: f64,
    },
    /// Summarize the tables of a finished fit.
    Report,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding adoption.csv and covariates.csv.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let c = &cli.common;
    if let Some(s) = c.seed {
        cfg.sampler.seed = s;
    }
    if let Some(n) = c.chains {
        cfg.sampler.chains = n;
    }
    if let Some(n) = c.iterations {
        cfg.sampler.iterations = n;
    }
    if let Some(v) = c.variant {
        cfg.sampler.variant = v;
    }
    if let Some(o) = &c.out {
        cfg.paths.out = Some(o.clone());
    }
    let out = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Simulate => simulate(&cfg, &out),
        Command::Fit(data) => {
            let panel = load(&cfg, data.data.as_deref())?;
            fit(&cfg, &panel, cfg.sampler.variant, &out).map(|_| ())
        }
        Command::Compare { data, variants } => compare(&cfg, data.data.as_deref(), &variants, &out),
        Command::Ttp { lambda, slope, p1, p2, t1 } => {
            let speed = match (lambda, slope) {
                (Some(l), None) => SpeedSpec::Constant(l),
                (None, Some(s)) => SpeedSpec::Linear { slope: s },
                _ => return Err(Error::Config("give exactly one of --lambda or --slope".into())),
            };
            let t = analytics::time_to_penetration(&PenetrationQuery { p1, p2, t1, speed })?;
            println!("{t:.5}");
            Ok(())
        }
        Command::Report => report(&out),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut generator = cfg.generator.clone();
    generator.time_axis_mode = cfg.time_axis_mode;
    let truth = default_truth(&generator)?;
    let sim = simulate_panel(&generator, &truth, cfg.sampler.seed)?;
    ensure_dir(out)?;
    io::save_panel(&sim.panel, out)?;
    let json = serde_json::to_string_pretty(&sim.truth).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(out.join("truth.json"), json)?;
    let lengths: Vec<usize> = sim.panel.series.iter().map(|s| s.records.len()).collect();
    println!(
        "simulated {} countries x {} products, series lengths {}..={}, {} truncated noise draws -> {}",
        sim.panel.countries.len(),
        sim.panel.products.len(),
        lengths.iter().min().unwrap_or(&0),
        lengths.iter().max().unwrap_or(&0),
        sim.truncation_events,
        out.display()
    );
    Ok(())
}

fn load(cfg: &RunConfig, data: Option<&Path>) -> Result<PanelDataset> {
    let (adoption, covariates) = match data {
        Some(dir) => (dir.join(io::ADOPTION_FILE), dir.join(io::COVARIATE_FILE)),
        None => match (&cfg.paths.adoption, &cfg.paths.covariates) {
            (Some(a), Some(c)) => (a.clone(), c.clone()),
            _ => {
                return Err(Error::Config("no data: pass --data DIR or set paths.adoption and paths.covariates".into()))
            }
        },
    };
    io::load_panel(&adoption, &covariates, cfg.time_axis_mode)
}

fn fit(cfg: &RunConfig, panel: &PanelDataset, variant: ModelVariant, out: &Path) -> Result<analytics::DicResult> {
    let sampler = cfg.sampler.to_config(variant);
    sampler.validate()?;
    let design = Design::compile(panel, variant)?;
    info!("fitting {variant}: {} observations, {} pairs", design.n_obs(), design.pairs.len());
    let chains = run_chains(&design, &cfg.hyper, &sampler)?;
    if chains.iter().all(|c| c.is_empty()) {
        return Err(Error::Config("no draws kept; lower burn_in or thin".into()));
    }
    ensure_dir(out)?;
    let mut resolved = cfg.clone();
    resolved.sampler.variant = variant;
    fs::write(out.join("config.toml"), resolved.to_toml()?)?;

    let draws = fs::File::create(out.join("draws.csv"))?;
    io::write_draws(&io::draw_rows(&chains), &design, draws)?;
    io::write_table_file(&io::inclusion_rows(&chains, &design)?, &out.join("inclusion.csv"))?;
    io::write_table_file(&io::acceptance_rows(&chains), &out.join("acceptance.csv"))?;
    if chains.len() >= 2 {
        let rhat: Vec<RhatRow> = diagnostics::rhat_table(&chains, &design)?
            .into_iter()
            .map(|(parameter, rhat)| RhatRow { parameter, rhat })
            .collect();
        io::write_table_file(&rhat, &out.join("rhat.csv"))?;
    }
    if variant.has_time_effect() {
        io::write_table_file(&analytics::f_band(&chains, &design, 0.9)?, &out.join("f_band.csv"))?;
    }
    let trajectories = design
        .pairs
        .iter()
        .map(|p| analytics::speed_trajectory(&chains, &design, p.country, p.product, SpeedTransform::LinearSum))
        .collect::<Result<Vec<_>>>()?;
    io::write_table_file(&io::trajectory_rows(&trajectories), &out.join("trajectories.csv"))?;

    let plug_in = analytics::posterior_mean_state(&chains)?;
    let dic = analytics::compute_dic(&chains, &design, &plug_in)?;
    io::write_dic(std::slice::from_ref(&dic), &out.join("dic.csv"))?;
    println!("{variant}: DIC {:.2} (D_bar {:.2}, p_D {:.2}) -> {}", dic.dic, dic.d_bar, dic.p_d, out.display());
    Ok(dic)
}

fn compare(cfg: &RunConfig, data: Option<&Path>, variants: &[ModelVariant], out: &Path) -> Result<()> {
    let mut unique = variants.to_vec();
    unique.dedup();
    if unique.len() < 2 {
        return Err(Error::Config("compare needs at least two distinct variants".into()));
    }
    let panel = load(cfg, data)?;
    let mut table = Vec::new();
    for &v in &unique {
        table.push(fit(cfg, &panel, v, &out.join(v.label()))?);
    }
    table.sort_by(|a, b| a.dic.total_cmp(&b.dic));
    io::write_dic(&table, &out.join("dic.csv"))?;
    println!("{:<12} {:>12} {:>10} {:>12}", "variant", "D_bar", "p_D", "DIC");
    for r in &table {
        println!("{:<12} {:>12.2} {:>10.2} {:>12.2}", r.variant, r.d_bar, r.p_d, r.dic);
    }
    Ok(())
}

/// Histogram of per-draw conditional inclusion probabilities.
#[derive(serde::Serialize)]
struct DensityRow {
    covariate: String,
    bin_lower: f64,
    bin_upper: f64,
    density: f64,
}

/// Posterior-mean speed averaged over countries, by product and abscissa.
#[derive(serde::Serialize)]
struct SpeedRow {
    product: String,
    abscissa: f64,
    n_countries: usize,
    mean_speed: f64,
}

const BINS: usize = 20;

fn report(dir: &Path) -> Result<()> {
    let draws_path = dir.join("draws.csv");
    let (draws, names): (Vec<DrawRow>, Vec<String>) = io::read_draws(
        fs::File::open(&draws_path).map_err(|e| Error::Data(format!("{}: {e}", draws_path.display())))?,
    )?;
    if draws.is_empty() {
        return Err(Error::Data(format!("{} has no draws", draws_path.display())));
    }
    let mut density = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let mut counts = [0usize; BINS];
        for d in &draws {
            counts[((d.inclusion[k] * BINS as f64) as usize).min(BINS - 1)] += 1;
        }
        for (b, &n) in counts.iter().enumerate() {
            density.push(DensityRow {
                covariate: name.clone(),
                bin_lower: b as f64 / BINS as f64,
                bin_upper: (b + 1) as f64 / BINS as f64,
                density: n as f64 * BINS as f64 / draws.len() as f64,
            });
        }
    }
    io::write_table_file(&density, &dir.join("inclusion_density.csv"))?;

    let trajectories: Vec<TrajectoryRow> = io::read_table_file(&dir.join("trajectories.csv"))?;
    let mut cells: std::collections::BTreeMap<(String, i64), (f64, f64, usize)> = Default::default();
    for t in &trajectories {
        let product = t.pair.rsplit('/').next().unwrap_or(&t.pair).to_string();
        // abscissae are whole years; key on them exactly
        let e = cells.entry((product, t.abscissa.round() as i64)).or_insert((t.abscissa, 0.0, 0));
        e.1 += t.mean;
        e.2 += 1;
    }
    let speeds: Vec<SpeedRow> = cells
        .into_iter()
        .map(|((product, _), (abscissa, sum, n))| SpeedRow {
            product,
            abscissa,
            n_countries: n,
            mean_speed: sum / n as f64,
        })
        .collect();
    io::write_table_file(&speeds, &dir.join("speed_table.csv"))?;

    let inclusion: Vec<InclusionRow> = io::read_table_file(&dir.join("inclusion.csv"))?;
    println!("{} draws; inclusion probabilities:", draws.len());
    for r in &inclusion {
        println!("  {:<16} {:.3} (frequency {:.3})", r.covariate, r.rao_blackwell, r.frequency);
    }
    let rhat_path = dir.join("rhat.csv");
    if rhat_path.exists() {
        let rhat: Vec<RhatRow> = io::read_table_file(&rhat_path)?;
        if let Some(worst) = rhat.iter().max_by(|a, b| a.rhat.total_cmp(&b.rhat)) {
            println!("largest R-hat: {} = {:.3}", worst.parameter, worst.rhat);
        }
    }
    println!("wrote inclusion_density.csv and speed_table.csv to {}", dir.display());
    Ok(())
}

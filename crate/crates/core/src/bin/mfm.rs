use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use mfmarket::dividends::DividendModelSpec;
use mfmarket::experiment::selftest::run_selftest;
use mfmarket::experiment::{
    default_battery, run, survival_sweep, sweep_csv, write_outputs, ExperimentConfig,
    LabelledStrategy,
};
use mfmarket::paths::RngSpec;
use mfmarket::strategy::{default_horizon, estimate_mu_nested_mc, MuEstimate};
use mfmarket::{Error, Result};

/// Mean-field market Monte Carlo experiments.
#[derive(Parser)]
#[command(name = "mfm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Simulate(RunArgs),
    /// Estimate the growth-optimal allocation at one state by nested Monte Carlo.
    EstimateMu(EstimateArgs),
    /// Classify survival for several strategies and horizons.
    SurvivalSweep(SweepArgs),
    /// Run the built-in numerical checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "MFM_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Take model and rho from an experiment config.
    #[arg(long, conflicts_with = "model")]
    config: Option<PathBuf>,
    /// Model as inline JSON, e.g. '{"type":"wright_fisher2","sigma":0.5,"x0":0.5}'.
    #[arg(long)]
    model: Option<String>,
    /// Relative intensities R_t, comma separated. One value is expanded
    /// to (r, 1 - r).
    #[arg(long, value_delimiter = ',', required = true)]
    state: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    #[arg(long)]
    rho: Option<f64>,
    /// Look-ahead T - t; defaults to ln(1000)/rho.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    inner_paths: usize,
    #[arg(long, default_value_t = 1e-2)]
    inner_dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write mu_estimate.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON only.
    #[arg(long)]
    json: bool,
    #[arg(long, env = "MFM_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// JSON array of {"label", "strategy"}; defaults to the optimum, a
    /// decaying perturbation of it and a constant allocation.
    #[arg(long)]
    strategies: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 40.0])]
    horizons: Vec<f64>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Scratch directory; a temporary one is used by default.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "MFM_THREADS")]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct MuReport<'a> {
    state: &'a [f64],
    t: f64,
    rho: f64,
    horizon: f64,
    inner_paths: usize,
    inner_dt: f64,
    seed: u64,
    #[serde(flatten)]
    estimate: &'a MuEstimate,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    config.apply_env_overrides(|k| std::env::var(k).ok())?;
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(p) = args.paths {
        config.n_paths = p;
    }
    if let Some(o) = &args.out {
        config.output_dir = o.clone();
    }
    config.validate()?;
    Ok(config)
}

fn install_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Fails only if a global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn simulate(args: RunArgs) -> Result<()> {
    let config = load_config(&args)?;
    info!("running {} paths, seed {}", config.n_paths, config.master_seed);
    let outcome = run(&config, args.threads)?;
    let manifest = write_outputs(&outcome, &config.output_dir)?;
    for s in &outcome.stats {
        println!(
            "t={:<10} mean W/V {:.6} (se {:.2e})  median G {:.4e}",
            s.t, s.mean_ratio, s.se_ratio, s.median_g
        );
    }
    if let Some(sm) = &outcome.supermartingale {
        println!("supermartingale test: {}", if sm.passed { "pass" } else { "fail" });
    }
    println!("survival: {}", outcome.survival.classification);
    println!(
        "wrote {} files to {} (config {})",
        manifest.files.len(),
        config.output_dir.display(),
        &manifest.config_hash[..12]
    );
    Ok(())
}

fn estimate_mu(args: EstimateArgs) -> Result<()> {
    install_threads(args.threads);
    let (model, config_rho) = match (&args.config, &args.model) {
        (Some(path), _) => {
            let c = ExperimentConfig::load(path)?;
            (c.model, Some(c.params.rho))
        }
        (None, Some(json)) => {
            let m: DividendModelSpec =
                serde_json::from_str(json).map_err(|e| Error::Config(format!("model: {e}")))?;
            (m, None)
        }
        (None, None) => return Err(Error::Config("one of --config or --model is required".into())),
    };
    let rho = args
        .rho
        .or(config_rho)
        .ok_or_else(|| Error::Config("rho: pass --rho or --config".into()))?;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Config(format!("rho: must be positive, got {rho}")));
    }
    let state = if args.state.len() == 1 {
        vec![args.state[0], 1.0 - args.state[0]]
    } else {
        args.state.clone()
    };
    let horizon = args.horizon.unwrap_or_else(|| default_horizon(rho));
    let est = estimate_mu_nested_mc(
        &model,
        &state,
        args.t,
        rho,
        args.t + horizon,
        args.inner_paths,
        args.inner_dt,
        RngSpec::new(args.seed, 0),
    )?;
    let report = MuReport {
        state: &state,
        t: args.t,
        rho,
        horizon,
        inner_paths: args.inner_paths,
        inner_dt: args.inner_dt,
        seed: args.seed,
        estimate: &est,
    };
    let json = serde_json::to_string_pretty(&report)?;
    if args.json {
        println!("{json}");
    } else {
        for (n, (v, se)) in est.values.iter().zip(&est.mc_standard_error).enumerate() {
            println!("mu[{}] = {v:.8}  se {se:.3e}", n + 1);
        }
        println!("truncation bias bound = {:.3e}", est.truncation_bias_bound);
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("mu_estimate.json"), json)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let config = load_config(&args.run)?;
    let strategies: Vec<LabelledStrategy> = match &args.strategies {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("strategies: {e}")))?,
        None => default_battery(config.model.n_assets()),
    };
    if args.horizons.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::Config("horizons: must be positive".into()));
    }
    let cells = survival_sweep(&config, &strategies, &args.horizons, args.run.threads);
    let csv = sweep_csv(&cells);
    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join("survival_matrix.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn selftest(args: SelftestArgs) -> Result<bool> {
    install_threads(args.threads);
    let tmp;
    let scratch: &Path = match &args.out {
        Some(p) => p,
        None => {
            tmp = std::env::temp_dir().join(format!("mfm-selftest-{}", std::process::id()));
            &tmp
        }
    };
    let results = run_selftest(scratch);
    if args.out.is_none() {
        let _ = fs::remove_dir_all(scratch);
    }
    for r in &results {
        println!("{r}");
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::EstimateMu(a) => estimate_mu(a).map(|_| true),
        Command::SurvivalSweep(a) => sweep(a).map(|_| true),
        Command::Selftest(a) => selftest(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

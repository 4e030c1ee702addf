//! Configuration-driven experiment runs.
//!
//! An [`ExperimentConfig`] (JSON, `schema_version` 1, unknown fields
//! rejected) fixes the model, market parameters, grid, small-agent strategy,
//! path count and seed. [`run`] simulates every path on its own random
//! stream, reduces by path index, and returns an [`ExperimentOutcome`];
//! [`write_outputs`] turns it into the files below. Results depend only on
//! `(config, seed)`, never on the thread count.
//!
//! | file | content |
//! |------|---------|
//! | `paths_summary.csv` | one row per path |
//! | `checkpoint_stats.csv` | `t,mean_ratio,se_ratio,median_ratio,p05_ratio,mean_G,median_G` |
//! | `supermartingale.json` | [`SupermartingaleReport`] |
//! | `survival.json` | [`SurvivalReport`] |
//! | `manifest.json` | [`ExperimentManifest`] |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    classify_survival, mean_se, median, quantile, test_supermartingale, SupermartingaleReport,
    SurvivalReport, SurvivalThresholds, SurvivalTrack,
};
use crate::dividends::{check_assumptions, DividendModelSpec};
use crate::error::{Error, Result};
use crate::market::{simulate_market, MarketParams};
use crate::paths::{RngSpec, TimeGrid};
use crate::strategy::{Strategy, WeightFn};

pub mod selftest;

pub const SCHEMA_VERSION: u32 = 1;

/// Runs fail when more than this fraction of paths had to be excluded.
pub const MAX_EXCLUDED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_start, self.t_end, self.dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: DividendModelSpec,
    pub params: MarketParams,
    pub grid: GridSpec,
    /// The small agent's strategy. Representative agents always use the
    /// closed-form optimum.
    pub strategy: Strategy,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Times at which statistics are reported; defaults to `T/4, T/2, T`.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub thresholds: SurvivalThresholds,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("mfm-out")
}

fn field_err(field: &str, e: Error) -> Error {
    match e {
        Error::Config(m) | Error::InvalidStrategy(m) => Error::Config(format!("{field}: {m}")),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> Result<TimeGrid> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        self.model.validate().map_err(|e| field_err("model", e))?;
        self.params.validate().map_err(|e| field_err("params", e))?;
        let grid = self.grid.build().map_err(|e| field_err("grid", e))?;
        self.strategy
            .validate(self.model.n_assets())
            .map_err(|e| field_err("strategy", e))?;
        if self.n_paths == 0 {
            return Err(Error::config("n_paths: must be at least 1"));
        }
        for &c in &self.checkpoints {
            if grid.index_of(c).is_none() {
                return Err(Error::config(format!("checkpoints: {c} is not a grid point")));
            }
        }
        self.thresholds.validate().map_err(|e| field_err("thresholds", e))?;
        Ok(grid)
    }

    /// Reporting times: the configured checkpoints, or `T/4, T/2, T`.
    pub fn checkpoint_times(&self, grid: &TimeGrid) -> Vec<f64> {
        if !self.checkpoints.is_empty() {
            return self.checkpoints.clone();
        }
        let (a, b) = (grid.t_start(), grid.t_end());
        [0.25, 0.5, 1.0].iter().map(|f| a + f * (b - a)).collect()
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Applies `MFM_*` overrides through `lookup` (usually `std::env::var`).
    ///
    /// | variable | field |
    /// |----------|-------|
    /// | `MFM_SEED` | `master_seed` |
    /// | `MFM_PATHS` | `n_paths` |
    /// | `MFM_OUT` | `output_dir` |
    /// | `MFM_DT` | `grid.dt` |
    /// | `MFM_T_END` | `grid.t_end` |
    /// | `MFM_RHO` | `params.rho` |
    pub fn apply_env_overrides<F>(&mut self, lookup: F) -> Result<()>
    where
        F: Fn(&str) -> Option<String>,
    {
        fn parse<T: std::str::FromStr>(name: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::config(format!("{name}: cannot parse {v:?}")))
        }
        if let Some(v) = lookup("MFM_SEED") {
            self.master_seed = parse("MFM_SEED", &v)?;
        }
        if let Some(v) = lookup("MFM_PATHS") {
            self.n_paths = parse("MFM_PATHS", &v)?;
        }
        if let Some(v) = lookup("MFM_OUT") {
            self.output_dir = PathBuf::from(v);
        }
        if let Some(v) = lookup("MFM_DT") {
            self.grid.dt = parse("MFM_DT", &v)?;
        }
        if let Some(v) = lookup("MFM_T_END") {
            self.grid.t_end = parse("MFM_T_END", &v)?;
        }
        if let Some(v) = lookup("MFM_RHO") {
            self.params.rho = parse("MFM_RHO", &v)?;
        }
        Ok(())
    }
}

/// Per-path results kept after the path's full series are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub path: usize,
    pub excluded: bool,
    pub sample_times: Vec<f64>,
    pub ratio: Vec<f64>,
    pub g: Vec<f64>,
    pub z: Vec<f64>,
    pub ratio_running_max: Vec<f64>,
    pub qv_end: f64,
    /// `max_t |ln(W/V) - ln(ratio_0 exp(Z - ½[Z]))|`.
    pub ito_max_log_error: f64,
    /// `max_t |G - [Z]| / max(G, [Z])`.
    pub g_qv_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStats {
    pub t: f64,
    pub mean_ratio: f64,
    pub se_ratio: f64,
    pub median_ratio: f64,
    pub p05_ratio: f64,
    pub mean_g: f64,
    pub median_g: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub ratio0: f64,
    pub checkpoints: Vec<f64>,
    pub records: Vec<PathRecord>,
    pub stats: Vec<CheckpointStats>,
    /// `None` when fewer paths than the supermartingale test needs.
    pub supermartingale: Option<SupermartingaleReport>,
    pub survival: SurvivalReport,
    pub excluded_fraction: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub n_paths: usize,
    pub timestamp_unix: u64,
    pub excluded_fraction: f64,
    pub wall_clock_seconds: f64,
    pub files: Vec<String>,
}

fn sample_times(grid: &TimeGrid, checkpoints: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = checkpoints
        .iter()
        .filter_map(|&c| grid.index_of(c))
        .chain([0, grid.n_steps() / 2, grid.n_steps()])
        .collect();
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter().map(|k| grid.time(k)).collect()
}

fn simulate_record(
    config: &ExperimentConfig,
    grid: TimeGrid,
    times: &[f64],
    path: usize,
) -> Result<PathRecord> {
    let rng = RngSpec::new(config.master_seed, path as u64);
    let d = simulate_market(&config.model, &config.params, &config.strategy, grid, rng)?;
    let report = check_assumptions(&d.dividends);
    if !report.passed() {
        return Err(Error::Assumption(format!(
            "path {path}: non-degeneracy check failed: {report:?}"
        )));
    }
    let excluded = d.exhausted_at.is_some();
    let idx: Vec<usize> = times.iter().map(|&t| grid.index_of(t).expect("sample on grid")).collect();
    let ratio = d.ratio.channel(0);
    let mut running = Vec::with_capacity(idx.len());
    let mut best = f64::NEG_INFINITY;
    let mut from = 0;
    for &k in &idx {
        best = ratio[from..=k].iter().copied().fold(best, f64::max);
        from = k;
        running.push(best);
    }
    let ito_max_log_error = if excluded {
        f64::NAN
    } else {
        let rec = d.reconstructed_ratio()?;
        ratio
            .iter()
            .zip(rec.channel(0))
            .map(|(a, b)| (a.ln() - b.ln()).abs())
            .fold(0.0, f64::max)
    };
    Ok(PathRecord {
        path,
        excluded,
        sample_times: times.to_vec(),
        ratio: idx.iter().map(|&k| ratio[k]).collect(),
        g: idx.iter().map(|&k| d.g.channel(0)[k]).collect(),
        z: idx.iter().map(|&k| d.z.z.channel(0)[k]).collect(),
        ratio_running_max: running,
        qv_end: d.z.qv.last(0),
        ito_max_log_error,
        g_qv_discrepancy: d.g_qv_relative_discrepancy(),
    })
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("threads: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Simulates every path of `config`. `threads` changes speed only.
pub fn run(config: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutcome> {
    let started = Instant::now();
    let grid = config.validate()?;
    let checkpoints = config.checkpoint_times(&grid);
    let times = sample_times(&grid, &checkpoints);
    let records: Vec<PathRecord> = with_threads(threads, || {
        (0..config.n_paths)
            .into_par_iter()
            .map(|p| simulate_record(config, grid, &times, p))
            .collect::<Result<Vec<_>>>()
    })??;

    let kept: Vec<&PathRecord> = records.iter().filter(|r| !r.excluded).collect();
    let excluded_fraction = (records.len() - kept.len()) as f64 / records.len() as f64;
    if excluded_fraction > MAX_EXCLUDED_FRACTION {
        return Err(Error::Assumption(format!(
            "{:.4}% of paths ended with non-positive wealth (limit {:.1}%)",
            100.0 * excluded_fraction,
            100.0 * MAX_EXCLUDED_FRACTION
        )));
    }
    let ratio0 = records[0].ratio[0];
    let pos = |t: f64| times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0)).expect("checkpoint sampled");

    let mut stats = Vec::with_capacity(checkpoints.len());
    let mut columns = Vec::with_capacity(checkpoints.len());
    for &t in &checkpoints {
        let i = pos(t);
        let ratios: Vec<f64> = kept.iter().map(|r| r.ratio[i]).collect();
        let gs: Vec<f64> = kept.iter().map(|r| r.g[i]).collect();
        let (mean_ratio, se_ratio) = mean_se(&ratios);
        let (mean_g, _) = mean_se(&gs);
        stats.push(CheckpointStats {
            t,
            mean_ratio,
            se_ratio,
            median_ratio: median(&ratios),
            p05_ratio: quantile(&ratios, 0.05),
            mean_g,
            median_g: median(&gs),
        });
        columns.push(ratios);
    }
    let supermartingale = match test_supermartingale(&checkpoints, &columns, ratio0, excluded_fraction) {
        Ok(r) => Some(r),
        Err(Error::StatisticalPower { .. }) => None,
        Err(e) => return Err(e),
    };
    let tracks: Vec<SurvivalTrack> = kept
        .iter()
        .map(|r| SurvivalTrack {
            times: r.sample_times.clone(),
            g: r.g.clone(),
            ratio: r.ratio.clone(),
        })
        .collect();
    let horizon_rel = grid.t_end() - grid.t_start();
    let survival = classify_survival(
        &shift_tracks(&tracks, grid.t_start()),
        horizon_rel,
        &config.thresholds,
    )?;
    Ok(ExperimentOutcome {
        config: config.clone(),
        ratio0,
        checkpoints,
        records,
        stats,
        supermartingale,
        survival,
        excluded_fraction,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn shift_tracks(tracks: &[SurvivalTrack], t0: f64) -> Vec<SurvivalTrack> {
    if t0 == 0.0 {
        return tracks.to_vec();
    }
    tracks
        .iter()
        .map(|t| SurvivalTrack {
            times: t.times.iter().map(|s| s - t0).collect(),
            ..t.clone()
        })
        .collect()
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const PATHS_HEADER: &str =
    "path,excluded,ratio_half,ratio_end,g_half,g_end,z_end,qv_end,max_ratio,ito_max_log_error,g_qv_discrepancy";
pub const STATS_HEADER: &str = "t,mean_ratio,se_ratio,median_ratio,p05_ratio,mean_G,median_G";

pub fn paths_csv(outcome: &ExperimentOutcome) -> String {
    let mut s = String::from(PATHS_HEADER);
    s.push('\n');
    for r in &outcome.records {
        let last = r.sample_times.len() - 1;
        let grid_half = r.sample_times[0] + (r.sample_times[last] - r.sample_times[0]) / 2.0;
        let h = r
            .sample_times
            .iter()
            .position(|&t| (t - grid_half).abs() <= 1e-9 * grid_half.abs().max(1.0))
            .unwrap_or(last);
        let cells = [
            fmt_f64(r.ratio[h]),
            fmt_f64(r.ratio[last]),
            fmt_f64(r.g[h]),
            fmt_f64(r.g[last]),
            fmt_f64(r.z[last]),
            fmt_f64(r.qv_end),
            fmt_f64(r.ratio_running_max[last]),
            fmt_f64(r.ito_max_log_error),
            fmt_f64(r.g_qv_discrepancy),
        ];
        let _ = writeln!(s, "{},{},{}", r.path, r.excluded as u8, cells.join(","));
    }
    s
}

pub fn stats_csv(outcome: &ExperimentOutcome) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for c in &outcome.stats {
        let cells = [
            c.t,
            c.mean_ratio,
            c.se_ratio,
            c.median_ratio,
            c.p05_ratio,
            c.mean_g,
            c.median_g,
        ]
        .map(fmt_f64);
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

/// Writes all result files and the manifest into `dir`.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<ExperimentManifest> {
    fs::create_dir_all(dir)?;
    let mut files = vec![
        "paths_summary.csv".to_string(),
        "checkpoint_stats.csv".to_string(),
        "survival.json".to_string(),
    ];
    fs::write(dir.join("paths_summary.csv"), paths_csv(outcome))?;
    fs::write(dir.join("checkpoint_stats.csv"), stats_csv(outcome))?;
    fs::write(
        dir.join("survival.json"),
        serde_json::to_string_pretty(&outcome.survival)?,
    )?;
    if let Some(sm) = &outcome.supermartingale {
        fs::write(dir.join("supermartingale.json"), serde_json::to_string_pretty(sm)?)?;
        files.push("supermartingale.json".into());
    }
    files.push("manifest.json".into());
    let manifest = ExperimentManifest {
        config_hash: outcome.config.hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: outcome.config.master_seed,
        n_paths: outcome.config.n_paths,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        excluded_fraction: outcome.excluded_fraction,
        wall_clock_seconds: outcome.elapsed_seconds,
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// One labelled strategy of a survival sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelledStrategy {
    pub label: String,
    pub strategy: Strategy,
}

/// The optimum, a decaying perturbation of it, and a constant allocation.
pub fn default_battery(n_assets: usize) -> Vec<LabelledStrategy> {
    let mut delta = vec![0.0; n_assets];
    delta[0] = 0.1;
    delta[1] = -0.1;
    let mut weights = vec![0.7 / (n_assets - 1) as f64; n_assets];
    weights[0] = 0.3;
    vec![
        LabelledStrategy {
            label: "mu".into(),
            strategy: Strategy::OptimalClosedForm,
        },
        LabelledStrategy {
            label: "mu+exp_decay".into(),
            strategy: Strategy::Perturbed {
                base: Box::new(Strategy::OptimalClosedForm),
                delta,
                weight: WeightFn::ExpDecay { rate: 1.0 },
            },
        },
        LabelledStrategy {
            label: "constant".into(),
            strategy: Strategy::Constant { weights },
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub label: String,
    pub horizon: f64,
    pub report: std::result::Result<SurvivalReport, String>,
}

/// Runs `base` once per `(strategy, horizon)` with `t_end = t_start + horizon`.
/// A failing cell is recorded and the sweep continues.
pub fn survival_sweep(
    base: &ExperimentConfig,
    strategies: &[LabelledStrategy],
    horizons: &[f64],
    threads: Option<usize>,
) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for s in strategies {
        for &h in horizons {
            let mut cfg = base.clone();
            cfg.strategy = s.strategy.clone();
            cfg.grid.t_end = cfg.grid.t_start + h;
            cfg.checkpoints = vec![cfg.grid.t_start + h / 2.0, cfg.grid.t_start + h];
            let report = run(&cfg, threads)
                .map(|o| o.survival)
                .map_err(|e| e.to_string());
            cells.push(SweepCell {
                label: s.label.clone(),
                horizon: h,
                report,
            });
        }
    }
    cells
}

pub const SWEEP_HEADER: &str = "strategy,horizon,classification,median_growth_ratio,median_g_increment,g_half_median,g_end_median,median_ratio_half,median_ratio_end,p05_ratio_end,error";

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for c in cells {
        match &c.report {
            Ok(r) => {
                let nums = [
                    r.median_growth_ratio,
                    r.median_g_increment,
                    r.g_half_median,
                    r.g_end_median,
                    r.median_ratio_half,
                    r.median_ratio_end,
                    r.p05_ratio_end,
                ]
                .map(fmt_f64);
                let _ = writeln!(
                    s,
                    "{},{},{},{},",
                    csv_field(&c.label),
                    fmt_f64(c.horizon),
                    r.classification,
                    nums.join(",")
                );
            }
            Err(e) => {
                let _ = writeln!(
                    s,
                    "{},{},error,,,,,,,,{}",
                    csv_field(&c.label),
                    fmt_f64(c.horizon),
                    csv_field(e)
                );
            }
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

//! Built-in numerical checks run by `mfm selftest`.
//!
//! Each check returns a [`CheckOutcome`]; [`run_selftest`] runs them all.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{run, write_outputs, ExperimentConfig, GridSpec};
use crate::analysis::SurvivalThresholds;
use crate::dividends::{
    DividendModelSpec, LinearDriftParams, MartingaleRParams, SigmaSpec, WrightFisherParams,
};
use crate::error::Result;
use crate::market::{closed_form_g_two_asset, simulate_market, simulate_market_with_driver, MarketParams};
use crate::paths::{BrownianPath, RngSpec, TimeGrid};
use crate::strategy::{estimate_mu_nested_mc, optimal_mu_linear_drift, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {} {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: u32, name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((passed, detail)) => CheckOutcome { id, name, passed, detail },
        Err(e) => CheckOutcome {
            id,
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// The three built-in models at noise level `sigma`.
pub fn builtin_models(sigma: f64) -> Vec<DividendModelSpec> {
    vec![
        DividendModelSpec::WrightFisher2(WrightFisherParams { sigma, x0: 0.5 }),
        DividendModelSpec::MartingaleR(MartingaleRParams {
            r0: vec![0.2, 0.3, 0.5],
            sigma: SigmaSpec::Neutral { sigma },
        }),
        DividendModelSpec::LinearDriftR(LinearDriftParams {
            kappa: 1.0,
            theta: 0.5,
            sigma,
            r0: 0.9,
        }),
    ]
}

/// Holding the market portfolio keeps `W/V` at its initial value.
pub fn copy_invariance() -> CheckOutcome {
    const TOL: f64 = 1e-10;
    let r = (|| {
        let grid = TimeGrid::new(0.0, 5.0, 1e-3)?;
        let params = MarketParams::new(0.2);
        let mut worst: f64 = 0.0;
        for sigma in [0.0, 0.5] {
            for model in builtin_models(sigma) {
                let devs = (0..100u64)
                    .into_par_iter()
                    .map(|p| {
                        let d = simulate_market(&model, &params, &Strategy::OptimalClosedForm, grid, RngSpec::new(1, p))?;
                        let r0 = d.ratio0();
                        Ok(d.ratio.channel(0).iter().map(|x| (x - r0).abs()).fold(0.0, f64::max))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                worst = devs.into_iter().fold(worst, f64::max);
            }
        }
        Ok((worst <= TOL, format!("max |W/V - ratio0| = {worst:.3e} (limit {TOL:.0e})")))
    })();
    outcome(1, "market-copy invariance", r)
}

/// Nested estimate in the linear-drift model against its closed form.
pub fn mu_linear_drift_oracle() -> CheckOutcome {
    let r = (|| {
        let (kappa, theta, rho, r1) = (1.0, 0.5, 1.0, 0.9);
        let model = DividendModelSpec::LinearDriftR(LinearDriftParams {
            kappa,
            theta,
            sigma: 0.3,
            r0: r1,
        });
        let exact = optimal_mu_linear_drift(r1, kappa, theta, rho)[0];
        let est = estimate_mu_nested_mc(&model, &[r1, 1.0 - r1], 0.0, rho, 8.0, 10_000, 1e-2, RngSpec::new(3, 0))?;
        let err = (est.values[0] - exact).abs();
        let allowed = est.truncation_bias_bound + 3.0 * est.mc_standard_error[0];
        Ok((
            err <= allowed,
            format!(
                "mu1 = {:.6}, closed form {exact:.6}, |err| = {err:.2e} (allowed {allowed:.2e})",
                est.values[0]
            ),
        ))
    })();
    outcome(3, "nested estimator vs closed form", r)
}

/// In martingale models the optimum equals the current relative intensity.
pub fn mu_martingale_consistency() -> CheckOutcome {
    let r = (|| {
        let rho = 1.0;
        let horizon = 8.0;
        let mut lines = Vec::new();
        let mut passed = true;
        for (i, r1) in [0.2, 0.5, 0.8].into_iter().enumerate() {
            let model = DividendModelSpec::WrightFisher2(WrightFisherParams { sigma: 0.5, x0: r1 });
            let est = estimate_mu_nested_mc(&model, &[r1, 1.0 - r1], 0.0, rho, horizon, 4_000, 1e-2, RngSpec::new(4, i as u64))?;
            let err = (est.values[0] - r1).abs();
            let allowed = est.truncation_bias_bound + 3.0 * est.mc_standard_error[0];
            passed &= err <= allowed;
            lines.push(format!("R1={r1}: |err| {err:.2e} <= {allowed:.2e}"));
        }
        Ok((passed, lines.join("; ")))
    })();
    outcome(4, "martingale-model consistency", r)
}

/// Root mean square over paths of `|G_T - C_T| / C_T`, where `C` is the
/// two-asset closed form, at step `2 * dt` and at `dt` on the same Brownian
/// paths. Path `p` uses stream `p` of `seed`.
pub fn g_closed_form_rms(
    sigma: f64,
    lambda1: f64,
    rho: f64,
    fine: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let model = DividendModelSpec::WrightFisher2(WrightFisherParams { sigma, x0: 0.5 });
    let params = MarketParams::new(rho);
    let small = Strategy::Constant {
        weights: vec![lambda1, 1.0 - lambda1],
    };
    let rel_sq = |b: &BrownianPath| -> Result<f64> {
        let d = simulate_market_with_driver(&model, &params, &small, b, RngSpec::new(0, 0))?;
        let c = closed_form_g_two_asset(&d.lambda, d.dividends.r(), sigma)?.last(0);
        Ok(((d.g.last(0) - c) / c).powi(2))
    };
    let sq = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let b = BrownianPath::sample(fine, 1, RngSpec::new(seed, p))?;
            Ok((rel_sq(&b.coarsen(2)?)?, rel_sq(&b)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let n = sq.len() as f64;
    Ok((
        (sq.iter().map(|x| x.0).sum::<f64>() / n).sqrt(),
        (sq.iter().map(|x| x.1).sum::<f64>() / n).sqrt(),
    ))
}

/// `G` against realized `[Z]`, and against the closed form under refinement.
pub fn g_identity() -> CheckOutcome {
    const QV_TOL: f64 = 1e-9;
    const CLOSED_TOL: f64 = 1e-2;
    const MIN_FACTOR: f64 = 1.3;
    let r = (|| {
        let model = DividendModelSpec::WrightFisher2(WrightFisherParams { sigma: 0.5, x0: 0.5 });
        let params = MarketParams::new(0.2);
        let grid = TimeGrid::new(0.0, 5.0, 1e-3)?;
        let strategies = [
            Strategy::Constant { weights: vec![0.3, 0.7] },
            super::default_battery(2).remove(1).strategy,
        ];
        let mut worst: f64 = 0.0;
        for s in &strategies {
            let d = (0..50u64)
                .into_par_iter()
                .map(|p| Ok(simulate_market(&model, &params, s, grid, RngSpec::new(5, p))?.g_qv_relative_discrepancy()))
                .collect::<Result<Vec<f64>>>()?;
            worst = d.into_iter().fold(worst, f64::max);
        }

        let fine = TimeGrid::new(0.0, 80.0, 5e-4)?;
        let (coarse_err, fine_err) = g_closed_form_rms(0.5, 0.3, 0.2, fine, 800, 6)?;
        let factor = coarse_err / fine_err;
        let passed = worst <= QV_TOL && coarse_err <= CLOSED_TOL && factor >= MIN_FACTOR;
        Ok((
            passed,
            format!(
                "max |G-[Z]|/G = {worst:.2e} (limit {QV_TOL:.0e}); closed form rms rel err {coarse_err:.2e} at dt=1e-3 (limit {CLOSED_TOL:.0e}), {fine_err:.2e} at 5e-4, factor {factor:.2} (min {MIN_FACTOR})"
            ),
        ))
    })();
    outcome(5, "G identity", r)
}

/// A small Wright–Fisher config used by the determinism check.
pub fn determinism_config(output_dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: 1,
        model: DividendModelSpec::WrightFisher2(WrightFisherParams { sigma: 0.5, x0: 0.5 }),
        params: MarketParams::new(0.2),
        grid: GridSpec {
            t_start: 0.0,
            t_end: 2.0,
            dt: 1e-3,
        },
        strategy: Strategy::Constant {
            weights: vec![0.3, 0.7],
        },
        n_paths: 200,
        master_seed: 2024,
        checkpoints: vec![0.5, 1.0, 2.0],
        output_dir,
        thresholds: SurvivalThresholds::default(),
    }
}

const CSV_FILES: [&str; 2] = ["paths_summary.csv", "checkpoint_stats.csv"];

/// Same config and seed give byte-identical CSVs, for any thread count.
pub fn determinism(scratch: &Path) -> CheckOutcome {
    let r = (|| {
        let config = determinism_config(scratch.to_path_buf());
        let mut contents = Vec::new();
        for (i, threads) in [1usize, 1, 4].into_iter().enumerate() {
            let dir = scratch.join(format!("run{i}"));
            let out = run(&config, Some(threads))?;
            write_outputs(&out, &dir)?;
            let files = CSV_FILES
                .iter()
                .map(|f| fs::read(dir.join(f)))
                .collect::<std::io::Result<Vec<_>>>()?;
            contents.push(files);
        }
        let same = contents.windows(2).all(|w| w[0] == w[1]);
        Ok((same, format!("3 runs (threads 1, 1, 4): CSVs identical = {same}")))
    })();
    outcome(9, "determinism", r)
}

/// Runs every built-in check; scratch files go under `scratch`.
pub fn run_selftest(scratch: &Path) -> Vec<CheckOutcome> {
    vec![
        copy_invariance(),
        mu_linear_drift_oracle(),
        mu_martingale_consistency(),
        g_identity(),
        determinism(scratch),
    ]
}

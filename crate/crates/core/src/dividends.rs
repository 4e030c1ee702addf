//! Dividend-intensity models.
//!
//! Every built-in model is expressed directly in terms of the relative
//! intensities `R^n = X^n / X̄` with the total intensity normalized to
//! `X̄ ≡ 1`, so `X = R`. Paths with a general total intensity can be built
//! with [`DividendPaths::from_intensities`].
//!
//! All Euler steps keep `R` in the ε-interior of the simplex: the two-asset
//! models clamp `R¹` to `[ε, 1 - ε]`, the multi-asset martingale model
//! projects with [`validate_simplex`](crate::simplex::validate_simplex).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{BrownianPath, PathSeries, RngSpec, TimeGrid};
use crate::simplex::{project_in_place, FLOOR_EPS, SUM_TOL};

/// `dX¹ = σ X¹(1 - X¹) dB`, `X² = 1 - X¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrightFisherParams {
    pub sigma: f64,
    pub x0: f64,
}

/// Volatility of the martingale relative-intensity model `dR = σ(R) dB`.
/// Every column of `σ` must sum to zero so that `ΣR` stays one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    /// A constant `N × K` matrix.
    Constant { matrix: Vec<Vec<f64>> },
    /// `N = 2`, `K = 1`: `σ R¹(1 - R¹) (+1, -1)`.
    TwoAsset { sigma: f64 },
    /// `K = N`: `σ^{nk} = σ (R^n δ_{nk} - R^n R^k)`.
    Neutral { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleRParams {
    pub r0: Vec<f64>,
    pub sigma: SigmaSpec,
}

/// `dR¹ = κ(θ - R¹) dt + σ R¹(1 - R¹) dB`, `R² = 1 - R¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDriftParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DividendModelSpec {
    WrightFisher2(WrightFisherParams),
    MartingaleR(MartingaleRParams),
    LinearDriftR(LinearDriftParams),
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(FLOOR_EPS, 1.0 - FLOOR_EPS)
}

impl WrightFisherParams {
    pub fn validate(&self) -> Result<()> {
        if !in_open_unit(self.x0) {
            return Err(Error::config(format!("x0 = {} is not in (0, 1)", self.x0)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config(format!("sigma = {} must be >= 0", self.sigma)));
        }
        Ok(())
    }
}

impl LinearDriftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::config(format!("kappa = {} must be > 0", self.kappa)));
        }
        if !in_open_unit(self.theta) {
            return Err(Error::config(format!("theta = {} is not in (0, 1)", self.theta)));
        }
        if !in_open_unit(self.r0) {
            return Err(Error::config(format!("r0 = {} is not in (0, 1)", self.r0)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config(format!("sigma = {} must be >= 0", self.sigma)));
        }
        Ok(())
    }
}

impl SigmaSpec {
    fn dims(&self, n: usize) -> usize {
        match self {
            SigmaSpec::Constant { matrix } => matrix.first().map_or(0, Vec::len),
            SigmaSpec::TwoAsset { .. } => 1,
            SigmaSpec::Neutral { .. } => n,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            SigmaSpec::Constant { matrix } => {
                if matrix.len() != n {
                    return Err(Error::config(format!(
                        "sigma matrix has {} rows for {n} assets",
                        matrix.len()
                    )));
                }
                let k = self.dims(n);
                if k == 0 || matrix.iter().any(|row| row.len() != k) {
                    return Err(Error::config("sigma matrix rows must share a positive length"));
                }
                if matrix.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::config("sigma matrix has non-finite entries"));
                }
                for j in 0..k {
                    let s: f64 = matrix.iter().map(|row| row[j]).sum();
                    let scale: f64 = matrix.iter().map(|row| row[j].abs()).sum::<f64>().max(1.0);
                    if s.abs() > 1e-12 * scale {
                        return Err(Error::config(format!(
                            "sigma column {j} sums to {s}, must be zero to keep sum(R) = 1"
                        )));
                    }
                }
                Ok(())
            }
            SigmaSpec::TwoAsset { sigma } => {
                if n != 2 {
                    return Err(Error::config("two_asset sigma requires exactly 2 assets"));
                }
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::config("sigma must be >= 0"));
                }
                Ok(())
            }
            SigmaSpec::Neutral { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::config("sigma must be >= 0"));
                }
                Ok(())
            }
        }
    }

    /// Adds `σ(r) dB` to `out`.
    fn apply(&self, r: &[f64], db: &[f64], out: &mut [f64]) {
        match self {
            SigmaSpec::Constant { matrix } => {
                for (o, row) in out.iter_mut().zip(matrix) {
                    *o += row.iter().zip(db).map(|(s, b)| s * b).sum::<f64>();
                }
            }
            SigmaSpec::TwoAsset { sigma } => {
                let d = sigma * r[0] * (1.0 - r[0]) * db[0];
                out[0] += d;
                out[1] -= d;
            }
            SigmaSpec::Neutral { sigma } => {
                let mix: f64 = r.iter().zip(db).map(|(x, b)| x * b).sum();
                for n in 0..r.len() {
                    out[n] += sigma * r[n] * (db[n] - mix);
                }
            }
        }
    }
}

impl MartingaleRParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.r0.len();
        if n < 2 {
            return Err(Error::config("martingale model needs at least 2 assets"));
        }
        if self.r0.iter().any(|&x| !(x.is_finite() && x > 0.0))
            || (self.r0.iter().sum::<f64>() - 1.0).abs() > SUM_TOL
        {
            return Err(Error::config(format!(
                "r0 = {:?} is not on the open simplex",
                self.r0
            )));
        }
        self.sigma.validate(n)
    }
}

impl DividendModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DividendModelSpec::WrightFisher2(p) => p.validate(),
            DividendModelSpec::MartingaleR(p) => p.validate(),
            DividendModelSpec::LinearDriftR(p) => p.validate(),
        }
    }

    pub fn n_assets(&self) -> usize {
        match self {
            DividendModelSpec::MartingaleR(p) => p.r0.len(),
            _ => 2,
        }
    }

    /// Dimension of the Brownian driver.
    pub fn driver_dims(&self) -> usize {
        match self {
            DividendModelSpec::MartingaleR(p) => p.sigma.dims(p.r0.len()),
            _ => 1,
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        match self {
            DividendModelSpec::WrightFisher2(p) => vec![p.x0, 1.0 - p.x0],
            DividendModelSpec::MartingaleR(p) => p.r0.clone(),
            DividendModelSpec::LinearDriftR(p) => vec![p.r0, 1.0 - p.r0],
        }
    }

    /// Whether the current relative intensities determine the law of the
    /// future path. True for every built-in variant.
    pub fn is_markovian(&self) -> bool {
        true
    }

    /// Whether `R` is a martingale, in which case the growth-optimal
    /// strategy is `μ = R`.
    pub fn is_martingale(&self) -> bool {
        matches!(
            self,
            DividendModelSpec::WrightFisher2(_) | DividendModelSpec::MartingaleR(_)
        )
    }

    /// Checks that `state` is a valid model state: right length, on the
    /// simplex, components in the open unit interval.
    pub fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.n_assets() {
            return Err(Error::config(format!(
                "state has {} components, model has {} assets",
                state.len(),
                self.n_assets()
            )));
        }
        if state.iter().any(|&x| !in_open_unit(x))
            || (state.iter().sum::<f64>() - 1.0).abs() > SUM_TOL
        {
            return Err(Error::config(format!(
                "state {state:?} is not on the open simplex"
            )));
        }
        Ok(())
    }

    /// One Euler step of the relative intensities, in place.
    pub fn step(&self, r: &mut [f64], dt: f64, db: &[f64]) {
        match self {
            DividendModelSpec::WrightFisher2(p) => {
                let x = r[0];
                let next = clamp_unit(x + p.sigma * x * (1.0 - x) * db[0]);
                r[0] = next;
                r[1] = 1.0 - next;
            }
            DividendModelSpec::LinearDriftR(p) => {
                let x = r[0];
                let next =
                    clamp_unit(x + p.kappa * (p.theta - x) * dt + p.sigma * x * (1.0 - x) * db[0]);
                r[0] = next;
                r[1] = 1.0 - next;
            }
            DividendModelSpec::MartingaleR(p) => {
                let current = r.to_vec();
                p.sigma.apply(&current, db, r);
                // At least one component stays positive: increments sum to zero.
                project_in_place(r, FLOOR_EPS).expect("martingale step keeps positive mass");
            }
        }
    }

    /// Relative intensity channels driven by `driver`, started from `state`
    /// at the driver's first grid point.
    pub fn relative_path(&self, state: &[f64], driver: &BrownianPath) -> Result<Vec<Vec<f64>>> {
        if driver.dims() != self.driver_dims() {
            return Err(Error::Shape(format!(
                "model needs a {}-dimensional driver, got {}",
                self.driver_dims(),
                driver.dims()
            )));
        }
        let grid = driver.grid();
        let n = self.n_assets();
        let mut channels: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(grid.len())).collect();
        let mut r = state.to_vec();
        for (ch, x) in channels.iter_mut().zip(&r) {
            ch.push(*x);
        }
        let dt = grid.dt();
        for k in 0..grid.n_steps() {
            self.step(&mut r, dt, driver.step(k));
            for (ch, x) in channels.iter_mut().zip(&r) {
                ch.push(*x);
            }
        }
        Ok(channels)
    }

    /// Simulates from the initial state with an explicit driver.
    pub fn simulate_with_driver(&self, driver: &BrownianPath) -> Result<DividendPaths> {
        self.validate()?;
        let channels = self.relative_path(&self.initial_state(), driver)?;
        DividendPaths::from_relative(*driver.grid(), channels)
    }

    pub fn simulate(&self, grid: TimeGrid, rng: RngSpec) -> Result<DividendPaths> {
        self.validate()?;
        let driver = BrownianPath::sample(grid, self.driver_dims(), rng)?;
        self.simulate_with_driver(&driver)
    }
}

pub fn simulate_wright_fisher(
    params: &WrightFisherParams,
    grid: TimeGrid,
    rng: RngSpec,
) -> Result<DividendPaths> {
    DividendModelSpec::WrightFisher2(*params).simulate(grid, rng)
}

pub fn simulate_martingale_r(
    params: &MartingaleRParams,
    grid: TimeGrid,
    rng: RngSpec,
) -> Result<DividendPaths> {
    DividendModelSpec::MartingaleR(params.clone()).simulate(grid, rng)
}

pub fn simulate_linear_drift_r(
    params: &LinearDriftParams,
    grid: TimeGrid,
    rng: RngSpec,
) -> Result<DividendPaths> {
    DividendModelSpec::LinearDriftR(*params).simulate(grid, rng)
}

/// Dividend intensities `X`, their total `X̄` and relative shares `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct DividendPaths {
    x: PathSeries,
    r: PathSeries,
    x_bar: PathSeries,
}

impl DividendPaths {
    /// Paths with `X̄ ≡ 1`, so `X = R`.
    pub fn from_relative(grid: TimeGrid, r: Vec<Vec<f64>>) -> Result<Self> {
        let r = PathSeries::indexed(grid, "R", r)?;
        let x = PathSeries::indexed(grid, "X", r.channels().to_vec())?;
        let x_bar = PathSeries::single(grid, "X_bar", vec![1.0; grid.len()])?;
        Ok(Self { x, r, x_bar })
    }

    /// Paths from raw intensities. `R` is not finite where `X̄ = 0`; such
    /// paths fail [`check_assumptions`].
    pub fn from_intensities(grid: TimeGrid, x: Vec<Vec<f64>>) -> Result<Self> {
        let x = PathSeries::indexed(grid, "X", x)?;
        let x_bar: Vec<f64> = (0..grid.len())
            .map(|k| x.channels().iter().map(|c| c[k]).sum())
            .collect();
        let r = x
            .channels()
            .iter()
            .map(|c| c.iter().zip(&x_bar).map(|(v, s)| v / s).collect())
            .collect();
        let r = PathSeries::indexed(grid, "R", r)?;
        let x_bar = PathSeries::single(grid, "X_bar", x_bar)?;
        Ok(Self { x, r, x_bar })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.r.grid()
    }

    pub fn n_assets(&self) -> usize {
        self.r.n_channels()
    }

    pub fn x(&self) -> &PathSeries {
        &self.x
    }

    pub fn r(&self) -> &PathSeries {
        &self.r
    }

    pub fn x_bar(&self) -> &PathSeries {
        &self.x_bar
    }
}

/// Outcome of the non-degeneracy checks on one simulated path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssumptionReport {
    /// `X̄ > 0` at every grid point.
    pub total_positive: bool,
    pub first_nonpositive_total: Option<usize>,
    /// Per asset: `R^n > ε/2` somewhere on the path. This is only a finite
    /// horizon proxy for "the asset keeps paying with positive conditional
    /// probability", which no simulation can check.
    pub asset_pays: Vec<bool>,
}

impl AssumptionReport {
    pub fn total_positive_passed(&self) -> bool {
        self.total_positive
    }

    pub fn keeps_paying_passed(&self) -> bool {
        self.asset_pays.iter().all(|&b| b)
    }

    pub fn passed(&self) -> bool {
        self.total_positive_passed() && self.keeps_paying_passed()
    }
}

pub fn check_assumptions(paths: &DividendPaths) -> AssumptionReport {
    let first_nonpositive_total = paths.x_bar().channel(0).iter().position(|&s| !(s > 0.0));
    let asset_pays = paths
        .r()
        .channels()
        .iter()
        .map(|c| c.iter().any(|&x| x > FLOOR_EPS / 2.0))
        .collect();
    AssumptionReport {
        total_positive: first_nonpositive_total.is_none(),
        first_nonpositive_total,
        asset_pays,
    }
}

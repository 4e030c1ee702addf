//! Prices, wealth, and the relative-wealth diagnostics along one path.
//!
//! With unit supply of every asset the representative wealth is
//! `V = X̄ / ρ` and prices are `S^n = μ^n V`. A small agent holding
//! proportions `λ` evolves by the explicit Euler recursion
//!
//! ```text
//! W_{k+1} = W_k + Σ_n (λ_k^n W_k / S_k^n) (S_{k+1}^n - S_k^n + X_k^n dt) - ρ W_k dt
//! ```
//!
//! Strategy weights and prices are taken at the left end of each step. With
//! that choice `λ = μ` gives `W_{k+1} / V_{k+1} = W_k / V_k` exactly, so a
//! copy of the market never drifts from its initial share.
//!
//! The diagnostics follow the same left-point convention:
//!
//! * `ΔL^n = e^{-ρ t_k} (Δμ^n - ρ (μ^n - R^n) dt)`
//! * `ΔZ = e^{ρ t_k} Σ_n (λ^n / μ^n) ΔL^n`
//! * `ΔG = e^{2ρ t_k} Σ_{i,j} (λ^i λ^j / μ^i μ^j) ΔL^i ΔL^j`
//!
//! so `G` and the realized quadratic variation `[Z]` agree to rounding.

use serde::{Deserialize, Serialize};

use crate::dividends::{DividendModelSpec, DividendPaths};
use crate::error::{Error, Result};
use crate::paths::{
    realized_covariation_values, BrownianPath, CompensatedSum, PathSeries, RngSpec, TimeGrid,
};
use crate::simplex::FLOOR_EPS;
use crate::strategy::{Strategy, StrategyContext};

/// Market-wide parameters. Supply constants are fixed to one share per
/// representative agent for every asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Consumption rate, common to all agents.
    pub rho: f64,
    /// Initial wealth of the small agent; defaults to `V_0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<f64>,
}

impl MarketParams {
    pub fn new(rho: f64) -> Self {
        Self { rho, w0: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::config(format!("rho = {} must be positive", self.rho)));
        }
        if let Some(w0) = self.w0 {
            if !(w0.is_finite() && w0 > 0.0) {
                return Err(Error::config(format!("w0 = {w0} must be positive")));
            }
        }
        Ok(())
    }

    /// Small-agent initial wealth given the representative wealth `V_0`.
    pub fn initial_wealth(&self, v0: f64) -> f64 {
        self.w0.unwrap_or(v0)
    }
}

/// `V_t = X̄_t / ρ`.
pub fn representative_wealth(x_bar: &PathSeries, rho: f64) -> Result<PathSeries> {
    if let Some(k) = x_bar.channel(0).iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Assumption(format!(
            "total dividend intensity is {} at grid point {k}",
            x_bar.channel(0)[k]
        )));
    }
    let v = x_bar.channel(0).iter().map(|x| x / rho).collect();
    PathSeries::single(*x_bar.grid(), "V", v)
}

/// `S^n = μ^n V`.
pub fn prices(mu: &PathSeries, v: &PathSeries) -> Result<PathSeries> {
    if !mu.grid().same_points(v.grid()) {
        return Err(Error::Shape("strategy and wealth on different grids".into()));
    }
    let admissible = FLOOR_EPS * (1.0 - 1e-9);
    let mut channels = Vec::with_capacity(mu.n_channels());
    for (n, ch) in mu.channels().iter().enumerate() {
        if let Some(k) = ch.iter().position(|&m| !(m >= admissible)) {
            return Err(Error::Assumption(format!(
                "representative weight of asset {} is {} at grid point {k}, below the admissibility floor",
                n + 1,
                ch[k]
            )));
        }
        channels.push(ch.iter().zip(v.channel(0)).map(|(m, v)| m * v).collect());
    }
    PathSeries::indexed(*mu.grid(), "S", channels)
}

/// Small-agent wealth along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallAgentWealth {
    pub w: PathSeries,
    /// First grid point where the Euler recursion produced `W <= 0`. The
    /// continuous model keeps `W > 0`, so such paths are discretization
    /// artifacts and get excluded from statistics. Values from this point
    /// on are zero.
    pub exhausted_at: Option<usize>,
}

pub fn evolve_small_agent(
    lambda: &PathSeries,
    mu: &PathSeries,
    paths: &DividendPaths,
    params: &MarketParams,
) -> Result<SmallAgentWealth> {
    let grid = *paths.grid();
    if !lambda.grid().same_points(&grid) || !mu.grid().same_points(&grid) {
        return Err(Error::Shape("strategies and dividends on different grids".into()));
    }
    if lambda.n_channels() != paths.n_assets() || mu.n_channels() != paths.n_assets() {
        return Err(Error::Shape("strategy width differs from asset count".into()));
    }
    let v = representative_wealth(paths.x_bar(), params.rho)?;
    let s = prices(mu, &v)?;
    let w = small_agent_recursion(lambda, &s, paths.x(), params.initial_wealth(v.channel(0)[0]), params.rho);
    let exhausted_at = w.iter().position(|&x| !(x > 0.0));
    Ok(SmallAgentWealth {
        w: PathSeries::single(grid, "W", w)?,
        exhausted_at,
    })
}

fn small_agent_recursion(lambda: &PathSeries, s: &PathSeries, x: &PathSeries, w0: f64, rho: f64) -> Vec<f64> {
    let grid = s.grid();
    let dt = grid.dt();
    let n = s.n_channels();
    let mut w = Vec::with_capacity(grid.len());
    w.push(w0);
    let mut cur = w0;
    for k in 0..grid.n_steps() {
        let mut gain = 0.0;
        for a in 0..n {
            let sk = s.channel(a)[k];
            let hold = lambda.channel(a)[k] * cur / sk;
            gain += hold * (s.channel(a)[k + 1] - sk + x.channel(a)[k] * dt);
        }
        let next = cur + gain - rho * cur * dt;
        if !(next > 0.0) {
            w.resize(grid.len(), 0.0);
            return w;
        }
        w.push(next);
        cur = next;
    }
    w
}

/// `L` from the representative strategy: `ΔL^n = e^{-ρ t_k}(Δμ^n - ρ(μ^n - R^n) dt)`,
/// `L_0 = 0`. Only meaningful when `μ` is the growth-optimal strategy.
pub fn compute_l(mu: &PathSeries, r: &PathSeries, rho: f64) -> Result<PathSeries> {
    if !mu.grid().same_points(r.grid()) || mu.n_channels() != r.n_channels() {
        return Err(Error::Shape("strategy and intensities disagree in shape".into()));
    }
    let grid = *mu.grid();
    let dt = grid.dt();
    let channels = mu
        .channels()
        .iter()
        .zip(r.channels())
        .map(|(m, rr)| {
            let mut out = Vec::with_capacity(grid.len());
            let mut acc = CompensatedSum::default();
            out.push(0.0);
            for k in 0..grid.n_steps() {
                let disc = (-rho * grid.time(k)).exp();
                acc.add(disc * ((m[k + 1] - m[k]) - rho * (m[k] - rr[k]) * dt));
                out.push(acc.value());
            }
            out
        })
        .collect();
    PathSeries::indexed(grid, "L", channels)
}

/// The log-wealth-ratio driver `Z` computed two ways.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSeries {
    /// `dZ = e^{ρt} Σ (λ/μ) dL`.
    pub z: PathSeries,
    /// Realized quadratic variation `[Z]`.
    pub qv: PathSeries,
    /// `dZ = Σ (λ/μ) dμ + ρ (Σ (λ/μ) R - 1) dt`.
    pub z_direct: PathSeries,
    /// `max_t |z - z_direct|`.
    pub max_discrepancy: f64,
}

fn check_same(a: &PathSeries, b: &PathSeries, what: &str) -> Result<()> {
    if !a.grid().same_points(b.grid()) || a.n_channels() != b.n_channels() {
        return Err(Error::Shape(format!("{what}: shapes differ")));
    }
    Ok(())
}

pub fn compute_z(
    lambda: &PathSeries,
    mu: &PathSeries,
    l: &PathSeries,
    rho: f64,
    r: &PathSeries,
) -> Result<ZSeries> {
    check_same(lambda, mu, "lambda vs mu")?;
    check_same(mu, l, "mu vs L")?;
    check_same(mu, r, "mu vs R")?;
    let grid = *mu.grid();
    let dt = grid.dt();
    let n = mu.n_channels();

    let mut z = Vec::with_capacity(grid.len());
    let mut zd = Vec::with_capacity(grid.len());
    let (mut acc, mut accd) = (CompensatedSum::default(), CompensatedSum::default());
    z.push(0.0);
    zd.push(0.0);
    for k in 0..grid.n_steps() {
        let grow = (rho * grid.time(k)).exp();
        let (mut dz, mut dmu_term, mut r_term) = (0.0, 0.0, 0.0);
        for a in 0..n {
            let ratio = lambda.channel(a)[k] / mu.channel(a)[k];
            dz += ratio * (l.channel(a)[k + 1] - l.channel(a)[k]);
            dmu_term += ratio * (mu.channel(a)[k + 1] - mu.channel(a)[k]);
            r_term += ratio * r.channel(a)[k];
        }
        acc.add(grow * dz);
        accd.add(dmu_term + rho * (r_term - 1.0) * dt);
        z.push(acc.value());
        zd.push(accd.value());
    }
    let max_discrepancy = z
        .iter()
        .zip(&zd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let qv = realized_covariation_values(&z, &z)?;
    Ok(ZSeries {
        z: PathSeries::single(grid, "Z", z)?,
        qv: PathSeries::single(grid, "QV", qv)?,
        z_direct: PathSeries::single(grid, "Z_direct", zd)?,
        max_discrepancy,
    })
}

/// `G_t = Σ_{ij} ∫ e^{2ρs} (λ^i λ^j / μ^i μ^j) d⟨L^i, L^j⟩_s`, from the
/// pairwise products of `L` increments.
pub fn compute_g(lambda: &PathSeries, mu: &PathSeries, l: &PathSeries, rho: f64) -> Result<PathSeries> {
    check_same(lambda, mu, "lambda vs mu")?;
    check_same(mu, l, "mu vs L")?;
    let grid = *mu.grid();
    let n = mu.n_channels();
    let mut g = Vec::with_capacity(grid.len());
    let mut acc = CompensatedSum::default();
    let mut a = vec![0.0; n];
    let mut dl = vec![0.0; n];
    g.push(0.0);
    for k in 0..grid.n_steps() {
        let grow2 = (2.0 * rho * grid.time(k)).exp();
        for i in 0..n {
            a[i] = lambda.channel(i)[k] / mu.channel(i)[k];
            dl[i] = l.channel(i)[k + 1] - l.channel(i)[k];
        }
        let mut dg = 0.0;
        for i in 0..n {
            for j in 0..n {
                dg += a[i] * a[j] * dl[i] * dl[j];
            }
        }
        // The quadratic form is positive semidefinite; a negative value is
        // cancellation noise.
        acc.add(grow2 * dg.max(0.0));
        g.push(acc.value());
    }
    PathSeries::single(grid, "G", g)
}

/// `σ² ∫ (λ¹ - R¹)² ds` (left-point sum): the closed form of `G` in the
/// two-asset Wright–Fisher model, where `μ = R`.
pub fn closed_form_g_two_asset(lambda: &PathSeries, r: &PathSeries, sigma: f64) -> Result<PathSeries> {
    check_same(lambda, r, "lambda vs R")?;
    let grid = *r.grid();
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = CompensatedSum::default();
    out.push(0.0);
    for k in 0..grid.n_steps() {
        let d = lambda.channel(0)[k] - r.channel(0)[k];
        acc.add(sigma * sigma * d * d * dt);
        out.push(acc.value());
    }
    PathSeries::single(grid, "G_closed", out)
}

/// `ratio_0 · exp(Z - ½[Z])`.
pub fn stochastic_exponential(z: &PathSeries, qv: &PathSeries, ratio0: f64) -> Result<PathSeries> {
    check_same(z, qv, "Z vs QV")?;
    let values = z
        .channel(0)
        .iter()
        .zip(qv.channel(0))
        .map(|(z, q)| ratio0 * (z - 0.5 * q).exp())
        .collect();
    PathSeries::single(*z.grid(), "ratio_exp", values)
}

/// All per-path processes of one simulated market.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioDiagnostics {
    pub dividends: DividendPaths,
    pub mu: PathSeries,
    pub lambda: PathSeries,
    pub v: PathSeries,
    pub s: PathSeries,
    pub w: PathSeries,
    pub ratio: PathSeries,
    pub l: PathSeries,
    pub z: ZSeries,
    pub g: PathSeries,
    pub exhausted_at: Option<usize>,
}

impl RatioDiagnostics {
    pub fn grid(&self) -> &TimeGrid {
        self.v.grid()
    }

    pub fn ratio0(&self) -> f64 {
        self.ratio.channel(0)[0]
    }

    /// `ratio_0 · exp(Z - ½[Z])`.
    pub fn reconstructed_ratio(&self) -> Result<PathSeries> {
        stochastic_exponential(&self.z.z, &self.z.qv, self.ratio0())
    }

    /// `max_t |G_t - [Z]_t| / max(G_t, [Z]_t)`, skipping points where both
    /// vanish.
    pub fn g_qv_relative_discrepancy(&self) -> f64 {
        self.g
            .channel(0)
            .iter()
            .zip(self.z.qv.channel(0))
            .filter(|(g, q)| g.max(**q) > 0.0)
            .map(|(g, q)| (g - q).abs() / g.max(*q))
            .fold(0.0, f64::max)
    }
}

/// Simulates one path of the market driven by `driver`. Representative
/// agents use the closed-form optimum; the small agent uses `small`.
/// `rng` keys any nested estimation the small agent's strategy performs.
pub fn simulate_market_with_driver(
    model: &DividendModelSpec,
    params: &MarketParams,
    small: &Strategy,
    driver: &BrownianPath,
    rng: RngSpec,
) -> Result<RatioDiagnostics> {
    params.validate()?;
    let dividends = model.simulate_with_driver(driver)?;
    let ctx = StrategyContext {
        model,
        rho: params.rho,
        rng,
    };
    let mu = Strategy::OptimalClosedForm.evaluate_path(&ctx, &dividends)?;
    let lambda = if small.is_optimal_closed_form() {
        mu.clone()
    } else {
        small.evaluate_path(&ctx, &dividends)?
    };
    let v = representative_wealth(dividends.x_bar(), params.rho)?;
    let s = prices(&mu, &v)?;
    let SmallAgentWealth { w, exhausted_at } = evolve_small_agent(&lambda, &mu, &dividends, params)?;
    let ratio_values = w
        .channel(0)
        .iter()
        .zip(v.channel(0))
        .map(|(w, v)| w / v)
        .collect();
    let ratio = PathSeries::single(*v.grid(), "ratio", ratio_values)?;
    let l = compute_l(&mu, dividends.r(), params.rho)?;
    let z = compute_z(&lambda, &mu, &l, params.rho, dividends.r())?;
    let g = compute_g(&lambda, &mu, &l, params.rho)?;
    Ok(RatioDiagnostics {
        dividends,
        mu,
        lambda,
        v,
        s,
        w,
        ratio,
        l,
        z,
        g,
        exhausted_at,
    })
}

/// [`simulate_market_with_driver`] with the driver drawn from `rng`.
pub fn simulate_market(
    model: &DividendModelSpec,
    params: &MarketParams,
    small: &Strategy,
    grid: TimeGrid,
    rng: RngSpec,
) -> Result<RatioDiagnostics> {
    let driver = BrownianPath::sample(grid, model.driver_dims(), rng)?;
    simulate_market_with_driver(model, params, small, &driver, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dividends::{LinearDriftParams, MartingaleRParams, SigmaSpec, WrightFisherParams};

    fn wf(sigma: f64) -> DividendModelSpec {
        DividendModelSpec::WrightFisher2(WrightFisherParams { sigma, x0: 0.5 })
    }

    fn constant(a: f64) -> Strategy {
        Strategy::Constant {
            weights: vec![a, 1.0 - a],
        }
    }

    #[test]
    fn wealth_formula() {
        let g = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        let ones = PathSeries::single(g, "X_bar", vec![1.0; 3]).unwrap();
        assert_eq!(representative_wealth(&ones, 0.5).unwrap().channel(0), &[2.0; 3]);
        assert_eq!(representative_wealth(&ones, 1.0).unwrap().channel(0), &[1.0; 3]);
        let ramp = PathSeries::single(g, "X_bar", vec![1.0, 1.5, 2.0]).unwrap();
        assert_eq!(representative_wealth(&ramp, 2.0).unwrap().channel(0), &[0.5, 0.75, 1.0]);
        let bad = PathSeries::single(g, "X_bar", vec![1.0, 0.0, 2.0]).unwrap();
        assert!(matches!(representative_wealth(&bad, 1.0), Err(Error::Assumption(_))));
    }

    #[test]
    fn price_formula() {
        let g = TimeGrid::new(0.0, 1.0, 1.0).unwrap();
        let mu = PathSeries::indexed(g, "mu", vec![vec![0.5, 0.2], vec![0.5, 0.8]]).unwrap();
        let v = PathSeries::single(g, "V", vec![2.0, 10.0]).unwrap();
        let s = prices(&mu, &v).unwrap();
        assert_eq!(s.point(0), vec![1.0, 1.0]);
        assert_eq!(s.point(1), vec![2.0, 8.0]);
        let bad = PathSeries::indexed(g, "mu", vec![vec![0.0, 0.2], vec![1.0, 0.8]]).unwrap();
        assert!(matches!(prices(&bad, &v), Err(Error::Assumption(_))));
    }

    #[test]
    fn copying_the_market_preserves_ratio_exactly() {
        let g = TimeGrid::new(0.0, 5.0, 1e-3).unwrap();
        let models = [
            wf(0.5),
            DividendModelSpec::LinearDriftR(LinearDriftParams { kappa: 1.0, theta: 0.5, sigma: 0.5, r0: 0.9 }),
            DividendModelSpec::MartingaleR(MartingaleRParams {
                r0: vec![0.2, 0.3, 0.5],
                sigma: SigmaSpec::Neutral { sigma: 0.5 },
            }),
        ];
        for m in &models {
            for i in 0..5 {
                let d = simulate_market(m, &MarketParams::new(0.2), &Strategy::OptimalClosedForm, g, RngSpec::new(1, i)).unwrap();
                let r0 = d.ratio0();
                assert_eq!(r0, 1.0);
                let dev = d.ratio.channel(0).iter().map(|x| (x - r0).abs()).fold(0.0, f64::max);
                assert!(dev <= 1e-10, "{dev}");
                assert!(d.z.z.channel(0).iter().all(|z| z.abs() < 1e-12));
                assert!(d.g.last(0) < 1e-12);
            }
        }
    }

    #[test]
    fn general_total_intensity_keeps_copy_invariance() {
        // X̄_t = 1 + t with shares drifting; λ = μ = R must keep W/V fixed.
        let g = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
        let x1: Vec<f64> = g.times().iter().map(|t| (1.0 + t) * (0.3 + 0.1 * t.sin())).collect();
        let x2: Vec<f64> = g.times().iter().zip(&x1).map(|(t, a)| 1.0 + t - a).collect();
        let paths = DividendPaths::from_intensities(g, vec![x1, x2]).unwrap();
        let mu = paths.r().clone();
        let params = MarketParams { rho: 0.4, w0: Some(3.0) };
        let w = evolve_small_agent(&mu, &mu, &paths, &params).unwrap();
        let v = representative_wealth(paths.x_bar(), 0.4).unwrap();
        let r0 = 3.0 / v.channel(0)[0];
        for (w, v) in w.w.channel(0).iter().zip(v.channel(0)) {
            assert!((w / v - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_market_keeps_constant_wealth() {
        // σ = 0: prices constant, dividends exactly cover consumption.
        let g = TimeGrid::new(0.0, 3.0, 1e-2).unwrap();
        let params = MarketParams { rho: 0.7, w0: Some(2.5) };
        let d = simulate_market(&wf(0.0), &params, &constant(0.3), g, RngSpec::new(0, 0)).unwrap();
        assert!(d.w.channel(0).iter().all(|w| (w - 2.5).abs() < 1e-12));
        assert!(d.l.channels().iter().flatten().all(|&x| x == 0.0));
        assert!(d.z.z.channel(0).iter().all(|&x| x == 0.0));
        assert!(d.g.channel(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn l_increments_in_martingale_model() {
        let g = TimeGrid::new(0.0, 2.0, 1e-2).unwrap();
        let d = simulate_market(&wf(0.5), &MarketParams::new(0.3), &constant(0.3), g, RngSpec::new(2, 0)).unwrap();
        for k in 0..g.n_steps() {
            let sum: f64 = (0..2).map(|n| d.l.channel(n)[k + 1]).sum();
            assert!(sum.abs() < 1e-12);
            let dl = d.l.channel(0)[k + 1] - d.l.channel(0)[k];
            let dmu = d.mu.channel(0)[k + 1] - d.mu.channel(0)[k];
            assert!((dl - (-0.3 * g.time(k)).exp() * dmu).abs() < 1e-15);
        }
    }

    #[test]
    fn z_forms_agree_and_g_matches_qv() {
        let g = TimeGrid::new(0.0, 5.0, 1e-3).unwrap();
        for i in 0..10 {
            let d = simulate_market(&wf(0.5), &MarketParams::new(0.2), &constant(0.3), g, RngSpec::new(3, i)).unwrap();
            assert!(d.z.max_discrepancy < 1e-10, "{}", d.z.max_discrepancy);
            assert!(d.g_qv_relative_discrepancy() <= 1e-9);
            for w in d.g.channel(0).windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn closed_form_g_close_on_average() {
        let g = TimeGrid::new(0.0, 5.0, 1e-3).unwrap();
        let (mut sim, mut closed) = (0.0, 0.0);
        for i in 0..100 {
            let d = simulate_market(&wf(0.5), &MarketParams::new(0.2), &constant(0.3), g, RngSpec::new(4, i)).unwrap();
            let c = closed_form_g_two_asset(&d.lambda, d.dividends.r(), 0.5).unwrap();
            sim += d.g.last(0);
            closed += c.last(0);
        }
        assert!((sim - closed).abs() / closed < 1e-2, "{sim} vs {closed}");
    }

    #[test]
    fn stochastic_exponential_cases() {
        let g = TimeGrid::new(0.0, 1.0, 0.25).unwrap();
        let zero = PathSeries::single(g, "Z", vec![0.0; 5]).unwrap();
        let e = stochastic_exponential(&zero, &zero, 0.7).unwrap();
        assert!(e.channel(0).iter().all(|&x| x == 0.7));
        let t = PathSeries::single(g, "Z", g.times()).unwrap();
        let e = stochastic_exponential(&t, &zero, 1.0).unwrap();
        for (x, t) in e.channel(0).iter().zip(g.times()) {
            assert!((x - t.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn supermartingale_mean() {
        let g = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let finals: Vec<f64> = (0..10_000)
            .map(|i| {
                simulate_market(&wf(0.5), &MarketParams::new(0.2), &constant(0.3), g, RngSpec::new(5, i))
                    .unwrap()
                    .ratio
                    .last(0)
            })
            .collect();
        let n = finals.len() as f64;
        let m = finals.iter().sum::<f64>() / n;
        let se = (finals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!(m <= 1.0 + 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn shape_errors() {
        let g1 = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        let g2 = TimeGrid::new(0.0, 1.0, 0.25).unwrap();
        let a = PathSeries::indexed(g1, "a", vec![vec![0.5; 3], vec![0.5; 3]]).unwrap();
        let b = PathSeries::indexed(g2, "b", vec![vec![0.5; 5], vec![0.5; 5]]).unwrap();
        assert!(matches!(compute_l(&a, &b, 1.0), Err(Error::Shape(_))));
        assert!(matches!(compute_g(&a, &a, &b, 1.0), Err(Error::Shape(_))));
    }
}

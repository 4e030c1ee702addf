//! Simplex-valued trading strategies and the growth-optimal allocation.
//!
//! The growth-optimal weight of asset `n` at time `t` is the discounted
//! average of its expected future relative dividend intensity,
//!
//! ```text
//! μ_t^n = ∫_t^∞ ρ e^{ρ(t-s)} E[R_s^n | F_t] ds .
//! ```
//!
//! When `R` is a martingale every conditional expectation equals `R_t`, so
//! `μ = R`. For the linear-drift model the conditional mean is explicit and
//! the integral has a closed form. Otherwise [`estimate_mu_nested_mc`]
//! estimates it by simulating inner paths from the current state.

use rayon::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dividends::{DividendModelSpec, DividendPaths};
use crate::error::{Error, Result};
use crate::paths::{PathSeries, RngSpec, TimeGrid};
use crate::simplex::{FLOOR_EPS, SUM_TOL};

pub use crate::simplex::validate_simplex;

/// Discount horizon giving a truncation bias bound of `1e-3`.
pub const DEFAULT_BIAS_TARGET: f64 = 1e-3;
pub const DEFAULT_INNER_PATHS: usize = 1000;
pub const DEFAULT_INNER_DT: f64 = 1e-2;

/// Time-dependent scale of a strategy perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFn {
    /// `w(t) = value`.
    Constant { value: f64 },
    /// `w(t) = e^{-rate t}`.
    ExpDecay { rate: f64 },
}

impl WeightFn {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            WeightFn::Constant { value } => value,
            WeightFn::ExpDecay { rate } => (-rate * t).exp(),
        }
    }
}

/// A trading strategy, evaluated pointwise from `(t, R_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Constant {
        weights: Vec<f64>,
    },
    /// The growth-optimal strategy in closed form.
    OptimalClosedForm,
    /// The growth-optimal strategy estimated by nested simulation at every
    /// grid point. `horizon` is the look-ahead `T - t`; when omitted it is
    /// chosen so that the truncation bias is at most `1e-3`.
    OptimalNestedMc {
        #[serde(default)]
        horizon: Option<f64>,
        #[serde(default = "default_inner_paths")]
        inner_paths: usize,
        #[serde(default = "default_inner_dt")]
        inner_dt: f64,
    },
    /// `base + w(t) δ`, projected back onto the simplex.
    Perturbed {
        base: Box<Strategy>,
        delta: Vec<f64>,
        weight: WeightFn,
    },
}

fn default_inner_paths() -> usize {
    DEFAULT_INNER_PATHS
}

fn default_inner_dt() -> f64 {
    DEFAULT_INNER_DT
}

/// Everything a strategy may look at besides `(t, R_t)`.
#[derive(Debug, Clone, Copy)]
pub struct StrategyContext<'a> {
    pub model: &'a DividendModelSpec,
    pub rho: f64,
    /// Stream reserved for nested estimation along this outer path.
    pub rng: RngSpec,
}

impl Strategy {
    pub fn validate(&self, n_assets: usize) -> Result<()> {
        match self {
            Strategy::Constant { weights } => {
                if weights.len() != n_assets {
                    return Err(Error::config(format!(
                        "constant strategy has {} weights for {n_assets} assets",
                        weights.len()
                    )));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                    || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::InvalidStrategy(format!(
                        "weights {weights:?} are not a probability vector"
                    )));
                }
                Ok(())
            }
            Strategy::OptimalClosedForm => Ok(()),
            Strategy::OptimalNestedMc {
                horizon,
                inner_paths,
                inner_dt,
            } => {
                if let Some(h) = horizon {
                    if !(h.is_finite() && *h > 0.0) {
                        return Err(Error::config("nested horizon must be positive"));
                    }
                }
                if *inner_paths < 2 {
                    return Err(Error::config("nested estimation needs at least 2 inner paths"));
                }
                if !(inner_dt.is_finite() && *inner_dt > 0.0) {
                    return Err(Error::config("inner dt must be positive"));
                }
                Ok(())
            }
            Strategy::Perturbed {
                base,
                delta,
                weight,
            } => {
                base.validate(n_assets)?;
                check_tangent(delta, n_assets)?;
                match weight {
                    WeightFn::Constant { value } if !value.is_finite() => {
                        Err(Error::config("perturbation weight must be finite"))
                    }
                    WeightFn::ExpDecay { rate } if !(rate.is_finite() && *rate >= 0.0) => {
                        Err(Error::config("decay rate must be >= 0"))
                    }
                    _ => Ok(()),
                }
            }
        }
    }

    /// Weights at time `t` given relative intensities `r`. `step` is the grid
    /// index, used only to key nested-simulation streams.
    pub fn evaluate(&self, ctx: &StrategyContext<'_>, t: f64, step: usize, r: &[f64]) -> Result<Vec<f64>> {
        match self {
            Strategy::Constant { weights } => validate_simplex(weights, FLOOR_EPS),
            Strategy::OptimalClosedForm => optimal_mu_closed_form(ctx.model, r, ctx.rho),
            Strategy::OptimalNestedMc {
                horizon,
                inner_paths,
                inner_dt,
            } => {
                let h = horizon.unwrap_or_else(|| default_horizon(ctx.rho));
                let est = estimate_mu_nested_mc(
                    ctx.model,
                    r,
                    t,
                    ctx.rho,
                    t + h,
                    *inner_paths,
                    *inner_dt,
                    ctx.rng.substream(step as u64),
                )?;
                Ok(est.values)
            }
            Strategy::Perturbed {
                base,
                delta,
                weight,
            } => {
                let mut v = base.evaluate(ctx, t, step, r)?;
                let w = weight.at(t);
                for (x, d) in v.iter_mut().zip(delta) {
                    *x += w * d;
                }
                validate_simplex(&v, FLOOR_EPS)
            }
        }
    }

    /// The strategy along a dividend path, one channel per asset.
    pub fn evaluate_path(&self, ctx: &StrategyContext<'_>, paths: &DividendPaths) -> Result<PathSeries> {
        let grid = paths.grid();
        let n = paths.n_assets();
        let mut channels: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(grid.len())).collect();
        let mut r = vec![0.0; n];
        for k in 0..grid.len() {
            for (x, ch) in r.iter_mut().zip(paths.r().channels()) {
                *x = ch[k];
            }
            let w = self.evaluate(ctx, grid.time(k), k, &r)?;
            for (ch, x) in channels.iter_mut().zip(w) {
                ch.push(x);
            }
        }
        PathSeries::indexed(*grid, "w", channels)
    }

    /// Whether the strategy is exactly the closed-form optimum.
    pub fn is_optimal_closed_form(&self) -> bool {
        matches!(self, Strategy::OptimalClosedForm)
    }
}

fn check_tangent(delta: &[f64], n_assets: usize) -> Result<()> {
    if delta.len() != n_assets {
        return Err(Error::config(format!(
            "perturbation has {} components for {n_assets} assets",
            delta.len()
        )));
    }
    if delta.iter().any(|d| !d.is_finite()) || delta.iter().sum::<f64>().abs() > SUM_TOL {
        return Err(Error::config(format!(
            "perturbation {delta:?} must sum to zero"
        )));
    }
    Ok(())
}

/// `base + w(t) δ` with `Σδ = 0`.
pub fn perturbed_strategy(base: Strategy, delta: Vec<f64>, weight: WeightFn) -> Result<Strategy> {
    check_tangent(&delta, delta.len())?;
    Ok(Strategy::Perturbed {
        base: Box::new(base),
        delta,
        weight,
    })
}

/// Look-ahead at which the discount factor drops to [`DEFAULT_BIAS_TARGET`].
pub fn default_horizon(rho: f64) -> f64 {
    -DEFAULT_BIAS_TARGET.ln() / rho
}

/// `μ = R` for martingale relative intensities.
pub fn optimal_mu_martingale(r: &[f64]) -> Vec<f64> {
    r.to_vec()
}

/// Growth-optimal weights for the linear-drift model, where
/// `E[R¹_s | R¹_t] = θ + (R¹_t - θ) e^{-κ(s-t)}` integrates to
/// `μ¹ = θ + (R¹_t - θ) ρ / (ρ + κ)`.
pub fn optimal_mu_linear_drift(r1: f64, kappa: f64, theta: f64, rho: f64) -> Vec<f64> {
    let mu1 = theta + (r1 - theta) * rho / (rho + kappa);
    vec![mu1, 1.0 - mu1]
}

/// Closed-form optimum for any built-in model.
pub fn optimal_mu_closed_form(model: &DividendModelSpec, r: &[f64], rho: f64) -> Result<Vec<f64>> {
    let mu = match model {
        DividendModelSpec::WrightFisher2(_) | DividendModelSpec::MartingaleR(_) => {
            optimal_mu_martingale(r)
        }
        DividendModelSpec::LinearDriftR(p) => optimal_mu_linear_drift(r[0], p.kappa, p.theta, rho),
    };
    validate_simplex(&mu, FLOOR_EPS)
}

/// A nested Monte Carlo estimate of the growth-optimal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub values: Vec<f64>,
    /// `e^{-ρ(T-t)}`: the truncated tail can move any component by at most
    /// this much.
    pub truncation_bias_bound: f64,
    pub mc_standard_error: Vec<f64>,
}

/// Quadrature weights on the inner grid for
/// `∫_t^T ρ e^{ρ(t-s)} R_s ds + e^{-ρ(T-t)} R_T`.
///
/// `R` is interpolated linearly between grid points and the exponential
/// kernel integrated exactly on each panel. The weights are normalized to
/// sum to one, which the exact integral of the kernel plus the tail does.
fn kernel_weights(rho: f64, h: f64, n_steps: usize) -> Vec<f64> {
    let decay = (-rho * h).exp();
    let panel_mass = -(-rho * h).exp_m1();
    // share of a panel's mass carried by its right end point
    let right_share = panel_mass / (rho * h) - decay;
    let mut w = vec![0.0; n_steps + 1];
    let mut start = 1.0;
    for j in 0..n_steps {
        let right = start * right_share;
        let left = start * panel_mass - right;
        w[j] += left;
        w[j + 1] += right;
        start *= decay;
    }
    w[n_steps] += (-rho * h * n_steps as f64).exp();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

/// Estimates `μ_t` from the Markov state `state = R_t` by averaging
/// `∫_t^T ρ e^{ρ(t-s)} R_s ds + e^{-ρ(T-t)} R_T` over `inner_paths`
/// simulated continuations on a grid of step `inner_dt`.
///
/// Inner path `i` draws from `rng.substream(i)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_mu_nested_mc(
    model: &DividendModelSpec,
    state: &[f64],
    t: f64,
    rho: f64,
    horizon_end: f64,
    inner_paths: usize,
    inner_dt: f64,
    rng: RngSpec,
) -> Result<MuEstimate> {
    if !model.is_markovian() {
        return Err(Error::UnsupportedModel(
            "nested estimation conditions on the current state only".into(),
        ));
    }
    model.validate()?;
    model.check_state(state)?;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::config(format!("rho = {rho} must be positive")));
    }
    if inner_paths < 2 {
        return Err(Error::config("nested estimation needs at least 2 inner paths"));
    }
    if !(horizon_end > t) {
        return Err(Error::config(format!(
            "horizon end {horizon_end} must exceed t = {t}"
        )));
    }
    let grid = TimeGrid::new(t, horizon_end, inner_dt)?;
    let weights = kernel_weights(rho, grid.dt(), grid.n_steps());
    let n = model.n_assets();
    let dims = model.driver_dims();
    let sd = grid.dt().sqrt();

    let samples: Vec<Vec<f64>> = (0..inner_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut gen = rng.substream(i).rng();
            let mut r = state.to_vec();
            let mut db = vec![0.0; dims];
            let mut acc: Vec<f64> = r.iter().map(|x| weights[0] * x).collect();
            for w in &weights[1..] {
                for b in db.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut gen);
                    *b = sd * z;
                }
                model.step(&mut r, grid.dt(), &db);
                for (a, x) in acc.iter_mut().zip(&r) {
                    *a += w * x;
                }
            }
            acc
        })
        .collect();

    let m = inner_paths as f64;
    let mut mean = vec![0.0; n];
    for s in &samples {
        for (a, x) in mean.iter_mut().zip(s) {
            *a += x;
        }
    }
    for a in &mut mean {
        *a /= m;
    }
    let mut se = vec![0.0; n];
    for s in &samples {
        for ((v, x), mu) in se.iter_mut().zip(s).zip(&mean) {
            *v += (x - mu).powi(2);
        }
    }
    for v in &mut se {
        *v = (*v / (m - 1.0) / m).sqrt();
    }
    Ok(MuEstimate {
        values: validate_simplex(&mean, FLOOR_EPS)?,
        truncation_bias_bound: (-rho * (horizon_end - t)).exp(),
        mc_standard_error: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dividends::{LinearDriftParams, WrightFisherParams};

    fn linear(sigma: f64) -> DividendModelSpec {
        DividendModelSpec::LinearDriftR(LinearDriftParams {
            kappa: 1.0,
            theta: 0.5,
            sigma,
            r0: 0.9,
        })
    }

    /// Composite Simpson rule for `∫_0^L ρ e^{-ρu} m(u) du + e^{-ρL} m(L)`,
    /// with `m` the exact conditional mean of the linear-drift model.
    fn linear_drift_quadrature(r1: f64, kappa: f64, theta: f64, rho: f64, len: f64) -> f64 {
        let m = |u: f64| theta + (r1 - theta) * (-kappa * u).exp();
        let f = |u: f64| rho * (-rho * u).exp() * m(u);
        let n = 400_000;
        let h = len / n as f64;
        let mut s = f(0.0) + f(len);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0 + (-rho * len).exp() * m(len)
    }

    #[test]
    fn martingale_optimum_is_r() {
        assert_eq!(optimal_mu_martingale(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(optimal_mu_martingale(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn linear_drift_closed_form() {
        let mu = optimal_mu_linear_drift(0.9, 1.0, 0.5, 1.0);
        assert!((mu[0] - 0.7).abs() < 1e-15);
        assert_eq!(mu[0] + mu[1], 1.0);
        assert_eq!(optimal_mu_linear_drift(0.5, 3.0, 0.5, 0.2)[0], 0.5);
        // κ → 0 recovers μ = R
        assert!((optimal_mu_linear_drift(0.9, 1e-12, 0.5, 1.0)[0] - 0.9).abs() < 1e-11);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for &(r1, kappa, theta, rho) in &[(0.9, 1.0, 0.5, 1.0), (0.1, 2.5, 0.7, 0.3), (0.6, 0.2, 0.2, 4.0)] {
            let q = linear_drift_quadrature(r1, kappa, theta, rho, 60.0 / rho);
            let c = optimal_mu_linear_drift(r1, kappa, theta, rho)[0];
            assert!((q - c).abs() < 1e-10, "{q} vs {c}");
        }
    }

    #[test]
    fn kernel_weights_sum_to_one_and_integrate_exponential() {
        let (rho, h, n) = (0.7, 0.01, 800);
        let w = kernel_weights(rho, h, n);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // Linear integrands are integrated exactly: m(u) = u.
        let len = h * n as f64;
        let exact = (1.0 - (-rho * len).exp()) / rho - len * (-rho * len).exp() + len * (-rho * len).exp();
        let approx: f64 = w.iter().enumerate().map(|(j, x)| x * j as f64 * h).sum();
        assert!((approx - exact).abs() < 1e-12, "{approx} vs {exact}");
    }

    #[test]
    fn validate_simplex_cases() {
        assert_eq!(validate_simplex(&[0.3, 0.7], FLOOR_EPS).unwrap(), vec![0.3, 0.7]);
        let v = validate_simplex(&[1.0, 0.0], FLOOR_EPS).unwrap();
        assert_eq!(v[0] + v[1], 1.0);
        assert!(validate_simplex(&[-1.0, -1.0], FLOOR_EPS).is_err());
    }

    #[test]
    fn nested_estimate_no_noise() {
        let est = estimate_mu_nested_mc(&linear(0.0), &[0.9, 0.1], 0.0, 1.0, 8.0, 2, 1e-2, RngSpec::new(1, 0)).unwrap();
        assert_eq!(est.mc_standard_error, vec![0.0, 0.0]);
        // deterministic Euler ODE path, integrated by the same kernel weights
        let w = kernel_weights(1.0, 1e-2, 800);
        let mut x = 0.9;
        let mut q = w[0] * x;
        for wj in &w[1..] {
            x += 1.0 * (0.5 - x) * 1e-2;
            q += wj * x;
        }
        assert!((est.values[0] - q).abs() < 1e-14);
        assert!((est.values[0] - 0.7).abs() < (-8.0f64).exp() + 1e-2);
        assert!((est.values[0] + est.values[1] - 1.0).abs() <= crate::simplex::SUM_TOL);
    }

    #[test]
    fn nested_estimate_linear_drift_oracle() {
        let est = estimate_mu_nested_mc(&linear(0.3), &[0.9, 0.1], 0.0, 1.0, 8.0, 10_000, 1e-2, RngSpec::new(7, 0)).unwrap();
        let tol = est.truncation_bias_bound + 3.0 * est.mc_standard_error[0];
        assert!((est.values[0] - 0.7).abs() <= tol, "{:?}", est);
        assert!((est.truncation_bias_bound - (-8.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn nested_estimate_martingale_oracle() {
        let wf = DividendModelSpec::WrightFisher2(WrightFisherParams { sigma: 0.5, x0: 0.4 });
        let est = estimate_mu_nested_mc(&wf, &[0.4, 0.6], 2.0, 0.5, 14.0, 2000, 2e-2, RngSpec::new(2, 5)).unwrap();
        let tol = est.truncation_bias_bound + 3.0 * est.mc_standard_error[0];
        assert!((est.values[0] - 0.4).abs() <= tol, "{est:?}");
        assert!((est.values.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn standard_error_scales_as_inverse_root() {
        let model = linear(0.3);
        let ses: Vec<f64> = [100usize, 1000, 10_000]
            .iter()
            .map(|&m| {
                estimate_mu_nested_mc(&model, &[0.9, 0.1], 0.0, 1.0, 8.0, m, 1e-2, RngSpec::new(3, 0))
                    .unwrap()
                    .mc_standard_error[0]
            })
            .collect();
        // least-squares slope of log SE against log M
        let xs: Vec<f64> = [100f64, 1000.0, 10_000.0].iter().map(|m| m.ln()).collect();
        let ys: Vec<f64> = ses.iter().map(|s| s.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 3.0;
        let ym = ys.iter().sum::<f64>() / 3.0;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>()
            / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
        assert!((-0.6..=-0.4).contains(&slope), "slope {slope}, ses {ses:?}");
    }

    #[test]
    fn longer_horizon_moves_estimate_by_at_most_discount() {
        let model = linear(0.3);
        let short = estimate_mu_nested_mc(&model, &[0.9, 0.1], 0.0, 1.0, 2.0, 500, 1e-2, RngSpec::new(4, 0)).unwrap();
        let long = estimate_mu_nested_mc(&model, &[0.9, 0.1], 0.0, 1.0, 4.0, 500, 1e-2, RngSpec::new(4, 0)).unwrap();
        for n in 0..2 {
            assert!((short.values[n] - long.values[n]).abs() <= short.truncation_bias_bound);
        }
    }

    #[test]
    fn nested_estimate_rejects_bad_input() {
        let m = linear(0.3);
        assert!(estimate_mu_nested_mc(&m, &[0.9, 0.1], 0.0, 1.0, 8.0, 1, 1e-2, RngSpec::new(0, 0)).is_err());
        assert!(estimate_mu_nested_mc(&m, &[0.9, 0.1], 1.0, 1.0, 1.0, 10, 1e-2, RngSpec::new(0, 0)).is_err());
        assert!(estimate_mu_nested_mc(&m, &[0.9, 0.2], 0.0, 1.0, 8.0, 10, 1e-2, RngSpec::new(0, 0)).is_err());
        assert!(estimate_mu_nested_mc(&m, &[0.9], 0.0, 1.0, 8.0, 10, 1e-2, RngSpec::new(0, 0)).is_err());
    }

    #[test]
    fn perturbation_requires_tangent() {
        assert!(perturbed_strategy(Strategy::OptimalClosedForm, vec![0.1, 0.1], WeightFn::Constant { value: 1.0 }).is_err());
        assert!(perturbed_strategy(Strategy::OptimalClosedForm, vec![0.1, -0.1], WeightFn::Constant { value: 1.0 }).is_ok());
    }

    #[test]
    fn perturbation_evaluates() {
        let model = DividendModelSpec::WrightFisher2(WrightFisherParams { sigma: 0.5, x0: 0.5 });
        let ctx = StrategyContext { model: &model, rho: 0.2, rng: RngSpec::new(0, 0) };
        let zero = perturbed_strategy(Strategy::OptimalClosedForm, vec![0.0, 0.0], WeightFn::ExpDecay { rate: 1.0 }).unwrap();
        assert_eq!(zero.evaluate(&ctx, 0.3, 0, &[0.4, 0.6]).unwrap(), vec![0.4, 0.6]);
        let p = perturbed_strategy(Strategy::OptimalClosedForm, vec![0.1, -0.1], WeightFn::ExpDecay { rate: 1.0 }).unwrap();
        let v = p.evaluate(&ctx, 0.0, 0, &[0.4, 0.6]).unwrap();
        assert_eq!(v, validate_simplex(&[0.4 + 0.1, 0.6 - 0.1], FLOOR_EPS).unwrap());
        // clipped at the boundary
        let v = p.evaluate(&ctx, 0.0, 0, &[0.95, 0.05]).unwrap();
        assert!(v[1] >= FLOOR_EPS && (v[0] + v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn strategy_json_round_trip() {
        let s = Strategy::Perturbed {
            base: Box::new(Strategy::OptimalClosedForm),
            delta: vec![0.1, -0.1],
            weight: WeightFn::ExpDecay { rate: 1.0 },
        };
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Strategy>(&j).unwrap(), s);
        let n: Strategy = serde_json::from_str(r#"{"kind":"optimal_nested_mc"}"#).unwrap();
        assert_eq!(
            n,
            Strategy::OptimalNestedMc { horizon: None, inner_paths: DEFAULT_INNER_PATHS, inner_dt: DEFAULT_INNER_DT }
        );
    }
}

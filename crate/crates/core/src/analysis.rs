//! Statistical verdicts over many simulated paths.
//!
//! All verdicts are finite-sample, finite-horizon proxies. The
//! supermartingale check uses a one-sided 3-standard-error rule; the
//! survival classification compares `G` and `W/V` at `T/2` and `T` against
//! configurable thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of paths for [`test_supermartingale`].
pub const MIN_PATHS: usize = 100;

/// Relative allowance on the supermartingale bound for floating-point
/// rounding, so that an exact copy of the market (mean equal to `ratio_0`
/// up to rounding, standard error zero) passes.
pub const ROUNDING_ALLOWANCE: f64 = 1e-10;

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear-interpolation quantile (`q` in `[0, 1]`). NaN for empty input.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        v[lo]
    } else {
        v[lo] + (v[hi] - v[lo]) * frac
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub ratio0: f64,
    pub checkpoints: Vec<f64>,
    pub means: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Per checkpoint: `mean <= ratio_0 + 3 SE` (plus rounding allowance).
    pub verdicts: Vec<bool>,
    pub passed: bool,
    pub path_count: usize,
    pub excluded_fraction: f64,
}

/// `ratios[c][p]` is `W/V` of path `p` at checkpoint `c`.
pub fn test_supermartingale(
    checkpoints: &[f64],
    ratios: &[Vec<f64>],
    ratio0: f64,
    excluded_fraction: f64,
) -> Result<SupermartingaleReport> {
    if checkpoints.len() != ratios.len() {
        return Err(Error::Shape(format!(
            "{} checkpoints but {} ratio columns",
            checkpoints.len(),
            ratios.len()
        )));
    }
    let path_count = ratios.first().map_or(0, Vec::len);
    if ratios.iter().any(|c| c.len() != path_count) {
        return Err(Error::Shape("ratio columns differ in length".into()));
    }
    if path_count < MIN_PATHS {
        return Err(Error::StatisticalPower {
            got: path_count,
            need: MIN_PATHS,
        });
    }
    let mut means = Vec::new();
    let mut standard_errors = Vec::new();
    let mut verdicts = Vec::new();
    for col in ratios {
        let (m, se) = mean_se(col);
        verdicts.push(m <= ratio0 + 3.0 * se + ROUNDING_ALLOWANCE * ratio0.abs());
        means.push(m);
        standard_errors.push(se);
    }
    Ok(SupermartingaleReport {
        ratio0,
        checkpoints: checkpoints.to_vec(),
        passed: verdicts.iter().all(|&v| v),
        means,
        standard_errors,
        verdicts,
        path_count,
        excluded_fraction,
    })
}

/// Decision thresholds for [`classify_survival`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalThresholds {
    /// Extinction needs `median(G_T / G_{T/2}) >= growth_ratio`.
    pub growth_ratio: f64,
    /// ... and `median(W_T/V_T) < ratio_decay * median(W_{T/2}/V_{T/2})`.
    pub ratio_decay: f64,
    /// Survival needs `median(G_T - G_{T/2}) <= increment_share * median(G_{T/2})`.
    pub increment_share: f64,
    /// Values of `G` at or below this are treated as zero.
    pub g_floor: f64,
}

impl Default for SurvivalThresholds {
    fn default() -> Self {
        Self {
            growth_ratio: 1.5,
            ratio_decay: 1.0,
            increment_share: 0.05,
            g_floor: 1e-12,
        }
    }
}

impl SurvivalThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.growth_ratio > 1.0
            && self.ratio_decay > 0.0
            && self.ratio_decay <= 1.0
            && self.increment_share >= 0.0
            && self.g_floor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid survival thresholds {self:?}")))
        }
    }
}

/// `G` and `W/V` of one path sampled at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTrack {
    pub times: Vec<f64>,
    pub g: Vec<f64>,
    pub ratio: Vec<f64>,
}

impl SurvivalTrack {
    fn value_at(&self, series: &[f64], t: f64) -> Result<f64> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|i| series[i])
            .ok_or_else(|| Error::Shape(format!("track has no sample at t = {t}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivalClass {
    ExtinctionConsistent,
    SurvivalConsistent,
    Inconclusive,
}

impl std::fmt::Display for SurvivalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SurvivalClass::ExtinctionConsistent => "extinction-consistent",
            SurvivalClass::SurvivalConsistent => "survival-consistent",
            SurvivalClass::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalReport {
    pub horizon: f64,
    pub path_count: usize,
    pub g_half_p05: f64,
    pub g_half_median: f64,
    pub g_half_p95: f64,
    pub g_end_p05: f64,
    pub g_end_median: f64,
    pub g_end_p95: f64,
    /// Median over paths of `G_T / G_{T/2}`.
    pub median_growth_ratio: f64,
    /// Median over paths of `G_T - G_{T/2}`.
    pub median_g_increment: f64,
    pub median_ratio_half: f64,
    pub median_ratio_end: f64,
    pub p05_ratio_end: f64,
    pub classification: SurvivalClass,
    pub thresholds: SurvivalThresholds,
}

/// Classifies a batch of paths as consistent with `W/V → 0`
/// (`G` keeps growing) or with a positive limit (`G` levels off).
pub fn classify_survival(
    tracks: &[SurvivalTrack],
    horizon: f64,
    thresholds: &SurvivalThresholds,
) -> Result<SurvivalReport> {
    thresholds.validate()?;
    if tracks.is_empty() {
        return Err(Error::StatisticalPower { got: 0, need: 1 });
    }
    let half = horizon / 2.0;
    let floor = thresholds.g_floor;
    let mut g_half = Vec::with_capacity(tracks.len());
    let mut g_end = Vec::with_capacity(tracks.len());
    let mut growth = Vec::with_capacity(tracks.len());
    let mut incr = Vec::with_capacity(tracks.len());
    let mut r_half = Vec::with_capacity(tracks.len());
    let mut r_end = Vec::with_capacity(tracks.len());
    for (p, tr) in tracks.iter().enumerate() {
        if let Some(i) = tr.g.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Invariant(format!(
                "G decreases on path {p} between t = {} and t = {}",
                tr.times[i],
                tr.times[i + 1]
            )));
        }
        let gh = tr.value_at(&tr.g, half)?;
        let ge = tr.value_at(&tr.g, horizon)?;
        g_half.push(gh);
        g_end.push(ge);
        growth.push(if gh > floor {
            ge / gh
        } else if ge > floor {
            f64::INFINITY
        } else {
            1.0
        });
        incr.push(if ge - gh > floor { ge - gh } else { 0.0 });
        r_half.push(tr.value_at(&tr.ratio, half)?);
        r_end.push(tr.value_at(&tr.ratio, horizon)?);
    }
    let median_growth_ratio = median(&growth);
    let median_g_increment = median(&incr);
    let median_ratio_half = median(&r_half);
    let median_ratio_end = median(&r_end);
    let p05_ratio_end = quantile(&r_end, 0.05);
    let g_half_median = median(&g_half);
    let g_half_floor = if g_half_median > floor { g_half_median } else { 0.0 };

    let classification = if median_growth_ratio >= thresholds.growth_ratio
        && median_ratio_end < thresholds.ratio_decay * median_ratio_half
    {
        SurvivalClass::ExtinctionConsistent
    } else if median_g_increment <= thresholds.increment_share * g_half_floor && p05_ratio_end > 0.0 {
        SurvivalClass::SurvivalConsistent
    } else {
        SurvivalClass::Inconclusive
    };

    Ok(SurvivalReport {
        horizon,
        path_count: tracks.len(),
        g_half_p05: quantile(&g_half, 0.05),
        g_half_median,
        g_half_p95: quantile(&g_half, 0.95),
        g_end_p05: quantile(&g_end, 0.05),
        g_end_median: median(&g_end),
        g_end_p95: quantile(&g_end, 0.95),
        median_growth_ratio,
        median_g_increment,
        median_ratio_half,
        median_ratio_end,
        p05_ratio_end,
        classification,
        thresholds: *thresholds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    /// `max |ln(direct) - ln(reconstructed)|` over paths and times.
    pub max_log_error: f64,
    pub path_count: usize,
}

/// Compares the wealth-ratio recursion with its stochastic-exponential
/// reconstruction, path by path.
pub fn ito_consistency(direct: &[Vec<f64>], reconstructed: &[Vec<f64>]) -> Result<ItoReport> {
    if direct.len() != reconstructed.len() {
        return Err(Error::Shape("different path counts".into()));
    }
    let mut max_log_error: f64 = 0.0;
    for (d, r) in direct.iter().zip(reconstructed) {
        if d.len() != r.len() {
            return Err(Error::Shape("different path lengths".into()));
        }
        for (a, b) in d.iter().zip(r) {
            max_log_error = max_log_error.max((a.ln() - b.ln()).abs());
        }
    }
    Ok(ItoReport {
        max_log_error,
        path_count: direct.len(),
    })
}

/// Successive error ratios `e[i] / e[i+1]` of a refinement study.
pub fn refinement_ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SllnReport {
    pub horizons: Vec<f64>,
    /// Per horizon, the median over paths of `|Z_T| / max(G_T, 1)`.
    pub medians: Vec<f64>,
    /// Whether the medians shrink from the first to the last horizon (or
    /// are zero throughout).
    pub vanishing: bool,
}

/// `z[h][p]`, `g[h][p]`: values of `Z` and `G` of path `p` at horizon `h`.
pub fn slln_diagnostic(horizons: &[f64], z: &[Vec<f64>], g: &[Vec<f64>]) -> Result<SllnReport> {
    if horizons.len() != z.len() || z.len() != g.len() || horizons.is_empty() {
        return Err(Error::Shape("horizons, Z and G columns must align".into()));
    }
    let medians: Vec<f64> = z
        .iter()
        .zip(g)
        .map(|(zc, gc)| {
            let r: Vec<f64> = zc.iter().zip(gc).map(|(z, g)| z.abs() / g.max(1.0)).collect();
            median(&r)
        })
        .collect();
    let first = medians[0];
    let last = *medians.last().unwrap();
    let vanishing = medians.iter().all(|&m| m <= 1e-12) || last < first;
    Ok(SllnReport {
        horizons: horizons.to_vec(),
        medians,
        vanishing,
    })
}

/// Upper quantile of `sup_{s<=t} W_s/V_s` at two horizons. A bounded
/// relative wealth shows up as a quantile that stops growing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMaxReport {
    pub q: f64,
    pub horizons: Vec<f64>,
    pub quantiles: Vec<f64>,
}

pub fn running_max_quantiles(horizons: &[f64], maxima: &[Vec<f64>], q: f64) -> Result<RunningMaxReport> {
    if horizons.len() != maxima.len() {
        return Err(Error::Shape("one maxima column per horizon".into()));
    }
    Ok(RunningMaxReport {
        q,
        horizons: horizons.to_vec(),
        quantiles: maxima.iter().map(|m| quantile(m, q)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let xs = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&xs), 3.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 5.0);
        assert!((quantile(&xs, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn exact_copy_passes() {
        let col = vec![1.0; 200];
        let rep = test_supermartingale(&[1.0, 2.0], &[col.clone(), col], 1.0, 0.0).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.means, vec![1.0, 1.0]);
    }

    #[test]
    fn inflated_mean_fails() {
        // mean 1.5, standard error 0.01
        let n = 400;
        let sd = 0.01 * (n as f64).sqrt();
        let col: Vec<f64> = (0..n).map(|i| 1.5 + if i % 2 == 0 { sd } else { -sd }).collect();
        let (m, se) = mean_se(&col);
        assert!((m - 1.5).abs() < 1e-12 && (se - 0.01).abs() < 1e-4);
        let rep = test_supermartingale(&[1.0], &[col], 1.0, 0.0).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn too_few_paths() {
        assert!(matches!(
            test_supermartingale(&[1.0], &[vec![1.0; 10]], 1.0, 0.0),
            Err(Error::StatisticalPower { got: 10, need: 100 })
        ));
    }

    fn track(g: &[f64], ratio: &[f64]) -> SurvivalTrack {
        SurvivalTrack {
            times: vec![0.0, 5.0, 10.0],
            g: g.to_vec(),
            ratio: ratio.to_vec(),
        }
    }

    #[test]
    fn linear_growth_is_extinction() {
        let tracks: Vec<_> = (0..50).map(|_| track(&[0.0, 1.0, 2.0], &[1.0, 0.6, 0.25])).collect();
        let rep = classify_survival(&tracks, 10.0, &SurvivalThresholds::default()).unwrap();
        assert_eq!(rep.classification, SurvivalClass::ExtinctionConsistent);
        assert_eq!(rep.median_growth_ratio, 2.0);
    }

    #[test]
    fn flat_g_is_survival() {
        let tracks: Vec<_> = (0..50).map(|_| track(&[0.0, 1.0, 1.01], &[1.0, 0.9, 0.9])).collect();
        let rep = classify_survival(&tracks, 10.0, &SurvivalThresholds::default()).unwrap();
        assert_eq!(rep.classification, SurvivalClass::SurvivalConsistent);
    }

    #[test]
    fn zero_g_is_survival() {
        let tracks: Vec<_> = (0..50).map(|_| track(&[0.0, 1e-30, 2e-30], &[1.0, 1.0, 1.0])).collect();
        let rep = classify_survival(&tracks, 10.0, &SurvivalThresholds::default()).unwrap();
        assert_eq!(rep.classification, SurvivalClass::SurvivalConsistent);
        assert_eq!(rep.median_growth_ratio, 1.0);
    }

    #[test]
    fn in_between_is_inconclusive() {
        let tracks: Vec<_> = (0..50).map(|_| track(&[0.0, 1.0, 1.3], &[1.0, 0.9, 0.8])).collect();
        let rep = classify_survival(&tracks, 10.0, &SurvivalThresholds::default()).unwrap();
        assert_eq!(rep.classification, SurvivalClass::Inconclusive);
    }

    #[test]
    fn decreasing_g_rejected() {
        let tracks = vec![track(&[0.0, 1.0, 0.5], &[1.0, 1.0, 1.0])];
        assert!(matches!(
            classify_survival(&tracks, 10.0, &SurvivalThresholds::default()),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn ito_report() {
        let a = vec![vec![1.0, 2.0, 3.0]];
        let rep = ito_consistency(&a, &a).unwrap();
        assert_eq!(rep.max_log_error, 0.0);
        let b = vec![vec![1.0, 2.0, 3.0 * 1.1f64.exp()]];
        assert!((ito_consistency(&a, &b).unwrap().max_log_error - 1.1).abs() < 1e-12);
        assert_eq!(refinement_ratios(&[4.0, 2.0, 1.0]), vec![2.0, 2.0]);
    }

    #[test]
    fn slln_controls() {
        let hs = [10.0, 20.0, 40.0];
        let zero = vec![vec![0.0; 5]; 3];
        let rep = slln_diagnostic(&hs, &zero, &zero).unwrap();
        assert_eq!(rep.medians, vec![0.0; 3]);
        assert!(rep.vanishing);
        let t: Vec<Vec<f64>> = hs.iter().map(|h| vec![*h; 5]).collect();
        let rep = slln_diagnostic(&hs, &t, &t).unwrap();
        assert_eq!(rep.medians, vec![1.0; 3]);
        assert!(!rep.vanishing);
    }
}

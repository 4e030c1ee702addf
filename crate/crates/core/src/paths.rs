//! Time grids, reproducible Gaussian drivers, path containers and realized
//! (co)variation.
//!
//! Every stochastic quantity in the crate is a pure function of its inputs and
//! an [`RngSpec`]. A spec names one ChaCha8 stream: the master seed keys the
//! generator and the stream id selects one of its 2^64 independent streams,
//! so path `i` draws the same numbers whether it runs first, last, or on
//! another thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that `(t_end - t_start) / dt` is an
/// integer and that a requested time sits on the grid.
const GRID_TOL: f64 = 1e-9;

/// A fixed uniform grid `t_start + k * dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Builds a grid with `n_steps = round((t_end - t_start) / dt)`.
    ///
    /// When the interval is not an integer number of steps the end point is
    /// moved to `t_start + n_steps * dt` and a warning is logged.
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config(format!("dt must be positive and finite, got {dt}")));
        }
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(Error::config(format!(
                "empty time interval [{t_start}, {t_end}]"
            )));
        }
        let steps = (t_end - t_start) / dt;
        let n_steps = steps.round();
        if n_steps < 1.0 {
            return Err(Error::config(format!(
                "interval [{t_start}, {t_end}] is shorter than half a step of {dt}"
            )));
        }
        let mut t_end = t_end;
        if (steps - n_steps).abs() > GRID_TOL * n_steps.max(1.0) {
            let snapped = t_start + n_steps * dt;
            log::warn!(
                "interval [{t_start}, {t_end}] is not a whole number of steps of {dt}; \
                 using end point {snapped}"
            );
            t_end = snapped;
        }
        Ok(Self {
            t_start,
            t_end,
            dt,
            n_steps: n_steps as usize,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `k`-th grid point.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Index of the grid point equal to `t`, if there is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t_start) / self.dt).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        let scale = t.abs().max(self.dt).max(1.0);
        ((self.time(k) - t).abs() <= GRID_TOL * scale).then_some(k)
    }

    /// The grid with `factor` times the step size over the same interval.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::Shape(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.n_steps
            )));
        }
        Ok(Self {
            t_start: self.t_start,
            t_end: self.t_end,
            dt: self.dt * factor as f64,
            n_steps: self.n_steps / factor,
        })
    }

    /// Whether two grids describe the same points.
    pub fn same_points(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps && self.t_start == other.t_start && self.dt == other.dt
    }
}

/// Identifies one deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A child stream, e.g. inner path `index` of a nested simulation
    /// launched from this stream. Children of distinct parents use distinct
    /// keys, so they never share draws with each other or with any parent.
    pub fn substream(&self, index: u64) -> RngSpec {
        let key = splitmix64(self.master_seed ^ splitmix64(self.stream_id ^ 0x6a09_e667_f3bc_c908));
        RngSpec::new(key, index)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Increments of a `dims`-dimensional standard Brownian motion on a grid.
///
/// Draws are taken step by step (all dimensions of step `k` before step
/// `k + 1`), so a longer path from the same stream extends a shorter one.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    dims: usize,
    increments: Vec<f64>,
}

impl BrownianPath {
    pub fn sample(grid: TimeGrid, dims: usize, rng: RngSpec) -> Result<Self> {
        if dims == 0 {
            return Err(Error::config("Brownian dimension must be at least 1"));
        }
        let mut gen = rng.rng();
        let sd = grid.dt().sqrt();
        let increments = (0..grid.n_steps() * dims)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut gen);
                sd * z
            })
            .collect();
        Ok(Self {
            grid,
            dims,
            increments,
        })
    }

    /// Wraps externally supplied increments, laid out step-major.
    pub fn from_increments(grid: TimeGrid, dims: usize, increments: Vec<f64>) -> Result<Self> {
        if dims == 0 || increments.len() != grid.n_steps() * dims {
            return Err(Error::Shape(format!(
                "expected {} increments for {dims} dims, got {}",
                grid.n_steps() * dims,
                increments.len()
            )));
        }
        Ok(Self {
            grid,
            dims,
            increments,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// All increments of step `k` (one per dimension).
    #[inline]
    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dims..(k + 1) * self.dims]
    }

    #[inline]
    pub fn increment(&self, dim: usize, k: usize) -> f64 {
        self.increments[k * self.dims + dim]
    }

    /// Levels `B_t` of one dimension, starting at zero.
    pub fn levels(&self, dim: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = CompensatedSum::default();
        out.push(0.0);
        for k in 0..self.grid.n_steps() {
            acc.add(self.increment(dim, k));
            out.push(acc.value());
        }
        out
    }

    /// The same Brownian motion seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let mut increments = Vec::with_capacity(grid.n_steps() * self.dims);
        for k in 0..grid.n_steps() {
            for d in 0..self.dims {
                let s: f64 = (0..factor)
                    .map(|j| self.increment(d, k * factor + j))
                    .sum();
                increments.push(s);
            }
        }
        Ok(Self {
            grid,
            dims: self.dims,
            increments,
        })
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Labelled channels of values on a grid, one value per channel per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    grid: TimeGrid,
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl PathSeries {
    pub fn new(grid: TimeGrid, labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} channels",
                labels.len(),
                values.len()
            )));
        }
        if let Some((i, ch)) = values.iter().enumerate().find(|(_, c)| c.len() != grid.len()) {
            return Err(Error::Shape(format!(
                "channel {i} has {} values, grid has {} points",
                ch.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            labels,
            values,
        })
    }

    /// A single-channel series.
    pub fn single(grid: TimeGrid, label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, vec![label.into()], vec![values])
    }

    /// Channels labelled `{prefix}1..={prefix}N`.
    pub fn indexed(grid: TimeGrid, prefix: &str, values: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (1..=values.len()).map(|n| format!("{prefix}{n}")).collect();
        Self::new(grid, labels, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_channels(&self) -> usize {
        self.values.len()
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn channel_by_label(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.values[i].as_slice())
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// All channel values at grid point `k`.
    pub fn point(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|c| c[k]).collect()
    }

    pub fn last(&self, channel: usize) -> f64 {
        *self.values[channel].last().expect("grid has at least two points")
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.values
    }
}

/// Cumulative realized covariation `sum_{j<k} (a_{j+1} - a_j)(b_{j+1} - b_j)`,
/// starting at zero, with compensated summation.
pub fn realized_covariation_values(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "covariation of series with {} and {} points",
            a.len(),
            b.len()
        )));
    }
    let mut out = Vec::with_capacity(a.len());
    let mut acc = CompensatedSum::default();
    out.push(0.0);
    for k in 1..a.len() {
        acc.add((a[k] - a[k - 1]) * (b[k] - b[k - 1]));
        out.push(acc.value());
    }
    Ok(out)
}

/// Realized covariation of channel `ca` of `a` with channel `cb` of `b`.
pub fn realized_covariation(
    a: &PathSeries,
    ca: usize,
    b: &PathSeries,
    cb: usize,
) -> Result<PathSeries> {
    if !a.grid().same_points(b.grid()) {
        return Err(Error::Shape("covariation of series on different grids".into()));
    }
    if ca >= a.n_channels() || cb >= b.n_channels() {
        return Err(Error::Shape("covariation channel out of range".into()));
    }
    let values = realized_covariation_values(a.channel(ca), b.channel(cb))?;
    let label = format!("[{},{}]", a.labels()[ca], b.labels()[cb]);
    PathSeries::single(*a.grid(), label, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_quarter_steps() {
        let g = TimeGrid::new(0.0, 1.0, 0.25).unwrap();
        assert_eq!(g.n_steps(), 4);
        assert_eq!(g.times(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn grid_single_step_and_fine() {
        assert_eq!(TimeGrid::new(0.0, 1.0, 1.0).unwrap().n_steps(), 1);
        assert_eq!(TimeGrid::new(0.0, 5.0, 0.001).unwrap().n_steps(), 5000);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(TimeGrid::new(0.0, 1.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(TimeGrid::new(0.0, 1.0, -0.1), Err(Error::Config(_))));
        assert!(matches!(TimeGrid::new(1.0, 1.0, 0.1), Err(Error::Config(_))));
        assert!(matches!(TimeGrid::new(2.0, 1.0, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn grid_snaps_ragged_end() {
        let g = TimeGrid::new(0.0, 1.04, 0.1).unwrap();
        assert_eq!(g.n_steps(), 10);
        assert!((g.t_end() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn index_lookup() {
        let g = TimeGrid::new(0.0, 5.0, 0.001).unwrap();
        assert_eq!(g.index_of(1.25), Some(1250));
        assert_eq!(g.index_of(5.0), Some(5000));
        assert_eq!(g.index_of(1.2505), None);
        assert_eq!(g.index_of(6.0), None);
    }

    #[test]
    fn brownian_is_deterministic() {
        let g = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let a = BrownianPath::sample(g, 1, RngSpec::new(42, 0)).unwrap();
        let b = BrownianPath::sample(g, 1, RngSpec::new(42, 0)).unwrap();
        assert_eq!(a, b);
        let c = BrownianPath::sample(g, 1, RngSpec::new(42, 1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn brownian_prefix_is_stable() {
        let short = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let long = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
        let a = BrownianPath::sample(short, 2, RngSpec::new(5, 3)).unwrap();
        let b = BrownianPath::sample(long, 2, RngSpec::new(5, 3)).unwrap();
        for k in 0..short.n_steps() {
            assert_eq!(a.step(k), b.step(k));
        }
    }

    #[test]
    fn brownian_variance_matches_dt() {
        // 10^5 squared increments; E = dt, Var = 2 dt^2.
        let g = TimeGrid::new(0.0, 1000.0, 0.01).unwrap();
        let b = BrownianPath::sample(g, 1, RngSpec::new(42, 0)).unwrap();
        let sq: Vec<f64> = (0..g.n_steps()).map(|k| b.increment(0, k).powi(2)).collect();
        let n = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / n;
        let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 0.01).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    fn standardized_corr(x: &[f64], y: &[f64], dt: f64) -> (f64, f64) {
        let prod: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b / dt).collect();
        let n = prod.len() as f64;
        let mean = prod.iter().sum::<f64>() / n;
        let var = prod.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn brownian_streams_uncorrelated() {
        let g = TimeGrid::new(0.0, 1000.0, 0.01).unwrap();
        let a = BrownianPath::sample(g, 2, RngSpec::new(42, 0)).unwrap();
        let b = BrownianPath::sample(g, 2, RngSpec::new(42, 1)).unwrap();
        let col = |p: &BrownianPath, d: usize| -> Vec<f64> {
            (0..g.n_steps()).map(|k| p.increment(d, k)).collect()
        };
        // across streams, and across dimensions within one stream
        for (x, y) in [(col(&a, 0), col(&b, 0)), (col(&a, 0), col(&a, 1))] {
            let (corr, se) = standardized_corr(&x, &y, 0.01);
            assert!(corr.abs() < 3.0 * se, "corr {corr}, se {se}");
        }
    }

    #[test]
    fn substreams_differ() {
        let parent = RngSpec::new(7, 3);
        assert_ne!(parent.substream(0), parent.substream(1));
        assert_ne!(parent.substream(0), RngSpec::new(7, 4).substream(0));
        assert_ne!(parent.substream(0).master_seed, parent.master_seed);
    }

    #[test]
    fn coarsen_sums_increments() {
        let g = TimeGrid::new(0.0, 1.0, 0.25).unwrap();
        let b = BrownianPath::from_increments(g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = b.coarsen(2).unwrap();
        assert_eq!(c.grid().n_steps(), 2);
        assert_eq!(c.step(0), &[3.0]);
        assert_eq!(c.step(1), &[7.0]);
        assert!(b.coarsen(3).is_err());
    }

    #[test]
    fn covariation_of_constant_is_zero() {
        let g = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let c = vec![3.0; g.len()];
        let b: Vec<f64> = g.times().iter().map(|t| t.sin()).collect();
        let q = realized_covariation_values(&c, &b).unwrap();
        assert!(q.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn covariation_of_ramp() {
        let g = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let ramp = g.times();
        let q = realized_covariation_values(&ramp, &ramp).unwrap();
        assert!((q.last().unwrap() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn covariation_of_brownian_is_time() {
        let g = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let finals: Vec<f64> = (0..1000)
            .map(|i| {
                let b = BrownianPath::sample(g, 1, RngSpec::new(11, i)).unwrap();
                let lv = b.levels(0);
                *realized_covariation_values(&lv, &lv).unwrap().last().unwrap()
            })
            .collect();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 3.0 * (var / n).sqrt());
    }

    #[test]
    fn covariation_grid_mismatch() {
        let g1 = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let g2 = TimeGrid::new(0.0, 1.0, 0.05).unwrap();
        let a = PathSeries::single(g1, "a", vec![0.0; g1.len()]).unwrap();
        let b = PathSeries::single(g2, "b", vec![0.0; g2.len()]).unwrap();
        assert!(matches!(realized_covariation(&a, 0, &b, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn series_shape_checked() {
        let g = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        assert!(PathSeries::single(g, "x", vec![1.0, 2.0]).is_err());
        assert!(PathSeries::new(g, vec!["a".into()], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn covariation_bilinear(
            a in prop::collection::vec(-1.0f64..1.0, 20),
            b in prop::collection::vec(-1.0f64..1.0, 20),
            c in prop::collection::vec(-1.0f64..1.0, 20),
        ) {
            let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = realized_covariation_values(&ab, &c).unwrap();
            let ac = realized_covariation_values(&a, &c).unwrap();
            let bc = realized_covariation_values(&b, &c).unwrap();
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - ac[k] - bc[k]).abs() <= 1e-12);
            }
        }

        #[test]
        fn self_covariation_non_decreasing(a in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            let q = realized_covariation_values(&a, &a).unwrap();
            for w in q.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }
    }
}

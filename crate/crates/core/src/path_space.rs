//! Discrete path spaces: time grids with a delay structure, finite control
//! sets, seeded Brownian increments and prefix predicates.
//!
//! Step `k` of every path covers `[t_k, t_{k+1})`. A Brownian path stores the
//! increments `ΔW[k] = W(t_{k+1}) - W(t_k)`, so the cumulative value at grid
//! time `t_k` is the sum of the increments with index `< k`. "Information up to
//! step `m`" always means the entries with index `< m`.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("noise dimension must be at least 1, got {0}")]
    InvalidNoiseDim(usize),
    #[error("invalid control set: {0}")]
    InvalidControlSet(String),
    #[error("paths live on different time grids")]
    GridMismatch,
    #[error("prefix length {upto} exceeds the {n_steps} steps of the grid")]
    PrefixOutOfRange { upto: usize, n_steps: usize },
    #[error("control index {index} out of range for a set of {len} points")]
    ControlIndex { index: usize, len: usize },
    #[error("path has {got} steps, grid expects {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

/// Uniform grid on `[t0, horizon]` whose step count is a whole number of
/// delay blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    horizon: f64,
    n_steps: usize,
    delay_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, n_steps: usize, delay_steps: usize) -> Result<Self, PathError> {
        if !(t0.is_finite() && horizon.is_finite()) || t0 >= horizon {
            return Err(PathError::InvalidGrid(format!("need finite t0 < T, got t0={t0}, T={horizon}")));
        }
        if n_steps == 0 {
            return Err(PathError::InvalidGrid("n_steps must be positive".into()));
        }
        if delay_steps == 0 {
            return Err(PathError::InvalidGrid("delay_steps must be positive".into()));
        }
        if !n_steps.is_multiple_of(delay_steps) {
            return Err(PathError::InvalidGrid(format!("n_steps={n_steps} is not a multiple of delay_steps={delay_steps}")));
        }
        Ok(Self { t0, horizon, n_steps, delay_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    pub fn duration(&self) -> f64 {
        self.horizon - self.t0
    }

    /// Number of delay blocks, `N` in `T = t0 + N δ`.
    pub fn n_blocks(&self) -> usize {
        self.n_steps / self.delay_steps
    }

    /// Grid time `t_k`; `k == n_steps` returns the horizon exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.horizon
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    /// Same interval and step count with a different delay.
    pub fn with_delay(&self, delay_steps: usize) -> Result<Self, PathError> {
        Self::new(self.t0, self.horizon, self.n_steps, delay_steps)
    }

    /// Twice as many steps (and twice the delay in steps, so δ is unchanged).
    pub fn refined(&self) -> Self {
        Self { n_steps: self.n_steps * 2, delay_steps: self.delay_steps * 2, ..*self }
    }

    /// Grids are compatible when they describe the same time points.
    /// Delay structure is not part of the comparison.
    pub fn same_points(&self, other: &TimeGrid) -> bool {
        self.t0 == other.t0 && self.horizon == other.horizon && self.n_steps == other.n_steps
    }
}

/// Finite, ordered, pairwise-distinct sample of a compact control set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    points: Vec<Vec<f64>>,
    ambient_dim: usize,
}

impl ControlSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, PathError> {
        let Some(first) = points.first() else {
            return Err(PathError::InvalidControlSet("no points".into()));
        };
        let ambient_dim = first.len();
        if ambient_dim == 0 {
            return Err(PathError::InvalidControlSet("zero-dimensional points".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != ambient_dim {
                return Err(PathError::InvalidControlSet(format!("point {i} has dimension {}, expected {ambient_dim}", p.len())));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(PathError::InvalidControlSet(format!("point {i} is not finite")));
            }
            if points[..i].iter().any(|q| q == p) {
                return Err(PathError::InvalidControlSet(format!("point {i} is a duplicate")));
            }
        }
        Ok(Self { points, ambient_dim })
    }

    /// Singleton set, used for players without influence on the dynamics.
    pub fn single(point: Vec<f64>) -> Result<Self, PathError> {
        Self::new(vec![point])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Index of the point closest to `target` (Euclidean), lowest index on ties.
    pub fn nearest(&self, target: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d: f64 = p.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// `m` equally spaced points on `[lo, hi]`, both endpoints included when `m >= 2`.
/// A single point sits at `lo`.
pub fn discretize_interval(lo: f64, hi: f64, m: usize) -> Result<ControlSet, PathError> {
    if m == 0 {
        return Err(PathError::InvalidControlSet("m must be at least 1".into()));
    }
    if !(lo <= hi) {
        return Err(PathError::InvalidControlSet(format!("need lo <= hi, got [{lo}, {hi}]")));
    }
    if m > 1 && lo == hi {
        return Err(PathError::InvalidControlSet("a degenerate interval holds a single point".into()));
    }
    let points = if m == 1 {
        vec![vec![lo]]
    } else {
        let h = (hi - lo) / (m - 1) as f64;
        (0..m).map(|i| if i == m - 1 { vec![hi] } else { vec![lo + i as f64 * h] }).collect()
    };
    ControlSet::new(points)
}

/// One realization of a `d`-dimensional Brownian motion on a grid, stored as
/// increments (`n_steps × d`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    dim: usize,
    increments: Vec<f64>,
}

impl BrownianPath {
    /// Samples stream `stream` of the generator keyed by `seed`.
    ///
    /// Algorithm: ChaCha8 keyed by `seed` (via `seed_from_u64`) with its word
    /// stream set to `stream`; each increment is `sqrt(dt) · Z` with `Z` drawn
    /// by the Ziggurat standard normal sampler of `rand_distr`, filled step by
    /// step, coordinate by coordinate. Output is a pure function of
    /// `(grid, dim, seed, stream)`.
    pub fn sample_stream(grid: &TimeGrid, dim: usize, seed: u64, stream: u64) -> Result<Self, PathError> {
        if dim == 0 {
            return Err(PathError::InvalidNoiseDim(dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let scale = grid.dt().sqrt();
        let increments = (0..grid.n_steps() * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Ok(Self { grid: *grid, dim, increments })
    }

    /// Wraps explicit increments (`n_steps × dim`, row-major).
    pub fn from_increments(grid: &TimeGrid, dim: usize, increments: Vec<f64>) -> Result<Self, PathError> {
        if dim == 0 {
            return Err(PathError::InvalidNoiseDim(dim));
        }
        if increments.len() != grid.n_steps() * dim {
            return Err(PathError::LengthMismatch { got: increments.len() / dim, expected: grid.n_steps() });
        }
        Ok(Self { grid: *grid, dim, increments })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    /// `ΔW` over step `k`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Cumulative `W(t_k) - W(t0)`; zero at `k = 0`.
    pub fn value_at(&self, k: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.dim];
        for j in 0..k {
            for (acc, dw) in w.iter_mut().zip(self.increment(j)) {
                *acc += dw;
            }
        }
        w
    }

    /// Same path on the grid with half the step: every increment is split in
    /// two by a Brownian bridge draw from `(seed, stream)`.
    pub fn refine(&self, seed: u64, stream: u64) -> Self {
        let grid = self.grid.refined();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let half_sd = 0.5 * self.grid.dt().sqrt();
        let mut increments = Vec::with_capacity(self.increments.len() * 2);
        for k in 0..self.n_steps() {
            let coarse = self.increment(k);
            let bridge: Vec<f64> = (0..self.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    half_sd * z
                })
                .collect();
            increments.extend(coarse.iter().zip(&bridge).map(|(dw, b)| 0.5 * dw + b));
            increments.extend(coarse.iter().zip(&bridge).map(|(dw, b)| 0.5 * dw - b));
        }
        Self { grid, dim: self.dim, increments }
    }

    /// Copy with the increments at steps `>= from_step` replaced by a fresh draw.
    pub fn with_resampled_suffix(&self, from_step: usize, seed: u64) -> Self {
        let fresh = Self::sample_stream(&self.grid, self.dim, seed, 0).expect("dimension already validated");
        let mut increments = self.increments.clone();
        let start = from_step.min(self.n_steps()) * self.dim;
        increments[start..].copy_from_slice(&fresh.increments[start..]);
        Self { increments, ..self.clone() }
    }

    /// One row per step: step index, time, increments.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time");
        for j in 0..self.dim {
            let _ = write!(out, ",dw_{}", j + 1);
        }
        out.push('\n');
        for k in 0..self.n_steps() {
            let _ = write!(out, "{},{}", k, self.grid.time(k));
            for dw in self.increment(k) {
                let _ = write!(out, ",{dw}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// `grid`, `d` and `seed` fully determine the output (stream 0).
pub fn sample_brownian(grid: &TimeGrid, d: usize, seed: u64) -> Result<BrownianPath, PathError> {
    BrownianPath::sample_stream(grid, d, seed, 0)
}

/// Piecewise-constant control: one index into a [`ControlSet`] per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    grid: TimeGrid,
    indices: Vec<usize>,
}

impl ControlPath {
    pub fn new(grid: &TimeGrid, indices: Vec<usize>) -> Result<Self, PathError> {
        if indices.len() != grid.n_steps() {
            return Err(PathError::LengthMismatch { got: indices.len(), expected: grid.n_steps() });
        }
        Ok(Self { grid: *grid, indices })
    }

    pub fn constant(grid: &TimeGrid, index: usize) -> Self {
        Self { grid: *grid, indices: vec![index; grid.n_steps()] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn get(&self, k: usize) -> usize {
        self.indices[k]
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks that every index addresses a point of `set`.
    pub fn check_within(&self, set: &ControlSet) -> Result<(), PathError> {
        match self.indices.iter().find(|&&i| i >= set.len()) {
            Some(&index) => Err(PathError::ControlIndex { index, len: set.len() }),
            None => Ok(()),
        }
    }
}

/// Exact agreement of two paths on the steps before `upto_step`.
pub trait PrefixEq {
    fn prefix_equal(&self, other: &Self, upto_step: usize) -> Result<bool, PathError>;
}

fn check_prefix(a: &TimeGrid, b: &TimeGrid, upto: usize) -> Result<(), PathError> {
    if !a.same_points(b) {
        return Err(PathError::GridMismatch);
    }
    if upto > a.n_steps() {
        return Err(PathError::PrefixOutOfRange { upto, n_steps: a.n_steps() });
    }
    Ok(())
}

impl PrefixEq for BrownianPath {
    fn prefix_equal(&self, other: &Self, upto_step: usize) -> Result<bool, PathError> {
        check_prefix(&self.grid, &other.grid, upto_step)?;
        if self.dim != other.dim {
            return Ok(false);
        }
        let end = upto_step * self.dim;
        // bitwise: -0.0 and 0.0 are different realizations
        Ok(self.increments[..end].iter().zip(&other.increments[..end]).all(|(a, b)| a.to_bits() == b.to_bits()))
    }
}

impl PrefixEq for ControlPath {
    fn prefix_equal(&self, other: &Self, upto_step: usize) -> Result<bool, PathError> {
        check_prefix(&self.grid, &other.grid, upto_step)?;
        Ok(self.indices[..upto_step] == other.indices[..upto_step])
    }
}

pub fn prefix_equal<P: PrefixEq>(a: &P, b: &P, upto_step: usize) -> Result<bool, PathError> {
    a.prefix_equal(b, upto_step)
}

/// Witness that a control generator is not adapted to the delayed filtration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptednessViolation {
    pub trial: usize,
    /// Noise was altered at every step `>= perturbed_from`.
    pub perturbed_from: usize,
    /// First step `<= checked_upto` where the outputs differ.
    pub differing_step: usize,
    pub checked_upto: usize,
}

/// Randomized test of the delayed-class property: the step-`k` value may only
/// depend on noise increments with index `<= k - delay_steps`.
///
/// Each trial draws a noise path, picks a step `k`, resamples the increments
/// at steps `>= k - delay_steps + 1` and requires identical outputs on steps
/// `<= k`.
pub fn find_adaptedness_violation<G>(
    generator: G,
    grid: &TimeGrid,
    noise_dim: usize,
    delay_steps: usize,
    trials: usize,
    seed: u64,
) -> Result<Option<AdaptednessViolation>, PathError>
where
    G: Fn(&BrownianPath) -> ControlPath,
{
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_steps();
    for trial in 0..trials {
        let base = BrownianPath::sample_stream(grid, noise_dim, seed, 2 * trial as u64 + 1)?;
        let k = rng.gen_range(0..n);
        let from = (k + 1).saturating_sub(delay_steps);
        let altered = base.with_resampled_suffix(from, seed ^ rng.gen::<u64>());
        let a = generator(&base);
        let b = generator(&altered);
        if let Some(step) = (0..=k).find(|&s| a.get(s) != b.get(s)) {
            return Ok(Some(AdaptednessViolation { trial, perturbed_from: from, differing_step: step, checked_upto: k }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, delay: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n, delay).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(TimeGrid::new(1.0, 1.0, 4, 1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0, 1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 4, 0).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 6, 4).is_err());
        let g = TimeGrid::new(0.0, 1.0, 8, 4).unwrap();
        assert_eq!(g.n_blocks(), 2);
        assert_eq!(g.dt(), 0.125);
        assert_eq!(g.time(8), 1.0);
    }

    #[test]
    fn discretize_interval_examples() {
        let s = discretize_interval(-1.0, 1.0, 3).unwrap();
        assert_eq!(s.points(), &[vec![-1.0], vec![0.0], vec![1.0]]);
        let s = discretize_interval(5.0, 5.0, 1).unwrap();
        assert_eq!(s.points(), &[vec![5.0]]);
        let s = discretize_interval(0.0, 1.0, 5).unwrap();
        assert_eq!(s.points(), &[vec![0.0], vec![0.25], vec![0.5], vec![0.75], vec![1.0]]);
        assert!(discretize_interval(0.0, 1.0, 0).is_err());
        assert!(discretize_interval(1.0, 0.0, 2).is_err());
    }

    #[test]
    fn control_set_rejects_duplicates_and_ragged_points() {
        assert!(ControlSet::new(vec![]).is_err());
        assert!(ControlSet::new(vec![vec![1.0], vec![1.0]]).is_err());
        assert!(ControlSet::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let s = ControlSet::new(vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(s.nearest(&[0.7]), 1);
        assert_eq!(s.nearest(&[0.5]), 0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = grid(4, 1);
        let a = sample_brownian(&g, 1, 42).unwrap();
        let b = sample_brownian(&g, 1, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_brownian(&g, 1, 43).unwrap();
        assert_ne!(a, c);
        assert!(sample_brownian(&g, 0, 42).is_err());
    }

    #[test]
    fn value_at_sums_increments() {
        let g = grid(3, 1);
        let w = BrownianPath::from_increments(&g, 1, vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(w.value_at(0), vec![0.0]);
        assert_eq!(w.value_at(2), vec![-0.5]);
        assert_eq!(w.value_at(3), vec![1.5]);
    }

    #[test]
    fn refine_preserves_coarse_increments() {
        let g = grid(8, 2);
        let w = sample_brownian(&g, 2, 9).unwrap();
        let fine = w.refine(9, 1);
        assert_eq!(fine.n_steps(), 16);
        assert_eq!(fine.grid().delay_steps(), 4);
        for k in 0..8 {
            for j in 0..2 {
                let s = fine.increment(2 * k)[j] + fine.increment(2 * k + 1)[j];
                assert!((s - w.increment(k)[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn prefix_examples() {
        let g = grid(6, 1);
        let a = ControlPath::new(&g, vec![0, 1, 2, 0, 1, 2]).unwrap();
        let mut idx = a.indices().to_vec();
        idx[3] = 2;
        let b = ControlPath::new(&g, idx).unwrap();
        for k in 0..=6 {
            assert!(prefix_equal(&a, &a, k).unwrap());
        }
        assert!(prefix_equal(&a, &b, 3).unwrap());
        assert!(!prefix_equal(&a, &b, 4).unwrap());
        assert!(matches!(prefix_equal(&a, &b, 7), Err(PathError::PrefixOutOfRange { .. })));
        let other = ControlPath::constant(&grid(5, 1), 0);
        assert_eq!(prefix_equal(&a, &other, 1), Err(PathError::GridMismatch));

        let w = sample_brownian(&g, 1, 1).unwrap();
        let mut inc = w.increments().to_vec();
        inc[3] += 1.0;
        let w2 = BrownianPath::from_increments(&g, 1, inc).unwrap();
        assert!(prefix_equal(&w, &w2, 3).unwrap());
        assert!(!prefix_equal(&w, &w2, 4).unwrap());
    }

    #[test]
    fn adaptedness_predicate_separates_good_and_bad_generators() {
        let g = grid(12, 3);
        let sign = |x: f64| if x > 0.0 { 1 } else { 0 };
        // step k reads W(t_{k-δ+1}), i.e. increments <= k-δ
        let lagged = |w: &BrownianPath| {
            let idx = (0..12).map(|k| if k + 1 >= 3 { sign(w.value_at(k + 1 - 3)[0]) } else { 0 }).collect();
            ControlPath::new(&g, idx).unwrap()
        };
        assert_eq!(find_adaptedness_violation(lagged, &g, 1, 3, 200, 5).unwrap(), None);
        let peeking = |w: &BrownianPath| {
            let idx = (0..12).map(|k| sign(w.increment(k)[0])).collect();
            ControlPath::new(&g, idx).unwrap()
        };
        assert!(find_adaptedness_violation(peeking, &g, 1, 3, 200, 5).unwrap().is_some());
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let g = grid(4, 1);
        let w = sample_brownian(&g, 2, 3).unwrap();
        let csv = w.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "step,time,dw_1,dw_2");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("1,0.25,"));
    }
}

//! Monte Carlo estimates of the cost `J = E[g(X_T)]` under pairs of delayed
//! strategies, minimax estimates over finite strategy families, checks of
//! the sub/super dynamic programming inequalities, and scenario runs.
//!
//! Path `i` always uses noise stream `i` of the run seed, for every pair of
//! strategies (common random numbers). Paths run in parallel and are reduced
//! in index order, so estimates do not depend on the thread count.

pub mod run;
pub mod scenario;

use std::io;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{integrate, BuiltinDynamics, ControlSets, DynamicsError, GameDynamics, StatePath, TerminalCost};
use crate::hamiltonian::{h_minus, h_plus, HamiltonianError, HamiltonianQuery};
use crate::hji_solver::{cfl_time_grid_with, solve_with, SolverError, SolverOptions, SpaceGrid, ValueGrid, ValueKind};
use crate::path_space::{BrownianPath, ControlSet, PathError, TimeGrid};
use crate::strategies::{fixed_point, DelayedStrategy, Policy, Side, StrategyError};

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error("{0} family is empty")]
    EmptyFamily(&'static str),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("scenario field `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {error}")]
    Io { path: String, error: io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Config { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n_paths)`.
    pub std_error: f64,
    pub n_paths: usize,
}

impl McEstimate {
    /// Mean and standard error, summed in slice order. Identical samples
    /// give that sample and a zero error exactly.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, n_paths: 0 };
        }
        if samples.iter().all(|s| s.to_bits() == samples[0].to_bits()) {
            return Self { mean: samples[0], std_error: 0.0, n_paths: n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n_paths: n }
    }
}

/// Noise of path `index` under `seed`.
pub fn noise_path(grid: &TimeGrid, dim: usize, seed: u64, index: usize) -> Result<BrownianPath, PathError> {
    BrownianPath::sample_stream(grid, dim, seed, index as u64)
}

/// State path of one strategy pair on one noise path.
pub fn play(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    alpha: &DelayedStrategy,
    beta: &DelayedStrategy,
    w: &BrownianPath,
) -> Result<StatePath, LabError> {
    let pair = fixed_point(alpha, beta, w)?;
    Ok(integrate(dyn_, sets, x0, &pair.u, &pair.v, w)?)
}

/// Functional of a state path averaged by the estimators.
pub type PathFunctional<'a> = dyn Fn(&StatePath) -> Result<f64, LabError> + Sync + 'a;

/// `samples[a * betas.len() + b][i]`: functional of path `i` under pair
/// `(alphas[a], betas[b])`.
#[allow(clippy::too_many_arguments)]
fn sample_table(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    grid: &TimeGrid,
    alphas: &[DelayedStrategy],
    betas: &[DelayedStrategy],
    n_paths: usize,
    seed: u64,
    functional: &PathFunctional<'_>,
) -> Result<Vec<Vec<f64>>, LabError> {
    if alphas.is_empty() {
        return Err(LabError::EmptyFamily("Player I strategy"));
    }
    if betas.is_empty() {
        return Err(LabError::EmptyFamily("Player II strategy"));
    }
    if n_paths == 0 {
        return Err(LabError::InvalidArgument("n_paths must be at least 1".into()));
    }
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let w = noise_path(grid, dyn_.noise_dim(), seed, i)?;
            let mut row = Vec::with_capacity(alphas.len() * betas.len());
            for a in alphas {
                for b in betas {
                    row.push(functional(&play(dyn_, sets, x0, a, b, &w)?)?);
                }
            }
            Ok(row)
        })
        .collect::<Result<_, LabError>>()?;
    let pairs = alphas.len() * betas.len();
    Ok((0..pairs).map(|p| per_path.iter().map(|row| row[p]).collect()).collect())
}

/// `J(t0, x0, α, β)` from `n_paths` Euler–Maruyama paths.
#[allow(clippy::too_many_arguments)]
pub fn estimate_cost(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    alpha: &DelayedStrategy,
    beta: &DelayedStrategy,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate, LabError> {
    let table = payoff_table(dyn_, sets, x0, grid, std::slice::from_ref(alpha), std::slice::from_ref(beta), n_paths, seed)?;
    Ok(table.entry(0, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffTable {
    pub alpha_labels: Vec<String>,
    pub beta_labels: Vec<String>,
    pub entries: Vec<McEstimate>,
}

/// Minimax (or maximin) entry of a [`PayoffTable`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaxEstimate {
    pub estimate: McEstimate,
    pub alpha_index: usize,
    pub beta_index: usize,
    pub alpha_label: String,
    pub beta_label: String,
}

impl PayoffTable {
    pub fn rows(&self) -> usize {
        self.alpha_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.beta_labels.len()
    }

    pub fn entry(&self, a: usize, b: usize) -> McEstimate {
        self.entries[a * self.cols() + b]
    }

    fn pick(&self, a: usize, b: usize) -> MinimaxEstimate {
        MinimaxEstimate {
            estimate: self.entry(a, b),
            alpha_index: a,
            beta_index: b,
            alpha_label: self.alpha_labels[a].clone(),
            beta_label: self.beta_labels[b].clone(),
        }
    }

    /// `min_α max_β` of the means; ties to the lowest index.
    pub fn upper(&self) -> MinimaxEstimate {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..self.rows() {
            let mut arg = 0;
            for b in 1..self.cols() {
                if self.entry(a, b).mean > self.entry(a, arg).mean {
                    arg = b;
                }
            }
            let m = self.entry(a, arg).mean;
            if best.is_none_or(|(v, _, _)| m < v) {
                best = Some((m, a, arg));
            }
        }
        let (_, a, b) = best.expect("table is non-empty");
        self.pick(a, b)
    }

    /// `max_β min_α` of the means; ties to the lowest index.
    pub fn lower(&self) -> MinimaxEstimate {
        let mut best: Option<(f64, usize, usize)> = None;
        for b in 0..self.cols() {
            let mut arg = 0;
            for a in 1..self.rows() {
                if self.entry(a, b).mean < self.entry(arg, b).mean {
                    arg = a;
                }
            }
            let m = self.entry(arg, b).mean;
            if best.is_none_or(|(v, _, _)| m > v) {
                best = Some((m, arg, b));
            }
        }
        let (_, a, b) = best.expect("table is non-empty");
        self.pick(a, b)
    }

    /// Columns: alpha, beta, mean, std_error, n_paths.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,beta,mean,std_error,n_paths\n");
        for a in 0..self.rows() {
            for b in 0..self.cols() {
                let e = self.entry(a, b);
                out.push_str(&format!("{},{},{},{},{}\n", self.alpha_labels[a], self.beta_labels[b], e.mean, e.std_error, e.n_paths));
            }
        }
        out
    }
}

fn labels(family: &[DelayedStrategy]) -> Vec<String> {
    family.iter().enumerate().map(|(i, s)| format!("{i}:{}", s.label())).collect()
}

/// Cost estimates for every pair of the two families on common noise.
#[allow(clippy::too_many_arguments)]
pub fn payoff_table(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    grid: &TimeGrid,
    alphas: &[DelayedStrategy],
    betas: &[DelayedStrategy],
    n_paths: usize,
    seed: u64,
) -> Result<PayoffTable, LabError> {
    let g = |p: &StatePath| Ok(dyn_.terminal_cost(p.terminal()));
    functional_table(dyn_, sets, x0, grid, alphas, betas, n_paths, seed, &g)
}

#[allow(clippy::too_many_arguments)]
pub fn functional_table(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    grid: &TimeGrid,
    alphas: &[DelayedStrategy],
    betas: &[DelayedStrategy],
    n_paths: usize,
    seed: u64,
    functional: &PathFunctional<'_>,
) -> Result<PayoffTable, LabError> {
    let samples = sample_table(dyn_, sets, x0, grid, alphas, betas, n_paths, seed, functional)?;
    Ok(PayoffTable {
        alpha_labels: labels(alphas),
        beta_labels: labels(betas),
        entries: samples.iter().map(|s| McEstimate::from_samples(s)).collect(),
    })
}

/// `min` over `alphas` of `max` over `betas` of the estimated cost. Opponent
/// -blind members of `betas` play delayed controls.
#[allow(clippy::too_many_arguments)]
pub fn estimate_upper_value(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    grid: &TimeGrid,
    alphas: &[DelayedStrategy],
    betas: &[DelayedStrategy],
    n_paths: usize,
    seed: u64,
) -> Result<MinimaxEstimate, LabError> {
    Ok(payoff_table(dyn_, sets, x0, grid, alphas, betas, n_paths, seed)?.upper())
}

/// `max` over `betas` of `min` over `alphas`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_lower_value(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    grid: &TimeGrid,
    alphas: &[DelayedStrategy],
    betas: &[DelayedStrategy],
    n_paths: usize,
    seed: u64,
) -> Result<MinimaxEstimate, LabError> {
    Ok(payoff_table(dyn_, sets, x0, grid, alphas, betas, n_paths, seed)?.lower())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DppReport {
    /// `plus`: `V⁺(t0,x0) ≤ min_α max_β E[V⁺(t1, X_t1)]`.
    /// `minus`: `V⁻(t0,x0) ≥ max_β min_α E[V⁻(t1, X_t1)]`.
    pub kind: ValueKind,
    pub t0: f64,
    pub t1: f64,
    /// Grid value at `(t0, x0)`.
    pub lhs: f64,
    pub rhs: MinimaxEstimate,
    pub scheme_tolerance: f64,
    /// `3 · std_error + scheme_tolerance`.
    pub tolerance: f64,
    /// Signed slack of the inequality; negative means it is violated by
    /// that much before tolerances.
    pub margin: f64,
    pub holds: bool,
}

#[allow(clippy::too_many_arguments)]
fn check_dpp(
    kind: ValueKind,
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    sub_grid: &TimeGrid,
    vg: &ValueGrid,
    alphas: &[DelayedStrategy],
    betas: &[DelayedStrategy],
    n_paths: usize,
    seed: u64,
    scheme_tolerance: f64,
) -> Result<DppReport, LabError> {
    if vg.kind() != kind {
        return Err(LabError::InvalidArgument(format!("expected a {kind:?} value grid, got {:?}", vg.kind())));
    }
    let (t0, t1) = (sub_grid.t0(), sub_grid.horizon());
    let lhs = vg.interpolate(t0, x0)?;
    let at_t1 = |p: &StatePath| Ok(vg.interpolate(t1, p.terminal())?);
    let table = functional_table(dyn_, sets, x0, sub_grid, alphas, betas, n_paths, seed, &at_t1)?;
    let (rhs, margin) = match kind {
        ValueKind::Plus => {
            let r = table.upper();
            let m = r.estimate.mean - lhs;
            (r, m)
        }
        ValueKind::Minus => {
            let r = table.lower();
            let m = lhs - r.estimate.mean;
            (r, m)
        }
    };
    let tolerance = 3.0 * rhs.estimate.std_error + scheme_tolerance;
    Ok(DppReport { kind, t0, t1, lhs, rhs, scheme_tolerance, tolerance, margin, holds: margin >= -tolerance })
}

/// Sub-DPP check for `V⁺` on `[t0, t1]` (the span of `sub_grid`).
#[allow(clippy::too_many_arguments)]
pub fn check_subdpp(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    sub_grid: &TimeGrid,
    vplus: &ValueGrid,
    alphas: &[DelayedStrategy],
    betas: &[DelayedStrategy],
    n_paths: usize,
    seed: u64,
    scheme_tolerance: f64,
) -> Result<DppReport, LabError> {
    check_dpp(ValueKind::Plus, dyn_, sets, x0, sub_grid, vplus, alphas, betas, n_paths, seed, scheme_tolerance)
}

/// Super-DPP check for `V⁻` on `[t0, t1]`.
#[allow(clippy::too_many_arguments)]
pub fn check_superdpp(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    sub_grid: &TimeGrid,
    vminus: &ValueGrid,
    alphas: &[DelayedStrategy],
    betas: &[DelayedStrategy],
    n_paths: usize,
    seed: u64,
    scheme_tolerance: f64,
) -> Result<DppReport, LabError> {
    check_dpp(ValueKind::Minus, dyn_, sets, x0, sub_grid, vminus, alphas, betas, n_paths, seed, scheme_tolerance)
}

/// Error constant of the solve-and-interpolate pipeline, measured on the
/// heat equation `V_t + ΔV = 0`, `g = |x|²` (exact solution
/// `|x|² + 2N(T - t)`) with the viscosity of the scheme being calibrated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeCalibration {
    /// `max_error / (dx + sqrt(dt))`.
    pub constant: f64,
    pub max_error: f64,
    pub dx: f64,
    pub dt: f64,
}

impl SchemeCalibration {
    /// `C · (dx + sqrt(dt))` for another grid.
    pub fn tolerance(&self, dx: f64, dt: f64) -> f64 {
        self.constant * (dx + dt.sqrt())
    }
}

/// Runs the heat case on `space` over `duration` with the given viscosity
/// floor and measures the interpolation error at cell centres between time
/// levels, away from the box boundary by a quarter of its smallest width.
pub fn calibrate_scheme_constant(space: &SpaceGrid, duration: f64, viscosity: &[f64], c_cfl: f64) -> Result<SchemeCalibration, LabError> {
    let n = space.dim();
    let one = ControlSet::single(vec![0.0; n])?;
    let sets = ControlSets::new(one.clone(), one.clone());
    let radius = space.lo().iter().chain(space.hi()).fold(0.0f64, |m, c| m.max(c.abs()));
    let heat = BuiltinDynamics::AdditiveNoise { state_dim: n, sigma: 2f64.sqrt() }.build(TerminalCost::Quadratic, &sets, radius)?;
    let opts = SolverOptions { c_cfl, viscosity_floor: Some(viscosity.to_vec()) };
    let grid = cfl_time_grid_with(&heat, space, &one, &one, 0.0, duration, &opts)?;
    let vg = solve_with(&heat, space, &grid, ValueKind::Plus, &one, &one, &opts)?;
    let margin = 0.25 * (0..n).map(|i| space.hi()[i] - space.lo()[i]).fold(f64::INFINITY, f64::min);
    let dx: Vec<f64> = space.spacings();
    let cells: Vec<Vec<f64>> = (0..space.n_nodes())
        .filter_map(|p| {
            let idx = space.multi_index(p);
            if (0..n).any(|i| idx[i] + 1 >= space.nodes_per_dim()[i]) {
                return None;
            }
            let c: Vec<f64> = (0..n).map(|i| space.coord(i, idx[i] as isize) + 0.5 * dx[i]).collect();
            (space.distance_to_boundary(&c) >= margin).then_some(c)
        })
        .collect();
    let levels = vg.n_levels();
    let step = ((levels - 1) / 64).max(1);
    let mut max_error = 0.0f64;
    for k in (0..levels - 1).step_by(step) {
        let t = 0.5 * (vg.times()[k] + vg.times()[k + 1]);
        let tau = duration - t;
        for c in &cells {
            let exact: f64 = c.iter().map(|x| x * x).sum::<f64>() + 2.0 * n as f64 * tau;
            max_error = max_error.max((vg.interpolate(t, c)? - exact).abs());
        }
    }
    let h = dx.iter().copied().fold(0.0, f64::max);
    Ok(SchemeCalibration { constant: max_error / (h + grid.dt().sqrt()), max_error, dx: h, dt: grid.dt() })
}

/// Feedback policy read off a value grid: at `(t, x)` the derivatives of
/// `V` are taken by central differences of the interpolant, and the control
/// is the minimizing `u` of `H⁺` (Player I) or the maximizing `v` of `H⁻`
/// (Player II). Points outside the box are clamped into it.
pub fn grid_feedback_policy(dyn_: &GameDynamics, sets: &ControlSets, vg: Arc<ValueGrid>, side: Side) -> Arc<Policy> {
    let dyn_ = dyn_.clone();
    let sets = sets.clone();
    Arc::new(move |t: f64, x: &[f64]| {
        let space = vg.space();
        let n = space.dim();
        let h: Vec<f64> = space.spacings();
        let c: Vec<f64> = (0..n).map(|i| x[i].clamp(space.lo()[i] + h[i], space.hi()[i] - h[i])).collect();
        let times = vg.times();
        let t = t.clamp(times[0], *times.last().expect("non-empty"));
        let v = |p: &[f64]| vg.interpolate(t, p).expect("point clamped into the grid");
        let shifted = |moves: &[(usize, f64)]| {
            let mut p = c.clone();
            for &(i, s) in moves {
                p[i] += s * h[i];
            }
            v(&p)
        };
        let centre = v(&c);
        let mut xi = vec![0.0; n];
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let (p, m) = (shifted(&[(i, 1.0)]), shifted(&[(i, -1.0)]));
            xi[i] = (p - m) / (2.0 * h[i]);
            a[i * n + i] = (p - 2.0 * centre + m) / (h[i] * h[i]);
            for j in i + 1..n {
                let cross = (shifted(&[(i, 1.0), (j, 1.0)]) - shifted(&[(i, 1.0), (j, -1.0)]) - shifted(&[(i, -1.0), (j, 1.0)])
                    + shifted(&[(i, -1.0), (j, -1.0)]))
                    / (4.0 * h[i] * h[j]);
                a[i * n + j] = cross;
                a[j * n + i] = cross;
            }
        }
        let q = HamiltonianQuery::new(a, xi, x.to_vec(), t).expect("dimensions agree");
        match side {
            Side::I => h_plus(&dyn_, &q, &sets.u, &sets.v).expect("non-empty control sets").1,
            Side::II => h_minus(&dyn_, &q, &sets.u, &sets.v).expect("non-empty control sets").1,
        }
    })
}

/// Common-noise difference quotient `(J(x0 + h e_axis) - J(x0)) / h` of one
/// strategy pair.
#[allow(clippy::too_many_arguments)]
pub fn cost_difference_quotient(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    axis: usize,
    h: f64,
    alpha: &DelayedStrategy,
    beta: &DelayedStrategy,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate, LabError> {
    if axis >= x0.len() || !(h != 0.0 && h.is_finite()) {
        return Err(LabError::InvalidArgument(format!("need axis < {} and a finite non-zero step, got axis {axis}, h {h}", x0.len())));
    }
    let mut x1 = x0.to_vec();
    x1[axis] += h;
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let w = noise_path(grid, dyn_.noise_dim(), seed, i)?;
            let a = dyn_.terminal_cost(play(dyn_, sets, x0, alpha, beta, &w)?.terminal());
            let b = dyn_.terminal_cost(play(dyn_, sets, &x1, alpha, beta, &w)?.terminal());
            Ok((b - a) / h)
        })
        .collect::<Result<_, LabError>>()?;
    Ok(McEstimate::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_space::discretize_interval;
    use crate::strategies::constant;

    fn single() -> ControlSet {
        ControlSet::single(vec![0.0]).unwrap()
    }

    #[test]
    fn estimate_from_samples() {
        let e = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let c = McEstimate::from_samples(&[0.1; 7]);
        assert_eq!((c.mean, c.std_error, c.n_paths), (0.1, 0.0, 7));
    }

    #[test]
    fn frozen_cost_is_exact() {
        let sets = ControlSets::new(single(), single());
        let d = BuiltinDynamics::Frozen { state_dim: 1 }.build(TerminalCost::Quadratic, &sets, 2.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 8, 2).unwrap();
        let a = constant(Side::I, 2, 1, 0).unwrap();
        let b = constant(Side::II, 2, 1, 0).unwrap();
        let e = estimate_cost(&d, &sets, &[0.7], &a, &b, &grid, 50, 3).unwrap();
        assert_eq!(e.mean, 0.7 * 0.7);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n_paths, 50);
    }

    #[test]
    fn table_minimax_picks() {
        let est = |m| McEstimate { mean: m, std_error: 0.0, n_paths: 1 };
        // rows α, cols β: [[0, 1], [1, 0]] -> upper 1, lower 0
        let t = PayoffTable {
            alpha_labels: vec!["a0".into(), "a1".into()],
            beta_labels: vec!["b0".into(), "b1".into()],
            entries: vec![est(0.0), est(1.0), est(1.0), est(0.0)],
        };
        let up = t.upper();
        assert_eq!((up.estimate.mean, up.alpha_index, up.beta_index), (1.0, 0, 1));
        let lo = t.lower();
        assert_eq!((lo.estimate.mean, lo.alpha_index, lo.beta_index), (0.0, 0, 0));
        assert!(t.to_csv().starts_with("alpha,beta,mean,std_error,n_paths\na0,b0,0,0,1\n"));
    }

    #[test]
    fn empty_family_is_rejected() {
        let u = discretize_interval(-1.0, 1.0, 3).unwrap();
        let sets = ControlSets::new(u.clone(), u);
        let d = BuiltinDynamics::Separated { state_dim: 1, sigma: 1.0 }.build(TerminalCost::Abs, &sets, 2.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4, 1).unwrap();
        let b = constant(Side::II, 1, 3, 0).unwrap();
        assert!(matches!(estimate_upper_value(&d, &sets, &[0.0], &grid, &[], &[b], 10, 0), Err(LabError::EmptyFamily(_))));
    }
}

//! Explicit monotone finite-difference solver for the terminal-value
//! Hamilton–Jacobi–Isaacs equations `V_t + H^±(D²V, DV, x) = 0`, `V(T) = g`.
//!
//! One backward step is `V(t_k) = V(t_{k+1}) + dt · Ĥ^±` at every node, where
//! `Ĥ^±` is the inf-sup (or sup-inf) over the control grids of
//!
//! ```text
//! ½ Σ_i S_ii D²_ii V + S_12 D^{sgn S_12}_12 V + Σ_i b_i D⁰_i V
//! ```
//!
//! plus the Lax–Friedrichs viscosity `Σ_i α_i (dx_i/2) D²_ii V`, with
//! `S = σσᵀ`, `α_i = max |b_i|` over nodes and controls. Mixed derivatives use
//! the seven-point stencil matching the sign of `S_12`. Under the time-step
//! restriction checked by [`check_cfl`] every payoff is nondecreasing in each
//! neighbour value and in the centre value, and so is the inf-sup.
//!
//! Outside the box a node takes the value of the nearest boundary node plus
//! the increment of `g` between the two points, i.e. the outward slope of the
//! terminal data is kept for all times.

use std::fmt::Write as _;
use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::GameDynamics;
use crate::hamiltonian::{lower_value, upper_value};
use crate::path_space::{ControlSet, TimeGrid};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid space grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("time step {dt} exceeds the stability limit {limit} (CFL limit {cfl_limit}, monotonicity limit {monotone_limit})")]
    CflViolation { dt: f64, limit: f64, cfl_limit: f64, monotone_limit: f64 },
    #[error("mixed-derivative stencil not monotone at x = {x:?} for controls ({u}, {v}): S = {s:?}")]
    NotDiagonallyDominant { x: Vec<f64>, u: usize, v: usize, s: [f64; 3] },
    #[error("non-finite value at level {level} (t = {time}), node {node} x = {x:?}")]
    NonFinite { level: usize, time: f64, node: usize, x: Vec<f64> },
    #[error("point (t = {t}, x = {x:?}) lies outside the value grid")]
    OutOfBounds { t: f64, x: Vec<f64> },
    #[error("degenerate grid: {0}")]
    Degenerate(String),
    #[error("value grids do not share the same lattice")]
    GridMismatch,
    #[error("invalid binary value grid: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Tensor lattice on the box `[lo, hi]`; the first axis varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    nodes_per_dim: Vec<usize>,
}

impl SpaceGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, nodes_per_dim: Vec<usize>) -> Result<Self, SolverError> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != nodes_per_dim.len() {
            return Err(SolverError::InvalidGrid("lo, hi and nodes_per_dim need one entry per dimension".into()));
        }
        for i in 0..lo.len() {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
                return Err(SolverError::InvalidGrid(format!("axis {i}: need lo < hi, got [{}, {}]", lo[i], hi[i])));
            }
            if nodes_per_dim[i] < 3 {
                return Err(SolverError::InvalidGrid(format!("axis {i}: need at least 3 nodes, got {}", nodes_per_dim[i])));
            }
        }
        Ok(Self { lo, hi, nodes_per_dim })
    }

    /// Uniform lattice with spacing as close to `dx` as the box allows.
    pub fn with_spacing(lo: Vec<f64>, hi: Vec<f64>, dx: f64) -> Result<Self, SolverError> {
        let nodes = lo.iter().zip(&hi).map(|(l, h)| ((h - l) / dx).round() as usize + 1).collect();
        Self::new(lo, hi, nodes)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn nodes_per_dim(&self) -> &[usize] {
        &self.nodes_per_dim
    }

    pub fn dx(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.nodes_per_dim[axis] - 1) as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.dx(i)).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_dim.iter().product()
    }

    /// Coordinate of lattice index `i` on `axis`, exact at both ends.
    pub fn coord(&self, axis: usize, i: isize) -> f64 {
        let last = self.nodes_per_dim[axis] as isize - 1;
        if i == last {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.dx(axis)
        }
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rest = node;
        for axis in (0..self.dim()).rev() {
            idx[axis] = rest % self.nodes_per_dim[axis];
            rest /= self.nodes_per_dim[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.nodes_per_dim).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node).iter().enumerate().map(|(a, &i)| self.coord(a, i as isize)).collect()
    }

    /// Distance from `x` to the nearest face of the box.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        (0..self.dim()).map(|i| (x[i] - self.lo[i]).min(self.hi[i] - x[i])).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    /// `V⁺`, Hamiltonian `min_u max_v`.
    Plus,
    /// `V⁻`, Hamiltonian `max_v min_u`.
    Minus,
}

/// `V(t, x)` on every time level of a solve; level 0 is the initial time and
/// the last level is the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    space: SpaceGrid,
    times: Vec<f64>,
    values: Vec<f64>,
    kind: ValueKind,
}

impl ValueGrid {
    pub fn new(space: SpaceGrid, times: Vec<f64>, values: Vec<f64>, kind: ValueKind) -> Result<Self, SolverError> {
        if times.is_empty() || values.len() != times.len() * space.n_nodes() {
            return Err(SolverError::Degenerate(format!(
                "{} values for {} levels of {} nodes",
                values.len(),
                times.len(),
                space.n_nodes()
            )));
        }
        Ok(Self { space, times, values, kind })
    }

    pub fn space(&self) -> &SpaceGrid {
        &self.space
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn n_levels(&self) -> usize {
        self.times.len()
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.space.n_nodes();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multilinear interpolation in `x` on the level nearest to `t` when `t`
    /// is (numerically) a level time, linear in time otherwise.
    pub fn interpolate(&self, t: f64, x: &[f64]) -> Result<f64, SolverError> {
        let out = || SolverError::OutOfBounds { t, x: x.to_vec() };
        if x.len() != self.space.dim() {
            return Err(SolverError::Dimension(format!("point has {} coordinates, grid has {}", x.len(), self.space.dim())));
        }
        let t0 = self.times[0];
        let t1 = *self.times.last().expect("at least one level");
        let slack = 1e-9 * (t1 - t0).abs().max(1e-300);
        if !(t >= t0 - slack && t <= t1 + slack) {
            return Err(out());
        }
        let pos = self.times.partition_point(|&s| s < t - slack);
        let k = pos.min(self.n_levels() - 1);
        if (self.times[k] - t).abs() <= slack || self.n_levels() == 1 {
            return self.interpolate_level(k, x).ok_or_else(out);
        }
        let (ka, kb) = (k - 1, k);
        let w = (t - self.times[ka]) / (self.times[kb] - self.times[ka]);
        let va = self.interpolate_level(ka, x).ok_or_else(out)?;
        let vb = self.interpolate_level(kb, x).ok_or_else(out)?;
        Ok((1.0 - w) * va + w * vb)
    }

    /// Multilinear interpolation on one level; `None` outside the box.
    pub fn interpolate_level(&self, k: usize, x: &[f64]) -> Option<f64> {
        let n = self.space.dim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for i in 0..n {
            let dx = self.space.dx(i);
            let tol = 1e-12 * dx;
            if !(x[i] >= self.space.lo[i] - tol && x[i] <= self.space.hi[i] + tol) {
                return None;
            }
            let mut s = ((x[i] - self.space.lo[i]) / dx).clamp(0.0, (self.space.nodes_per_dim[i] - 1) as f64);
            if (s - s.round()).abs() < 1e-9 {
                s = s.round();
            }
            let b = (s.floor() as usize).min(self.space.nodes_per_dim[i] - 2);
            base[i] = b;
            frac[i] = s - b as f64;
        }
        let level = self.level(k);
        let mut acc = 0.0;
        let mut corner = vec![0usize; n];
        for mask in 0..(1usize << n) {
            let mut weight = 1.0;
            for i in 0..n {
                let bit = (mask >> i) & 1;
                corner[i] = base[i] + bit;
                weight *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
            }
            if weight != 0.0 {
                acc += weight * level[self.space.flat_index(&corner)];
            }
        }
        Some(acc)
    }

    /// Columns: time, x_1..x_N, value. Every `level_stride`-th level is
    /// written, plus the last one.
    pub fn to_csv(&self, level_stride: usize) -> String {
        let stride = level_stride.max(1);
        let mut out = String::from("time");
        for i in 0..self.space.dim() {
            let _ = write!(out, ",x_{}", i + 1);
        }
        out.push_str(",value\n");
        let last = self.n_levels() - 1;
        for k in (0..self.n_levels()).filter(|k| k % stride == 0 || *k == last) {
            for (node, v) in self.level(k).iter().enumerate() {
                let _ = write!(out, "{}", self.times[k]);
                for c in self.space.node_coords(node) {
                    let _ = write!(out, ",{c}");
                }
                let _ = writeln!(out, ",{v}");
            }
        }
        out
    }

    /// Little-endian binary dump:
    ///
    /// ```text
    /// magic        8 bytes  "SDGVALUE"
    /// version      u32      1
    /// kind         u32      0 = plus, 1 = minus
    /// dims         u32      N
    /// reserved     u32      0
    /// n_levels     u64
    /// nodes        N × u64
    /// lo           N × f64
    /// spacings     N × f64
    /// times        n_levels × f64
    /// values       n_levels × Π nodes × f64, level-major, first axis slowest
    /// ```
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.kind as u32).to_le_bytes())?;
        w.write_all(&(self.space.dim() as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&(self.n_levels() as u64).to_le_bytes())?;
        for &n in &self.space.nodes_per_dim {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for x in self.space.lo.iter().chain(&self.space.spacings()).chain(&self.times).chain(&self.values) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, SolverError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(SolverError::Format("bad magic".into()));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> io::Result<u32> {
            r.read_exact(&mut u32_buf)?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let version = read_u32(&mut r)?;
        if version != 1 {
            return Err(SolverError::Format(format!("unsupported version {version}")));
        }
        let kind = match read_u32(&mut r)? {
            0 => ValueKind::Plus,
            1 => ValueKind::Minus,
            k => return Err(SolverError::Format(format!("unknown kind {k}"))),
        };
        let dims = read_u32(&mut r)? as usize;
        let _reserved = read_u32(&mut r)?;
        let mut b8 = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> io::Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n_levels = read_u64(&mut r)? as usize;
        let nodes: Vec<usize> = (0..dims).map(|_| read_u64(&mut r).map(|n| n as usize)).collect::<io::Result<_>>()?;
        let read_f64s = |r: &mut R, count: usize| -> io::Result<Vec<f64>> {
            let mut out = Vec::with_capacity(count);
            let mut b = [0u8; 8];
            for _ in 0..count {
                r.read_exact(&mut b)?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let lo = read_f64s(&mut r, dims)?;
        let spacing = read_f64s(&mut r, dims)?;
        let hi = (0..dims).map(|i| lo[i] + spacing[i] * (nodes[i] - 1) as f64).collect();
        let space = SpaceGrid::new(lo, hi, nodes)?;
        let times = read_f64s(&mut r, n_levels)?;
        let values = read_f64s(&mut r, n_levels * space.n_nodes())?;
        ValueGrid::new(space, times, values, kind)
    }
}

const BINARY_MAGIC: &[u8; 8] = b"SDGVALUE";

/// Neighbour of a node: lattice index of the (clamped) node and the
/// increment of `g` to add when the neighbour lies outside the box.
#[derive(Debug, Clone, Copy)]
struct Neighbor {
    node: usize,
    offset: f64,
}

/// Neighbour table of one node. 1-D: `[-x, +x]`. 2-D:
/// `[-x, +x, -y, +y, (+,+), (-,-), (+,-), (-,+)]`.
fn neighbors(space: &SpaceGrid, dyn_: &GameDynamics, node: usize) -> Vec<Neighbor> {
    let idx = space.multi_index(node);
    let offsets: &[&[isize]] = match space.dim() {
        1 => &[&[-1], &[1]],
        _ => &[&[-1, 0], &[1, 0], &[0, -1], &[0, 1], &[1, 1], &[-1, -1], &[1, -1], &[-1, 1]],
    };
    offsets
        .iter()
        .map(|off| {
            let raw: Vec<isize> = idx.iter().zip(off.iter()).map(|(&i, &o)| i as isize + o).collect();
            let clamped: Vec<usize> =
                raw.iter().enumerate().map(|(a, &r)| r.clamp(0, space.nodes_per_dim[a] as isize - 1) as usize).collect();
            let inside = raw.iter().zip(&clamped).all(|(&r, &c)| r == c as isize);
            let offset = if inside {
                0.0
            } else {
                let x_out: Vec<f64> = raw.iter().enumerate().map(|(a, &r)| space.coord(a, r)).collect();
                let x_in: Vec<f64> = clamped.iter().enumerate().map(|(a, &c)| space.coord(a, c as isize)).collect();
                dyn_.terminal_cost(&x_out) - dyn_.terminal_cost(&x_in)
            };
            Neighbor { node: space.flat_index(&clamped), offset }
        })
        .collect()
}

/// Coefficient extrema used by the stability check.
#[derive(Debug, Clone, Serialize)]
pub struct CflInfo {
    /// `max_i max |b_i|` over nodes and controls, per axis.
    pub max_drift: Vec<f64>,
    /// Largest diagonal entry of `σσᵀ`.
    pub max_diffusion: f64,
    /// `c_cfl · min(dx²/(N max σσᵀ), dx/max|b|)`.
    pub cfl_limit: f64,
    /// Largest `dt` keeping every centre coefficient nonnegative.
    pub monotone_limit: f64,
    /// Lax–Friedrichs coefficient per axis: `max_drift` raised to the
    /// requested floor.
    pub viscosity: Vec<f64>,
}

impl CflInfo {
    pub fn limit(&self) -> f64 {
        self.cfl_limit.min(self.monotone_limit)
    }
}

pub const DEFAULT_C_CFL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Courant factor, at most 0.5.
    pub c_cfl: f64,
    /// Lower bound for the per-axis viscosity coefficient. Used to run a
    /// reference problem with the numerical diffusion of another one.
    pub viscosity_floor: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { c_cfl: DEFAULT_C_CFL, viscosity_floor: None }
    }
}

impl SolverOptions {
    pub fn with_c_cfl(c_cfl: f64) -> Self {
        Self { c_cfl, ..Self::default() }
    }
}

/// Scans all nodes and control pairs, checks the mixed-derivative stencil
/// condition `S_ii/dx_i² ≥ |S_12|/(dx_1 dx_2)` and returns the step limits.
pub fn check_cfl(dyn_: &GameDynamics, space: &SpaceGrid, us: &ControlSet, vs: &ControlSet, c_cfl: f64) -> Result<CflInfo, SolverError> {
    check_cfl_with(dyn_, space, us, vs, &SolverOptions::with_c_cfl(c_cfl))
}

pub fn check_cfl_with(
    dyn_: &GameDynamics,
    space: &SpaceGrid,
    us: &ControlSet,
    vs: &ControlSet,
    opts: &SolverOptions,
) -> Result<CflInfo, SolverError> {
    let n = check_dims(dyn_, space)?;
    let c_cfl = opts.c_cfl;
    if !(c_cfl > 0.0 && c_cfl <= 0.5) {
        return Err(SolverError::InvalidGrid(format!("c_cfl must lie in (0, 0.5], got {c_cfl}")));
    }
    if let Some(floor) = &opts.viscosity_floor {
        if floor.len() != n || floor.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(SolverError::Dimension(format!("viscosity floor needs {n} finite nonnegative entries")));
        }
    }
    let d = dyn_.noise_dim();
    let dx = space.spacings();
    let mut max_drift = vec![0.0f64; n];
    let mut max_diffusion = 0.0f64;
    let mut coeff_sums = Vec::new();
    let mut drift = vec![0.0; n];
    let mut sigma = vec![0.0; n * d];
    for node in 0..space.n_nodes() {
        let x = space.node_coords(node);
        for (iu, u) in us.points().iter().enumerate() {
            for (iv, v) in vs.points().iter().enumerate() {
                dyn_.drift_into(&x, u, v, &mut drift);
                dyn_.diffusion_into(&x, u, v, &mut sigma);
                let s = sigma_sq(&sigma, n, d);
                for i in 0..n {
                    max_drift[i] = max_drift[i].max(drift[i].abs());
                    max_diffusion = max_diffusion.max(s[i * n + i]);
                }
                let mut diag = 0.0;
                for i in 0..n {
                    diag += s[i * n + i] / (dx[i] * dx[i]);
                }
                let mut cross = 0.0;
                if n == 2 {
                    let s12 = s[1];
                    let c = s12.abs() / (dx[0] * dx[1]);
                    if s[0] / (dx[0] * dx[0]) < c || s[3] / (dx[1] * dx[1]) < c {
                        return Err(SolverError::NotDiagonallyDominant { x, u: iu, v: iv, s: [s[0], s12, s[3]] });
                    }
                    cross = c;
                }
                coeff_sums.push(diag - cross);
            }
        }
    }
    let alpha: Vec<f64> = match &opts.viscosity_floor {
        Some(floor) => max_drift.iter().zip(floor).map(|(a, f)| a.max(*f)).collect(),
        None => max_drift.clone(),
    };
    let viscosity: f64 = (0..n).map(|i| alpha[i] / dx[i]).sum();
    let worst = coeff_sums.iter().copied().fold(0.0, f64::max) + viscosity;
    let monotone_limit = if worst > 0.0 { 1.0 / worst } else { f64::INFINITY };
    let dx_min = dx.iter().copied().fold(f64::INFINITY, f64::min);
    let b_max = alpha.iter().copied().fold(0.0, f64::max);
    let diff_limit = if max_diffusion > 0.0 { dx_min * dx_min / (n as f64 * max_diffusion) } else { f64::INFINITY };
    let drift_limit = if b_max > 0.0 { dx_min / b_max } else { f64::INFINITY };
    Ok(CflInfo { max_drift, max_diffusion, cfl_limit: c_cfl * diff_limit.min(drift_limit), monotone_limit, viscosity: alpha })
}

/// Coarsest uniform grid on `[t0, horizon]` satisfying the step limits.
pub fn cfl_time_grid(
    dyn_: &GameDynamics,
    space: &SpaceGrid,
    us: &ControlSet,
    vs: &ControlSet,
    t0: f64,
    horizon: f64,
    c_cfl: f64,
) -> Result<TimeGrid, SolverError> {
    cfl_time_grid_with(dyn_, space, us, vs, t0, horizon, &SolverOptions::with_c_cfl(c_cfl))
}

pub fn cfl_time_grid_with(
    dyn_: &GameDynamics,
    space: &SpaceGrid,
    us: &ControlSet,
    vs: &ControlSet,
    t0: f64,
    horizon: f64,
    opts: &SolverOptions,
) -> Result<TimeGrid, SolverError> {
    let info = check_cfl_with(dyn_, space, us, vs, opts)?;
    let limit = info.limit();
    let span = horizon - t0;
    let mut n = if limit.is_finite() { (span / limit).ceil().max(1.0) as usize } else { 1 };
    // guard against ceil landing just above the limit through rounding
    while span / n as f64 > limit {
        n += 1;
    }
    TimeGrid::new(t0, horizon, n, 1).map_err(|e| SolverError::InvalidGrid(e.to_string()))
}

fn sigma_sq(sigma: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..d {
                acc += sigma[i * d + k] * sigma[j * d + k];
            }
            s[i * n + j] = acc;
        }
    }
    s
}

fn check_dims(dyn_: &GameDynamics, space: &SpaceGrid) -> Result<usize, SolverError> {
    let n = space.dim();
    if n != dyn_.state_dim() {
        return Err(SolverError::Dimension(format!("space grid has N={n}, dynamics has N={}", dyn_.state_dim())));
    }
    if n > 2 {
        return Err(SolverError::Dimension(format!("the finite-difference solver handles N <= 2, got N={n}")));
    }
    Ok(n)
}

/// Finite differences at one node.
struct Stencil {
    d1: [f64; 2],
    d2: [f64; 2],
    cross_pos: f64,
    cross_neg: f64,
}

fn stencil(level: &[f64], nb: &[Neighbor], centre: f64, dx: &[f64]) -> Stencil {
    let at = |k: usize| level[nb[k].node] + nb[k].offset;
    let mut s = Stencil { d1: [0.0; 2], d2: [0.0; 2], cross_pos: 0.0, cross_neg: 0.0 };
    for i in 0..dx.len() {
        let (m, p) = (at(2 * i), at(2 * i + 1));
        s.d1[i] = (p - m) / (2.0 * dx[i]);
        s.d2[i] = (p - 2.0 * centre + m) / (dx[i] * dx[i]);
    }
    if dx.len() == 2 {
        let star = at(0) + at(1) + at(2) + at(3);
        let hk2 = 2.0 * dx[0] * dx[1];
        s.cross_pos = (at(4) + at(5) + 2.0 * centre - star) / hk2;
        s.cross_neg = -(at(6) + at(7) + 2.0 * centre - star) / hk2;
    }
    s
}

/// Backward sweep with the default `c_cfl`.
pub fn solve(
    dyn_: &GameDynamics,
    space: &SpaceGrid,
    grid: &TimeGrid,
    kind: ValueKind,
    us: &ControlSet,
    vs: &ControlSet,
) -> Result<ValueGrid, SolverError> {
    solve_with(dyn_, space, grid, kind, us, vs, &SolverOptions::default())
}

pub fn solve_with(
    dyn_: &GameDynamics,
    space: &SpaceGrid,
    grid: &TimeGrid,
    kind: ValueKind,
    us: &ControlSet,
    vs: &ControlSet,
    opts: &SolverOptions,
) -> Result<ValueGrid, SolverError> {
    let scheme = Scheme::new(dyn_, space, grid.dt(), kind, us, vs, opts)?;
    let n_nodes = space.n_nodes();
    let n_levels = grid.n_steps() + 1;
    let mut values = vec![0.0; n_levels * n_nodes];
    for (p, x) in scheme.coords.iter().enumerate() {
        values[(n_levels - 1) * n_nodes + p] = dyn_.terminal_cost(x);
    }
    for k in (0..n_levels - 1).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * n_nodes);
        scheme.step(&tail[..n_nodes], &mut head[k * n_nodes..], k, grid.time(k))?;
    }
    let times = (0..n_levels).map(|k| grid.time(k)).collect();
    ValueGrid::new(space.clone(), times, values, kind)
}

/// One backward step of size `dt` applied to an arbitrary level `next`;
/// the same update [`solve_with`] performs.
#[allow(clippy::too_many_arguments)]
pub fn backward_step(
    dyn_: &GameDynamics,
    space: &SpaceGrid,
    next: &[f64],
    time: f64,
    dt: f64,
    kind: ValueKind,
    us: &ControlSet,
    vs: &ControlSet,
) -> Result<Vec<f64>, SolverError> {
    if next.len() != space.n_nodes() {
        return Err(SolverError::Dimension(format!("level has {} values, grid has {} nodes", next.len(), space.n_nodes())));
    }
    let scheme = Scheme::new(dyn_, space, dt, kind, us, vs, &SolverOptions::default())?;
    let mut out = vec![0.0; next.len()];
    scheme.step(next, &mut out, 0, time)?;
    Ok(out)
}

struct Scheme<'a> {
    dyn_: &'a GameDynamics,
    us: &'a ControlSet,
    vs: &'a ControlSet,
    kind: ValueKind,
    dt: f64,
    dx: Vec<f64>,
    alpha: Vec<f64>,
    coords: Vec<Vec<f64>>,
    nbs: Vec<Vec<Neighbor>>,
}

impl<'a> Scheme<'a> {
    fn new(
        dyn_: &'a GameDynamics,
        space: &SpaceGrid,
        dt: f64,
        kind: ValueKind,
        us: &'a ControlSet,
        vs: &'a ControlSet,
        opts: &SolverOptions,
    ) -> Result<Self, SolverError> {
        let info = check_cfl_with(dyn_, space, us, vs, opts)?;
        if !(dt > 0.0) || dt > info.limit() {
            return Err(SolverError::CflViolation {
                dt,
                limit: info.limit(),
                cfl_limit: info.cfl_limit,
                monotone_limit: info.monotone_limit,
            });
        }
        let n_nodes = space.n_nodes();
        Ok(Self {
            dyn_,
            us,
            vs,
            kind,
            dt,
            dx: space.spacings(),
            alpha: info.viscosity,
            coords: (0..n_nodes).map(|p| space.node_coords(p)).collect(),
            nbs: (0..n_nodes).map(|p| neighbors(space, dyn_, p)).collect(),
        })
    }

    fn step(&self, next: &[f64], current: &mut [f64], level: usize, time: f64) -> Result<(), SolverError> {
        let n = self.dx.len();
        let d = self.dyn_.noise_dim();
        let (rows, cols) = (self.us.len(), self.vs.len());
        current.par_iter_mut().enumerate().try_for_each_init(
            || (vec![0.0; n], vec![0.0; n * d], vec![0.0; rows * cols]),
            |(drift, sigma, matrix), (p, out)| {
                let x = &self.coords[p];
                let centre = next[p];
                let st = stencil(next, &self.nbs[p], centre, &self.dx);
                for (iu, u) in self.us.points().iter().enumerate() {
                    for (iv, v) in self.vs.points().iter().enumerate() {
                        self.dyn_.drift_into(x, u, v, drift);
                        self.dyn_.diffusion_into(x, u, v, sigma);
                        let s = sigma_sq(sigma, n, d);
                        let mut val = 0.0;
                        for i in 0..n {
                            val += 0.5 * s[i * n + i] * st.d2[i] + drift[i] * st.d1[i];
                        }
                        if n == 2 && s[1] != 0.0 {
                            val += s[1] * if s[1] > 0.0 { st.cross_pos } else { st.cross_neg };
                        }
                        matrix[iu * cols + iv] = val;
                    }
                }
                let (h, _) = match self.kind {
                    ValueKind::Plus => upper_value(matrix, rows, cols),
                    ValueKind::Minus => lower_value(matrix, rows, cols),
                }
                .expect("control sets are non-empty");
                let mut viscosity = 0.0;
                for i in 0..n {
                    viscosity += 0.5 * self.alpha[i] * self.dx[i] * st.d2[i];
                }
                let v_new = centre + self.dt * (h + viscosity);
                if !v_new.is_finite() {
                    return Err(SolverError::NonFinite { level, time, node: p, x: x.clone() });
                }
                *out = v_new;
                Ok(())
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    /// `max |ΔV| / dx` over adjacent nodes on every level.
    pub spatial_lipschitz: f64,
    /// `max |V(t_j) - V(t_i)| / sqrt(t_j - t_i)` over pairs of sampled levels.
    pub temporal_holder: f64,
    pub levels_sampled: usize,
}

/// Largest number of levels entering the pairwise temporal estimate.
pub const HOLDER_SAMPLE_LEVELS: usize = 65;

pub fn estimate_regularity(vg: &ValueGrid) -> Result<RegularityReport, SolverError> {
    if vg.n_levels() < 2 {
        return Err(SolverError::Degenerate("need at least two time levels".into()));
    }
    let space = vg.space();
    if space.nodes_per_dim().iter().any(|&m| m < 3) {
        return Err(SolverError::Degenerate("need at least three nodes per dimension".into()));
    }
    let n_nodes = space.n_nodes();
    let mut spatial = 0.0f64;
    for k in 0..vg.n_levels() {
        let level = vg.level(k);
        for p in 0..n_nodes {
            let idx = space.multi_index(p);
            for axis in 0..space.dim() {
                if idx[axis] + 1 < space.nodes_per_dim()[axis] {
                    let mut j = idx.clone();
                    j[axis] += 1;
                    let q = space.flat_index(&j);
                    spatial = spatial.max((level[q] - level[p]).abs() / space.dx(axis));
                }
            }
        }
    }
    let last = vg.n_levels() - 1;
    let m = HOLDER_SAMPLE_LEVELS.min(vg.n_levels());
    let mut sampled: Vec<usize> = (0..m).map(|j| ((j * last) as f64 / (m - 1) as f64).round() as usize).collect();
    sampled.dedup();
    let mut temporal = 0.0f64;
    for (a, &i) in sampled.iter().enumerate() {
        for &j in &sampled[a + 1..] {
            let span = (vg.times()[j] - vg.times()[i]).abs().sqrt();
            let (li, lj) = (vg.level(i), vg.level(j));
            let diff = li.iter().zip(lj).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            temporal = temporal.max(diff / span);
        }
    }
    Ok(RegularityReport { spatial_lipschitz: spatial, temporal_holder: temporal, levels_sampled: sampled.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    /// `min (V⁺ - V⁻)` over all levels and nodes.
    pub min_difference: f64,
    pub max_difference: f64,
    pub worst_level: usize,
    pub worst_node: usize,
    pub tolerance: f64,
    pub violated: bool,
    /// The two grids hold the same bits.
    pub identical: bool,
}

pub fn compare_values(vplus: &ValueGrid, vminus: &ValueGrid, tolerance: f64) -> Result<OrderingReport, SolverError> {
    if vplus.space() != vminus.space() || vplus.times() != vminus.times() {
        return Err(SolverError::GridMismatch);
    }
    let n = vplus.space().n_nodes();
    let mut min = (f64::INFINITY, 0);
    let mut max = f64::NEG_INFINITY;
    for (i, (a, b)) in vplus.values().iter().zip(vminus.values()).enumerate() {
        let diff = a - b;
        if diff < min.0 {
            min = (diff, i);
        }
        max = max.max(diff);
    }
    let identical = vplus.values().iter().zip(vminus.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok(OrderingReport {
        min_difference: min.0,
        max_difference: max,
        worst_level: min.1 / n,
        worst_node: min.1 % n,
        tolerance,
        violated: min.0 < -tolerance,
        identical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BuiltinDynamics, ControlSets, TerminalCost};
    use crate::path_space::discretize_interval;

    fn single() -> ControlSet {
        ControlSet::single(vec![0.0]).unwrap()
    }

    #[test]
    fn space_grid_indexing() {
        let s = SpaceGrid::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![3, 5]).unwrap();
        assert_eq!(s.n_nodes(), 15);
        assert_eq!(s.multi_index(7), vec![1, 2]);
        assert_eq!(s.flat_index(&[1, 2]), 7);
        assert_eq!(s.node_coords(7), vec![0.0, 1.0]);
        assert_eq!(s.node_coords(14), vec![1.0, 2.0]);
        assert!(SpaceGrid::new(vec![0.0], vec![1.0], vec![2]).is_err());
        assert!(SpaceGrid::new(vec![1.0], vec![0.0], vec![3]).is_err());
        let w = SpaceGrid::with_spacing(vec![-4.0], vec![4.0], 0.05).unwrap();
        assert_eq!(w.nodes_per_dim(), &[161]);
    }

    #[test]
    fn frozen_dynamics_keep_terminal_data() {
        let sets = ControlSets::new(single(), single());
        let dyn_ = BuiltinDynamics::Frozen { state_dim: 1 }.build(TerminalCost::Abs, &sets, 4.0).unwrap();
        let space = SpaceGrid::new(vec![-2.0], vec![2.0], vec![41]).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10, 1).unwrap();
        let vg = solve(&dyn_, &space, &grid, ValueKind::Plus, &sets.u, &sets.v).unwrap();
        for k in 0..vg.n_levels() {
            assert_eq!(vg.level(k), vg.level(10));
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let sets = ControlSets::new(single(), single());
        let dyn_ = BuiltinDynamics::AdditiveNoise { state_dim: 1, sigma: 1.0 }.build(TerminalCost::Quadratic, &sets, 4.0).unwrap();
        let space = SpaceGrid::new(vec![-1.0], vec![1.0], vec![21]).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10, 1).unwrap();
        assert!(matches!(solve(&dyn_, &space, &grid, ValueKind::Plus, &sets.u, &sets.v), Err(SolverError::CflViolation { .. })));
        let ok = cfl_time_grid(&dyn_, &space, &sets.u, &sets.v, 0.0, 1.0, 0.5).unwrap();
        assert!(ok.dt() <= 0.5 * 0.01);
        assert!(solve(&dyn_, &space, &ok, ValueKind::Plus, &sets.u, &sets.v).is_ok());
    }

    #[test]
    fn three_dimensions_are_rejected() {
        let sets = ControlSets::new(single(), single());
        let dyn_ = BuiltinDynamics::Frozen { state_dim: 3 }.build(TerminalCost::Abs, &sets, 1.0).unwrap();
        let space = SpaceGrid::new(vec![0.0; 3], vec![1.0; 3], vec![3; 3]).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 1, 1).unwrap();
        assert!(matches!(solve(&dyn_, &space, &grid, ValueKind::Plus, &sets.u, &sets.v), Err(SolverError::Dimension(_))));
    }

    #[test]
    fn non_dominant_correlation_is_rejected() {
        let sets = ControlSets::new(single(), single());
        // σ = [[1, 0], [1, 0]] gives S = [[1, 1], [1, 1]]; dominant only when dx = dy
        let dyn_ = GameDynamics::new(
            "corr",
            2,
            2,
            |_x: &[f64], _u: &[f64], _v: &[f64], o: &mut [f64]| o.fill(0.0),
            |_x: &[f64], _u: &[f64], _v: &[f64], o: &mut [f64]| o.copy_from_slice(&[1.0, 0.0, 1.0, 0.0]),
            |x: &[f64]| x[0] * x[1],
        )
        .unwrap();
        let square = SpaceGrid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![11, 11]).unwrap();
        assert!(check_cfl(&dyn_, &square, &sets.u, &sets.v, 0.5).is_ok());
        let skew = SpaceGrid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![11, 21]).unwrap();
        assert!(matches!(check_cfl(&dyn_, &skew, &sets.u, &sets.v, 0.5), Err(SolverError::NotDiagonallyDominant { .. })));
    }

    #[test]
    fn interpolation_is_exact_on_linear_data() {
        let space = SpaceGrid::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![5, 9]).unwrap();
        let f = |x: &[f64]| 2.0 * x[0] - 3.0 * x[1] + 0.5;
        let level: Vec<f64> = (0..space.n_nodes()).map(|p| f(&space.node_coords(p))).collect();
        let values = [level.clone(), level.iter().map(|v| v + 1.0).collect::<Vec<_>>()].concat();
        let vg = ValueGrid::new(space, vec![0.0, 1.0], values, ValueKind::Plus).unwrap();
        for x in [[0.13, 1.71], [-1.0, 0.0], [1.0, 2.0], [0.0, 0.3]] {
            assert!((vg.interpolate(0.0, &x).unwrap() - f(&x)).abs() < 1e-12);
            assert!((vg.interpolate(0.25, &x).unwrap() - f(&x) - 0.25).abs() < 1e-12);
        }
        assert!(matches!(vg.interpolate(0.0, &[1.5, 1.0]), Err(SolverError::OutOfBounds { .. })));
        assert!(matches!(vg.interpolate(2.0, &[0.0, 1.0]), Err(SolverError::OutOfBounds { .. })));
    }

    #[test]
    fn regularity_examples() {
        let sets = ControlSets::new(single(), single());
        let space = SpaceGrid::new(vec![-2.0], vec![2.0], vec![41]).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10, 1).unwrap();
        let frozen = BuiltinDynamics::Frozen { state_dim: 1 }.build(TerminalCost::Linear, &sets, 2.0).unwrap();
        let vg = solve(&frozen, &space, &grid, ValueKind::Plus, &sets.u, &sets.v).unwrap();
        let r = estimate_regularity(&vg).unwrap();
        assert!((r.spatial_lipschitz - 1.0).abs() < 1e-12);
        assert_eq!(r.temporal_holder, 0.0);
        let c = BuiltinDynamics::Frozen { state_dim: 1 }.build(TerminalCost::Constant { value: 5.0 }, &sets, 2.0).unwrap();
        let r = estimate_regularity(&solve(&c, &space, &grid, ValueKind::Plus, &sets.u, &sets.v).unwrap()).unwrap();
        assert_eq!((r.spatial_lipschitz, r.temporal_holder), (0.0, 0.0));
        let one = ValueGrid::new(space, vec![0.0], vec![0.0; 41], ValueKind::Plus).unwrap();
        assert!(estimate_regularity(&one).is_err());
    }

    #[test]
    fn compare_values_examples() {
        let u = discretize_interval(0.0, 1.0, 2).unwrap();
        let sets = ControlSets::new(u.clone(), u.clone());
        let dyn_ = BuiltinDynamics::MatrixGame { sigma: 0.0 }.build(TerminalCost::Linear, &sets, 2.0).unwrap();
        let space = SpaceGrid::new(vec![-2.0], vec![2.0], vec![41]).unwrap();
        let grid = cfl_time_grid(&dyn_, &space, &u, &u, 0.0, 0.5, 0.5).unwrap();
        let vp = solve(&dyn_, &space, &grid, ValueKind::Plus, &u, &u).unwrap();
        let vm = solve(&dyn_, &space, &grid, ValueKind::Minus, &u, &u).unwrap();
        let same = compare_values(&vp, &vp, 1e-9).unwrap();
        assert_eq!(same.min_difference, 0.0);
        assert!(same.identical);
        let r = compare_values(&vp, &vm, 1e-9).unwrap();
        assert!(!r.violated);
        assert!(r.max_difference > 0.0);
        // g(x) = x: V⁺ = x + (T - t), V⁻ = x
        assert!((r.max_difference - 0.5).abs() < 1e-9);
    }

    #[test]
    fn binary_round_trip() {
        let space = SpaceGrid::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![3, 4]).unwrap();
        let values: Vec<f64> = (0..24).map(|i| i as f64 * 0.5 - 3.0).collect();
        let vg = ValueGrid::new(space, vec![0.0, 0.5], values, ValueKind::Minus).unwrap();
        let mut buf = Vec::new();
        vg.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"SDGVALUE");
        assert_eq!(buf.len(), 8 + 16 + 8 + 2 * 8 + 4 * 8 + 2 * 8 + 24 * 8);
        let back = ValueGrid::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, vg);
        buf[0] = b'X';
        assert!(matches!(ValueGrid::read_binary(buf.as_slice()), Err(SolverError::Format(_))));
    }

    #[test]
    fn csv_layout() {
        let space = SpaceGrid::new(vec![0.0], vec![1.0], vec![3]).unwrap();
        let vg = ValueGrid::new(space, vec![0.0, 0.5, 1.0], (0..9).map(f64::from).collect(), ValueKind::Plus).unwrap();
        let csv = vg.to_csv(2);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "time,x_1,value");
        assert_eq!(lines.len(), 1 + 6);
        assert_eq!(lines[1], "0,0,0");
        assert_eq!(lines[6], "1,1,8");
    }
}

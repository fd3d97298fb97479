//! Controlled SDE `dX = b(X,u,v) dt + σ(X,u,v) dW`, its Euler–Maruyama
//! integration and the pathwise solution map of a Player-I strategy.
//!
//! Coefficients are time-independent. The pathwise map is the Euler
//! recursion driven by the realized controls and the realized noise, so the
//! state at step `k` is a deterministic function of the path prefixes
//! before `k`.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path_space::{BrownianPath, ControlPath, ControlSet, PathError, TimeGrid};
use crate::strategies::{DelayedStrategy, Side, StrategyError};

/// `(x, u, v, out)`: writes `b(x,u,v)` (length `N`) into `out`.
pub type DriftFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
/// `(x, u, v, out)`: writes `σ(x,u,v)` (`N × d`, row-major) into `out`.
pub type DiffusionFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
pub type CostFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },
    #[error("declared {which} constant {declared} violated: observed {observed} at x = {x:?}")]
    ConstantViolated { which: &'static str, declared: f64, observed: f64, x: Vec<f64> },
}

/// The two players' discretized control sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSets {
    pub u: ControlSet,
    pub v: ControlSet,
}

impl ControlSets {
    pub fn new(u: ControlSet, v: ControlSet) -> Self {
        Self { u, v }
    }
}

#[derive(Clone)]
pub struct GameDynamics {
    name: String,
    state_dim: usize,
    noise_dim: usize,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    terminal_cost: Arc<CostFn>,
    lip_const: f64,
    bound_const: f64,
    terminal_lip: f64,
}

impl fmt::Debug for GameDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameDynamics")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("lip_const", &self.lip_const)
            .field("bound_const", &self.bound_const)
            .field("terminal_lip", &self.terminal_lip)
            .finish()
    }
}

impl GameDynamics {
    /// Constants default to infinity (nothing declared).
    pub fn new<B, S, G>(
        name: impl Into<String>,
        state_dim: usize,
        noise_dim: usize,
        drift: B,
        diffusion: S,
        terminal_cost: G,
    ) -> Result<Self, DynamicsError>
    where
        B: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        S: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if state_dim == 0 || noise_dim == 0 {
            return Err(DynamicsError::Dimension(format!("state and noise dimensions must be positive, got N={state_dim}, d={noise_dim}")));
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            noise_dim,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            terminal_cost: Arc::new(terminal_cost),
            lip_const: f64::INFINITY,
            bound_const: f64::INFINITY,
            terminal_lip: f64::INFINITY,
        })
    }

    /// Declares the Lipschitz constant in `x` and the sup bound shared by
    /// drift and diffusion, plus the Lipschitz constant of the terminal cost.
    pub fn with_constants(mut self, lip_const: f64, bound_const: f64, terminal_lip: f64) -> Self {
        self.lip_const = lip_const;
        self.bound_const = bound_const;
        self.terminal_lip = terminal_lip;
        self
    }

    /// Same coefficients, different terminal cost.
    pub fn with_terminal_cost<G>(mut self, cost: G, terminal_lip: f64) -> Self
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.terminal_cost = Arc::new(cost);
        self.terminal_lip = terminal_lip;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn lip_const(&self) -> f64 {
        self.lip_const
    }

    pub fn bound_const(&self) -> f64 {
        self.bound_const
    }

    pub fn terminal_lip(&self) -> f64 {
        self.terminal_lip
    }

    pub fn drift_into(&self, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        (self.drift)(x, u, v, out)
    }

    pub fn diffusion_into(&self, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, u, v, out)
    }

    pub fn drift(&self, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.drift_into(x, u, v, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim * self.noise_dim];
        self.diffusion_into(x, u, v, &mut out);
        out
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.terminal_cost)(x)
    }

    /// One Euler–Maruyama step in place.
    pub fn euler_step(&self, x: &mut [f64], u: &[f64], v: &[f64], dw: &[f64], dt: f64, scratch: &mut Scratch) {
        let n = self.state_dim;
        let d = self.noise_dim;
        self.drift_into(x, u, v, &mut scratch.drift);
        self.diffusion_into(x, u, v, &mut scratch.diffusion);
        for i in 0..n {
            let mut noise = 0.0;
            for j in 0..d {
                noise += scratch.diffusion[i * d + j] * dw[j];
            }
            x[i] += scratch.drift[i] * dt + noise;
        }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch { drift: vec![0.0; self.state_dim], diffusion: vec![0.0; self.state_dim * self.noise_dim] }
    }

    /// Randomized spot check of the declared constants on the box
    /// `[-radius, radius]^N`: `samples` random pairs of states with random
    /// control pairs.
    pub fn check_declared_constants(&self, sets: &ControlSets, radius: f64, samples: usize, seed: u64) -> Result<(), DynamicsError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.state_dim;
        let slack = |c: f64| c * (1.0 + 1e-9) + 1e-12;
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
            let u = sets.u.point(rng.gen_range(0..sets.u.len()));
            let v = sets.v.point(rng.gen_range(0..sets.v.len()));
            let (bx, by) = (self.drift(&x, u, v), self.drift(&y, u, v));
            let (sx, sy) = (self.diffusion(&x, u, v), self.diffusion(&y, u, v));
            for (which, value) in [("bound (drift)", norm(&bx)), ("bound (diffusion)", norm(&sx))] {
                if !(value <= slack(self.bound_const)) {
                    return Err(DynamicsError::ConstantViolated { which, declared: self.bound_const, observed: value, x });
                }
            }
            let dist = dist(&x, &y);
            for (which, diff) in [("lipschitz (drift)", dist_v(&bx, &by)), ("lipschitz (diffusion)", dist_v(&sx, &sy))] {
                if !(diff <= slack(self.lip_const * dist)) {
                    return Err(DynamicsError::ConstantViolated { which, declared: self.lip_const, observed: diff / dist, x });
                }
            }
            let dg = (self.terminal_cost(&x) - self.terminal_cost(&y)).abs();
            if !(dg <= slack(self.terminal_lip * dist)) {
                return Err(DynamicsError::ConstantViolated {
                    which: "lipschitz (terminal cost)",
                    declared: self.terminal_lip,
                    observed: dg / dist,
                    x,
                });
            }
        }
        Ok(())
    }
}

/// Reusable buffers for [`GameDynamics::euler_step`].
#[derive(Debug, Clone)]
pub struct Scratch {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_v(a, b)
}

fn dist_v(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Trajectory on `n_steps + 1` grid times, `states[0] = x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
}

impl StatePath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.n_steps())
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Bitwise agreement of the states at steps `0..=upto`.
    pub fn agrees_upto(&self, other: &StatePath, upto: usize) -> bool {
        let end = (upto + 1).min(self.len()) * self.dim;
        self.dim == other.dim && self.states[..end].iter().zip(&other.states[..end]).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Columns: step, time, x_1..x_N.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time");
        for i in 0..self.dim {
            let _ = write!(out, ",x_{}", i + 1);
        }
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{},{}", k, self.grid.time(k));
            for x in self.state(k) {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

fn check_inputs(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    u: &ControlPath,
    v: &ControlPath,
    w: &BrownianPath,
) -> Result<(), DynamicsError> {
    if !u.grid().same_points(w.grid()) || !v.grid().same_points(w.grid()) {
        return Err(PathError::GridMismatch.into());
    }
    if x0.len() != dyn_.state_dim {
        return Err(DynamicsError::Dimension(format!("x0 has length {}, dynamics has N={}", x0.len(), dyn_.state_dim)));
    }
    if w.dim() != dyn_.noise_dim {
        return Err(DynamicsError::Dimension(format!("noise path has d={}, dynamics has d={}", w.dim(), dyn_.noise_dim)));
    }
    u.check_within(&sets.u)?;
    v.check_within(&sets.v)?;
    Ok(())
}

/// Explicit Euler–Maruyama:
/// `x[k+1] = x[k] + b(x[k],u[k],v[k]) dt + σ(x[k],u[k],v[k]) ΔW[k]`.
pub fn integrate(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    u: &ControlPath,
    v: &ControlPath,
    w: &BrownianPath,
) -> Result<StatePath, DynamicsError> {
    check_inputs(dyn_, sets, x0, u, v, w)?;
    let grid = *w.grid();
    let n = dyn_.state_dim;
    let dt = grid.dt();
    let mut states = Vec::with_capacity((grid.n_steps() + 1) * n);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut scratch = dyn_.scratch();
    for k in 0..grid.n_steps() {
        dyn_.euler_step(&mut x, sets.u.point(u.get(k)), sets.v.point(v.get(k)), w.increment(k), dt, &mut scratch);
        if x.iter().any(|c| !c.is_finite()) {
            return Err(DynamicsError::NonFinite { step: k + 1, time: grid.time(k + 1) });
        }
        states.extend_from_slice(&x);
    }
    Ok(StatePath { grid, dim: n, states })
}

/// Solution map `F(opponent, ω)` of a strategy: the strategy is replayed
/// block by block on the realized opponent control and noise, then the
/// resulting control pair is integrated. The step-`k` state only depends on
/// opponent and noise entries with index `< k`.
///
/// For a Player-I strategy `opponent` is `v`; for Player II it is `u`.
pub fn pathwise_map(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    strat: &DelayedStrategy,
    opponent: &ControlPath,
    w: &BrownianPath,
) -> Result<StatePath, DynamicsError> {
    let own = strat.apply(w, opponent)?;
    match strat.side() {
        Side::I => integrate(dyn_, sets, x0, &own, opponent, w),
        Side::II => integrate(dyn_, sets, x0, opponent, &own, w),
    }
}

/// Terminal costs of the bundled dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminalCost {
    /// `|x|²`
    Quadratic,
    /// Euclidean norm `|x|`
    Abs,
    /// `x_1`
    Linear,
    Constant {
        value: f64,
    },
    /// `min(|x|, cap)`, bounded by `cap`.
    Saturated {
        cap: f64,
    },
}

impl TerminalCost {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            TerminalCost::Quadratic => x.iter().map(|c| c * c).sum(),
            TerminalCost::Abs => norm(x),
            TerminalCost::Linear => x[0],
            TerminalCost::Constant { value } => value,
            TerminalCost::Saturated { cap } => norm(x).min(cap),
        }
    }

    /// Lipschitz constant on the box `[-radius, radius]^N`.
    pub fn lipschitz(&self, radius: f64, state_dim: usize) -> f64 {
        match self {
            TerminalCost::Quadratic => 2.0 * radius * (state_dim as f64).sqrt(),
            TerminalCost::Abs | TerminalCost::Linear | TerminalCost::Saturated { .. } => 1.0,
            TerminalCost::Constant { .. } => 0.0,
        }
    }
}

fn default_sigma() -> f64 {
    1.0
}

fn default_dim() -> usize {
    1
}

/// Named dynamics selectable from scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BuiltinDynamics {
    /// `b = 0`, `σ = 0`.
    Frozen {
        #[serde(default = "default_dim")]
        state_dim: usize,
    },
    /// `b = c`, `σ = 0`.
    ConstantDrift { drift: Vec<f64> },
    /// `b = 0`, `σ = sigma · I`.
    AdditiveNoise {
        #[serde(default = "default_dim")]
        state_dim: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// `b = u + v`, `σ = sigma · I`.
    Separated {
        #[serde(default = "default_dim")]
        state_dim: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// `b = a x`, `σ = s · diag(x)`.
    Geometric {
        #[serde(default = "default_dim")]
        state_dim: usize,
        a: f64,
        s: f64,
    },
    /// `b = u`, `σ = sigma · I`; only Player I acts.
    ControlledDrift {
        #[serde(default = "default_dim")]
        state_dim: usize,
        #[serde(default)]
        sigma: f64,
    },
    /// Scalar `b = (u - v)²`, `σ = sigma`. On `U = V = {0, 1}` the drift is
    /// the payoff matrix `[[0,1],[1,0]]`.
    MatrixGame {
        #[serde(default)]
        sigma: f64,
    },
    /// `b = -kappa x + u + v`, `σ = sigma · I`.
    MeanReverting {
        #[serde(default = "default_dim")]
        state_dim: usize,
        kappa: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

fn max_norm(set: &ControlSet) -> f64 {
    set.points().iter().map(|p| norm(p)).fold(0.0, f64::max)
}

fn identity_diffusion(n: usize, sigma: f64) -> impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync {
    move |_x, _u, _v, out| {
        out.fill(0.0);
        for i in 0..n {
            out[i * n + i] = sigma;
        }
    }
}

impl BuiltinDynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            BuiltinDynamics::Frozen { state_dim }
            | BuiltinDynamics::AdditiveNoise { state_dim, .. }
            | BuiltinDynamics::Separated { state_dim, .. }
            | BuiltinDynamics::Geometric { state_dim, .. }
            | BuiltinDynamics::ControlledDrift { state_dim, .. }
            | BuiltinDynamics::MeanReverting { state_dim, .. } => *state_dim,
            BuiltinDynamics::ConstantDrift { drift } => drift.len(),
            BuiltinDynamics::MatrixGame { .. } => 1,
        }
    }

    /// Builds the dynamics with constants valid on `[-radius, radius]^N` for
    /// the given control sets.
    pub fn build(&self, cost: TerminalCost, sets: &ControlSets, radius: f64) -> Result<GameDynamics, DynamicsError> {
        let n = self.state_dim();
        let name = self.name();
        let rn = radius * (n as f64).sqrt();
        let zero = |_x: &[f64], _u: &[f64], _v: &[f64], out: &mut [f64]| out.fill(0.0);
        let g = move |x: &[f64]| cost.eval(x);
        let lg = cost.lipschitz(radius, n);
        let need_controls = |dim_ok: bool| -> Result<(), DynamicsError> {
            if dim_ok {
                Ok(())
            } else {
                Err(DynamicsError::Dimension(format!("{name} needs control points of dimension {n}")))
            }
        };
        let dyn_ = match self.clone() {
            BuiltinDynamics::Frozen { .. } => GameDynamics::new(name, n, n, zero, zero, g)?.with_constants(0.0, 0.0, lg),
            BuiltinDynamics::ConstantDrift { drift } => {
                let bound = norm(&drift);
                GameDynamics::new(name, n, n, move |_x, _u, _v, out: &mut [f64]| out.copy_from_slice(&drift), zero, g)?
                    .with_constants(0.0, bound, lg)
            }
            BuiltinDynamics::AdditiveNoise { sigma, .. } => GameDynamics::new(name, n, n, zero, identity_diffusion(n, sigma), g)?
                .with_constants(0.0, sigma.abs() * (n as f64).sqrt(), lg),
            BuiltinDynamics::Separated { sigma, .. } => {
                need_controls(sets.u.ambient_dim() == n && sets.v.ambient_dim() == n)?;
                let bound = (max_norm(&sets.u) + max_norm(&sets.v)).max(sigma.abs() * (n as f64).sqrt());
                let drift = |_x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| {
                    for i in 0..out.len() {
                        out[i] = u[i] + v[i];
                    }
                };
                GameDynamics::new(name, n, n, drift, identity_diffusion(n, sigma), g)?.with_constants(0.0, bound, lg)
            }
            BuiltinDynamics::Geometric { a, s, .. } => {
                let drift = move |x: &[f64], _u: &[f64], _v: &[f64], out: &mut [f64]| {
                    for i in 0..out.len() {
                        out[i] = a * x[i];
                    }
                };
                let diffusion = move |x: &[f64], _u: &[f64], _v: &[f64], out: &mut [f64]| {
                    out.fill(0.0);
                    for i in 0..n {
                        out[i * n + i] = s * x[i];
                    }
                };
                let l = a.abs().max(s.abs());
                GameDynamics::new(name, n, n, drift, diffusion, g)?.with_constants(l, l * rn, lg)
            }
            BuiltinDynamics::ControlledDrift { sigma, .. } => {
                need_controls(sets.u.ambient_dim() == n)?;
                let bound = max_norm(&sets.u).max(sigma.abs() * (n as f64).sqrt());
                let drift = |_x: &[f64], u: &[f64], _v: &[f64], out: &mut [f64]| out.copy_from_slice(&u[..out.len()]);
                GameDynamics::new(name, n, n, drift, identity_diffusion(n, sigma), g)?.with_constants(0.0, bound, lg)
            }
            BuiltinDynamics::MatrixGame { sigma } => {
                let mut bound = sigma.abs();
                for u in sets.u.points() {
                    for v in sets.v.points() {
                        bound = bound.max((u[0] - v[0]).powi(2));
                    }
                }
                let drift = |_x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| {
                    let d = u[0] - v[0];
                    out[0] = d * d;
                };
                GameDynamics::new(name, 1, 1, drift, identity_diffusion(1, sigma), g)?.with_constants(0.0, bound, lg)
            }
            BuiltinDynamics::MeanReverting { kappa, sigma, .. } => {
                need_controls(sets.u.ambient_dim() == n && sets.v.ambient_dim() == n)?;
                let bound = (kappa.abs() * rn + max_norm(&sets.u) + max_norm(&sets.v)).max(sigma.abs() * (n as f64).sqrt());
                let drift = move |x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| {
                    for i in 0..out.len() {
                        out[i] = -kappa * x[i] + u[i] + v[i];
                    }
                };
                GameDynamics::new(name, n, n, drift, identity_diffusion(n, sigma), g)?.with_constants(kappa.abs(), bound, lg)
            }
        };
        Ok(dyn_)
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinDynamics::Frozen { .. } => "frozen",
            BuiltinDynamics::ConstantDrift { .. } => "constant-drift",
            BuiltinDynamics::AdditiveNoise { .. } => "additive-noise",
            BuiltinDynamics::Separated { .. } => "separated",
            BuiltinDynamics::Geometric { .. } => "geometric",
            BuiltinDynamics::ControlledDrift { .. } => "controlled-drift",
            BuiltinDynamics::MatrixGame { .. } => "matrix-game",
            BuiltinDynamics::MeanReverting { .. } => "mean-reverting",
        }
    }
}

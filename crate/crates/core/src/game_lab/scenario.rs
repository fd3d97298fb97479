//! Scenario files (JSON, `"schema": 1`). The layout is documented in
//! `docs/scenario-schema.md`; unknown fields are rejected and every
//! validation error names the offending field.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{grid_feedback_policy, LabError};
use crate::dynamics::{BuiltinDynamics, ControlSets, GameDynamics, TerminalCost};
use crate::hji_solver::{SolverOptions, SpaceGrid, ValueGrid};
use crate::path_space::{discretize_interval, ControlSet, TimeGrid};
use crate::strategies::{constant, copy_lagged, make_feedback_strategy, noise_switch, table, DelayedStrategy, Side};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub dynamics: BuiltinDynamics,
    pub terminal_cost: TerminalCost,
    pub x0: Vec<f64>,
    pub time: TimeSpec,
    pub controls: ControlsSpec,
    pub strategies: StrategiesSpec,
    pub monte_carlo: MonteCarloSpec,
    #[serde(default)]
    pub hji: Option<HjiSpec>,
    #[serde(default)]
    pub isaacs: Option<IsaacsSpec>,
    #[serde(default)]
    pub dpp: Option<DppSpec>,
    #[serde(default)]
    pub regularity: Option<RegularitySpec>,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub report: ReportSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub delay_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsSpec {
    pub u: ControlSetSpec,
    pub v: ControlSetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSetSpec {
    /// `count` evenly spaced scalars on `[lo, hi]`, endpoints included.
    Interval { lo: f64, hi: f64, count: usize },
    /// Explicit points, all of the same dimension.
    Points { points: Vec<Vec<f64>> },
    /// The single point `0 ∈ ℝ^dim`: the player has no choice.
    Idle {
        #[serde(default = "one")]
        dim: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategiesSpec {
    pub alpha: Vec<StrategySpec>,
    pub beta: Vec<StrategySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    /// Always the control with this index.
    Constant { index: usize },
    /// Block 0 plays `first`; block `k` replays the opponent's block `k - 1`
    /// step by step through `map` (opponent index -> own index).
    CopyLagged { first: usize, map: Vec<usize> },
    /// Pseudo-random function of the permitted history.
    Table { seed: u64 },
    /// `high` when the first coordinate of `W` at the block start is
    /// positive, `low` otherwise.
    NoiseSwitch { low: usize, high: usize },
    /// Optimal control of the solved HJI grid (`V⁺` for Player I, `V⁻` for
    /// Player II) at the state one delay back.
    Feedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub n_paths: usize,
    pub seed: u64,
    /// Compare the estimated upper value with `V⁺(t0, x0)` from the grid.
    #[serde(default)]
    pub compare_hji: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjiSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub dx: f64,
    #[serde(default = "default_c_cfl")]
    pub c_cfl: f64,
    /// Allowed `V⁻ - V⁺` excess.
    #[serde(default = "default_ordering_tolerance")]
    pub ordering_tolerance: f64,
    /// Require the two sweeps to be bit-identical.
    #[serde(default)]
    pub expect_identical: bool,
}

fn default_c_cfl() -> f64 {
    0.5
}

fn default_ordering_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsaacsSpec {
    #[serde(default = "default_queries")]
    pub queries: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_unit")]
    pub radius: f64,
    #[serde(default = "default_unit")]
    pub scale: f64,
    #[serde(default = "default_isaacs_tolerance")]
    pub tolerance: f64,
    /// Require `H⁺ = H⁻` within `tolerance` on every query.
    #[serde(default)]
    pub expect_equality: bool,
}

fn default_queries() -> usize {
    1000
}

fn default_unit() -> f64 {
    1.0
}

fn default_isaacs_tolerance() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppSpec {
    pub t1: f64,
    pub n_steps: usize,
    /// Also require both sides to agree within tolerance (no-control case).
    #[serde(default)]
    pub expect_equality: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularitySpec {
    /// Step of the common-noise difference quotient of `J`.
    #[serde(default = "default_h")]
    pub h: f64,
}

fn default_h() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub value: ClosedForm,
    /// Bound on the interior grid error.
    pub tolerance: f64,
    /// Nodes closer than this to the box boundary are not compared.
    #[serde(default)]
    pub interior_margin: f64,
    /// Also compare the Monte Carlo cost of the first strategy pair with the
    /// closed form at `(t0, x0)` (only meaningful when the value does not
    /// depend on the controls).
    #[serde(default)]
    pub monte_carlo: bool,
}

/// Closed-form value functions used as oracles; `τ = T - t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClosedForm {
    /// `V = g`.
    Terminal,
    /// `V = |x|² + N σ² τ`.
    QuadraticHeat { sigma: f64 },
    /// `V = max(|x| - speed · τ, 0)`.
    Eikonal { speed: f64 },
    /// `V = x_1 + rate · τ`.
    LinearDrift { rate: f64 },
}

impl ClosedForm {
    pub fn eval(&self, g: &TerminalCost, tau: f64, x: &[f64]) -> f64 {
        match *self {
            ClosedForm::Terminal => g.eval(x),
            ClosedForm::QuadraticHeat { sigma } => x.iter().map(|c| c * c).sum::<f64>() + x.len() as f64 * sigma * sigma * tau,
            ClosedForm::Eikonal { speed } => (x.iter().map(|c| c * c).sum::<f64>().sqrt() - speed * tau).max(0.0),
            ClosedForm::LinearDrift { rate } => x[0] + rate * tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Simulate,
    Fixpoint,
    SolveHji,
    CheckIsaacs,
    CheckDpp,
    Regularity,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Simulate, Stage::Fixpoint, Stage::SolveHji, Stage::CheckIsaacs, Stage::CheckDpp, Stage::Regularity];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Fixpoint => "fixpoint",
            Stage::SolveHji => "solve-hji",
            Stage::CheckIsaacs => "check-isaacs",
            Stage::CheckDpp => "check-dpp",
            Stage::Regularity => "regularity",
        }
    }

    fn needs_hji(&self) -> bool {
        matches!(self, Stage::SolveHji | Stage::CheckDpp | Stage::Regularity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    /// Every n-th time level goes into the value-grid CSVs.
    #[serde(default = "default_stride")]
    pub csv_level_stride: usize,
    /// Number of sample state paths written by `simulate`.
    #[serde(default = "default_sample_paths")]
    pub sample_paths: usize,
    /// Paths checked by `fixpoint`.
    #[serde(default = "default_fixpoint_paths")]
    pub fixpoint_paths: usize,
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self { csv_level_stride: default_stride(), sample_paths: default_sample_paths(), fixpoint_paths: default_fixpoint_paths() }
    }
}

fn default_stride() -> usize {
    10
}

fn default_sample_paths() -> usize {
    4
}

fn default_fixpoint_paths() -> usize {
    16
}

/// Dynamics, control sets and time grid built from a scenario.
#[derive(Debug, Clone)]
pub struct Setup {
    pub dynamics: GameDynamics,
    pub sets: ControlSets,
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
}

impl ControlSetSpec {
    pub fn build(&self) -> Result<ControlSet, crate::path_space::PathError> {
        match self {
            ControlSetSpec::Interval { lo, hi, count } => discretize_interval(*lo, *hi, *count),
            ControlSetSpec::Points { points } => ControlSet::new(points.clone()),
            ControlSetSpec::Idle { dim } => ControlSet::single(vec![0.0; *dim]),
        }
    }
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, LabError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            LabError::config(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|error| LabError::Io { path: path.display().to_string(), error })?;
        Self::from_json_str(&text)
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    /// Checks every cross-reference and range the types cannot express.
    pub fn validate(&self) -> Result<(), LabError> {
        fn err(path: impl Into<String>, message: impl Into<String>) -> LabError {
            LabError::config(path, message)
        }
        if self.schema != SCHEMA_VERSION {
            return Err(err("schema", format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(err("name", "use a non-empty name of letters, digits, '-' or '_'"));
        }
        let n = self.state_dim();
        if n == 0 {
            return Err(err("dynamics", "state dimension must be positive"));
        }
        if self.x0.len() != n {
            return Err(err("x0", format!("has {} entries, dynamics has N={n}", self.x0.len())));
        }
        if let Some(i) = self.x0.iter().position(|c| !c.is_finite()) {
            return Err(err(format!("x0[{i}]"), "must be finite"));
        }
        let t = &self.time;
        if !(t.t0.is_finite() && t.horizon.is_finite() && t.t0 < t.horizon) {
            return Err(err("time.horizon", format!("need t0 < horizon, got {} and {}", t.t0, t.horizon)));
        }
        if t.n_steps == 0 {
            return Err(err("time.n_steps", "must be positive"));
        }
        if t.delay_steps == 0 || !t.n_steps.is_multiple_of(t.delay_steps) {
            return Err(err("time.delay_steps", format!("must be positive and divide n_steps = {}", t.n_steps)));
        }
        let u = self.controls.u.build().map_err(|e| err("controls.u", e.to_string()))?;
        let v = self.controls.v.build().map_err(|e| err("controls.v", e.to_string()))?;
        let sets = ControlSets::new(u.clone(), v.clone());
        self.dynamics.build(self.terminal_cost, &sets, 1.0).map_err(|e| err("dynamics", e.to_string()))?;
        self.validate_family("strategies.alpha", &self.strategies.alpha, u.len(), v.len())?;
        self.validate_family("strategies.beta", &self.strategies.beta, v.len(), u.len())?;
        if self.monte_carlo.n_paths == 0 {
            return Err(err("monte_carlo.n_paths", "must be at least 1"));
        }
        if let Some(h) = &self.hji {
            if h.lo.len() != n || h.hi.len() != n {
                return Err(err("hji.lo", format!("lo and hi need N={n} entries")));
            }
            if n > 2 {
                return Err(err("hji", format!("the grid solver handles N <= 2, dynamics has N={n}")));
            }
            for i in 0..n {
                if !(h.lo[i] < h.hi[i]) {
                    return Err(err(format!("hji.hi[{i}]"), "must exceed lo"));
                }
                if !(h.lo[i] <= self.x0[i] && self.x0[i] <= h.hi[i]) {
                    return Err(err(format!("x0[{i}]"), "lies outside the HJI box"));
                }
            }
            if !(h.dx > 0.0) {
                return Err(err("hji.dx", "must be positive"));
            }
            self.space_grid(h.dx).map_err(|e| err("hji.dx", e.to_string()))?;
            if !(h.c_cfl > 0.0 && h.c_cfl <= 0.5) {
                return Err(err("hji.c_cfl", "must lie in (0, 0.5]"));
            }
            if !(h.ordering_tolerance >= 0.0) {
                return Err(err("hji.ordering_tolerance", "must be nonnegative"));
            }
        }
        if let Some(i) = &self.isaacs {
            if i.queries == 0 {
                return Err(err("isaacs.queries", "must be positive"));
            }
            if !(i.tolerance >= 0.0) {
                return Err(err("isaacs.tolerance", "must be nonnegative"));
            }
        }
        if let Some(d) = &self.dpp {
            if !(d.t1 > t.t0 && d.t1 <= t.horizon) {
                return Err(err("dpp.t1", format!("must lie in ({}, {}]", t.t0, t.horizon)));
            }
            if d.n_steps == 0 || d.n_steps % t.delay_steps != 0 {
                return Err(err("dpp.n_steps", format!("must be a positive multiple of time.delay_steps = {}", t.delay_steps)));
            }
        }
        if let Some(r) = &self.regularity {
            if !(r.h > 0.0 && r.h.is_finite()) {
                return Err(err("regularity.h", "must be positive"));
            }
        }
        if let Some(o) = &self.oracle {
            if !(o.tolerance >= 0.0) {
                return Err(err("oracle.tolerance", "must be nonnegative"));
            }
            if !(o.interior_margin >= 0.0) {
                return Err(err("oracle.interior_margin", "must be nonnegative"));
            }
        }
        if self.stages.is_empty() {
            return Err(err("stages", "list at least one stage"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.needs_hji() && self.hji.is_none() {
                return Err(err(format!("stages[{i}]"), format!("stage {} needs an `hji` section", s.name())));
            }
            if *s == Stage::CheckDpp && self.dpp.is_none() {
                return Err(err(format!("stages[{i}]"), "stage check-dpp needs a `dpp` section"));
            }
        }
        if self.report.csv_level_stride == 0 {
            return Err(err("report.csv_level_stride", "must be positive"));
        }
        if self.monte_carlo.compare_hji && self.hji.is_none() {
            return Err(err("monte_carlo.compare_hji", "needs an `hji` section"));
        }
        Ok(())
    }

    fn validate_family(&self, path: &str, family: &[StrategySpec], own: usize, opponent: usize) -> Result<(), LabError> {
        fn err(path: impl Into<String>, message: impl Into<String>) -> LabError {
            LabError::config(path, message)
        }
        if family.is_empty() {
            return Err(err(path, "list at least one strategy"));
        }
        for (i, s) in family.iter().enumerate() {
            let at = |field: &str| format!("{path}[{i}].{field}");
            match s {
                StrategySpec::Constant { index } if *index >= own => {
                    return Err(err(at("index"), format!("{index} is out of range for {own} controls")));
                }
                StrategySpec::CopyLagged { first, map } => {
                    if *first >= own {
                        return Err(err(at("first"), format!("{first} is out of range for {own} controls")));
                    }
                    if map.len() != opponent {
                        return Err(err(at("map"), format!("needs one entry per opponent control ({opponent})")));
                    }
                    if let Some(j) = map.iter().position(|&m| m >= own) {
                        return Err(err(format!("{path}[{i}].map[{j}]"), format!("out of range for {own} controls")));
                    }
                }
                StrategySpec::NoiseSwitch { low, high } => {
                    if *low >= own {
                        return Err(err(at("low"), format!("out of range for {own} controls")));
                    }
                    if *high >= own {
                        return Err(err(at("high"), format!("out of range for {own} controls")));
                    }
                }
                StrategySpec::Feedback if self.hji.is_none() => {
                    return Err(err(format!("{path}[{i}]"), "feedback strategies need an `hji` section"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn uses_feedback(&self) -> bool {
        self.strategies.alpha.iter().chain(&self.strategies.beta).any(|s| matches!(s, StrategySpec::Feedback))
    }

    /// Radius of the box the declared constants are valid on.
    pub fn radius(&self) -> f64 {
        let from_x0 = self.x0.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        match &self.hji {
            Some(h) => h.lo.iter().chain(&h.hi).fold(from_x0, |m, c| m.max(c.abs())),
            None => from_x0.max(1.0),
        }
    }

    pub fn setup(&self) -> Result<Setup, LabError> {
        let sets = ControlSets::new(self.controls.u.build()?, self.controls.v.build()?);
        let dynamics = self.dynamics.build(self.terminal_cost, &sets, self.radius())?;
        let grid = TimeGrid::new(self.time.t0, self.time.horizon, self.time.n_steps, self.time.delay_steps)?;
        Ok(Setup { dynamics, sets, grid, x0: self.x0.clone() })
    }

    pub fn space_grid(&self, dx: f64) -> Result<SpaceGrid, LabError> {
        let h = self.hji.as_ref().ok_or_else(|| LabError::config("hji", "section missing"))?;
        Ok(SpaceGrid::with_spacing(h.lo.clone(), h.hi.clone(), dx)?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions::with_c_cfl(self.hji.as_ref().map_or(0.5, |h| h.c_cfl))
    }

    /// Strategy family of one player. Feedback members need the grid of
    /// that player's value (`V⁺` for Player I, `V⁻` for Player II).
    pub fn family(&self, setup: &Setup, side: Side, grid: Option<&Arc<ValueGrid>>) -> Result<Vec<DelayedStrategy>, LabError> {
        let (specs, own) = match side {
            Side::I => (&self.strategies.alpha, setup.sets.u.len()),
            Side::II => (&self.strategies.beta, setup.sets.v.len()),
        };
        let delay = self.time.delay_steps;
        specs
            .iter()
            .map(|s| {
                Ok(match s {
                    StrategySpec::Constant { index } => constant(side, delay, own, *index)?,
                    StrategySpec::CopyLagged { first, map } => copy_lagged(side, delay, own, *first, map.clone())?,
                    StrategySpec::Table { seed } => table(side, delay, own, *seed)?,
                    StrategySpec::NoiseSwitch { low, high } => noise_switch(side, delay, own, *low, *high)?,
                    StrategySpec::Feedback => {
                        let vg = grid.ok_or_else(|| LabError::InvalidArgument("feedback strategy needs a value grid".into()))?;
                        let policy = grid_feedback_policy(&setup.dynamics, &setup.sets, vg.clone(), side);
                        make_feedback_strategy(&setup.dynamics, &setup.sets, &setup.x0, policy, side, delay)?
                    }
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "name": "mini",
        "dynamics": {"kind": "separated", "sigma": 0.5},
        "terminal_cost": {"kind": "quadratic"},
        "x0": [0.2],
        "time": {"horizon": 1.0, "n_steps": 8, "delay_steps": 2},
        "controls": {"u": {"kind": "interval", "lo": -1, "hi": 1, "count": 3}, "v": {"kind": "interval", "lo": -1, "hi": 1, "count": 3}},
        "strategies": {"alpha": [{"kind": "constant", "index": 1}], "beta": [{"kind": "copy-lagged", "first": 0, "map": [2, 1, 0]}]},
        "monte_carlo": {"n_paths": 10, "seed": 1},
        "stages": ["simulate", "fixpoint"]
    }"#;

    fn with(replace: &str, by: &str) -> Result<Scenario, LabError> {
        assert!(MINIMAL.contains(replace), "{replace}");
        Scenario::from_json_str(&MINIMAL.replace(replace, by))
    }

    fn field_of(r: Result<Scenario, LabError>) -> String {
        match r {
            Err(LabError::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scenario_parses() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(s.time.t0, 0.0);
        assert_eq!(s.report, ReportSpec::default());
        let setup = s.setup().unwrap();
        assert_eq!(setup.grid.n_steps(), 8);
        assert_eq!(s.family(&setup, Side::I, None).unwrap().len(), 1);
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of(with(r#""schema": 1"#, r#""schema": 2"#)), "schema");
        assert_eq!(field_of(with(r#""x0": [0.2]"#, r#""x0": [0.2, 1]"#)), "x0");
        assert_eq!(field_of(with(r#""n_paths": 10"#, r#""n_paths": 0"#)), "monte_carlo.n_paths");
        assert_eq!(field_of(with(r#""delay_steps": 2"#, r#""delay_steps": 3"#)), "time.delay_steps");
        assert_eq!(field_of(with(r#""index": 1"#, r#""index": 7"#)), "strategies.alpha[0].index");
        assert_eq!(field_of(with("[2, 1, 0]", "[2, 1, 5]")), "strategies.beta[0].map[2]");
        assert_eq!(field_of(with(r#""fixpoint""#, r#""check-dpp""#)), "stages[1]");
        assert_eq!(field_of(with(r#""sigma": 0.5"#, r#""sigma": 0.5, "colour": 1"#)), "dynamics");
        assert_eq!(field_of(with(r#""seed": 1"#, r#""seed": "one""#)), "monte_carlo.seed");
        assert_eq!(field_of(with(r#""count": 3}, "v""#, r#""count": 0}, "v""#)), "controls.u");
        assert!(matches!(Scenario::from_json_str("{"), Err(LabError::Config { .. })));
    }

    #[test]
    fn closed_forms() {
        let g = TerminalCost::Abs;
        assert_eq!(ClosedForm::Terminal.eval(&g, 3.0, &[-2.0]), 2.0);
        assert_eq!(
            ClosedForm::QuadraticHeat { sigma: 2f64.sqrt() }.eval(&g, 0.5, &[1.0]),
            1.0 + 2.0 * 0.5 * (2f64.sqrt() * 2f64.sqrt()) / 2.0
        );
        assert_eq!(ClosedForm::Eikonal { speed: 1.0 }.eval(&g, 0.5, &[0.25]), 0.0);
        assert_eq!(ClosedForm::Eikonal { speed: 1.0 }.eval(&g, 0.5, &[-2.0]), 1.5);
    }
}

//! Scenario runs: executes the requested stages, writes CSV/JSON artifacts
//! and a `summary.json` listing every check.
//!
//! Each check carries a violation measure `value` and a `tolerance`; it
//! passes iff `value <= tolerance`. The summary holds no timestamps or
//! timings, so equal inputs give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use super::scenario::{IsaacsSpec, Scenario, Setup, Stage};
use super::{
    calibrate_scheme_constant, check_subdpp, check_superdpp, cost_difference_quotient, noise_path, payoff_table, play, LabError,
    SchemeCalibration,
};
use crate::hamiltonian::{isaacs_gap, random_queries, saddle};
use crate::hji_solver::{cfl_time_grid_with, check_cfl_with, compare_values, estimate_regularity, solve_with, ValueGrid, ValueKind};
use crate::path_space::TimeGrid;
use crate::strategies::{fixed_point_ordered, DelayedStrategy, ResolutionOrder, Side};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Overrides `monte_carlo.seed`.
    pub seed: Option<u64>,
    /// Overrides `monte_carlo.n_paths`.
    pub n_paths: Option<usize>,
    /// Overrides the scenario's stage list.
    pub stages: Option<Vec<Stage>>,
    /// No progress lines on stderr.
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub schema: u32,
    pub seed: u64,
    pub n_paths: usize,
    pub stages: Vec<Stage>,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub results: BTreeMap<String, serde_json::Value>,
}

impl Summary {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<Summary, LabError> {
    run(&Scenario::load(path)?, opts)
}

/// Runs the stages and writes `summary.json` into `opts.out_dir`.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Summary, LabError> {
    let stages = opts.stages.clone().unwrap_or_else(|| scenario.stages.clone());
    let mut ctx = Context::new(scenario, opts)?;
    for stage in &stages {
        if !opts.quiet {
            eprintln!("[{}] {}", scenario.name, stage.name());
        }
        match stage {
            Stage::Simulate => ctx.simulate()?,
            Stage::Fixpoint => ctx.fixpoint()?,
            Stage::SolveHji => ctx.solve_hji()?,
            Stage::CheckIsaacs => ctx.check_isaacs()?,
            Stage::CheckDpp => ctx.check_dpp()?,
            Stage::Regularity => ctx.regularity()?,
        }
    }
    let summary = Summary {
        scenario: scenario.name.clone(),
        schema: scenario.schema,
        seed: ctx.seed,
        n_paths: ctx.n_paths,
        stages,
        passed: ctx.rec.checks.iter().all(|c| c.pass),
        checks: ctx.rec.checks,
        artifacts: ctx.rec.artifacts,
        results: ctx.results,
    };
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    write_file(&opts.out_dir, "summary.json", &text)?;
    if !opts.quiet {
        for c in &summary.checks {
            eprintln!(
                "[{}] {} {}: {:e} (tolerance {:e})",
                scenario.name,
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance
            );
        }
    }
    Ok(summary)
}

/// Value grid of one kind on the scenario's box and CFL time grid.
pub fn solve_value(scenario: &Scenario, kind: ValueKind) -> Result<ValueGrid, LabError> {
    let setup = scenario.setup()?;
    let h = scenario.hji.as_ref().ok_or_else(|| LabError::config("hji", "section missing"))?;
    solve_on(scenario, &setup, h.dx, kind)
}

fn solve_on(scenario: &Scenario, setup: &Setup, dx: f64, kind: ValueKind) -> Result<ValueGrid, LabError> {
    let space = scenario.space_grid(dx)?;
    let opts = scenario.solver_options();
    let (u, v) = (&setup.sets.u, &setup.sets.v);
    let grid = cfl_time_grid_with(&setup.dynamics, &space, u, v, scenario.time.t0, scenario.time.horizon, &opts)?;
    Ok(solve_with(&setup.dynamics, &space, &grid, kind, u, v, &opts)?)
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), LabError> {
    let io = |path: &Path, error| LabError::Io { path: path.display().to_string(), error };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io(&path, e))
}

struct Record {
    out: PathBuf,
    checks: Vec<Check>,
    artifacts: Vec<String>,
}

impl Record {
    fn check(&mut self, name: &str, value: f64, tolerance: f64) {
        // NaN never passes
        let pass = value <= tolerance;
        self.checks.push(Check { name: name.to_string(), value, tolerance, pass });
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), LabError> {
        write_file(&self.out, name, contents)?;
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        Ok(())
    }
}

struct Context<'a> {
    scenario: &'a Scenario,
    setup: Setup,
    seed: u64,
    n_paths: usize,
    rec: Record,
    plus: Option<Arc<ValueGrid>>,
    minus: Option<Arc<ValueGrid>>,
    families: Option<(Vec<DelayedStrategy>, Vec<DelayedStrategy>)>,
    calibration: Option<SchemeCalibration>,
    results: BTreeMap<String, serde_json::Value>,
}

impl<'a> Context<'a> {
    fn new(scenario: &'a Scenario, opts: &RunOptions) -> Result<Self, LabError> {
        let n_paths = opts.n_paths.unwrap_or(scenario.monte_carlo.n_paths);
        if n_paths == 0 {
            return Err(LabError::config("monte_carlo.n_paths", "must be at least 1"));
        }
        if let Some(stages) = &opts.stages {
            for s in stages {
                if matches!(s, Stage::SolveHji | Stage::CheckDpp | Stage::Regularity) && scenario.hji.is_none() {
                    return Err(LabError::config("hji", format!("stage {} needs an `hji` section", s.name())));
                }
                if *s == Stage::CheckDpp && scenario.dpp.is_none() {
                    return Err(LabError::config("dpp", "stage check-dpp needs a `dpp` section"));
                }
            }
        }
        Ok(Self {
            scenario,
            setup: scenario.setup()?,
            seed: opts.seed.unwrap_or(scenario.monte_carlo.seed),
            n_paths,
            rec: Record { out: opts.out_dir.clone(), checks: Vec::new(), artifacts: Vec::new() },
            plus: None,
            minus: None,
            families: None,
            calibration: None,
            results: BTreeMap::new(),
        })
    }

    fn value(&mut self, kind: ValueKind) -> Result<Arc<ValueGrid>, LabError> {
        let slot = match kind {
            ValueKind::Plus => &self.plus,
            ValueKind::Minus => &self.minus,
        };
        if let Some(vg) = slot {
            return Ok(vg.clone());
        }
        let h = self.scenario.hji.as_ref().ok_or_else(|| LabError::config("hji", "section missing"))?;
        let vg = Arc::new(solve_on(self.scenario, &self.setup, h.dx, kind)?);
        match kind {
            ValueKind::Plus => self.plus = Some(vg.clone()),
            ValueKind::Minus => self.minus = Some(vg.clone()),
        }
        Ok(vg)
    }

    fn families(&mut self) -> Result<(Vec<DelayedStrategy>, Vec<DelayedStrategy>), LabError> {
        if let Some(f) = &self.families {
            return Ok(f.clone());
        }
        let (plus, minus) = if self.scenario.uses_feedback() {
            (Some(self.value(ValueKind::Plus)?), Some(self.value(ValueKind::Minus)?))
        } else {
            (None, None)
        };
        let alphas = self.scenario.family(&self.setup, Side::I, plus.as_ref())?;
        let betas = self.scenario.family(&self.setup, Side::II, minus.as_ref())?;
        self.families = Some((alphas.clone(), betas.clone()));
        Ok((alphas, betas))
    }

    fn calibration(&mut self) -> Result<SchemeCalibration, LabError> {
        if let Some(c) = &self.calibration {
            return Ok(c.clone());
        }
        let h = self.scenario.hji.as_ref().ok_or_else(|| LabError::config("hji", "section missing"))?;
        let space = self.scenario.space_grid(h.dx)?;
        let opts = self.scenario.solver_options();
        let info = check_cfl_with(&self.setup.dynamics, &space, &self.setup.sets.u, &self.setup.sets.v, &opts)?;
        let duration = self.scenario.time.horizon - self.scenario.time.t0;
        let c = calibrate_scheme_constant(&space, duration, &info.viscosity, opts.c_cfl)?;
        self.calibration = Some(c.clone());
        Ok(c)
    }

    /// `C · (dx + sqrt(dt))` at the resolution of the scenario's own solve.
    fn scheme_tolerance(&mut self) -> Result<(f64, SchemeCalibration), LabError> {
        let c = self.calibration()?;
        let vg = self.value(ValueKind::Plus)?;
        let dx = vg.space().spacings().into_iter().fold(0.0, f64::max);
        let dt = vg.times()[1] - vg.times()[0];
        Ok((c.tolerance(dx, dt), c))
    }

    fn simulate(&mut self) -> Result<(), LabError> {
        let (alphas, betas) = self.families()?;
        let s = &self.setup;
        let table = payoff_table(&s.dynamics, &s.sets, &s.x0, &s.grid, &alphas, &betas, self.n_paths, self.seed)?;
        let (upper, lower, cost) = (table.upper(), table.lower(), table.entry(0, 0));
        self.rec.write("payoff_table.csv", table.to_csv())?;

        let mut csv = String::from("path,step,time");
        for i in 0..s.dynamics.state_dim() {
            let _ = write!(csv, ",x_{}", i + 1);
        }
        csv.push('\n');
        for i in 0..self.scenario.report.sample_paths.min(self.n_paths) {
            let w = noise_path(&s.grid, s.dynamics.noise_dim(), self.seed, i)?;
            let path = play(&s.dynamics, &s.sets, &s.x0, &alphas[0], &betas[0], &w)?;
            for k in 0..path.len() {
                let _ = write!(csv, "{i},{k},{}", s.grid.time(k));
                for c in path.state(k) {
                    let _ = write!(csv, ",{c}");
                }
                csv.push('\n');
            }
        }
        self.rec.write("paths.csv", csv)?;

        self.rec.check(
            "simulate/value-ordering",
            lower.estimate.mean - upper.estimate.mean,
            3.0 * (lower.estimate.std_error + upper.estimate.std_error),
        );
        let mut details = json!({ "cost": cost, "upper": upper, "lower": lower });
        if let Some(o) = self.scenario.oracle.filter(|o| o.monte_carlo) {
            let tau = self.scenario.time.horizon - self.scenario.time.t0;
            let exact = o.value.eval(&self.scenario.terminal_cost, tau, &s.x0);
            details["oracle_cost"] = json!(exact);
            self.rec.check("simulate/oracle-cost", (cost.mean - exact).abs(), 3.0 * cost.std_error);
        }
        if self.scenario.monte_carlo.compare_hji {
            let vplus = self.value(ValueKind::Plus)?.interpolate(self.scenario.time.t0, &self.setup.x0)?;
            let (scheme, calibration) = self.scheme_tolerance()?;
            details["hji_vplus"] = json!(vplus);
            details["scheme_tolerance"] = json!(scheme);
            details["calibration"] = json!(calibration);
            self.rec.check("simulate/upper-vs-hji", (upper.estimate.mean - vplus).abs(), 3.0 * upper.estimate.std_error + scheme);
        }
        self.results.insert("simulate".into(), details);
        Ok(())
    }

    fn fixpoint(&mut self) -> Result<(), LabError> {
        let (alphas, betas) = self.families()?;
        let s = &self.setup;
        let n = self.scenario.report.fixpoint_paths.min(self.n_paths);
        let mut mismatches = 0usize;
        let mut checked = 0usize;
        let mut first = None;
        for i in 0..n {
            let w = noise_path(&s.grid, s.dynamics.noise_dim(), self.seed, i)?;
            for a in &alphas {
                for b in &betas {
                    let p = fixed_point_ordered(a, b, &w, ResolutionOrder::AlphaFirst)?;
                    let q = fixed_point_ordered(a, b, &w, ResolutionOrder::BetaFirst)?;
                    mismatches += usize::from(p != q);
                    mismatches += usize::from(a.apply(&w, &p.v)? != p.u);
                    mismatches += usize::from(b.apply(&w, &p.u)? != p.v);
                    checked += 1;
                    first.get_or_insert(p);
                }
            }
        }
        if let Some(p) = first {
            self.rec.write("controls.csv", p.to_csv())?;
        }
        self.rec.check("fixpoint/replay", mismatches as f64, 0.0);
        self.results.insert("fixpoint".into(), json!({ "pairs_checked": checked, "mismatches": mismatches }));
        Ok(())
    }

    fn solve_hji(&mut self) -> Result<(), LabError> {
        let plus = self.value(ValueKind::Plus)?;
        let minus = self.value(ValueKind::Minus)?;
        let stride = self.scenario.report.csv_level_stride;
        self.rec.write("vplus.csv", plus.to_csv(stride))?;
        self.rec.write("vminus.csv", minus.to_csv(stride))?;
        for (name, vg) in [("vplus.bin", &plus), ("vminus.bin", &minus)] {
            let mut buf = Vec::new();
            vg.write_binary(&mut buf).map_err(|error| LabError::Io { path: name.into(), error })?;
            self.rec.write(name, buf)?;
        }
        let h = self.scenario.hji.clone().expect("validated");
        let ordering = compare_values(&plus, &minus, h.ordering_tolerance)?;
        self.rec.check("solve-hji/ordering", -ordering.min_difference, h.ordering_tolerance);
        if h.expect_identical {
            self.rec.check("solve-hji/bit-identical", if ordering.identical { 0.0 } else { 1.0 }, 0.0);
        }
        let t0 = self.scenario.time.t0;
        let mut details = json!({
            "vplus_at_x0": plus.interpolate(t0, &self.setup.x0)?,
            "vminus_at_x0": minus.interpolate(t0, &self.setup.x0)?,
            "dt": plus.times()[1] - plus.times()[0],
            "levels": plus.n_levels(),
            "nodes_per_dim": plus.space().nodes_per_dim(),
            "ordering": ordering,
        });
        if let Some(o) = self.scenario.oracle {
            for (label, vg) in [("plus", &plus), ("minus", &minus)] {
                let err = oracle_error(self.scenario, vg, o.value, o.interior_margin);
                details[format!("oracle_error_{label}")] = json!(err);
                self.rec.check(&format!("solve-hji/oracle-{label}"), err, o.tolerance);
            }
        }
        self.results.insert("solve-hji".into(), details);
        Ok(())
    }

    fn check_isaacs(&mut self) -> Result<(), LabError> {
        let spec = self.scenario.isaacs.unwrap_or(IsaacsSpec {
            queries: 1000,
            seed: 0,
            radius: 1.0,
            scale: 1.0,
            tolerance: 1e-12,
            expect_equality: false,
        });
        let s = &self.setup;
        let queries = random_queries(s.dynamics.state_dim(), spec.queries, spec.radius, spec.scale, spec.seed);
        let report = isaacs_gap(&s.dynamics, &queries, &s.sets.u, &s.sets.v, spec.tolerance)?;
        let mut min_gap = f64::INFINITY;
        for q in &queries {
            min_gap = min_gap.min(saddle(&s.dynamics, q, &s.sets.u, &s.sets.v)?.gap);
        }
        self.rec.check("check-isaacs/weak-duality", -min_gap, 1e-12);
        if spec.expect_equality {
            self.rec.check("check-isaacs/equality", report.max_gap, spec.tolerance);
        }
        self.results.insert("check-isaacs".into(), json!({ "min_gap": min_gap, "report": report }));
        Ok(())
    }

    fn check_dpp(&mut self) -> Result<(), LabError> {
        let d = self.scenario.dpp.expect("validated");
        let (alphas, betas) = self.families()?;
        let plus = self.value(ValueKind::Plus)?;
        let minus = self.value(ValueKind::Minus)?;
        let (scheme, calibration) = self.scheme_tolerance()?;
        let s = &self.setup;
        let sub_grid = TimeGrid::new(self.scenario.time.t0, d.t1, d.n_steps, self.scenario.time.delay_steps)?;
        let sub = check_subdpp(&s.dynamics, &s.sets, &s.x0, &sub_grid, &plus, &alphas, &betas, self.n_paths, self.seed, scheme)?;
        let sup = check_superdpp(&s.dynamics, &s.sets, &s.x0, &sub_grid, &minus, &alphas, &betas, self.n_paths, self.seed, scheme)?;
        self.rec.check("check-dpp/sub", -sub.margin, sub.tolerance);
        self.rec.check("check-dpp/super", -sup.margin, sup.tolerance);
        if d.expect_equality {
            self.rec.check("check-dpp/equality-plus", sub.margin.abs(), sub.tolerance);
            self.rec.check("check-dpp/equality-minus", sup.margin.abs(), sup.tolerance);
        }
        self.results.insert("check-dpp".into(), json!({ "sub": sub, "super": sup, "calibration": calibration }));
        Ok(())
    }

    fn regularity(&mut self) -> Result<(), LabError> {
        let h = self.scenario.hji.clone().expect("validated");
        let step = self.scenario.regularity.map_or(1e-2, |r| r.h);
        let tau = self.scenario.time.horizon - self.scenario.time.t0;
        let dyn_ = &self.setup.dynamics;
        let bound = dyn_.terminal_lip() * (dyn_.lip_const() * tau).exp();
        let mut details = serde_json::Map::new();
        details.insert("lipschitz_bound".into(), json!(bound));
        for (label, kind) in [("plus", ValueKind::Plus), ("minus", ValueKind::Minus)] {
            let coarse = estimate_regularity(&*self.value(kind)?)?;
            let fine = estimate_regularity(&solve_on(self.scenario, &self.setup, 0.5 * h.dx, kind)?)?;
            let ratio = if coarse.temporal_holder == 0.0 && fine.temporal_holder == 0.0 {
                1.0
            } else {
                fine.temporal_holder / coarse.temporal_holder
            };
            self.rec.check(&format!("regularity/spatial-{label}"), coarse.spatial_lipschitz, 1.1 * bound);
            self.rec.check(&format!("regularity/spatial-{label}-refined"), fine.spatial_lipschitz, 1.1 * bound);
            // ratio within [0.5, 2]
            self.rec.check(&format!("regularity/holder-ratio-{label}"), ratio.log2().abs(), 1.0);
            details.insert(label.into(), json!({ "coarse": coarse, "refined": fine, "holder_ratio": ratio }));
        }
        let (alphas, betas) = self.families()?;
        let s = &self.setup;
        let q = cost_difference_quotient(&s.dynamics, &s.sets, &s.x0, 0, step, &alphas[0], &betas[0], &s.grid, self.n_paths, self.seed)?;
        self.rec.check("regularity/cost-lipschitz", q.mean.abs(), 1.1 * bound + 3.0 * q.std_error);
        details.insert("cost_quotient".into(), json!(q));
        self.results.insert("regularity".into(), serde_json::Value::Object(details));
        Ok(())
    }
}

/// Largest `|V - closed form|` over levels and nodes at least `margin`
/// away from the box boundary.
pub fn oracle_error(scenario: &Scenario, vg: &ValueGrid, value: super::scenario::ClosedForm, margin: f64) -> f64 {
    let space = vg.space();
    let nodes: Vec<(usize, Vec<f64>)> =
        (0..space.n_nodes()).map(|p| (p, space.node_coords(p))).filter(|(_, x)| space.distance_to_boundary(x) >= margin - 1e-9).collect();
    let mut err = 0.0f64;
    for k in 0..vg.n_levels() {
        let tau = scenario.time.horizon - vg.times()[k];
        let level = vg.level(k);
        for (p, x) in &nodes {
            err = err.max((level[*p] - value.eval(&scenario.terminal_cost, tau, x)).abs());
        }
    }
    err
}

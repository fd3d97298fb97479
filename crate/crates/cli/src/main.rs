//! `sdgame`: runs game scenarios from JSON files.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on
//! configuration or I/O errors.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sdgame_core::game_lab::run::{run, solve_value, RunOptions, Summary};
use sdgame_core::game_lab::scenario::{Scenario, Stage};
use sdgame_core::hji_solver::ValueKind;

#[derive(Parser)]
#[command(name = "sdgame", version, about = "Zero-sum stochastic differential games: Monte Carlo, HJI grids and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate costs and upper/lower values over the strategy families.
    Simulate(Common),
    /// Resolve strategy pairs and verify the fixed point replays.
    Fixpoint(Common),
    /// Solve one value grid and export it (CSV, or binary for `.bin`).
    SolveHji {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Kind::Plus)]
        kind: Kind,
        /// Output file; defaults to `<out-dir>/v<kind>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare H+ and H- on random queries.
    CheckIsaacs(Common),
    /// Sub/super dynamic programming checks.
    CheckDpp(Common),
    /// Lipschitz and Hölder estimates.
    Regularity(Common),
    /// Every stage listed in the scenario.
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides `monte_carlo.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides `monte_carlo.n_paths`.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Plus,
    Minus,
}

impl Common {
    fn options(&self, stages: Option<Vec<Stage>>) -> RunOptions {
        RunOptions { out_dir: self.out_dir.clone(), seed: self.seed, n_paths: self.paths, stages, quiet: self.quiet }
    }

    fn load(&self) -> Result<Scenario> {
        Scenario::load(&self.scenario).with_context(|| format!("loading {}", self.scenario.display()))
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    let (common, stage) = match cli.command {
        Command::SolveHji { common, kind, out } => return solve_hji(&common, kind, out),
        Command::Run(c) => return report(&c, None, run(&c.load()?, &c.options(None))?),
        Command::Simulate(c) => (c, Stage::Simulate),
        Command::Fixpoint(c) => (c, Stage::Fixpoint),
        Command::CheckIsaacs(c) => (c, Stage::CheckIsaacs),
        Command::CheckDpp(c) => (c, Stage::CheckDpp),
        Command::Regularity(c) => (c, Stage::Regularity),
    };
    let summary = run(&common.load()?, &common.options(Some(vec![stage])))?;
    report(&common, Some(stage), summary)
}

/// Prints the stage's results as JSON on stdout.
fn report(common: &Common, stage: Option<Stage>, summary: Summary) -> Result<bool> {
    let out = match stage {
        Some(s) => summary.results.get(s.name()).cloned().unwrap_or_default(),
        None => serde_json::json!({
            "summary": common.out_dir.join("summary.json"),
            "passed": summary.passed,
            "failed": summary.failed_checks().map(|c| c.name.as_str()).collect::<Vec<_>>(),
        }),
    };
    // a closed pipe (`| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&out)?);
    Ok(summary.passed)
}

fn solve_hji(common: &Common, kind: Kind, out: Option<PathBuf>) -> Result<bool> {
    let scenario = common.load()?;
    let (kind, name) = match kind {
        Kind::Plus => (ValueKind::Plus, "vplus.csv"),
        Kind::Minus => (ValueKind::Minus, "vminus.csv"),
    };
    let vg = solve_value(&scenario, kind)?;
    let path = out.unwrap_or_else(|| common.out_dir.join(name));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_grid(&vg, &path, scenario.report.csv_level_stride)?;
    if !common.quiet {
        eprintln!("wrote {} ({} levels, {} nodes)", path.display(), vg.n_levels(), vg.space().n_nodes());
    }
    Ok(true)
}

fn write_grid(vg: &sdgame_core::hji_solver::ValueGrid, path: &Path, stride: usize) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    if path.extension().is_some_and(|e| e == "bin") {
        let file = std::fs::File::create(path).with_context(ctx)?;
        vg.write_binary(std::io::BufWriter::new(file)).with_context(ctx)
    } else {
        std::fs::write(path, vg.to_csv(stride)).with_context(ctx)
    }
}

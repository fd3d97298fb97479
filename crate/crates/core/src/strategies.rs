//! Nonanticipative strategies with delay and the block-induction fixed point.
//!
//! A strategy answers one delay block at a time. For block `k` it sees the
//! noise increments and the opponent's controls through guarded views whose
//! permitted prefix is the steps `< k·δ`; every read is recorded and a read at
//! or beyond the limit is reported as a delay violation. Block 0 therefore
//! cannot depend on anything.

use std::cell::Cell;
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ControlSets, GameDynamics};
use crate::path_space::{BrownianPath, ControlPath, PathError, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Minimizer, plays `u`.
    I,
    /// Maximizer, plays `v`.
    II,
}

impl Side {
    pub fn opponent(self) -> Side {
        match self {
            Side::I => Side::II,
            Side::II => Side::I,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Source {
    Noise,
    Opponent,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("{side:?} strategy read {channel:?} step {read_step} in block {block}, only steps < {limit} are permitted")]
    DelayViolation { side: Side, block: usize, channel: Source, read_step: usize, limit: usize },
    #[error("strategy returned {got} controls for block {block}, expected {expected}")]
    BlockLength { block: usize, got: usize, expected: usize },
    #[error("strategy returned control index {index} but its set has {len} points")]
    ControlIndex { index: usize, len: usize },
    #[error("expected a Player {expected:?} strategy, got Player {got:?}")]
    WrongSide { expected: Side, got: Side },
    #[error("delay {delay} cannot be re-blocked to {target} steps")]
    IncompatibleDelays { delay: usize, target: usize },
    #[error("{0}")]
    Policy(String),
}

/// Prefix-guarded read access to the noise path.
pub struct NoiseView<'a> {
    path: &'a BrownianPath,
    limit: usize,
    max_read: Cell<Option<usize>>,
}

impl<'a> NoiseView<'a> {
    fn new(path: &'a BrownianPath, limit: usize) -> Self {
        Self { path, limit, max_read: Cell::new(None) }
    }

    fn record(&self, k: usize) {
        if self.max_read.get().is_none_or(|m| k > m) {
            self.max_read.set(Some(k));
        }
    }

    /// Steps `< limit` may be read.
    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.path.grid()
    }

    pub fn increment(&self, k: usize) -> Option<&'a [f64]> {
        self.record(k);
        (k < self.path.n_steps()).then(|| self.path.increment(k))
    }

    /// `W(t_k) - W(t0)`, which reads the increments before `k`.
    pub fn value_at(&self, k: usize) -> Option<Vec<f64>> {
        if k == 0 {
            return Some(vec![0.0; self.dim()]);
        }
        self.record(k - 1);
        (k <= self.path.n_steps()).then(|| self.path.value_at(k))
    }

    /// All permitted increments, flattened.
    pub fn permitted(&self) -> &'a [f64] {
        if self.limit > 0 {
            self.record(self.limit - 1);
        }
        &self.path.increments()[..self.limit * self.dim()]
    }

    fn narrowed(&self, limit: usize) -> NoiseView<'a> {
        NoiseView::new(self.path, limit.min(self.limit))
    }

    fn absorb(&self, inner: &NoiseView<'_>) {
        if let Some(k) = inner.max_read.get() {
            self.record(k);
        }
    }
}

/// Prefix-guarded read access to the opponent's realized controls.
pub struct ControlView<'a> {
    indices: &'a [usize],
    limit: usize,
    max_read: Cell<Option<usize>>,
}

impl<'a> ControlView<'a> {
    fn new(indices: &'a [usize], limit: usize) -> Self {
        Self { indices, limit, max_read: Cell::new(None) }
    }

    fn record(&self, k: usize) {
        if self.max_read.get().is_none_or(|m| k > m) {
            self.max_read.set(Some(k));
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// `None` when the step has not been played yet.
    pub fn get(&self, k: usize) -> Option<usize> {
        self.record(k);
        self.indices.get(k).copied()
    }

    pub fn permitted(&self) -> &'a [usize] {
        if self.limit > 0 {
            self.record(self.limit - 1);
        }
        &self.indices[..self.limit.min(self.indices.len())]
    }

    fn narrowed(&self, limit: usize) -> ControlView<'a> {
        ControlView::new(self.indices, limit.min(self.limit))
    }

    fn absorb(&self, inner: &ControlView<'_>) {
        if let Some(k) = inner.max_read.get() {
            self.record(k);
        }
    }
}

/// The block being answered: steps `start..start + len` of `grid`.
#[derive(Debug, Clone, Copy)]
pub struct Block {
    pub index: usize,
    pub start: usize,
    pub len: usize,
    pub grid: TimeGrid,
}

pub type RespondFn = dyn Fn(&NoiseView<'_>, &ControlView<'_>, &Block) -> Result<Vec<usize>, StrategyError> + Send + Sync;

#[derive(Clone)]
pub struct DelayedStrategy {
    side: Side,
    delay_steps: usize,
    n_controls: usize,
    label: String,
    respond: Arc<RespondFn>,
}

impl fmt::Debug for DelayedStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayedStrategy")
            .field("label", &self.label)
            .field("side", &self.side)
            .field("delay_steps", &self.delay_steps)
            .field("n_controls", &self.n_controls)
            .finish()
    }
}

/// Outcome of answering one block, with the largest indices read.
struct BlockAnswer {
    controls: Vec<usize>,
    noise_read: Option<usize>,
    opponent_read: Option<usize>,
}

impl DelayedStrategy {
    /// `respond` must return `block.len` indices into a set of `n_controls`
    /// points and be a pure function of what it reads.
    pub fn new<F>(side: Side, delay_steps: usize, n_controls: usize, label: impl Into<String>, respond: F) -> Result<Self, StrategyError>
    where
        F: Fn(&NoiseView<'_>, &ControlView<'_>, &Block) -> Result<Vec<usize>, StrategyError> + Send + Sync + 'static,
    {
        if delay_steps == 0 {
            return Err(PathError::InvalidGrid("delay_steps must be positive".into()).into());
        }
        if n_controls == 0 {
            return Err(StrategyError::ControlIndex { index: 0, len: 0 });
        }
        Ok(Self { side, delay_steps, n_controls, label: label.into(), respond: Arc::new(respond) })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn answer(&self, w: &BrownianPath, opponent: &[usize], block: usize) -> Result<BlockAnswer, StrategyError> {
        let grid = *w.grid();
        let start = block * self.delay_steps;
        let len = self.delay_steps.min(grid.n_steps() - start);
        let noise = NoiseView::new(w, start);
        let opp = ControlView::new(opponent, start);
        let controls = (self.respond)(&noise, &opp, &Block { index: block, start, len, grid })?;
        if controls.len() != len {
            return Err(StrategyError::BlockLength { block, got: controls.len(), expected: len });
        }
        if let Some(&index) = controls.iter().find(|&&i| i >= self.n_controls) {
            return Err(StrategyError::ControlIndex { index, len: self.n_controls });
        }
        Ok(BlockAnswer { controls, noise_read: noise.max_read.get(), opponent_read: opp.max_read.get() })
    }

    /// Controls for block `block`, failing if the strategy read outside its
    /// permitted prefix. `opponent` holds the opponent's controls known so far.
    pub fn respond_block(&self, w: &BrownianPath, opponent: &[usize], block: usize) -> Result<Vec<usize>, StrategyError> {
        let ans = self.answer(w, opponent, block)?;
        let limit = block * self.delay_steps;
        for (channel, read) in [(Source::Noise, ans.noise_read), (Source::Opponent, ans.opponent_read)] {
            if let Some(read_step) = read.filter(|&r| r >= limit) {
                return Err(StrategyError::DelayViolation { side: self.side, block, channel, read_step, limit });
            }
        }
        Ok(ans.controls)
    }

    /// The strategy as a map `(ω, opponent) ↦ own control path`.
    pub fn apply(&self, w: &BrownianPath, opponent: &ControlPath) -> Result<ControlPath, StrategyError> {
        let grid = *w.grid();
        if !opponent.grid().same_points(&grid) {
            return Err(PathError::GridMismatch.into());
        }
        check_blocking(&grid, self.delay_steps)?;
        let mut own = Vec::with_capacity(grid.n_steps());
        for k in 0..grid.n_steps() / self.delay_steps {
            own.extend(self.respond_block(w, opponent.indices(), k)?);
        }
        Ok(ControlPath::new(&grid, own)?)
    }

    /// Like [`apply`](Self::apply) but reads past the permitted prefix are
    /// recorded instead of rejected. Returns the path and the first violation.
    fn apply_recording(&self, w: &BrownianPath, opponent: &ControlPath) -> Result<(ControlPath, Option<StrategyError>), StrategyError> {
        let grid = *w.grid();
        check_blocking(&grid, self.delay_steps)?;
        let mut own = Vec::with_capacity(grid.n_steps());
        let mut violation = None;
        for k in 0..grid.n_steps() / self.delay_steps {
            let ans = self.answer(w, opponent.indices(), k)?;
            let limit = k * self.delay_steps;
            for (channel, read) in [(Source::Noise, ans.noise_read), (Source::Opponent, ans.opponent_read)] {
                if let Some(read_step) = read.filter(|&r| r >= limit) {
                    violation.get_or_insert(StrategyError::DelayViolation { side: self.side, block: k, channel, read_step, limit });
                }
            }
            own.extend(ans.controls);
        }
        Ok((ControlPath::new(&grid, own)?, violation))
    }

    /// Same strategy answering blocks of `target` steps. Only shorter blocks
    /// that divide the declared delay are possible: each new block is a slice
    /// of the original block containing it, whose permitted prefix is no longer.
    pub fn reblocked(&self, target: usize) -> Result<DelayedStrategy, StrategyError> {
        if target == self.delay_steps {
            return Ok(self.clone());
        }
        if target == 0 || target > self.delay_steps || !self.delay_steps.is_multiple_of(target) {
            return Err(StrategyError::IncompatibleDelays { delay: self.delay_steps, target });
        }
        let inner = self.clone();
        let outer_delay = self.delay_steps;
        DelayedStrategy::new(
            self.side,
            target,
            self.n_controls,
            format!("{} (re-blocked to {target})", self.label),
            move |noise, opp, block| {
                let orig = block.start / outer_delay;
                let orig_start = orig * outer_delay;
                let orig_len = outer_delay.min(block.grid.n_steps() - orig_start);
                let n_inner = noise.narrowed(orig_start);
                let o_inner = opp.narrowed(orig_start);
                let out = (inner.respond)(&n_inner, &o_inner, &Block { index: orig, start: orig_start, len: orig_len, grid: block.grid });
                noise.absorb(&n_inner);
                opp.absorb(&o_inner);
                let out = out?;
                if out.len() != orig_len {
                    return Err(StrategyError::BlockLength { block: orig, got: out.len(), expected: orig_len });
                }
                let offset = block.start - orig_start;
                Ok(out[offset..offset + block.len].to_vec())
            },
        )
    }
}

fn check_blocking(grid: &TimeGrid, delay: usize) -> Result<(), StrategyError> {
    if !grid.n_steps().is_multiple_of(delay) {
        return Err(PathError::InvalidGrid(format!("n_steps={} is not a multiple of the strategy delay {delay}", grid.n_steps())).into());
    }
    Ok(())
}

/// Strategy that always plays `index`.
pub fn constant(side: Side, delay_steps: usize, n_controls: usize, index: usize) -> Result<DelayedStrategy, StrategyError> {
    if index >= n_controls {
        return Err(StrategyError::ControlIndex { index, len: n_controls });
    }
    DelayedStrategy::new(side, delay_steps, n_controls, format!("constant({index})"), move |_, _, b| Ok(vec![index; b.len]))
}

/// Plays `first` on block 0, then repeats the opponent's previous block,
/// translated through `map` (opponent index → own index).
pub fn copy_lagged(
    side: Side,
    delay_steps: usize,
    n_controls: usize,
    first: usize,
    map: Vec<usize>,
) -> Result<DelayedStrategy, StrategyError> {
    if let Some(&index) = map.iter().chain([&first]).find(|&&i| i >= n_controls) {
        return Err(StrategyError::ControlIndex { index, len: n_controls });
    }
    DelayedStrategy::new(side, delay_steps, n_controls, "copy-lagged", move |_, opp, b| {
        if b.index == 0 {
            return Ok(vec![first; b.len]);
        }
        let prev = b.start - delay_steps;
        (0..b.len)
            .map(|r| {
                let o = opp.get(prev + r).ok_or_else(|| StrategyError::Policy("opponent block not yet played".into()))?;
                map.get(o).copied().ok_or(StrategyError::ControlIndex { index: o, len: map.len() })
            })
            .collect()
    })
}

/// Plays a fixed path regardless of the inputs.
pub fn lookup(side: Side, delay_steps: usize, n_controls: usize, path: ControlPath) -> Result<DelayedStrategy, StrategyError> {
    if let Some(&index) = path.indices().iter().find(|&&i| i >= n_controls) {
        return Err(StrategyError::ControlIndex { index, len: n_controls });
    }
    DelayedStrategy::new(side, delay_steps, n_controls, "lookup", move |_, _, b| Ok(path.indices()[b.start..b.start + b.len].to_vec()))
}

/// Opponent-blind control generator: block `k` plays `high` when the first
/// noise coordinate `W(t_{kδ})` is positive and `low` otherwise (`low` on
/// block 0).
pub fn noise_switch(side: Side, delay_steps: usize, n_controls: usize, low: usize, high: usize) -> Result<DelayedStrategy, StrategyError> {
    for index in [low, high] {
        if index >= n_controls {
            return Err(StrategyError::ControlIndex { index, len: n_controls });
        }
    }
    DelayedStrategy::new(side, delay_steps, n_controls, format!("noise-switch({low},{high})"), move |noise, _, b| {
        let w = noise.value_at(b.start).expect("start lies on the grid");
        Ok(vec![if w[0] > 0.0 { high } else { low }; b.len])
    })
}

/// Randomized strategy from a seeded lookup table: the permitted noise and
/// opponent prefixes (bit patterns) and the block index are hashed to pick
/// one table entry per step.
pub fn table(side: Side, delay_steps: usize, n_controls: usize, seed: u64) -> Result<DelayedStrategy, StrategyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<usize> = (0..64).map(|_| rng.gen_range(0..n_controls)).collect();
    DelayedStrategy::new(side, delay_steps, n_controls, format!("table({seed})"), move |noise, opp, b| {
        let mut h = DefaultHasher::new();
        seed.hash(&mut h);
        b.index.hash(&mut h);
        for x in noise.permitted() {
            x.to_bits().hash(&mut h);
        }
        opp.permitted().hash(&mut h);
        let base = h.finish();
        Ok((0..b.len)
            .map(|r| {
                let mut h = DefaultHasher::new();
                (base, r).hash(&mut h);
                entries[(h.finish() % entries.len() as u64) as usize]
            })
            .collect())
    })
}

pub type Policy = dyn Fn(f64, &[f64]) -> usize + Send + Sync;

/// Markov policy `(t, x) ↦ own control index` turned into a delayed strategy.
///
/// Block `k` plays `policy(t_{kδ}, X_{(k-1)δ})` (`X_0 = x0` for blocks 0 and
/// 1). The state is rebuilt from the permitted prefixes by replaying the
/// strategy's own earlier blocks through the Euler map, so only noise and
/// opponent entries before step `(k-1)δ` are read.
pub fn make_feedback_strategy(
    dyn_: &GameDynamics,
    sets: &ControlSets,
    x0: &[f64],
    policy: Arc<Policy>,
    side: Side,
    delay_steps: usize,
) -> Result<DelayedStrategy, StrategyError> {
    let n_controls = match side {
        Side::I => sets.u.len(),
        Side::II => sets.v.len(),
    };
    if x0.len() != dyn_.state_dim() {
        return Err(StrategyError::Policy(format!("x0 has length {}, dynamics has N={}", x0.len(), dyn_.state_dim())));
    }
    let dyn_ = dyn_.clone();
    let sets = sets.clone();
    let x0 = x0.to_vec();
    DelayedStrategy::new(side, delay_steps, n_controls, "feedback", move |noise, opp, b| {
        let delay = delay_steps;
        let grid = b.grid;
        let dt = grid.dt();
        let mut scratch = dyn_.scratch();
        let play = |j: usize, observed: &[f64]| -> Result<usize, StrategyError> {
            let c = policy(grid.time(j * delay), observed);
            if c >= n_controls {
                return Err(StrategyError::ControlIndex { index: c, len: n_controls });
            }
            Ok(c)
        };
        // boundary[j] = X at step j·δ
        let mut boundary = vec![x0.clone()];
        let mut x = x0.clone();
        for j in 0..b.index.saturating_sub(1) {
            let observed = boundary[j.saturating_sub(1)].clone();
            let own = play(j, &observed)?;
            for s in j * delay..(j + 1) * delay {
                let o = opp.get(s).ok_or_else(|| StrategyError::Policy(format!("opponent step {s} not played")))?;
                let dw = noise.increment(s).expect("step lies on the grid");
                let (u, v) = match side {
                    Side::I => (sets.u.point(own), sets.v.point(o)),
                    Side::II => (sets.u.point(o), sets.v.point(own)),
                };
                dyn_.euler_step(&mut x, u, v, dw, dt, &mut scratch);
            }
            boundary.push(x.clone());
        }
        let observed = &boundary[b.index.saturating_sub(1)];
        Ok(vec![play(b.index, observed)?; b.len])
    })
}

/// Control pair resolved from two strategies on one noise path.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub u: ControlPath,
    pub v: ControlPath,
    pub delay_steps: usize,
}

impl ControlPair {
    /// Columns: step, u-index, v-index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,u_index,v_index\n");
        for k in 0..self.u.len() {
            out.push_str(&format!("{},{},{}\n", k, self.u.get(k), self.v.get(k)));
        }
        out
    }
}

/// Which player's block is resolved first inside each induction step. Both
/// orders give the same pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResolutionOrder {
    #[default]
    AlphaFirst,
    BetaFirst,
}

/// Both strategies answering blocks of the common (smallest) delay.
pub fn common_blocking(alpha: &DelayedStrategy, beta: &DelayedStrategy) -> Result<(DelayedStrategy, DelayedStrategy), StrategyError> {
    let delay = alpha.delay_steps.min(beta.delay_steps);
    Ok((alpha.reblocked(delay)?, beta.reblocked(delay)?))
}

/// The unique pair `(u, v)` with `u = α(ω, v)` and `v = β(ω, u)`, built block
/// by block: block `k` of each control only needs the opponent's blocks
/// before `k`, which are already fixed.
pub fn fixed_point(alpha: &DelayedStrategy, beta: &DelayedStrategy, w: &BrownianPath) -> Result<ControlPair, StrategyError> {
    fixed_point_ordered(alpha, beta, w, ResolutionOrder::AlphaFirst)
}

pub fn fixed_point_ordered(
    alpha: &DelayedStrategy,
    beta: &DelayedStrategy,
    w: &BrownianPath,
    order: ResolutionOrder,
) -> Result<ControlPair, StrategyError> {
    if alpha.side != Side::I {
        return Err(StrategyError::WrongSide { expected: Side::I, got: alpha.side });
    }
    if beta.side != Side::II {
        return Err(StrategyError::WrongSide { expected: Side::II, got: beta.side });
    }
    let (alpha, beta) = common_blocking(alpha, beta)?;
    let delay = alpha.delay_steps;
    let grid = *w.grid();
    check_blocking(&grid, delay)?;
    let n = grid.n_steps();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for k in 0..n / delay {
        let (ub, vb) = match order {
            ResolutionOrder::AlphaFirst => {
                let ub = alpha.respond_block(w, &v, k)?;
                (ub, beta.respond_block(w, &u, k)?)
            }
            ResolutionOrder::BetaFirst => {
                let vb = beta.respond_block(w, &u, k)?;
                (alpha.respond_block(w, &v, k)?, vb)
            }
        };
        u.extend(ub);
        v.extend(vb);
    }
    Ok(ControlPair { u: ControlPath::new(&grid, u)?, v: ControlPath::new(&grid, v)?, delay_steps: delay })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayCounterexample {
    pub trial: usize,
    /// Inputs agreed on the steps before this one.
    pub prefix_len: usize,
    /// First step where the outputs differ although they had to agree.
    pub differing_step: Option<usize>,
    /// Description of a read beyond the permitted prefix, if any.
    pub access_violation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayReport {
    pub label: String,
    pub trials: usize,
    pub passed: bool,
    pub counterexample: Option<DelayCounterexample>,
}

/// Randomized falsification of the delay property: pairs of inputs that
/// agree before step `m` must produce outputs that agree on every block
/// starting at or before `m`, i.e. before step `(⌊m/δ⌋ + 1)·δ`.
pub fn verify_delay(
    strat: &DelayedStrategy,
    grid: &TimeGrid,
    noise_dim: usize,
    opponent_controls: usize,
    trials: usize,
    seed: u64,
) -> DelayReport {
    let mut report = DelayReport { label: strat.label.clone(), trials, passed: true, counterexample: None };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_steps();
    let delay = strat.delay_steps;
    let fail =
        |trial, prefix_len, differing_step, access_violation| DelayCounterexample { trial, prefix_len, differing_step, access_violation };
    for trial in 0..trials {
        let Ok(w1) = BrownianPath::sample_stream(grid, noise_dim, seed, trial as u64 + 1) else {
            break;
        };
        let m = rng.gen_range(0..=n);
        let w2 = w1.with_resampled_suffix(m, rng.gen());
        let o1: Vec<usize> = (0..n).map(|_| rng.gen_range(0..opponent_controls)).collect();
        let mut o2 = o1.clone();
        for o in &mut o2[m..] {
            *o = rng.gen_range(0..opponent_controls);
        }
        let o1 = ControlPath::new(grid, o1).expect("length matches grid");
        let o2 = ControlPath::new(grid, o2).expect("length matches grid");
        let (a, b) = match (strat.apply_recording(&w1, &o1), strat.apply_recording(&w2, &o2)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                report.passed = false;
                report.counterexample = Some(fail(trial, m, None, Some(e.to_string())));
                return report;
            }
        };
        let must_agree = ((m / delay + 1) * delay).min(n);
        let differing = (0..must_agree).find(|&s| a.0.get(s) != b.0.get(s));
        let access = a.1.or(b.1).map(|e| e.to_string());
        if differing.is_some() || access.is_some() {
            report.passed = false;
            report.counterexample = Some(fail(trial, m, differing, access));
            return report;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_space::sample_brownian;

    fn grid(n: usize, delay: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n, delay).unwrap()
    }

    #[test]
    fn constant_strategies_resolve_to_constants() {
        let g = grid(8, 2);
        let w = sample_brownian(&g, 1, 1).unwrap();
        let a = constant(Side::I, 2, 3, 1).unwrap();
        let b = constant(Side::II, 2, 3, 2).unwrap();
        let pair = fixed_point(&a, &b, &w).unwrap();
        assert_eq!(pair.u, ControlPath::constant(&g, 1));
        assert_eq!(pair.v, ControlPath::constant(&g, 2));
    }

    #[test]
    fn copy_lagged_against_constant_unrolls_by_hand() {
        // block 0: u_a; every later block copies v_b
        let g = grid(6, 2);
        let w = sample_brownian(&g, 1, 1).unwrap();
        let a = copy_lagged(Side::I, 2, 3, 0, vec![0, 1, 2]).unwrap();
        let b = constant(Side::II, 2, 3, 2).unwrap();
        let pair = fixed_point(&a, &b, &w).unwrap();
        assert_eq!(pair.u.indices(), &[0, 0, 2, 2, 2, 2]);
        assert_eq!(pair.v.indices(), &[2; 6]);
    }

    #[test]
    fn mutual_copying_alternates() {
        let g = grid(6, 2);
        let w = sample_brownian(&g, 1, 1).unwrap();
        let a = copy_lagged(Side::I, 2, 2, 0, vec![1, 0]).unwrap();
        let b = copy_lagged(Side::II, 2, 2, 1, vec![0, 1]).unwrap();
        let pair = fixed_point(&a, &b, &w).unwrap();
        // u_k = 1 - v_{k-1}, v_k = u_{k-1}
        assert_eq!(pair.u.indices(), &[0, 0, 0, 0, 1, 1]);
        assert_eq!(pair.v.indices(), &[1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn wrong_sides_are_rejected() {
        let g = grid(4, 1);
        let w = sample_brownian(&g, 1, 1).unwrap();
        let a = constant(Side::II, 1, 2, 0).unwrap();
        let b = constant(Side::II, 1, 2, 0).unwrap();
        assert!(matches!(fixed_point(&a, &b, &w), Err(StrategyError::WrongSide { .. })));
    }

    #[test]
    fn peeking_strategy_is_trapped() {
        let g = grid(4, 1);
        let w = sample_brownian(&g, 1, 1).unwrap();
        let peek = DelayedStrategy::new(Side::I, 1, 2, "peek", |noise, _, b| {
            let dw = noise.increment(b.start).unwrap();
            Ok(vec![usize::from(dw[0] > 0.0); b.len])
        })
        .unwrap();
        let b = constant(Side::II, 1, 2, 0).unwrap();
        let err = fixed_point(&peek, &b, &w).unwrap_err();
        assert!(matches!(err, StrategyError::DelayViolation { block: 0, channel: Source::Noise, read_step: 0, limit: 0, .. }));
    }

    #[test]
    fn reblocking_requires_divisibility() {
        let a = table(Side::I, 4, 3, 1).unwrap();
        assert!(a.reblocked(2).is_ok());
        assert!(matches!(a.reblocked(3), Err(StrategyError::IncompatibleDelays { .. })));
        let g = grid(8, 2);
        let w = sample_brownian(&g, 1, 4).unwrap();
        let v = ControlPath::new(&g, vec![0, 1, 2, 0, 1, 2, 0, 1]).unwrap();
        assert_eq!(a.apply(&w, &v).unwrap(), a.reblocked(2).unwrap().apply(&w, &v).unwrap());
    }

    #[test]
    fn mixed_delays_use_the_smaller_one() {
        let g = grid(8, 1);
        let w = sample_brownian(&g, 1, 5).unwrap();
        let a = table(Side::I, 4, 3, 11).unwrap();
        let b = table(Side::II, 2, 3, 12).unwrap();
        let pair = fixed_point(&a, &b, &w).unwrap();
        assert_eq!(pair.delay_steps, 2);
        assert_eq!(a.apply(&w, &pair.v).unwrap(), pair.u);
        assert_eq!(b.apply(&w, &pair.u).unwrap(), pair.v);
    }

    #[test]
    fn verify_delay_examples() {
        let g = grid(12, 3);
        let c = constant(Side::I, 3, 3, 1).unwrap();
        assert!(verify_delay(&c, &g, 1, 3, 50, 1).passed);
        let t = table(Side::II, 3, 3, 9).unwrap();
        assert!(verify_delay(&t, &g, 1, 3, 200, 2).passed);
        let cheat = DelayedStrategy::new(Side::I, 3, 3, "copy-current", |_, opp, b| {
            Ok((0..b.len).map(|r| opp.get(b.start + r).unwrap_or(0)).collect())
        })
        .unwrap();
        let report = verify_delay(&cheat, &g, 1, 3, 200, 3);
        assert!(!report.passed);
        let ce = report.counterexample.unwrap();
        assert!(ce.differing_step.is_some() || ce.access_violation.is_some());
    }

    #[test]
    fn control_pair_csv() {
        let g = grid(2, 1);
        let pair = ControlPair { u: ControlPath::constant(&g, 1), v: ControlPath::constant(&g, 0), delay_steps: 1 };
        assert_eq!(pair.to_csv(), "step,u_index,v_index\n0,1,0\n1,1,0\n");
    }
}

//! Upper and lower Hamiltonians of the game by exact enumeration over the
//! discretized control sets, and the Isaacs-condition check.
//!
//! The payoff inside both Hamiltonians is
//! `½ tr(σσᵀ(x,u,v) A) + ⟨b(x,u,v), ξ⟩`. `H⁺` is `min_u max_v`, `H⁻` is
//! `max_v min_u`; ties go to the lowest index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::GameDynamics;
use crate::path_space::ControlSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty control set")]
    EmptyControlSet,
    #[error("no queries given")]
    NoQueries,
}

/// Arguments `(A, ξ, x, t)` of the Hamiltonians. `A` is stored symmetrized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianQuery {
    a: Vec<f64>,
    xi: Vec<f64>,
    x: Vec<f64>,
    t: f64,
}

impl HamiltonianQuery {
    /// `a` is `N × N` row-major; it is replaced by `(A + Aᵀ)/2`.
    pub fn new(a: Vec<f64>, xi: Vec<f64>, x: Vec<f64>, t: f64) -> Result<Self, HamiltonianError> {
        let n = xi.len();
        if x.len() != n || a.len() != n * n {
            return Err(HamiltonianError::Dimension(format!("A has {} entries, ξ has {}, x has {}", a.len(), n, x.len())));
        }
        let mut sym = a;
        for i in 0..n {
            for j in i + 1..n {
                let m = 0.5 * (sym[i * n + j] + sym[j * n + i]);
                sym[i * n + j] = m;
                sym[j * n + i] = m;
            }
        }
        Ok(Self { a: sym, xi, x, t })
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Accepted for completeness; the bundled coefficients do not depend on time.
    pub fn t(&self) -> f64 {
        self.t
    }
}

/// Scratch buffers for repeated payoff evaluation.
pub struct PayoffScratch {
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

impl PayoffScratch {
    pub fn new(dyn_: &GameDynamics) -> Self {
        Self { drift: vec![0.0; dyn_.state_dim()], sigma: vec![0.0; dyn_.state_dim() * dyn_.noise_dim()] }
    }
}

/// `½ tr(σσᵀ A) + ⟨b, ξ⟩` without dimension checks.
pub fn payoff_with(dyn_: &GameDynamics, q: &HamiltonianQuery, u: &[f64], v: &[f64], s: &mut PayoffScratch) -> f64 {
    let n = dyn_.state_dim();
    let d = dyn_.noise_dim();
    dyn_.drift_into(&q.x, u, v, &mut s.drift);
    dyn_.diffusion_into(&q.x, u, v, &mut s.sigma);
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            let aij = q.a[i * n + j];
            if aij == 0.0 {
                continue;
            }
            let mut sij = 0.0;
            for k in 0..d {
                sij += s.sigma[i * d + k] * s.sigma[j * d + k];
            }
            trace += sij * aij;
        }
    }
    let mut first = 0.0;
    for i in 0..n {
        first += s.drift[i] * q.xi[i];
    }
    0.5 * trace + first
}

pub fn payoff(dyn_: &GameDynamics, q: &HamiltonianQuery, u: &[f64], v: &[f64]) -> Result<f64, HamiltonianError> {
    if q.dim() != dyn_.state_dim() {
        return Err(HamiltonianError::Dimension(format!("query has N={}, dynamics has N={}", q.dim(), dyn_.state_dim())));
    }
    Ok(payoff_with(dyn_, q, u, v, &mut PayoffScratch::new(dyn_)))
}

/// `min_r max_c m(r, c)` over a dense `rows × cols` matrix (row-major) with
/// the lowest minimizing row.
pub fn upper_value(m: &[f64], rows: usize, cols: usize) -> Result<(f64, usize), HamiltonianError> {
    if rows == 0 || cols == 0 {
        return Err(HamiltonianError::EmptyControlSet);
    }
    let mut best = (f64::INFINITY, 0);
    for r in 0..rows {
        let row_max = m[r * cols..(r + 1) * cols].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if row_max < best.0 {
            best = (row_max, r);
        }
    }
    Ok(best)
}

/// `max_c min_r m(r, c)` with the lowest maximizing column.
pub fn lower_value(m: &[f64], rows: usize, cols: usize) -> Result<(f64, usize), HamiltonianError> {
    if rows == 0 || cols == 0 {
        return Err(HamiltonianError::EmptyControlSet);
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for c in 0..cols {
        let col_min = (0..rows).map(|r| m[r * cols + c]).fold(f64::INFINITY, f64::min);
        if col_min > best.0 {
            best = (col_min, c);
        }
    }
    Ok(best)
}

/// Payoff matrix with rows indexed by `u` and columns by `v`.
pub fn payoff_matrix(dyn_: &GameDynamics, q: &HamiltonianQuery, us: &ControlSet, vs: &ControlSet) -> Result<Vec<f64>, HamiltonianError> {
    if q.dim() != dyn_.state_dim() {
        return Err(HamiltonianError::Dimension(format!("query has N={}, dynamics has N={}", q.dim(), dyn_.state_dim())));
    }
    let mut s = PayoffScratch::new(dyn_);
    let mut m = Vec::with_capacity(us.len() * vs.len());
    for u in us.points() {
        for v in vs.points() {
            m.push(payoff_with(dyn_, q, u, v, &mut s));
        }
    }
    Ok(m)
}

/// `H⁺(A, ξ, x, t) = min_u max_v payoff` and the minimizing `u` index.
pub fn h_plus(dyn_: &GameDynamics, q: &HamiltonianQuery, us: &ControlSet, vs: &ControlSet) -> Result<(f64, usize), HamiltonianError> {
    upper_value(&payoff_matrix(dyn_, q, us, vs)?, us.len(), vs.len())
}

/// `H⁻(A, ξ, x, t) = max_v min_u payoff` and the maximizing `v` index.
pub fn h_minus(dyn_: &GameDynamics, q: &HamiltonianQuery, us: &ControlSet, vs: &ControlSet) -> Result<(f64, usize), HamiltonianError> {
    lower_value(&payoff_matrix(dyn_, q, us, vs)?, us.len(), vs.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleReport {
    pub h_plus: f64,
    pub h_minus: f64,
    pub arg_u_plus: usize,
    pub arg_v_minus: usize,
    /// `h_plus - h_minus`, never negative on a finite matrix.
    pub gap: f64,
}

pub fn saddle(dyn_: &GameDynamics, q: &HamiltonianQuery, us: &ControlSet, vs: &ControlSet) -> Result<SaddleReport, HamiltonianError> {
    let m = payoff_matrix(dyn_, q, us, vs)?;
    let (h_plus, arg_u_plus) = upper_value(&m, us.len(), vs.len())?;
    let (h_minus, arg_v_minus) = lower_value(&m, us.len(), vs.len())?;
    Ok(SaddleReport { h_plus, h_minus, arg_u_plus, arg_v_minus, gap: h_plus - h_minus })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsaacsReport {
    pub n_queries: usize,
    pub max_gap: f64,
    pub worst_query: HamiltonianQuery,
    pub worst: SaddleReport,
    pub tolerance: f64,
    /// Isaacs' condition holds on the control grids up to `tolerance`.
    pub holds: bool,
    /// `h_plus >= h_minus` on every query (within 1e-12).
    pub weak_duality: bool,
}

pub const DEFAULT_ISAACS_TOLERANCE: f64 = 1e-12;

/// Largest `H⁺ - H⁻` over the queries.
pub fn isaacs_gap(
    dyn_: &GameDynamics,
    queries: &[HamiltonianQuery],
    us: &ControlSet,
    vs: &ControlSet,
    tolerance: f64,
) -> Result<IsaacsReport, HamiltonianError> {
    let Some(first) = queries.first() else {
        return Err(HamiltonianError::NoQueries);
    };
    let mut worst = (saddle(dyn_, first, us, vs)?, 0);
    let mut weak_duality = worst.0.gap >= -1e-12;
    for (i, q) in queries.iter().enumerate().skip(1) {
        let r = saddle(dyn_, q, us, vs)?;
        weak_duality &= r.gap >= -1e-12;
        if r.gap > worst.0.gap {
            worst = (r, i);
        }
    }
    Ok(IsaacsReport {
        n_queries: queries.len(),
        max_gap: worst.0.gap,
        worst_query: queries[worst.1].clone(),
        worst: worst.0,
        tolerance,
        holds: worst.0.gap <= tolerance,
        weak_duality,
    })
}

/// Random queries with `x` in `[-radius, radius]^N`, `ξ` and the entries of
/// `A` in `[-scale, scale]`, `t` in `[0, 1]`.
pub fn random_queries(state_dim: usize, count: usize, radius: f64, scale: f64, seed: u64) -> Vec<HamiltonianQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut draw = |n: usize, r: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-r..=r)).collect() };
            let a = draw(state_dim * state_dim, scale);
            let xi = draw(state_dim, scale);
            let x = draw(state_dim, radius);
            let t = rng.gen_range(0.0..=1.0);
            HamiltonianQuery::new(a, xi, x, t).expect("dimensions agree by construction")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BuiltinDynamics, ControlSets, TerminalCost};
    use crate::path_space::discretize_interval;

    fn q1(a: f64, xi: f64) -> HamiltonianQuery {
        HamiltonianQuery::new(vec![a], vec![xi], vec![0.3], 0.0).unwrap()
    }

    fn matrix_game() -> (GameDynamics, ControlSet, ControlSet) {
        let u = discretize_interval(0.0, 1.0, 2).unwrap();
        let v = discretize_interval(0.0, 1.0, 2).unwrap();
        let sets = ControlSets::new(u.clone(), v.clone());
        let d = BuiltinDynamics::MatrixGame { sigma: 0.0 }.build(TerminalCost::Linear, &sets, 1.0).unwrap();
        (d, u, v)
    }

    #[test]
    fn payoff_examples() {
        let sets = ControlSets::new(discretize_interval(-1.0, 1.0, 3).unwrap(), discretize_interval(-1.0, 1.0, 3).unwrap());
        let c = GameDynamics::new(
            "c",
            1,
            1,
            |_x: &[f64], _u: &[f64], _v: &[f64], o: &mut [f64]| o[0] = 3.0,
            |_x: &[f64], _u: &[f64], _v: &[f64], o: &mut [f64]| o[0] = 1.0,
            |_x: &[f64]| 0.0,
        )
        .unwrap();
        assert_eq!(payoff(&c, &q1(2.0, 1.0), &[0.0], &[0.0]).unwrap(), 4.0);
        let sep = BuiltinDynamics::Separated { state_dim: 1, sigma: 0.5 }.build(TerminalCost::Linear, &sets, 1.0).unwrap();
        for u in sets.u.points() {
            for v in sets.v.points() {
                assert_eq!(payoff(&sep, &q1(0.0, 0.0), u, v).unwrap(), 0.0);
            }
        }
        let sep0 = BuiltinDynamics::Separated { state_dim: 1, sigma: 0.0 }.build(TerminalCost::Linear, &sets, 1.0).unwrap();
        assert_eq!(payoff(&sep0, &q1(0.0, 1.0), &[-1.0], &[1.0]).unwrap(), 0.0);
        let bad = HamiltonianQuery::new(vec![0.0; 4], vec![0.0; 2], vec![0.0; 2], 0.0).unwrap();
        assert!(payoff(&sep0, &bad, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn query_is_symmetrized() {
        let q = HamiltonianQuery::new(vec![1.0, 2.0, 0.0, 1.0], vec![0.0; 2], vec![0.0; 2], 0.0).unwrap();
        assert_eq!(q.a(), &[1.0, 1.0, 1.0, 1.0]);
        assert!(HamiltonianQuery::new(vec![1.0; 3], vec![0.0; 2], vec![0.0; 2], 0.0).is_err());
    }

    #[test]
    fn matching_pennies_by_enumeration() {
        // rows u, cols v: [[0,1],[1,0]]; min over rows of row max = 1 (row 0),
        // max over cols of col min = 0
        let (d, u, v) = matrix_game();
        let q = q1(0.0, 1.0);
        assert_eq!(payoff_matrix(&d, &q, &u, &v).unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(h_plus(&d, &q, &u, &v).unwrap(), (1.0, 0));
        assert_eq!(h_minus(&d, &q, &u, &v).unwrap().0, 0.0);
        let r = isaacs_gap(&d, &[q], &u, &v, DEFAULT_ISAACS_TOLERANCE).unwrap();
        assert_eq!(r.max_gap, 1.0);
        assert!(!r.holds);
        assert!(r.weak_duality);
    }

    #[test]
    fn separated_dynamics_satisfy_isaacs() {
        let u = discretize_interval(-1.0, 1.0, 3).unwrap();
        let v = discretize_interval(-1.0, 1.0, 3).unwrap();
        let sets = ControlSets::new(u.clone(), v.clone());
        let d = BuiltinDynamics::Separated { state_dim: 1, sigma: 0.0 }.build(TerminalCost::Linear, &sets, 1.0).unwrap();
        let q = HamiltonianQuery::new(vec![0.0], vec![1.0], vec![0.0], 0.0).unwrap();
        assert_eq!(h_plus(&d, &q, &u, &v).unwrap().0, 0.0);
        assert_eq!(h_minus(&d, &q, &u, &v).unwrap().0, 0.0);
        let qs = random_queries(1, 100, 4.0, 3.0, 7);
        let r = isaacs_gap(&d, &qs, &u, &v, DEFAULT_ISAACS_TOLERANCE).unwrap();
        assert_eq!(r.max_gap, 0.0);
        assert!(r.holds);
        let zero = HamiltonianQuery::new(vec![0.0], vec![0.0], vec![0.0], 0.0).unwrap();
        assert_eq!(isaacs_gap(&d, &[zero], &u, &v, 1e-12).unwrap().max_gap, 0.0);
        assert_eq!(isaacs_gap(&d, &[], &u, &v, 1e-12), Err(HamiltonianError::NoQueries));
    }

    #[test]
    fn constant_payoff_is_its_own_value() {
        let u = discretize_interval(-1.0, 1.0, 4).unwrap();
        let v = discretize_interval(-1.0, 1.0, 5).unwrap();
        let sets = ControlSets::new(u.clone(), v.clone());
        let d = BuiltinDynamics::ConstantDrift { drift: vec![2.5] }.build(TerminalCost::Linear, &sets, 1.0).unwrap();
        let q = q1(0.7, 2.0);
        let p = payoff(&d, &q, u.point(0), v.point(0)).unwrap();
        assert_eq!(p, 5.0);
        assert_eq!(h_plus(&d, &q, &u, &v).unwrap(), (5.0, 0));
        assert_eq!(h_minus(&d, &q, &u, &v).unwrap(), (5.0, 0));
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert_eq!(upper_value(&[], 0, 3), Err(HamiltonianError::EmptyControlSet));
        assert_eq!(lower_value(&[], 2, 0), Err(HamiltonianError::EmptyControlSet));
    }
}

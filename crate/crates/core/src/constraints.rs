//! Adaptive penalization with rejection for interval constraints on sums of
//! coordinates, `lower <= sum_{p in P} x_p <= upper`.
//!
//! Samples far from the feasible interval (violation larger than a fraction
//! `p` of `|q|`) are rejected and redrawn by the optimizer; the remaining
//! marginally infeasible ones receive a quadratic penalty whose weights adapt
//! to the observed spread of objective values and to the distribution mean.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cma::{SearchDistribution, StrategyParams};
use crate::error::{Error, Result};
use crate::stats;

/// Default rejection fraction.
pub const DEFAULT_REJECTION_FRACTION: f64 = 0.20;
/// Redraw cap per individual; the last draw is kept once it is reached.
pub const MAX_RESAMPLES: usize = 100;
/// Base of the multiplicative weight increase.
pub const GAMMA_GROWTH: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumConstraint {
    pub indices: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
}

impl SumConstraint {
    pub fn new(indices: Vec<usize>, lower: f64, upper: f64) -> Result<Self> {
        let c = Self {
            indices,
            lower,
            upper,
        };
        c.check_bounds()?;
        Ok(c)
    }

    fn check_bounds(&self) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::InvalidParameter(
                "constraint index set is empty".into(),
            ));
        }
        if !(self.lower < self.upper) {
            return Err(Error::InvalidParameter(format!(
                "constraint bounds must satisfy lower < upper, got ({}, {})",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Checks bounds and that every index addresses a coordinate.
    pub fn validate(&self, dimension: usize) -> Result<()> {
        self.check_bounds()?;
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= dimension) {
            return Err(Error::InvalidParameter(format!(
                "constraint index {bad} out of range for dimension {dimension}"
            )));
        }
        Ok(())
    }

    pub fn sum(&self, x: &[f64]) -> f64 {
        self.indices.iter().map(|&i| x[i]).sum()
    }

    pub fn project(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub q: f64,
    pub q_feas: f64,
    pub distance: f64,
}

pub fn constraint_violation(x: &[f64], c: &SumConstraint) -> Violation {
    let q = c.sum(x);
    let q_feas = c.project(q);
    Violation {
        q,
        q_feas,
        distance: (q - q_feas).abs(),
    }
}

/// True when the violation exceeds the fraction `p` of `|q|`.
pub fn should_reject(q: f64, q_feas: f64, p: f64) -> bool {
    (q_feas - q).abs() > p * q.abs()
}

/// Rejection test over all constraints.
pub fn reject_any(x: &[f64], constraints: &[SumConstraint], p: f64) -> bool {
    constraints.iter().any(|c| {
        let v = constraint_violation(x, c);
        should_reject(v.q, v.q_feas, p)
    })
}

pub fn is_feasible(x: &[f64], constraints: &[SumConstraint]) -> bool {
    constraints
        .iter()
        .all(|c| constraint_violation(x, c).distance == 0.0)
}

/// Adaptive penalty weights and the history feeding their initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    pub gammas: Vec<f64>,
    pub gammas_initialized: bool,
    /// Per-generation interquartile ranges of unpenalized objective values.
    pub fitness_history: VecDeque<f64>,
    pub history_capacity: usize,
    /// `None` disables rejection; every infeasible sample is penalized.
    pub rejection_fraction: Option<f64>,
}

impl PenaltyState {
    pub fn new(
        n_constraints: usize,
        dimension: usize,
        lambda: usize,
        rejection_fraction: Option<f64>,
    ) -> Result<Self> {
        if let Some(p) = rejection_fraction {
            if !(p > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "rejection fraction must be positive, got {p}"
                )));
            }
        }
        let history_capacity = (20 + 3 * dimension).div_ceil(lambda.max(1)).max(1);
        Ok(Self {
            gammas: vec![0.0; n_constraints],
            gammas_initialized: false,
            fitness_history: VecDeque::with_capacity(history_capacity),
            history_capacity,
            rejection_fraction,
        })
    }

    /// Store the interquartile range of one generation's raw objective values.
    pub fn record_generation(&mut self, raw_objectives: &[f64]) {
        let finite: Vec<f64> = raw_objectives
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        if finite.is_empty() {
            return;
        }
        if self.fitness_history.len() == self.history_capacity {
            self.fitness_history.pop_front();
        }
        self.fitness_history.push_back(stats::iqr(&finite));
    }

    /// Median of the stored interquartile ranges.
    pub fn delta_fit(&self) -> Option<f64> {
        if self.fitness_history.is_empty() {
            return None;
        }
        let v: Vec<f64> = self.fitness_history.iter().copied().collect();
        Some(stats::median(&v))
    }
}

/// `(1/n) sum_i C_ii`.
fn mean_diagonal(dist: &SearchDistribution) -> f64 {
    let c = dist.covariance();
    c.diagonal().sum() / c.nrows() as f64
}

/// One-time initialization of all weights to `2 delta_fit / (sigma^2 mean(diag C))`
/// once the distribution mean is infeasible. Applies only after the first
/// completed generation. Returns whether the weights were set.
pub fn maybe_set_gammas(
    state: &mut PenaltyState,
    dist: &SearchDistribution,
    constraints: &[SumConstraint],
) -> bool {
    if state.gammas_initialized || dist.generation() < 1 || constraints.is_empty() {
        return false;
    }
    if is_feasible(dist.mean(), constraints) {
        return false;
    }
    let Some(delta_fit) = state.delta_fit() else {
        return false;
    };
    let sigma = dist.step_size();
    let gamma = 2.0 * delta_fit / (sigma * sigma * mean_diagonal(dist));
    // a zero spread would freeze the weights at zero for the whole run
    if !(gamma.is_finite() && gamma > 0.0) {
        return false;
    }
    state.gammas.iter_mut().for_each(|g| *g = gamma);
    state.gammas_initialized = true;
    true
}

/// Distance from `m` to `[lower, upper]`.
fn interval_distance(m: f64, c: &SumConstraint) -> f64 {
    (m - c.upper).max(0.0) + (c.lower - m).max(0.0)
}

/// Threshold above which the population mean of `q_j` counts as too far out:
/// `sigma * sqrt(mean_{p in P_j} C_pp) * max(1, sqrt(n) / mu_eff)`.
pub fn increase_threshold(
    dist: &SearchDistribution,
    params: &StrategyParams,
    c: &SumConstraint,
) -> f64 {
    let cov = dist.covariance();
    let n = dist.dimension() as f64;
    let mean_cpp = c.indices.iter().map(|&p| cov[(p, p)]).sum::<f64>() / c.indices.len() as f64;
    dist.step_size() * mean_cpp.sqrt() * (n.sqrt() / params.mu_eff).max(1.0)
}

/// Multiply `gamma_j` by `1.1^max(1, mu_eff / (10 n))` for every constraint
/// whose population mean of `q_j` lies out of bounds by more than
/// [`increase_threshold`]. Returns the per-constraint increase flags.
pub fn maybe_increase_gammas(
    state: &mut PenaltyState,
    dist: &SearchDistribution,
    constraints: &[SumConstraint],
    params: &StrategyParams,
    population: &[Vec<f64>],
) -> Vec<bool> {
    let mut increased = vec![false; constraints.len()];
    if !state.gammas_initialized || population.is_empty() {
        return increased;
    }
    let n = dist.dimension() as f64;
    let factor = GAMMA_GROWTH.powf((params.mu_eff / (10.0 * n)).max(1.0));
    for (j, c) in constraints.iter().enumerate() {
        let m_j = population.iter().map(|x| c.sum(x)).sum::<f64>() / population.len() as f64;
        let out = interval_distance(m_j, c);
        if out > 0.0 && out > increase_threshold(dist, params, c) {
            state.gammas[j] *= factor;
            increased[j] = true;
        }
    }
    increased
}

/// `xi_j = exp(0.9 (mean_{p in P_j} log C_pp - mean_i log C_ii))`.
pub fn xi(c: &SumConstraint, dist: &SearchDistribution) -> f64 {
    let cov = dist.covariance();
    let n = cov.nrows();
    let all = (0..n).map(|i| cov[(i, i)].ln()).sum::<f64>() / n as f64;
    let sub = c.indices.iter().map(|&p| cov[(p, p)].ln()).sum::<f64>() / c.indices.len() as f64;
    (0.9 * (sub - all)).exp()
}

/// Penalty term `(1/m) sum_j gamma_j (q_feas - q)^2 / xi_j`; exactly zero when
/// every constraint is satisfied.
pub fn penalty(
    x: &[f64],
    state: &PenaltyState,
    constraints: &[SumConstraint],
    dist: &SearchDistribution,
) -> f64 {
    if constraints.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (c, &gamma) in constraints.iter().zip(state.gammas.iter()) {
        let v = constraint_violation(x, c);
        if v.distance > 0.0 {
            total += gamma * v.distance * v.distance / xi(c, dist);
        }
    }
    total / constraints.len() as f64
}

pub fn penalize(
    x: &[f64],
    raw: f64,
    state: &PenaltyState,
    constraints: &[SumConstraint],
    dist: &SearchDistribution,
) -> f64 {
    let p = penalty(x, state, constraints, dist);
    if p == 0.0 {
        raw
    } else {
        raw + p
    }
}

//! The (μ/μ_w, λ)-CMA-ES engine.
//!
//! Minimization throughout. The search distribution is `mean + step_size *
//! N(0, C)`; after every generation the mean moves to the weighted
//! recombination of the μ best points, the step size follows cumulative
//! step-size adaptation (CSA) and the covariance receives the rank-one and
//! rank-μ updates with the usual default learning rates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative floor applied to covariance eigenvalues: `EIGEN_FLOOR * trace(C) / n`.
pub const EIGEN_FLOOR: f64 = 1e-20;
/// Condition number above which a run is stopped.
pub const MAX_CONDITION: f64 = 1e14;
/// Generations over which the stagnation test looks back.
pub const STAGNATION_WINDOW: usize = 30;
/// Relative improvement below which the run counts as stagnating.
pub const STAGNATION_TOL: f64 = 1e-12;

/// Selection weights, learning rates and damping for a given dimension and
/// population size.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyParams {
    pub dimension: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c1: f64,
    pub c_mu: f64,
    /// Expected norm of an n-dimensional standard normal vector.
    pub chi_n: f64,
    pub max_generations: usize,
}

/// `4 + floor(3 ln n)`.
pub fn default_population_size(dimension: usize) -> usize {
    4 + (3.0 * (dimension.max(1) as f64).ln()).floor() as usize
}

impl StrategyParams {
    /// Default parameters with `mu = lambda / 2` and weights proportional to
    /// `ln(mu + 1) - ln(i)`.
    pub fn new(dimension: usize, lambda: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if lambda < 2 {
            return Err(Error::InvalidParameter(format!(
                "population size must be at least 2, got {lambda}"
            )));
        }
        let n = dimension as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((mu + 1) as f64).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu =
            (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        Ok(Self {
            dimension,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c1,
            c_mu: c_mu.max(0.0),
            chi_n,
            max_generations: 100,
        })
    }

    pub fn with_max_generations(mut self, max_generations: usize) -> Self {
        self.max_generations = max_generations;
        self
    }
}

/// Which function produced an individual's objective value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalSource {
    #[default]
    Unset,
    TrueFunction,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub raw_objective: Option<f64>,
    pub penalized_objective: Option<f64>,
    pub evaluated_by: EvalSource,
}

impl Individual {
    pub fn new(genome: Vec<f64>) -> Self {
        Self {
            genome,
            raw_objective: None,
            penalized_objective: None,
            evaluated_by: EvalSource::Unset,
        }
    }

    /// Set both objective fields to the same value (no penalty).
    pub fn with_objective(mut self, value: f64, source: EvalSource) -> Self {
        self.raw_objective = Some(value);
        self.penalized_objective = Some(value);
        self.evaluated_by = source;
        self
    }
}

/// Mean, step size, covariance and evolution paths of the sampler.
///
/// The eigendecomposition `C = B diag(D^2) B^T` is refreshed after every
/// covariance change and used both for sampling and for `C^{-1/2}`.
#[derive(Debug, Clone)]
pub struct SearchDistribution {
    mean: DVector<f64>,
    step_size: f64,
    covariance: DMatrix<f64>,
    path_sigma: DVector<f64>,
    path_c: DVector<f64>,
    generation: usize,
    basis: DMatrix<f64>,
    axis_lengths: DVector<f64>,
    eigenvalues: DVector<f64>,
    repairs: usize,
}

impl SearchDistribution {
    /// Isotropic start: `C = I`.
    pub fn new(mean: Vec<f64>, step_size: f64) -> Result<Self> {
        let n = mean.len();
        Self::with_covariance(mean, step_size, DMatrix::identity(n, n))
    }

    pub fn with_covariance(
        mean: Vec<f64>,
        step_size: f64,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty mean vector".into()));
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: covariance.nrows(),
            });
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite initial state".into()));
        }
        let mut dist = Self {
            mean: DVector::from_vec(mean),
            step_size,
            covariance,
            path_sigma: DVector::zeros(n),
            path_c: DVector::zeros(n),
            generation: 0,
            basis: DMatrix::identity(n, n),
            axis_lengths: DVector::from_element(n, 1.0),
            eigenvalues: DVector::from_element(n, 1.0),
            repairs: 0,
        };
        dist.refresh_eigen();
        Ok(dist)
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn path_sigma(&self) -> &[f64] {
        self.path_sigma.as_slice()
    }

    pub fn path_c(&self) -> &[f64] {
        self.path_c.as_slice()
    }

    /// Number of completed updates.
    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Number of eigenvalue flooring repairs applied so far.
    pub fn repairs(&self) -> usize {
        self.repairs
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    pub fn condition_number(&self) -> f64 {
        let max = self.eigenvalues.max();
        let min = self.eigenvalues.min();
        max / min
    }

    #[cfg(test)]
    pub(crate) fn set_generation_for_tests(&mut self, generation: usize) {
        self.generation = generation;
    }

    pub(crate) fn set_mean(&mut self, mean: &[f64]) {
        self.mean.copy_from_slice(mean);
    }

    /// `B D z`: maps a standard normal vector to a draw from `N(0, C)`.
    pub fn transform(&self, z: &[f64]) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            z.len(),
            z.iter().zip(self.axis_lengths.iter()).map(|(a, b)| a * b),
        );
        &self.basis * scaled
    }

    /// `C^{-1/2} v`.
    pub fn inv_sqrt_apply(&self, v: &[f64]) -> DVector<f64> {
        let projected = self.basis.transpose() * DVector::from_column_slice(v);
        let scaled = DVector::from_iterator(
            v.len(),
            projected
                .iter()
                .zip(self.axis_lengths.iter())
                .map(|(a, d)| a / d),
        );
        &self.basis * scaled
    }

    /// One draw `mean + step_size * B D z` with `z` standard normal, drawn
    /// coordinate by coordinate.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dimension();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y = self.transform(&z);
        self.mean
            .iter()
            .zip(y.iter())
            .map(|(m, yi)| m + self.step_size * yi)
            .collect()
    }

    fn refresh_eigen(&mut self) {
        let n = self.dimension();
        let sym = (&self.covariance + self.covariance.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let floor = EIGEN_FLOOR * sym.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
        let mut values = eig.eigenvalues.clone();
        let mut floored = false;
        for v in values.iter_mut() {
            if !(*v >= floor) {
                *v = floor;
                floored = true;
            }
        }
        self.basis = eig.eigenvectors;
        if floored {
            self.repairs += 1;
            let diag = DMatrix::from_diagonal(&values);
            let rebuilt = &self.basis * diag * self.basis.transpose();
            self.covariance = (&rebuilt + rebuilt.transpose()) * 0.5;
        } else {
            self.covariance = sym;
        }
        self.axis_lengths = values.map(f64::sqrt);
        self.eigenvalues = values;
    }
}

/// Draw λ individuals from the current distribution.
pub fn sample_population<R: Rng + ?Sized>(
    dist: &SearchDistribution,
    params: &StrategyParams,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    if !(dist.step_size > 0.0 && dist.step_size.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {}",
            dist.step_size
        )));
    }
    if params.dimension != dist.dimension() {
        return Err(Error::DimensionMismatch {
            expected: params.dimension,
            got: dist.dimension(),
        });
    }
    Ok((0..params.lambda)
        .map(|_| Individual::new(dist.sample_one(rng)))
        .collect())
}

fn ascending(a: f64, b: f64) -> std::cmp::Ordering {
    a.partial_cmp(&b)
        .unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}

/// Indices sorted by ascending penalized objective; ties keep index order and
/// NaN sorts last.
pub fn rank_population(pop: &[Individual]) -> Result<Vec<usize>> {
    let values = pop
        .iter()
        .enumerate()
        .map(|(i, ind)| ind.penalized_objective.ok_or(Error::UnsetObjective(i)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(rank_values(&values))
}

/// Stable argsort of plain values, same ordering rule as [`rank_population`].
pub fn rank_values(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| ascending(values[a], values[b]));
    order
}

/// Weighted recombination of the μ best genomes.
pub fn update_mean(params: &StrategyParams, pop: &[Individual], order: &[usize]) -> Vec<f64> {
    let n = pop[order[0]].genome.len();
    let mut mean = vec![0.0; n];
    for (w, &idx) in params.weights.iter().zip(order.iter()) {
        for (m, x) in mean.iter_mut().zip(pop[idx].genome.iter()) {
            *m += w * x;
        }
    }
    mean
}

/// CSA step-size update plus rank-one and rank-μ covariance updates. The
/// distribution's mean must already hold the new mean; `old_mean` is the mean
/// the population was sampled from.
pub fn update_strategy_state(
    dist: &mut SearchDistribution,
    params: &StrategyParams,
    pop: &[Individual],
    order: &[usize],
    old_mean: &[f64],
) {
    let n = dist.dimension();
    let sigma = dist.step_size;
    let old = DVector::from_column_slice(old_mean);
    let steps: Vec<DVector<f64>> = order
        .iter()
        .take(params.mu)
        .map(|&i| (DVector::from_column_slice(&pop[i].genome) - &old) / sigma)
        .collect();
    let y_w = (&dist.mean - &old) / sigma;

    let cs = params.c_sigma;
    let whitened = dist.inv_sqrt_apply(y_w.as_slice());
    dist.path_sigma =
        &dist.path_sigma * (1.0 - cs) + whitened * (cs * (2.0 - cs) * params.mu_eff).sqrt();

    dist.generation += 1;
    let ps_norm = dist.path_sigma.norm();
    let denom = (1.0 - (1.0 - cs).powi(2 * dist.generation as i32)).sqrt();
    let h_sigma = ps_norm / denom < (1.4 + 2.0 / (n as f64 + 1.0)) * params.chi_n;

    let cc = params.c_c;
    let hs = if h_sigma { 1.0 } else { 0.0 };
    dist.path_c =
        &dist.path_c * (1.0 - cc) + &y_w * (hs * (cc * (2.0 - cc) * params.mu_eff).sqrt());

    let delta = (1.0 - hs) * cc * (2.0 - cc);
    let mut rank_mu = DMatrix::zeros(n, n);
    for (w, y) in params.weights.iter().zip(steps.iter()) {
        rank_mu += (y * y.transpose()) * *w;
    }
    let rank_one = &dist.path_c * dist.path_c.transpose() + &dist.covariance * delta;
    dist.covariance = &dist.covariance * (1.0 - params.c1 - params.c_mu)
        + rank_one * params.c1
        + rank_mu * params.c_mu;

    let exponent = (cs / params.d_sigma) * (ps_norm / params.chi_n - 1.0);
    dist.step_size = sigma * exponent.min(1.0).exp();
    if !(dist.step_size > 0.0) {
        dist.step_size = f64::MIN_POSITIVE;
    }
    dist.refresh_eigen();
}

/// Recombine, then adapt step size and covariance. Returns the old mean.
pub fn tell(
    dist: &mut SearchDistribution,
    params: &StrategyParams,
    pop: &[Individual],
    order: &[usize],
) -> Vec<f64> {
    let old_mean = dist.mean().to_vec();
    let new_mean = update_mean(params, pop, order);
    dist.set_mean(&new_mean);
    update_strategy_state(dist, params, pop, order, &old_mean);
    old_mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxGenerations,
    MaxEvaluations,
    IllConditioned,
    Stagnation,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::MaxGenerations => "max_generations",
            StopReason::MaxEvaluations => "max_evaluations",
            StopReason::IllConditioned => "ill-conditioned",
            StopReason::Stagnation => "stagnation",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `history` holds the best truly evaluated objective of each completed
/// generation. Stagnation: over the last `STAGNATION_WINDOW + 1` generations
/// all values are finite and their range is below `STAGNATION_TOL` relative
/// to their magnitude.
pub fn check_termination(
    dist: &SearchDistribution,
    params: &StrategyParams,
    history: &[f64],
) -> Option<StopReason> {
    if dist.generation >= params.max_generations {
        return Some(StopReason::MaxGenerations);
    }
    if dist.condition_number() > MAX_CONDITION {
        return Some(StopReason::IllConditioned);
    }
    if history.len() > STAGNATION_WINDOW {
        let recent = &history[history.len() - 1 - STAGNATION_WINDOW..];
        if recent.iter().all(|v| v.is_finite()) {
            let hi = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = recent.iter().copied().fold(f64::INFINITY, f64::min);
            let scale = hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE);
            if (hi - lo) / scale < STAGNATION_TOL {
                return Some(StopReason::Stagnation);
            }
        }
    }
    None
}

/// Plain ask/tell wrapper around the engine for unconstrained use.
#[derive(Debug, Clone)]
pub struct CmaEs {
    pub params: StrategyParams,
    pub dist: SearchDistribution,
    best: Option<(f64, Vec<f64>)>,
    history: Vec<f64>,
    evaluations: usize,
}

impl CmaEs {
    pub fn new(mean: Vec<f64>, step_size: f64, lambda: usize) -> Result<Self> {
        let params = StrategyParams::new(mean.len(), lambda)?;
        let dist = SearchDistribution::new(mean, step_size)?;
        Ok(Self {
            params,
            dist,
            best: None,
            history: Vec::new(),
            evaluations: 0,
        })
    }

    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        Ok(sample_population(&self.dist, &self.params, rng)?
            .into_iter()
            .map(|i| i.genome)
            .collect())
    }

    pub fn tell(&mut self, genomes: Vec<Vec<f64>>, values: &[f64]) -> Result<()> {
        if genomes.len() != self.params.lambda || values.len() != genomes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.lambda,
                got: values.len(),
            });
        }
        let pop: Vec<Individual> = genomes
            .into_iter()
            .zip(values.iter())
            .map(|(g, &v)| Individual::new(g).with_objective(v, EvalSource::TrueFunction))
            .collect();
        let order = rank_population(&pop)?;
        self.evaluations += pop.len();
        let top = &pop[order[0]];
        let v = top.penalized_objective.unwrap_or(f64::INFINITY);
        if self.best.as_ref().is_none_or(|(b, _)| v < *b) {
            self.best = Some((v, top.genome.clone()));
        }
        self.history.push(v);
        tell(&mut self.dist, &self.params, &pop, &order);
        Ok(())
    }

    pub fn stop(&self) -> Option<StopReason> {
        check_termination(&self.dist, &self.params, &self.history)
    }

    pub fn best(&self) -> Option<(f64, &[f64])> {
        self.best.as_ref().map(|(v, g)| (*v, g.as_slice()))
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

//! Real-coded genetic algorithm used as the comparison baseline.
//!
//! Elitism keeps the best chromosome, parents are drawn with linear rank
//! weights, crossover blends one random coordinate of the two parents and
//! mutation resets one random coordinate uniformly within its bounds.
//!
//! Constraint handling is a single-population repair scheme: an infeasible
//! child is moved by bisection along the segment towards the current best
//! feasible chromosome and always replaced by the repaired point. This stands
//! in for the dual-population Genocop III scheme, which is not implemented.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPAIR_BISECTION_STEPS: usize = 30;
pub const MAX_UNIFORM_TRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GaParams {
    pub population_size: usize,
    pub crossprob: f64,
    pub mutprob: f64,
    pub bounds: Vec<(f64, f64)>,
    pub max_generations: usize,
    pub elitism_count: usize,
}

impl GaParams {
    pub fn new(population_size: usize, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let p = Self {
            population_size,
            crossprob: 0.7,
            mutprob: 0.1,
            bounds,
            max_generations: 100,
            elitism_count: 1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidParameter(
                "GA population size must be at least 2".into(),
            ));
        }
        for (name, v) in [("crossprob", self.crossprob), ("mutprob", self.mutprob)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if let Some((i, b)) = self
            .bounds
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.0 < b.1) || !b.0.is_finite() || !b.1.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "bounds of coordinate {i} are invalid: {b:?}"
            )));
        }
        Ok(())
    }
}

/// Operator probabilities as they appear in a run config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaOperatorConfig {
    #[serde(default = "default_crossprob")]
    pub crossprob: f64,
    #[serde(default = "default_mutprob")]
    pub mutprob: f64,
}

fn default_crossprob() -> f64 {
    0.7
}

fn default_mutprob() -> f64 {
    0.1
}

impl Default for GaOperatorConfig {
    fn default() -> Self {
        Self {
            crossprob: default_crossprob(),
            mutprob: default_mutprob(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub genome: Vec<f64>,
    pub objective: f64,
}

/// Sort ascending by objective (best first), stable.
pub fn rank(pop: &mut [Chromosome]) {
    pop.sort_by(|a, b| {
        a.objective
            .partial_cmp(&b.objective)
            .unwrap_or_else(|| a.objective.is_nan().cmp(&b.objective.is_nan()))
    });
}

/// Index into a best-first population, drawn with probability proportional to
/// `N - rank + 1` (rank 1 is the best).
pub fn select_parent<R: Rng + ?Sized>(ranked_len: usize, rng: &mut R) -> usize {
    let n = ranked_len as u64;
    let total = n * (n + 1) / 2;
    let mut u = rng.random_range(0..total);
    for idx in 0..ranked_len {
        let w = n - idx as u64;
        if u < w {
            return idx;
        }
        u -= w;
    }
    ranked_len - 1
}

/// Blend coordinate `i` of both parents with weight `c`.
pub fn blend(p1: &[f64], p2: &[f64], i: usize, c: f64) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    c1[i] = c * p1[i] + (1.0 - c) * p2[i];
    c2[i] = c * p2[i] + (1.0 - c) * p1[i];
    (c1, c2)
}

pub fn crossover<R: Rng + ?Sized>(
    p1: &[f64],
    p2: &[f64],
    crossprob: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(p1.len(), p2.len(), "parents differ in length");
    if rng.random::<f64>() < crossprob {
        let i = rng.random_range(0..p1.len());
        let c = rng.random::<f64>();
        blend(p1, p2, i, c)
    } else {
        (p1.to_vec(), p2.to_vec())
    }
}

pub fn mutate<R: Rng + ?Sized>(
    x: &mut [f64],
    mutprob: f64,
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> bool {
    if rng.random::<f64>() < mutprob {
        let i = rng.random_range(0..x.len());
        let c = rng.random::<f64>();
        let (lo, hi) = bounds[i];
        x[i] = lo + c * (hi - lo);
        true
    } else {
        false
    }
}

pub fn uniform_in_bounds<R: Rng + ?Sized>(bounds: &[(f64, f64)], rng: &mut R) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
        .collect()
}

/// Move an infeasible point to feasibility. With a distinct feasible
/// `reference`, bisect the segment from the reference to `x` and return the
/// feasible end closest to `x`; otherwise draw uniform points within bounds.
pub fn repair<R, F>(
    x: &[f64],
    feasible: &F,
    reference: Option<&[f64]>,
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> bool + ?Sized,
{
    if feasible(x) {
        return Ok(x.to_vec());
    }
    if let Some(r) = reference.filter(|r| *r != x && feasible(r)) {
        let point =
            |t: f64| -> Vec<f64> { r.iter().zip(x).map(|(a, b)| a + t * (b - a)).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..REPAIR_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if feasible(&point(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(point(lo));
    }
    for _ in 0..MAX_UNIFORM_TRIES {
        let candidate = uniform_in_bounds(bounds, rng);
        if feasible(&candidate) {
            return Ok(candidate);
        }
    }
    Err(Error::NoFeasiblePoint(MAX_UNIFORM_TRIES))
}

/// Evaluate genomes in parallel, keeping input order.
pub fn evaluate_all<O>(genomes: Vec<Vec<f64>>, objective: &O) -> Vec<Chromosome>
where
    O: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    genomes
        .into_par_iter()
        .map(|genome| {
            let v = objective(&genome);
            let objective = if v.is_finite() { v } else { f64::INFINITY };
            Chromosome { genome, objective }
        })
        .collect()
}

/// Random feasible starting population. Uniform draws are repaired towards
/// `seed_point` (when feasible), otherwise towards the first feasible draw.
pub fn initial_population<R, O, F>(
    params: &GaParams,
    objective: &O,
    feasible: &F,
    seed_point: Option<&[f64]>,
    rng: &mut R,
) -> Result<Vec<Chromosome>>
where
    R: Rng + ?Sized,
    O: Fn(&[f64]) -> f64 + Sync + ?Sized,
    F: Fn(&[f64]) -> bool + ?Sized,
{
    let mut genomes: Vec<Vec<f64>> = Vec::with_capacity(params.population_size);
    let mut reference: Option<Vec<f64>> = seed_point.filter(|p| feasible(p)).map(<[f64]>::to_vec);
    for _ in 0..params.population_size {
        let x = uniform_in_bounds(&params.bounds, rng);
        let x = repair(&x, feasible, reference.as_deref(), &params.bounds, rng)?;
        if reference.is_none() {
            reference = Some(x.clone());
        }
        genomes.push(x);
    }
    let mut pop = evaluate_all(genomes, objective);
    rank(&mut pop);
    Ok(pop)
}

/// One generation: the elite is copied, the rest is bred by
/// select, crossover, mutate and repair, then evaluated. `pop` must be ranked.
pub fn ga_generation<R, O, F>(
    pop: &[Chromosome],
    params: &GaParams,
    objective: &O,
    feasible: &F,
    rng: &mut R,
) -> Result<Vec<Chromosome>>
where
    R: Rng + ?Sized,
    O: Fn(&[f64]) -> f64 + Sync + ?Sized,
    F: Fn(&[f64]) -> bool + ?Sized,
{
    let size = params.population_size;
    let elites = params.elitism_count.min(size).min(pop.len());
    let reference = pop[0].genome.clone();
    let mut children: Vec<Vec<f64>> = Vec::with_capacity(size - elites);
    while children.len() < size - elites {
        let a = select_parent(pop.len(), rng);
        let b = select_parent(pop.len(), rng);
        let (c1, c2) = crossover(&pop[a].genome, &pop[b].genome, params.crossprob, rng);
        for mut child in [c1, c2] {
            if children.len() == size - elites {
                break;
            }
            mutate(&mut child, params.mutprob, &params.bounds, rng);
            children.push(repair(
                &child,
                feasible,
                Some(&reference),
                &params.bounds,
                rng,
            )?);
        }
    }
    let mut next: Vec<Chromosome> = pop[..elites].to_vec();
    next.extend(evaluate_all(children, objective));
    rank(&mut next);
    Ok(next)
}

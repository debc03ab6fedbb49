//! Seeded optimizer runs over a [`Problem`]: constrained, optionally
//! surrogate-assisted CMA-ES and the GA baseline, both producing one
//! [`GenerationRow`] per generation.
//!
//! Random draws come from a single generator per run in a fixed order:
//! initial mean, then per generation the λ samples (each with its redraws).
//! Objective evaluations may run in parallel; results are gathered in
//! individual order so parallelism never changes a run.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cma::{
    check_termination, rank_population, sample_population, tell, EvalSource, Individual,
    SearchDistribution, StopReason, StrategyParams,
};
use crate::constraints::{
    self, maybe_increase_gammas, maybe_set_gammas, penalize, PenaltyState, SumConstraint,
    MAX_RESAMPLES,
};
use crate::error::{Error, Result};
use crate::ga::{self, Chromosome, GaParams};
use crate::metamodel::{
    approximate_ranking_step, LocalQuadratic, SurrogateSettings, TrainingArchive,
};
use crate::problem::Problem;
use crate::rng::{seeded, RunRng};

/// Fraction of the mean coordinate range used as the initial step size.
pub const INITIAL_STEP_FRACTION: f64 = 0.3;

/// Per-generation log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRow {
    pub generation: usize,
    /// Cumulative true objective calls.
    pub evaluations: usize,
    /// Best feasible true objective value seen so far (`inf` if none yet).
    pub best_objective: f64,
    pub best_genome: Vec<f64>,
    /// Rejected draws in this generation.
    pub resampled: usize,
    /// Approximate ranking cycles, for surrogate-assisted generations.
    pub n_ic: Option<usize>,
    pub gammas: Vec<f64>,
    /// Non-finite objective values replaced by the worst-case sentinel.
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<GenerationRow>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaSettings {
    pub lambda: usize,
    pub max_generations: usize,
    pub max_evaluations: Option<usize>,
    /// `None` disables rejection.
    pub rejection_fraction: Option<f64>,
    pub surrogate: Option<SurrogateSettings>,
}

impl CmaSettings {
    pub fn new(lambda: usize) -> Self {
        Self {
            lambda,
            max_generations: 100,
            max_evaluations: None,
            rejection_fraction: Some(constraints::DEFAULT_REJECTION_FRACTION),
            surrogate: None,
        }
    }
}

/// Initial mean uniform in the bounds, step size `0.3 * mean range`, and a
/// diagonal covariance carrying the relative coordinate ranges.
pub fn initial_distribution(bounds: &[(f64, f64)], rng: &mut RunRng) -> Result<SearchDistribution> {
    use rand::Rng;
    let mean: Vec<f64> = bounds
        .iter()
        .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
        .collect();
    let ranges: Vec<f64> = bounds.iter().map(|&(lo, hi)| hi - lo).collect();
    let avg = ranges.iter().sum::<f64>() / ranges.len() as f64;
    if !(avg > 0.0 && avg.is_finite()) {
        return Err(Error::InvalidParameter("degenerate bounds".into()));
    }
    let scales = DVector::from_iterator(ranges.len(), ranges.iter().map(|r| (r / avg).powi(2)));
    SearchDistribution::with_covariance(
        mean,
        INITIAL_STEP_FRACTION * avg,
        DMatrix::from_diagonal(&scales),
    )
}

fn sanitize(v: f64) -> (f64, bool) {
    if v.is_finite() {
        (v, false)
    } else {
        (f64::INFINITY, true)
    }
}

pub struct CmaRunner<'p, P: Problem + ?Sized> {
    problem: &'p P,
    constraints: Vec<SumConstraint>,
    settings: CmaSettings,
    params: StrategyParams,
    dist: SearchDistribution,
    penalty: PenaltyState,
    archive: Option<TrainingArchive>,
    rng: RunRng,
    evaluations: usize,
    best: Option<(f64, Vec<f64>)>,
    /// Best truly evaluated raw objective per generation.
    history: Vec<f64>,
}

impl<'p, P: Problem + ?Sized> CmaRunner<'p, P> {
    /// `extra_constraints` are added to the problem's own constraints.
    pub fn new(
        problem: &'p P,
        extra_constraints: &[SumConstraint],
        settings: CmaSettings,
        seed: u64,
    ) -> Result<Self> {
        let n = problem.dimension();
        let mut constraints = problem.constraints();
        constraints.extend_from_slice(extra_constraints);
        for c in &constraints {
            c.validate(n)?;
        }
        if let Some(s) = &settings.surrogate {
            s.validate(n)?;
        }
        let params =
            StrategyParams::new(n, settings.lambda)?.with_max_generations(settings.max_generations);
        let mut rng = seeded(seed);
        let bounds = problem.bounds();
        if bounds.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bounds.len(),
            });
        }
        let dist = initial_distribution(&bounds, &mut rng)?;
        let penalty = PenaltyState::new(
            constraints.len(),
            n,
            settings.lambda,
            settings.rejection_fraction,
        )?;
        let archive = settings.surrogate.map(|_| TrainingArchive::new());
        Ok(Self {
            problem,
            constraints,
            settings,
            params,
            dist,
            penalty,
            archive,
            rng,
            evaluations: 0,
            best: None,
            history: Vec::new(),
        })
    }

    pub fn distribution(&self) -> &SearchDistribution {
        &self.dist
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    pub fn penalty(&self) -> &PenaltyState {
        &self.penalty
    }

    pub fn archive(&self) -> Option<&TrainingArchive> {
        self.archive.as_ref()
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn constraints(&self) -> &[SumConstraint] {
        &self.constraints
    }

    fn rejected(&self, x: &[f64]) -> bool {
        match self.penalty.rejection_fraction {
            Some(p) => {
                constraints::reject_any(x, &self.constraints, p)
                    || self.problem.far_infeasible(x, p)
            }
            None => false,
        }
    }

    fn is_feasible(&self, x: &[f64]) -> bool {
        constraints::is_feasible(x, &self.constraints) && self.problem.is_feasible(x)
    }

    /// Draw λ individuals, redrawing rejected ones up to the cap. Returns the
    /// population and the number of rejected draws.
    fn sample(&mut self) -> Result<(Vec<Individual>, usize)> {
        let mut pop = sample_population(&self.dist, &self.params, &mut self.rng)?;
        let mut resampled = 0;
        if self.penalty.rejection_fraction.is_some() {
            for ind in pop.iter_mut() {
                let mut tries = 0;
                while tries < MAX_RESAMPLES && self.rejected(&ind.genome) {
                    ind.genome = self.dist.sample_one(&mut self.rng);
                    tries += 1;
                }
                resampled += tries;
            }
        }
        Ok((pop, resampled))
    }

    pub fn stop(&self) -> Option<StopReason> {
        if let Some(max) = self.settings.max_evaluations {
            if self.evaluations >= max {
                return Some(StopReason::MaxEvaluations);
            }
        }
        check_termination(&self.dist, &self.params, &self.history)
    }

    pub fn step(&mut self) -> Result<GenerationRow> {
        let (mut pop, resampled) = self.sample()?;
        let problem = self.problem;
        let mut errors = 0;
        let mut n_ic = None;

        let surrogate_ready = match (&self.archive, &self.settings.surrogate) {
            (Some(a), Some(s)) => a.len() >= s.min_archive_size,
            _ => false,
        };

        if surrogate_ready {
            let settings = self.settings.surrogate.expect("surrogate settings");
            let archive = self.archive.as_mut().expect("archive");
            let (penalty, constraints, dist) = (&self.penalty, &self.constraints, &self.dist);
            let score = |x: &[f64], raw: f64| penalize(x, raw, penalty, constraints, dist);
            let mut calls = 0;
            let mut true_eval = |x: &[f64]| {
                calls += 1;
                let (v, bad) = sanitize(problem.evaluate(x));
                errors += bad as usize;
                v
            };
            let out = approximate_ranking_step(
                &mut pop,
                archive,
                dist,
                &self.params,
                settings.max_cycle_fraction,
                &LocalQuadratic { k: settings.k },
                &mut true_eval,
                &score,
            )?;
            self.evaluations += calls;
            n_ic = Some(out.cycles);
        } else {
            let cached: Vec<Option<f64>> = pop
                .iter()
                .map(|ind| self.archive.as_ref().and_then(|a| a.lookup(&ind.genome)))
                .collect();
            let values: Vec<(f64, bool)> = pop
                .par_iter()
                .zip(cached.par_iter())
                .map(|(ind, hit)| match hit {
                    Some(v) => (*v, false),
                    None => sanitize(problem.evaluate(&ind.genome)),
                })
                .collect();
            for ((ind, (v, bad)), hit) in pop.iter_mut().zip(values).zip(&cached) {
                errors += bad as usize;
                if hit.is_none() {
                    self.evaluations += 1;
                    if let Some(a) = self.archive.as_mut() {
                        a.insert(&ind.genome, v);
                    }
                }
                ind.raw_objective = Some(v);
                ind.penalized_objective = Some(penalize(
                    &ind.genome,
                    v,
                    &self.penalty,
                    &self.constraints,
                    &self.dist,
                ));
                ind.evaluated_by = EvalSource::TrueFunction;
            }
        }

        let order = rank_population(&pop)?;
        let mut generation_best = f64::INFINITY;
        for &i in &order {
            let ind = &pop[i];
            if ind.evaluated_by != EvalSource::TrueFunction {
                continue;
            }
            let raw = ind.raw_objective.unwrap_or(f64::INFINITY);
            generation_best = generation_best.min(raw);
            if raw.is_finite()
                && self.is_feasible(&ind.genome)
                && self.best.as_ref().is_none_or(|(b, _)| raw < *b)
            {
                self.best = Some((raw, ind.genome.clone()));
            }
        }
        let raws: Vec<f64> = pop.iter().filter_map(|i| i.raw_objective).collect();
        self.penalty.record_generation(&raws);

        tell(&mut self.dist, &self.params, &pop, &order);
        maybe_set_gammas(&mut self.penalty, &self.dist, &self.constraints);
        let genomes: Vec<Vec<f64>> = pop.into_iter().map(|i| i.genome).collect();
        maybe_increase_gammas(
            &mut self.penalty,
            &self.dist,
            &self.constraints,
            &self.params,
            &genomes,
        );

        let best_value = self.best.as_ref().map_or(f64::INFINITY, |b| b.0);
        self.history.push(generation_best);
        Ok(GenerationRow {
            generation: self.dist.generation(),
            evaluations: self.evaluations,
            best_objective: best_value,
            best_genome: self.best.as_ref().map(|b| b.1.clone()).unwrap_or_default(),
            resampled,
            n_ic,
            gammas: self.penalty.gammas.clone(),
            errors,
        })
    }

    pub fn run(mut self) -> Result<RunOutcome> {
        let mut rows = Vec::new();
        loop {
            if let Some(reason) = self.stop() {
                return Ok(RunOutcome {
                    rows,
                    stop_reason: reason,
                });
            }
            rows.push(self.step()?);
        }
    }
}

/// GA baseline run. Feasibility combines the bounds, the sum constraints and
/// the problem's own test.
pub struct GaRunner<'p, P: Problem + ?Sized> {
    problem: &'p P,
    constraints: Vec<SumConstraint>,
    params: GaParams,
    max_evaluations: Option<usize>,
    rng: RunRng,
    population: Vec<Chromosome>,
    generation: usize,
    evaluations: usize,
}

impl<'p, P: Problem + ?Sized> GaRunner<'p, P> {
    pub fn new(
        problem: &'p P,
        extra_constraints: &[SumConstraint],
        params: GaParams,
        max_evaluations: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let n = problem.dimension();
        params.validate()?;
        if params.bounds.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: params.bounds.len(),
            });
        }
        let mut constraints = problem.constraints();
        constraints.extend_from_slice(extra_constraints);
        for c in &constraints {
            c.validate(n)?;
        }
        Ok(Self {
            problem,
            constraints,
            params,
            max_evaluations,
            rng: seeded(seed),
            population: Vec::new(),
            generation: 0,
            evaluations: 0,
        })
    }

    fn feasible(&self) -> impl Fn(&[f64]) -> bool + '_ {
        move |x: &[f64]| {
            x.iter()
                .zip(&self.params.bounds)
                .all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
                && constraints::is_feasible(x, &self.constraints)
                && self.problem.is_feasible(x)
        }
    }

    pub fn population(&self) -> &[Chromosome] {
        &self.population
    }

    pub fn stop(&self) -> Option<StopReason> {
        if self.generation >= self.params.max_generations {
            return Some(StopReason::MaxGenerations);
        }
        match self.max_evaluations {
            Some(max) if self.evaluations >= max => Some(StopReason::MaxEvaluations),
            _ => None,
        }
    }

    pub fn step(&mut self) -> Result<GenerationRow> {
        let problem = self.problem;
        let objective = |x: &[f64]| problem.evaluate(x);
        let mut rng = self.rng.clone();
        let seed_point = problem.reference_point();
        let next = {
            let feasible = self.feasible();
            if self.population.is_empty() {
                ga::initial_population(
                    &self.params,
                    &objective,
                    &feasible,
                    seed_point.as_deref(),
                    &mut rng,
                )?
            } else {
                ga::ga_generation(
                    &self.population,
                    &self.params,
                    &objective,
                    &feasible,
                    &mut rng,
                )?
            }
        };
        self.rng = rng;
        let fresh = if self.population.is_empty() {
            next.len()
        } else {
            next.len() - self.params.elitism_count.min(next.len())
        };
        self.evaluations += fresh;
        self.population = next;
        self.generation += 1;
        let errors = self
            .population
            .iter()
            .filter(|c| !c.objective.is_finite())
            .count();
        let best = &self.population[0];
        let (best_objective, best_genome) = if best.objective.is_finite() {
            (best.objective, best.genome.clone())
        } else {
            (f64::INFINITY, Vec::new())
        };
        Ok(GenerationRow {
            generation: self.generation,
            evaluations: self.evaluations,
            best_objective,
            best_genome,
            resampled: 0,
            n_ic: None,
            gammas: Vec::new(),
            errors,
        })
    }

    pub fn run(mut self) -> Result<RunOutcome> {
        let mut rows = Vec::new();
        loop {
            if let Some(reason) = self.stop() {
                return Ok(RunOutcome {
                    rows,
                    stop_reason: reason,
                });
            }
            rows.push(self.step()?);
        }
    }
}

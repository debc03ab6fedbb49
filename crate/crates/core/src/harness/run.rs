//! Single seeded runs.

use std::path::{Path, PathBuf};

use super::config::{OptimizerKind, ProblemConfig, RunConfig};
use super::record::RunRecord;
use crate::error::Result;
use crate::ga::GaParams;
use crate::metamodel::SurrogateSettings;
use crate::optimizer::{CmaRunner, CmaSettings, GaRunner, RunOutcome};
use crate::problem::Problem;
use crate::well::WellProblem;

pub fn build_problem(config: &ProblemConfig) -> Result<Box<dyn Problem>> {
    Ok(match config {
        ProblemConfig::Benchmark(b) => Box::new(b.problem()),
        ProblemConfig::WellPlacement(w) => Box::new(WellProblem::new(w)?),
    })
}

/// Run `optimizer` (overriding the config's) on an already built problem.
pub fn run_on(
    problem: &dyn Problem,
    config: &RunConfig,
    optimizer: OptimizerKind,
    seed: u64,
) -> Result<RunRecord> {
    let outcome: RunOutcome = match optimizer {
        OptimizerKind::Cma | OptimizerKind::CmaSurrogate => {
            let surrogate = (optimizer == OptimizerKind::CmaSurrogate).then(|| {
                config
                    .surrogate
                    .unwrap_or_else(|| SurrogateSettings::default_for(problem.dimension()))
            });
            let settings = CmaSettings {
                lambda: config.lambda(),
                max_generations: config.max_generations,
                max_evaluations: config.max_evaluations,
                rejection_fraction: config.rejection_fraction,
                surrogate,
            };
            CmaRunner::new(problem, &config.constraints, settings, seed)?.run()?
        }
        OptimizerKind::Ga => {
            let params = GaParams {
                crossprob: config.ga.crossprob,
                mutprob: config.ga.mutprob,
                max_generations: config.max_generations,
                ..GaParams::new(config.lambda(), problem.bounds())?
            };
            GaRunner::new(
                problem,
                &config.constraints,
                params,
                config.max_evaluations,
                seed,
            )?
            .run()?
        }
    };
    Ok(RunRecord {
        seed,
        optimizer: optimizer.as_str().to_string(),
        rows: outcome.rows,
        stop_reason: outcome.stop_reason,
    })
}

pub fn run_single(config: &RunConfig, seed: u64) -> Result<RunRecord> {
    let problem = build_problem(&config.problem)?;
    run_on(problem.as_ref(), config, config.optimizer, seed)
}

/// Run and write `run_<seed>.csv` into `dir`.
pub fn run_single_to(config: &RunConfig, seed: u64, dir: &Path) -> Result<(RunRecord, PathBuf)> {
    let record = run_single(config, seed)?;
    let path = record.write(dir)?;
    Ok((record, path))
}

//! Run configuration (a single JSON document, unknown keys rejected).
//!
//! ```json
//! {
//!   "problem": {"type": "benchmark", "function": "rosenbrock", "dimension": 5},
//!   "optimizer": "cma_surrogate",
//!   "population_size": 8,
//!   "max_generations": 500,
//!   "seeds": [1, 2, 3],
//!   "output_dir": "results/rosenbrock"
//! }
//! ```
//!
//! `problem.type` is `benchmark` or `well_placement`; the latter takes the
//! fields of [`WellProblemConfig`]. `optimizer` is `cma`, `cma_surrogate` or `ga`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmarks::{BenchmarkFunction, BenchmarkProblem};
use crate::cma::default_population_size;
use crate::constraints::{SumConstraint, DEFAULT_REJECTION_FRACTION};
use crate::error::{Error, Result};
use crate::ga::GaOperatorConfig;
use crate::metamodel::SurrogateSettings;
use crate::well::WellProblemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Cma,
    #[serde(alias = "cma+surrogate")]
    CmaSurrogate,
    Ga,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Cma => "cma",
            OptimizerKind::CmaSurrogate => "cma_surrogate",
            OptimizerKind::Ga => "ga",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub function: BenchmarkFunction,
    pub dimension: usize,
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    /// Optimum shift.
    #[serde(default)]
    pub center: f64,
}

fn default_lower() -> f64 {
    -5.0
}

fn default_upper() -> f64 {
    5.0
}

impl BenchmarkConfig {
    pub fn problem(&self) -> BenchmarkProblem {
        BenchmarkProblem {
            function: self.function,
            dimension: self.dimension,
            lower: self.lower,
            upper: self.upper,
            center: self.center,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemConfig {
    Benchmark(BenchmarkConfig),
    WellPlacement(WellProblemConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub optimizer: OptimizerKind,
    /// λ; defaults to 40 for well placement and `4 + floor(3 ln n)` for benchmarks.
    #[serde(default)]
    pub population_size: Option<usize>,
    #[serde(default = "default_generations")]
    pub max_generations: usize,
    #[serde(default)]
    pub max_evaluations: Option<usize>,
    /// Sum constraints on top of the problem's own.
    #[serde(default)]
    pub constraints: Vec<SumConstraint>,
    /// Rejection fraction `p`; `null` disables rejection.
    #[serde(default = "default_rejection")]
    pub rejection_fraction: Option<f64>,
    /// Meta-model settings; dimension-based defaults when absent.
    #[serde(default)]
    pub surrogate: Option<SurrogateSettings>,
    #[serde(default)]
    pub ga: GaOperatorConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Evaluations-to-target thresholds; derived from the runs when absent.
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub threshold_scale: ThresholdScale,
    /// Optimizers run by `compare`.
    #[serde(default = "default_compare")]
    pub compare: Vec<OptimizerKind>,
}

fn default_generations() -> usize {
    100
}

fn default_rejection() -> Option<f64> {
    Some(DEFAULT_REJECTION_FRACTION)
}

fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_compare() -> Vec<OptimizerKind> {
    vec![OptimizerKind::Cma, OptimizerKind::Ga]
}

impl RunConfig {
    /// Defaults for everything but the problem and optimizer.
    pub fn new(problem: ProblemConfig, optimizer: OptimizerKind) -> Self {
        Self {
            problem,
            optimizer,
            population_size: None,
            max_generations: default_generations(),
            max_evaluations: None,
            constraints: Vec::new(),
            rejection_fraction: default_rejection(),
            surrogate: None,
            ga: GaOperatorConfig::default(),
            seeds: default_seeds(),
            output_dir: default_output(),
            thresholds: None,
            threshold_scale: ThresholdScale::Linear,
            compare: default_compare(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_json(&text)?;
        // relative grid paths are taken relative to the config file
        if let ProblemConfig::WellPlacement(w) = &mut config.problem {
            if let (Some(grid), Some(dir)) = (&w.grid, path.parent()) {
                if grid.is_relative() && !grid.exists() {
                    w.grid = Some(dir.join(grid));
                }
            }
        }
        Ok(config)
    }

    pub fn lambda(&self) -> usize {
        self.population_size.unwrap_or(match &self.problem {
            ProblemConfig::WellPlacement(_) => 40,
            ProblemConfig::Benchmark(b) => default_population_size(b.dimension),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda() < 2 {
            return Err(Error::Config("population_size must be at least 2".into()));
        }
        if self.max_generations == 0 {
            return Err(Error::Config("max_generations must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if let Some(p) = self.rejection_fraction {
            if !(p > 0.0) {
                return Err(Error::Config(
                    "rejection_fraction must be positive or null".into(),
                ));
            }
        }
        if let ProblemConfig::Benchmark(b) = &self.problem {
            if b.dimension == 0 || !(b.lower < b.upper) {
                return Err(Error::Config(
                    "benchmark needs a positive dimension and lower < upper".into(),
                ));
            }
        }
        if let Some(t) = &self.thresholds {
            if t.is_empty() || t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(
                    "thresholds must be finite and non-empty".into(),
                ));
            }
        }
        Ok(())
    }
}

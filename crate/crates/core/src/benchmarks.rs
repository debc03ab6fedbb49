//! Synthetic test functions.

use serde::{Deserialize, Serialize};

use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkFunction {
    Sphere,
    Rosenbrock,
    Ellipsoid,
    Rastrigin,
}

impl BenchmarkFunction {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            BenchmarkFunction::Sphere => x.iter().map(|v| v * v).sum(),
            BenchmarkFunction::Rosenbrock => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum(),
            BenchmarkFunction::Ellipsoid => {
                let n = x.len();
                if n == 1 {
                    return x[0] * x[0];
                }
                x.iter()
                    .enumerate()
                    .map(|(i, v)| 1e6f64.powf(i as f64 / (n - 1) as f64) * v * v)
                    .sum()
            }
            BenchmarkFunction::Rastrigin => {
                10.0 * x.len() as f64
                    + x.iter()
                        .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                        .sum::<f64>()
            }
        }
    }
}

/// A test function shifted so that its optimum sits at `center` in every
/// coordinate (Rosenbrock's optimum is at `center + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkProblem {
    pub function: BenchmarkFunction,
    pub dimension: usize,
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
}

impl BenchmarkProblem {
    pub fn new(function: BenchmarkFunction, dimension: usize) -> Self {
        Self {
            function,
            dimension,
            lower: -5.0,
            upper: 5.0,
            center: 0.0,
        }
    }
}

impl Problem for BenchmarkProblem {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(self.lower, self.upper); self.dimension]
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        if self.center == 0.0 {
            self.function.value(x)
        } else {
            let shifted: Vec<f64> = x.iter().map(|v| v - self.center).collect();
            self.function.value(&shifted)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_optima() {
        assert_eq!(BenchmarkFunction::Sphere.value(&[0.0; 4]), 0.0);
        assert_eq!(BenchmarkFunction::Rosenbrock.value(&[1.0; 5]), 0.0);
        assert_eq!(BenchmarkFunction::Ellipsoid.value(&[0.0; 3]), 0.0);
        assert!(BenchmarkFunction::Rastrigin.value(&[0.0; 3]).abs() < 1e-12);
        assert_eq!(BenchmarkFunction::Rosenbrock.value(&[0.0, 0.0]), 1.0);
        let p = BenchmarkProblem {
            center: 2.0,
            ..BenchmarkProblem::new(BenchmarkFunction::Sphere, 3)
        };
        assert_eq!(p.evaluate(&[2.0; 3]), 0.0);
        assert_eq!(p.evaluate(&[0.0; 3]), 12.0);
    }
}

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wellopt::cma::{self, default_population_size, SearchDistribution};
use wellopt::constraints::{self, PenaltyState};
use wellopt::harness::{self, RunConfig};
use wellopt::metamodel::{self, Metric, TrainingArchive, WhitenedArchive};
use wellopt::rng::{seeded, RunRng};
use wellopt::well::{self, EconomicParams, ProductionProfile, WellProblem, WellProblemConfig};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("covariance must be a square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Plain ask/tell CMA-ES.
#[pyclass(name = "CmaEs")]
struct PyCmaEs {
    inner: cma::CmaEs,
    rng: RunRng,
}

#[pymethods]
impl PyCmaEs {
    #[new]
    #[pyo3(signature = (mean, sigma, population_size=None, seed=1, max_generations=1000))]
    fn new(
        mean: Vec<f64>,
        sigma: f64,
        population_size: Option<usize>,
        seed: u64,
        max_generations: usize,
    ) -> PyResult<Self> {
        let lambda = population_size.unwrap_or_else(|| default_population_size(mean.len()));
        let mut inner = cma::CmaEs::new(mean, sigma, lambda).map_err(err)?;
        inner.params.max_generations = max_generations;
        Ok(Self {
            inner,
            rng: seeded(seed),
        })
    }

    fn ask(&mut self) -> PyResult<Vec<Vec<f64>>> {
        self.inner.ask(&mut self.rng).map_err(err)
    }

    fn tell(&mut self, solutions: Vec<Vec<f64>>, values: Vec<f64>) -> PyResult<()> {
        self.inner.tell(solutions, &values).map_err(err)
    }

    /// Name of the triggered stopping rule, or None.
    fn stop(&self) -> Option<&'static str> {
        self.inner.stop().map(|r| r.as_str())
    }

    #[getter]
    fn best(&self) -> Option<(f64, Vec<f64>)> {
        self.inner.best().map(|(v, g)| (v, g.to_vec()))
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.dist.mean().to_vec()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.dist.step_size()
    }

    #[getter]
    fn population_size(&self) -> usize {
        self.inner.params.lambda
    }

    #[getter]
    fn generation(&self) -> usize {
        self.inner.dist.generation()
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.inner.evaluations()
    }
}

/// `lower <= sum(x[i] for i in indices) <= upper`.
#[pyclass(name = "SumConstraint", from_py_object)]
#[derive(Clone)]
struct PySumConstraint {
    inner: constraints::SumConstraint,
}

#[pymethods]
impl PySumConstraint {
    #[new]
    fn new(indices: Vec<usize>, lower: f64, upper: f64) -> PyResult<Self> {
        Ok(Self {
            inner: constraints::SumConstraint::new(indices, lower, upper).map_err(err)?,
        })
    }

    /// Distance of the subset sum to the interval.
    fn violation(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.validate(x.len()).map_err(err)?;
        Ok(constraints::constraint_violation(&x, &self.inner).distance)
    }

    fn __repr__(&self) -> String {
        format!(
            "SumConstraint({:?}, {}, {})",
            self.inner.indices, self.inner.lower, self.inner.upper
        )
    }
}

/// Penalty term for `x` given weights `gammas` and the search covariance.
#[pyfunction]
fn penalty(
    x: Vec<f64>,
    constraints: Vec<PySumConstraint>,
    gammas: Vec<f64>,
    covariance: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let cs: Vec<constraints::SumConstraint> = constraints.into_iter().map(|c| c.inner).collect();
    if gammas.len() != cs.len() {
        return Err(PyValueError::new_err("one gamma per constraint"));
    }
    for c in &cs {
        c.validate(x.len()).map_err(err)?;
    }
    let dist = SearchDistribution::with_covariance(vec![0.0; x.len()], 1.0, matrix(covariance)?)
        .map_err(err)?;
    let mut state = PenaltyState::new(cs.len(), x.len(), 2, None).map_err(err)?;
    state.gammas = gammas;
    Ok(constraints::penalty(&x, &state, &cs, &dist))
}

/// Local quadratic fitted around one query point.
#[pyclass(name = "LocalQuadraticModel")]
struct PyLocalQuadraticModel {
    inner: metamodel::LocalQuadraticModel,
}

#[pymethods]
impl PyLocalQuadraticModel {
    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.center.len() {
            return Err(PyValueError::new_err("dimension mismatch"));
        }
        Ok(self.inner.predict(&x))
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth
    }
}

/// Fit a locally weighted quadratic at `query` from the `k` nearest points
/// (Mahalanobis distance under `covariance`, identity by default).
#[pyfunction]
#[pyo3(signature = (points, values, query, k=None, covariance=None))]
fn fit_local_model(
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    query: Vec<f64>,
    k: Option<usize>,
    covariance: Option<Vec<Vec<f64>>>,
) -> PyResult<PyLocalQuadraticModel> {
    let n = query.len();
    if points.len() != values.len() || points.iter().any(|p| p.len() != n) {
        return Err(PyValueError::new_err(
            "points and values must match and share the query's dimension",
        ));
    }
    let mut archive = TrainingArchive::new();
    for (p, v) in points.iter().zip(&values) {
        archive.insert(p, *v);
    }
    let cov = match covariance {
        Some(c) => matrix(c)?,
        None => DMatrix::identity(n, n),
    };
    let whitened = WhitenedArchive::new(Metric::from_covariance(&cov).map_err(err)?, &archive);
    let k = k.unwrap_or(archive.len());
    let neighbors = metamodel::select_neighbors(&archive, &whitened, &query, k).map_err(err)?;
    let inner = metamodel::fit_local_model(&archive, &neighbors, &query).map_err(err)?;
    Ok(PyLocalQuadraticModel { inner })
}

#[pyfunction]
#[pyo3(signature = (n_deviations, n_branches, n_wells))]
fn genome_dimension(n_deviations: usize, n_branches: usize, n_wells: usize) -> usize {
    well::genome_dimension(n_deviations, n_branches, n_wells)
}

fn economics(json: Option<&str>) -> PyResult<EconomicParams> {
    let e: EconomicParams = match json {
        Some(s) => serde_json::from_str(s).map_err(err)?,
        None => EconomicParams::default(),
    };
    e.validate().map_err(err)?;
    Ok(e)
}

/// Net present value of per-period volumes minus `cost`.
#[pyfunction]
#[pyo3(signature = (oil, water, gas, cost, economics_json=None))]
fn npv(
    oil: Vec<f64>,
    water: Vec<f64>,
    gas: Vec<f64>,
    cost: f64,
    economics_json: Option<&str>,
) -> PyResult<f64> {
    if oil.len() != water.len() || oil.len() != gas.len() {
        return Err(PyValueError::new_err(
            "oil, water and gas need one value per period",
        ));
    }
    Ok(well::npv(
        &ProductionProfile { oil, water, gas },
        &economics(economics_json)?,
        cost,
    ))
}

/// Drilling cost of the wells encoded by `genome`.
#[pyfunction]
#[pyo3(signature = (genome, problem_json=None))]
fn drilling_cost(genome: Vec<f64>, problem_json: Option<&str>) -> PyResult<f64> {
    let problem = well_problem(problem_json)?;
    let wells = problem.decode(&genome).map_err(err)?;
    Ok(well::drilling_cost(&wells, problem.economics()))
}

fn well_problem(json: Option<&str>) -> PyResult<WellProblem> {
    let config: WellProblemConfig = match json {
        Some(s) => serde_json::from_str(s).map_err(err)?,
        None => WellProblemConfig::default(),
    };
    WellProblem::new(&config).map_err(err)
}

/// Score a well genome; returns objective, NPV, cost, feasibility and the
/// production profile.
#[pyfunction]
#[pyo3(signature = (genome, problem_json=None))]
fn evaluate_well<'py>(
    py: Python<'py>,
    genome: Vec<f64>,
    problem_json: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let problem = well_problem(problem_json)?;
    let e = problem.evaluate_detailed(&genome).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("objective", e.objective)?;
    d.set_item("npv", e.npv)?;
    d.set_item("cost", e.cost)?;
    d.set_item("feasible", e.checks.iter().all(|c| c.feasible))?;
    d.set_item(
        "lengths",
        e.checks.iter().map(|c| c.length).collect::<Vec<_>>(),
    )?;
    d.set_item("oil", e.profile.oil.clone())?;
    d.set_item("water", e.profile.water.clone())?;
    d.set_item("gas", e.profile.gas.clone())?;
    Ok(d)
}

/// One seeded run of a JSON run config; returns the run record fields and its CSV.
#[pyfunction]
fn run<'py>(py: Python<'py>, config_json: &str, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let config = RunConfig::from_json(config_json).map_err(err)?;
    let rec = py
        .detach(|| harness::run_single(&config, seed))
        .map_err(err)?;
    let csv = String::from_utf8(rec.to_csv().map_err(err)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("optimizer", rec.optimizer.clone())?;
    d.set_item("seed", rec.seed)?;
    d.set_item("final_best", rec.final_best())?;
    d.set_item(
        "best_genome",
        rec.final_row()
            .map(|r| r.best_genome.clone())
            .unwrap_or_default(),
    )?;
    d.set_item("evaluations", rec.total_evaluations())?;
    d.set_item("generations", rec.rows.len())?;
    d.set_item("stop_reason", rec.stop_reason.as_str())?;
    d.set_item("csv", csv)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "wellopt")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCmaEs>()?;
    m.add_class::<PySumConstraint>()?;
    m.add_class::<PyLocalQuadraticModel>()?;
    m.add_function(wrap_pyfunction!(penalty, m)?)?;
    m.add_function(wrap_pyfunction!(fit_local_model, m)?)?;
    m.add_function(wrap_pyfunction!(genome_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(npv, m)?)?;
    m.add_function(wrap_pyfunction!(drilling_cost, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_well, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

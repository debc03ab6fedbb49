//! Locally weighted full-quadratic meta-models and approximate ranking.
//!
//! Every true evaluation is stored in a [`TrainingArchive`]. To predict the
//! objective at a point `q`, the `k` archive entries nearest to `q` in the
//! Mahalanobis metric of the current covariance are selected, weighted with
//! the kernel `K(z) = (1 - z^2)^2` of their distance relative to the k-th
//! distance, and a full quadratic is fitted by weighted least squares.
//!
//! [`approximate_ranking_step`] uses those predictions to rank a population
//! while truly evaluating as few individuals as the ranking stability allows.

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cma::{rank_values, EvalSource, Individual, SearchDistribution, StrategyParams};
use crate::error::{Error, Result};

/// Number of coefficients of a full quadratic in `n` variables: `n(n+3)/2 + 1`.
pub fn basis_len(n: usize) -> usize {
    n * (n + 3) / 2 + 1
}

/// Basis expansion in the fixed order: squares, cross terms `z_i z_j` for
/// `i < j` in lexicographic order, linear terms, then the constant 1.
pub fn quadratic_basis(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut out = Vec::with_capacity(basis_len(n));
    out.extend(z.iter().map(|v| v * v));
    for i in 0..n {
        for j in i + 1..n {
            out.push(z[i] * z[j]);
        }
    }
    out.extend_from_slice(z);
    out.push(1.0);
    out
}

/// `K(z) = (1 - z^2)^2` on `[0, 1]`, zero beyond.
pub fn kernel(zeta: f64) -> f64 {
    let z = zeta.abs();
    if z >= 1.0 {
        0.0
    } else {
        let t = 1.0 - z * z;
        t * t
    }
}

fn genome_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Append-only store of truly evaluated points. Duplicate genomes and
/// non-finite objective values are never inserted.
#[derive(Debug, Clone, Default)]
pub struct TrainingArchive {
    genomes: Vec<Vec<f64>>,
    values: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
}

impl TrainingArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Returns false when the entry was skipped.
    pub fn insert(&mut self, genome: &[f64], value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        let key = genome_key(genome);
        if self.index.contains_key(&key) {
            return false;
        }
        self.index.insert(key, self.values.len());
        self.genomes.push(genome.to_vec());
        self.values.push(value);
        true
    }

    pub fn lookup(&self, genome: &[f64]) -> Option<f64> {
        self.index.get(&genome_key(genome)).map(|&i| self.values[i])
    }

    pub fn genome(&self, i: usize) -> &[f64] {
        &self.genomes[i]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Flat CSV: columns `x0..x{n-1}` then `objective`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let n = self.genomes.first().map_or(0, Vec::len);
        let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        header.push("objective".into());
        wtr.write_record(&header)?;
        for (g, v) in self.genomes.iter().zip(&self.values) {
            let mut row: Vec<String> = g.iter().map(|x| x.to_string()).collect();
            row.push(v.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut archive = Self::new();
        for record in rdr.records() {
            let record = record?;
            let nums = record
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Config(format!("bad archive value: {e}")))?;
            let (value, genome) = nums
                .split_last()
                .ok_or_else(|| Error::Config("empty archive row".into()))?;
            archive.insert(genome, *value);
        }
        Ok(archive)
    }
}

/// Mahalanobis metric `d(z, q) = |C^{-1/2} (z - q)|`.
#[derive(Debug, Clone)]
pub struct Metric {
    inv_sqrt: DMatrix<f64>,
}

impl Metric {
    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
        if eig.eigenvalues.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = eig.eigenvalues.map(|e| 1.0 / e.sqrt());
        let inv_sqrt =
            &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
        Ok(Self { inv_sqrt })
    }

    pub fn from_distribution(dist: &SearchDistribution) -> Self {
        // the distribution keeps its covariance floored and SPD
        Self::from_covariance(dist.covariance()).expect("search covariance is positive definite")
    }

    pub fn whiten(&self, x: &[f64]) -> DVector<f64> {
        &self.inv_sqrt * DVector::from_column_slice(x)
    }

    pub fn distance(&self, z: &[f64], q: &[f64]) -> f64 {
        let diff: Vec<f64> = z.iter().zip(q).map(|(a, b)| a - b).collect();
        self.whiten(&diff).norm()
    }
}

pub fn mahalanobis_distance(z: &[f64], q: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    Ok(Metric::from_covariance(cov)?.distance(z, q))
}

/// Archive coordinates mapped through `C^{-1/2}`, kept in sync with appends.
#[derive(Debug, Clone)]
pub struct WhitenedArchive {
    metric: Metric,
    points: Vec<DVector<f64>>,
}

impl WhitenedArchive {
    pub fn new(metric: Metric, archive: &TrainingArchive) -> Self {
        let points = (0..archive.len())
            .map(|i| metric.whiten(archive.genome(i)))
            .collect();
        Self { metric, points }
    }

    pub fn sync(&mut self, archive: &TrainingArchive) {
        for i in self.points.len()..archive.len() {
            self.points.push(self.metric.whiten(archive.genome(i)));
        }
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

fn by_distance(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

/// The `k` archive entries closest to `q`, nearest first; ties go to the
/// earlier insertion.
pub fn select_neighbors(
    archive: &TrainingArchive,
    whitened: &WhitenedArchive,
    q: &[f64],
    k: usize,
) -> Result<Vec<Neighbor>> {
    if k == 0 || archive.len() < k {
        return Err(Error::SurrogateUnavailable(format!(
            "archive holds {} entries, {k} neighbors needed",
            archive.len()
        )));
    }
    let wq = whitened.metric.whiten(q);
    let mut all: Vec<Neighbor> = whitened.points[..archive.len()]
        .iter()
        .enumerate()
        .map(|(index, p)| Neighbor {
            index,
            distance: (p - &wq).norm(),
        })
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, by_distance);
        all.truncate(k);
    }
    all.sort_by(by_distance);
    Ok(all)
}

/// Fitted local quadratic. Coefficients refer to the basis of `z - center`,
/// so with `center = 0` they are the plain coefficients of the quadratic in `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalQuadraticModel {
    pub beta: Vec<f64>,
    pub center: Vec<f64>,
    pub bandwidth: f64,
    pub neighbors_used: usize,
}

impl LocalQuadraticModel {
    pub fn predict(&self, z: &[f64]) -> f64 {
        let shifted: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        quadratic_basis(&shifted)
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Relative pivot size below which the scaled normal matrix counts as rank deficient.
const RANK_TOL: f64 = 1e-13;
/// Ridge added (relative to the mean diagonal) when the normal matrix is rank deficient.
pub const RIDGE: f64 = 1e-8;

fn cholesky_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..a.nrows()).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > RANK_TOL * max) {
        return None;
    }
    Some(chol.solve(b))
}

/// Kernel-weighted least-squares fit of a full quadratic around `q`. The
/// bandwidth is the distance of the farthest (k-th) neighbor, whose weight
/// is therefore zero.
pub fn fit_local_model(
    archive: &TrainingArchive,
    neighbors: &[Neighbor],
    q: &[f64],
) -> Result<LocalQuadraticModel> {
    let n = q.len();
    let p = basis_len(n);
    let k = neighbors.len();
    if k < p {
        return Err(Error::SurrogateUnavailable(format!(
            "{k} neighbors for {p} coefficients"
        )));
    }
    let bandwidth = neighbors.iter().map(|nb| nb.distance).fold(0.0, f64::max);
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::SurrogateUnavailable("zero bandwidth".into()));
    }

    let mut normal = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for nb in neighbors {
        let w = kernel(nb.distance / bandwidth);
        if w == 0.0 {
            continue;
        }
        let shifted: Vec<f64> = archive
            .genome(nb.index)
            .iter()
            .zip(q)
            .map(|(a, b)| a - b)
            .collect();
        let row = DVector::from_vec(quadratic_basis(&shifted));
        normal.syger(w, &row, &row, 1.0);
        rhs.axpy(w * archive.value(nb.index), &row, 1.0);
    }
    normal.fill_upper_triangle_with_lower_triangle();

    // Jacobi scaling keeps squares, cross terms and the constant comparable.
    let scale: DVector<f64> = normal
        .diagonal()
        .map(|d| if d > 0.0 { d.sqrt() } else { 1.0 });
    let mut scaled = normal.clone();
    for i in 0..p {
        for j in 0..p {
            scaled[(i, j)] /= scale[i] * scale[j];
        }
    }
    let scaled_rhs = rhs.component_div(&scale);

    let solution = cholesky_solve(&scaled, &scaled_rhs).or_else(|| {
        let ridge = RIDGE * scaled.trace() / p as f64;
        let mut damped = scaled.clone();
        for i in 0..p {
            damped[(i, i)] += ridge;
        }
        damped.cholesky().map(|c| c.solve(&scaled_rhs))
    });
    let solution =
        solution.ok_or_else(|| Error::SurrogateUnavailable("degenerate design matrix".into()))?;
    let beta: Vec<f64> = solution.component_div(&scale).iter().copied().collect();
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::SurrogateUnavailable(
            "non-finite coefficients".into(),
        ));
    }
    Ok(LocalQuadraticModel {
        beta,
        center: q.to_vec(),
        bandwidth,
        neighbors_used: k,
    })
}

pub const DEFAULT_CYCLE_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSettings {
    /// Neighbors per local fit.
    pub k: usize,
    /// Archive size from which the surrogate is used.
    pub min_archive_size: usize,
    /// Fraction of the population below which both the elite set and the best
    /// individual must be stable.
    #[serde(default = "default_cycle_fraction")]
    pub max_cycle_fraction: f64,
}

fn default_cycle_fraction() -> f64 {
    DEFAULT_CYCLE_FRACTION
}

impl SurrogateSettings {
    pub fn new(dimension: usize, k: usize, min_archive_size: usize) -> Result<Self> {
        let s = Self {
            k,
            min_archive_size,
            max_cycle_fraction: default_cycle_fraction(),
        };
        s.validate(dimension)?;
        Ok(s)
    }

    /// `k = 2 (n(n+3)/2 + 1)`, activation once the archive holds `k` points.
    pub fn default_for(dimension: usize) -> Self {
        let k = 2 * basis_len(dimension);
        Self {
            k,
            min_archive_size: k,
            max_cycle_fraction: default_cycle_fraction(),
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        let p = basis_len(dimension);
        if self.k < p {
            return Err(Error::InvalidParameter(format!(
                "k = {} is below the {p} coefficients of a full quadratic in {dimension} variables",
                self.k
            )));
        }
        if self.min_archive_size < self.k {
            return Err(Error::InvalidParameter(format!(
                "min_archive_size = {} must be at least k = {}",
                self.min_archive_size, self.k
            )));
        }
        if !(self.max_cycle_fraction > 0.0 && self.max_cycle_fraction <= 1.0) {
            return Err(Error::InvalidParameter(
                "max_cycle_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that predicts raw objective values from the archive.
pub trait Surrogate {
    fn predict(
        &self,
        archive: &TrainingArchive,
        whitened: &WhitenedArchive,
        x: &[f64],
    ) -> Result<f64>;
}

/// The locally weighted quadratic meta-model.
#[derive(Debug, Clone, Copy)]
pub struct LocalQuadratic {
    pub k: usize,
}

impl Surrogate for LocalQuadratic {
    fn predict(
        &self,
        archive: &TrainingArchive,
        whitened: &WhitenedArchive,
        x: &[f64],
    ) -> Result<f64> {
        let neighbors = select_neighbors(archive, whitened, x, self.k)?;
        let model = fit_local_model(archive, &neighbors, x)?;
        Ok(model.predict(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingOutcome {
    /// Final ranking: true values where available, predictions elsewhere.
    pub order: Vec<usize>,
    /// Number of cycles that ended with a true evaluation.
    pub cycles: usize,
    /// Individuals whose value is true, `1 + cycles` unless the step fell back.
    pub true_evaluations: usize,
    /// Calls of the true objective (archive hits are free).
    pub objective_calls: usize,
    /// The surrogate failed and the rest of the generation was truly evaluated.
    pub fell_back: bool,
}

struct Evaluator<'a, F, P> {
    archive: &'a mut TrainingArchive,
    whitened: WhitenedArchive,
    true_eval: &'a mut F,
    penalize: &'a P,
    calls: usize,
}

impl<F, P> Evaluator<'_, F, P>
where
    F: FnMut(&[f64]) -> f64,
    P: Fn(&[f64], f64) -> f64,
{
    fn evaluate(&mut self, ind: &mut Individual) {
        let raw = match self.archive.lookup(&ind.genome) {
            Some(v) => v,
            None => {
                let v = (self.true_eval)(&ind.genome);
                self.calls += 1;
                if self.archive.insert(&ind.genome, v) {
                    self.whitened.sync(self.archive);
                }
                v
            }
        };
        ind.raw_objective = Some(raw);
        ind.penalized_objective = Some((self.penalize)(&ind.genome, raw));
        ind.evaluated_by = EvalSource::TrueFunction;
    }
}

/// One generation of the approximate ranking procedure.
///
/// 1. Predict every individual, note the μ-best set and the best one, then
///    truly evaluate the best.
/// 2. For `n_ic = 1..λ-1`: re-predict the unevaluated individuals and
///    recompute the μ-best set and the best. While
///    `(n_ic + 1) < λ * cycle_fraction` a change of either triggers the true
///    evaluation of the best unevaluated individual; afterwards only a change
///    of the best does. Otherwise stop.
///
/// `cycle_fraction` is 1/4 in the original procedure. `true_eval` returns raw objective values; `penalize(x, raw)` maps raw
/// (true or predicted) values to the ranked values.
#[allow(clippy::too_many_arguments)]
pub fn approximate_ranking_step<S, F, P>(
    pop: &mut [Individual],
    archive: &mut TrainingArchive,
    dist: &SearchDistribution,
    params: &StrategyParams,
    cycle_fraction: f64,
    surrogate: &S,
    true_eval: &mut F,
    penalize: &P,
) -> Result<RankingOutcome>
where
    S: Surrogate + ?Sized,
    F: FnMut(&[f64]) -> f64,
    P: Fn(&[f64], f64) -> f64,
{
    let lambda = pop.len();
    if lambda == 0 {
        return Err(Error::InvalidParameter("empty population".into()));
    }
    let mu = params.mu.clamp(1, lambda);
    let whitened = WhitenedArchive::new(Metric::from_distribution(dist), archive);
    let mut ev = Evaluator {
        archive,
        whitened,
        true_eval,
        penalize,
        calls: 0,
    };

    let predict_all = |ev: &Evaluator<'_, F, P>, pop: &mut [Individual]| -> Result<()> {
        for ind in pop
            .iter_mut()
            .filter(|i| i.evaluated_by != EvalSource::TrueFunction)
        {
            let raw = surrogate.predict(ev.archive, &ev.whitened, &ind.genome)?;
            ind.raw_objective = Some(raw);
            ind.penalized_objective = Some((ev.penalize)(&ind.genome, raw));
            ind.evaluated_by = EvalSource::Surrogate;
        }
        Ok(())
    };
    let ranking = |pop: &[Individual]| -> (Vec<usize>, Vec<usize>) {
        let values: Vec<f64> = pop
            .iter()
            .map(|i| i.penalized_objective.unwrap_or(f64::INFINITY))
            .collect();
        let order = rank_values(&values);
        let mut best_set = order[..mu].to_vec();
        best_set.sort_unstable();
        (order, best_set)
    };
    let fall_back =
        |ev: &mut Evaluator<'_, F, P>, pop: &mut [Individual], cycles: usize| -> RankingOutcome {
            for ind in pop
                .iter_mut()
                .filter(|i| i.evaluated_by != EvalSource::TrueFunction)
            {
                ev.evaluate(ind);
            }
            let (order, _) = ranking(pop);
            RankingOutcome {
                order,
                cycles,
                true_evaluations: pop.len(),
                objective_calls: ev.calls,
                fell_back: true,
            }
        };

    if predict_all(&ev, pop).is_err() {
        return Ok(fall_back(&mut ev, pop, 0));
    }
    let (order, mut prev_set) = ranking(pop);
    let mut prev_best = order[0];
    ev.evaluate(&mut pop[prev_best]);
    let mut evaluated = 1;
    let mut cycles = 0;

    for n_ic in 1..lambda {
        if predict_all(&ev, pop).is_err() {
            return Ok(fall_back(&mut ev, pop, cycles));
        }
        let (order, best_set) = ranking(pop);
        let best = order[0];
        let set_changed = best_set != prev_set;
        let best_changed = best != prev_best;
        let below_quarter = ((n_ic + 1) as f64) < lambda as f64 * cycle_fraction;
        let proceed = if below_quarter {
            set_changed || best_changed
        } else {
            best_changed
        };
        if !proceed {
            break;
        }
        let next = order
            .iter()
            .copied()
            .find(|&i| pop[i].evaluated_by != EvalSource::TrueFunction)
            .expect("fewer than lambda individuals evaluated");
        ev.evaluate(&mut pop[next]);
        evaluated += 1;
        cycles += 1;
        prev_set = best_set;
        prev_best = best;
    }

    let (order, _) = ranking(pop);
    Ok(RankingOutcome {
        order,
        cycles,
        true_evaluations: evaluated,
        objective_calls: ev.calls,
        fell_back: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn basis_layout() {
        assert_eq!(basis_len(2), 6);
        assert_eq!(basis_len(12), 91);
        assert_eq!(
            quadratic_basis(&[2.0, 3.0]),
            vec![4.0, 9.0, 6.0, 2.0, 3.0, 1.0]
        );
        assert_eq!(quadratic_basis(&[1.0, 2.0, 3.0]).len(), basis_len(3));
    }

    #[test]
    fn kernel_endpoints() {
        assert_eq!(kernel(0.0), 1.0);
        assert_eq!(kernel(1.0), 0.0);
        assert_eq!(kernel(0.5), 0.5625);
    }

    #[test]
    fn predict_examples() {
        let mut beta = vec![0.0; 6];
        beta[5] = 1.0;
        let m = LocalQuadraticModel {
            beta,
            center: vec![0.0, 0.0],
            bandwidth: 1.0,
            neighbors_used: 6,
        };
        assert_eq!(m.predict(&[3.0, -7.0]), 1.0);
        // z1^2 + 2 z1 z2 + 3 at (1, 2)
        let m = LocalQuadraticModel {
            beta: vec![1.0, 0.0, 2.0, 0.0, 0.0, 3.0],
            center: vec![0.0, 0.0],
            bandwidth: 1.0,
            neighbors_used: 6,
        };
        assert_eq!(m.predict(&[1.0, 2.0]), 8.0);
    }

    proptest! {
        #[test]
        fn predict_matches_term_sum(seed in 0u64..500, n in 1usize..5) {
            let mut rng = seeded(seed);
            let p = basis_len(n);
            let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let model = LocalQuadraticModel { beta: beta.clone(), center: vec![0.0; n], bandwidth: 1.0, neighbors_used: p };
            let mut oracle = 0.0;
            let mut t = 0;
            for i in 0..n { oracle += beta[t] * z[i] * z[i]; t += 1; }
            for i in 0..n { for j in i + 1..n { oracle += beta[t] * z[i] * z[j]; t += 1; } }
            for i in 0..n { oracle += beta[t] * z[i]; t += 1; }
            oracle += beta[t];
            prop_assert!((model.predict(&z) - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
        }
    }

    fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        a.transpose() * &a + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn mahalanobis_examples() {
        let id = DMatrix::identity(2, 2);
        assert!((mahalanobis_distance(&[3.0, 4.0], &[0.0, 0.0], &id).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(
            mahalanobis_distance(&[1.5, -2.0], &[1.5, -2.0], &id).unwrap(),
            0.0
        );
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(mahalanobis_distance(&[1.0, 0.0], &[0.0, 0.0], &bad).is_err());

        let mut rng = seeded(21);
        for _ in 0..100 {
            let n = rng.random_range(1..6);
            let c = random_spd(&mut rng, n);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let diff = DVector::from_iterator(n, z.iter().zip(&q).map(|(a, b)| a - b));
            let inv = c.clone().try_inverse().unwrap();
            let oracle = (diff.transpose() * inv * &diff)[(0, 0)].sqrt();
            let got = mahalanobis_distance(&z, &q, &c).unwrap();
            assert!((got - oracle).abs() <= 1e-9 * oracle.max(1.0));
        }
    }

    fn random_archive(rng: &mut impl Rng, n: usize, size: usize) -> TrainingArchive {
        let mut a = TrainingArchive::new();
        while a.len() < size {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v = g.iter().map(|x| x * x).sum();
            a.insert(&g, v);
        }
        a
    }

    #[test]
    fn archive_skips_duplicates_and_non_finite() {
        let mut a = TrainingArchive::new();
        assert!(a.insert(&[1.0, 2.0], 3.0));
        assert!(!a.insert(&[1.0, 2.0], 4.0));
        assert!(!a.insert(&[0.0, 0.0], f64::NAN));
        assert_eq!(a.len(), 1);
        assert_eq!(a.lookup(&[1.0, 2.0]), Some(3.0));
    }

    #[test]
    fn archive_csv_round_trip() {
        let mut rng = seeded(2);
        let a = random_archive(&mut rng, 3, 20);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,x2,objective\n"));
        let b = TrainingArchive::read_csv(buf.as_slice()).unwrap();
        assert_eq!(b.len(), 20);
        for i in 0..20 {
            assert_eq!(a.genome(i), b.genome(i));
            assert_eq!(a.value(i), b.value(i));
        }
    }

    #[test]
    fn neighbors_match_full_sort() {
        let mut rng = seeded(8);
        let n = 4;
        let archive = random_archive(&mut rng, n, 500);
        let cov = random_spd(&mut rng, n);
        let metric = Metric::from_covariance(&cov).unwrap();
        let wa = WhitenedArchive::new(metric.clone(), &archive);
        for _ in 0..10 {
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let got = select_neighbors(&archive, &wa, &q, 50).unwrap();
            let mut oracle: Vec<(f64, usize)> = (0..archive.len())
                .map(|i| (metric.distance(archive.genome(i), &q), i))
                .collect();
            oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut got_idx: Vec<usize> = got.iter().map(|nb| nb.index).collect();
            let mut want: Vec<usize> = oracle[..50].iter().map(|p| p.1).collect();
            got_idx.sort_unstable();
            want.sort_unstable();
            assert_eq!(got_idx, want);
        }
    }

    #[test]
    fn neighbor_edge_cases() {
        let mut rng = seeded(9);
        let archive = random_archive(&mut rng, 2, 10);
        let wa = WhitenedArchive::new(
            Metric::from_covariance(&DMatrix::identity(2, 2)).unwrap(),
            &archive,
        );
        assert_eq!(
            select_neighbors(&archive, &wa, &[0.0, 0.0], 10)
                .unwrap()
                .len(),
            10
        );
        let first = select_neighbors(&archive, &wa, archive.genome(6), 3).unwrap();
        assert_eq!(first[0].index, 6);
        assert_eq!(first[0].distance, 0.0);
        assert!(matches!(
            select_neighbors(&archive, &wa, &[0.0, 0.0], 11),
            Err(Error::SurrogateUnavailable(_))
        ));
        // identity metric is plain Euclidean kNN
        let q = [0.3, -0.2];
        let nb = select_neighbors(&archive, &wa, &q, 4).unwrap();
        let mut eu: Vec<(f64, usize)> = (0..10)
            .map(|i| {
                let g = archive.genome(i);
                (((g[0] - q[0]).powi(2) + (g[1] - q[1]).powi(2)).sqrt(), i)
            })
            .collect();
        eu.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(
            nb.iter().map(|n| n.index).collect::<Vec<_>>(),
            eu[..4].iter().map(|p| p.1).collect::<Vec<_>>()
        );
    }

    fn quadratic_fixture(rng: &mut impl Rng, n: usize) -> impl Fn(&[f64]) -> f64 {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &a + a.transpose();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = rng.random_range(-5.0..5.0);
        move |x: &[f64]| {
            let xv = DVector::from_column_slice(x);
            0.5 * (xv.transpose() * &h * &xv)[(0, 0)]
                + g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + c
        }
    }

    #[test]
    fn exact_on_quadratics() {
        let mut rng = seeded(77);
        for n in [2usize, 5] {
            let f = quadratic_fixture(&mut rng, n);
            let mut archive = TrainingArchive::new();
            let size = basis_len(n) + 5;
            while archive.len() < size {
                let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                archive.insert(&g, f(&g));
            }
            let wa = WhitenedArchive::new(
                Metric::from_covariance(&DMatrix::identity(n, n)).unwrap(),
                &archive,
            );
            for _ in 0..100 {
                let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let nb = select_neighbors(&archive, &wa, &q, size).unwrap();
                let model = fit_local_model(&archive, &nb, &q).unwrap();
                assert_eq!(model.beta.len(), basis_len(n));
                assert_eq!(model.bandwidth, nb.last().unwrap().distance);
                let want = f(&q);
                let got = model.predict(&q);
                assert!(
                    (got - want).abs() <= 1e-8 * want.abs().max(1.0),
                    "n={n}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn constant_data_gives_constant_model() {
        let mut rng = seeded(4);
        let mut archive = TrainingArchive::new();
        while archive.len() < 12 {
            let g: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            archive.insert(&g, 7.5);
        }
        let wa = WhitenedArchive::new(
            Metric::from_covariance(&DMatrix::identity(2, 2)).unwrap(),
            &archive,
        );
        let q = [0.1, 0.2];
        let nb = select_neighbors(&archive, &wa, &q, 12).unwrap();
        let m = fit_local_model(&archive, &nb, &q).unwrap();
        assert!((m.predict(&q) - 7.5).abs() < 1e-10);
        assert!((m.predict(&[0.5, -0.5]) - 7.5).abs() < 1e-9);
    }

    #[test]
    fn shift_moves_only_the_constant_term() {
        let mut rng = seeded(5);
        let n = 3;
        let mut a = TrainingArchive::new();
        let mut b = TrainingArchive::new();
        while a.len() < 30 {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = g[0].sin() + g[1] * g[2].exp();
            a.insert(&g, v);
            b.insert(&g, v + 100.0);
        }
        let metric = Metric::from_covariance(&DMatrix::identity(n, n)).unwrap();
        let q = [0.1, -0.3, 0.2];
        let nb = select_neighbors(&a, &WhitenedArchive::new(metric.clone(), &a), &q, 25).unwrap();
        let ma = fit_local_model(&a, &nb, &q).unwrap();
        let mb = fit_local_model(&b, &nb, &q).unwrap();
        let p = basis_len(n);
        for i in 0..p - 1 {
            assert!((ma.beta[i] - mb.beta[i]).abs() < 1e-8, "coef {i}");
        }
        assert!((mb.beta[p - 1] - ma.beta[p - 1] - 100.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_neighbors_use_ridge_or_fail() {
        // every point on one line: the quadratic is not identifiable
        let mut archive = TrainingArchive::new();
        for i in 0..12 {
            let t = i as f64 / 11.0;
            archive.insert(&[t, 2.0 * t], t * t);
        }
        let wa = WhitenedArchive::new(
            Metric::from_covariance(&DMatrix::identity(2, 2)).unwrap(),
            &archive,
        );
        let q = [0.5, 1.0];
        let nb = select_neighbors(&archive, &wa, &q, 12).unwrap();
        match fit_local_model(&archive, &nb, &q) {
            Ok(m) => assert!(m.predict(&q).is_finite()),
            Err(e) => assert!(matches!(e, Error::SurrogateUnavailable(_))),
        }
    }

    #[test]
    fn settings_validation() {
        assert!(SurrogateSettings::new(12, 100, 160).is_ok());
        assert!(SurrogateSettings::new(12, 90, 160).is_err());
        assert!(SurrogateSettings::new(2, 6, 5).is_err());
        let d = SurrogateSettings::default_for(5);
        assert!(d.validate(5).is_ok());
    }

    /// Predicts through a fixed function regardless of the archive.
    struct Oracle<G: Fn(&[f64]) -> f64>(G);

    impl<G: Fn(&[f64]) -> f64> Surrogate for Oracle<G> {
        fn predict(&self, _: &TrainingArchive, _: &WhitenedArchive, x: &[f64]) -> Result<f64> {
            Ok((self.0)(x))
        }
    }

    fn population_1d(values: &[f64]) -> Vec<Individual> {
        values.iter().map(|&v| Individual::new(vec![v])).collect()
    }

    fn setup(lambda: usize) -> (SearchDistribution, StrategyParams) {
        (
            SearchDistribution::new(vec![0.0], 1.0).unwrap(),
            StrategyParams::new(1, lambda).unwrap(),
        )
    }

    fn f1(x: &[f64]) -> f64 {
        (x[0] - 0.3).powi(2)
    }

    #[test]
    fn exact_surrogate_hand_trace() {
        // With exact predictions: line 1 predicts, line 4 evaluates the
        // predicted best; in cycle 1 the predictions are unchanged, so both
        // the elite set and the best are unchanged and the loop breaks.
        for lambda in [4usize, 8, 10, 16] {
            let (dist, params) = setup(lambda);
            let mut rng = seeded(lambda as u64);
            let xs: Vec<f64> = (0..lambda).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut pop = population_1d(&xs);
            let mut archive = TrainingArchive::new();
            let mut calls = 0;
            let mut eval = |x: &[f64]| {
                calls += 1;
                f1(x)
            };
            let out = approximate_ranking_step(
                &mut pop,
                &mut archive,
                &dist,
                &params,
                DEFAULT_CYCLE_FRACTION,
                &Oracle(f1),
                &mut eval,
                &|_: &[f64], r| r,
            )
            .unwrap();
            assert_eq!(out.cycles, 0);
            assert_eq!(out.true_evaluations, 1);
            assert_eq!(calls, 1);
            assert_eq!(archive.len(), 1);
            let truth = rank_values(&xs.iter().map(|&x| f1(&[x])).collect::<Vec<_>>());
            assert_eq!(out.order, truth);
        }
    }

    #[test]
    fn adversarial_surrogate_is_bounded_by_lambda() {
        for lambda in [4usize, 8, 13, 20] {
            let (dist, params) = setup(lambda);
            let mut rng = seeded(100 + lambda as u64);
            let xs: Vec<f64> = (0..lambda).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut pop = population_1d(&xs);
            let mut archive = TrainingArchive::new();
            let mut calls = 0;
            let mut eval = |x: &[f64]| {
                calls += 1;
                f1(x)
            };
            let neg = Oracle(|x: &[f64]| -f1(x));
            let out = approximate_ranking_step(
                &mut pop,
                &mut archive,
                &dist,
                &params,
                DEFAULT_CYCLE_FRACTION,
                &neg,
                &mut eval,
                &|_: &[f64], r| r,
            )
            .unwrap();
            assert!(out.true_evaluations <= lambda);
            assert_eq!(out.true_evaluations, 1 + out.cycles);
            assert_eq!(calls, out.true_evaluations);
            assert_eq!(archive.len(), calls);
        }
    }

    #[test]
    fn quarter_threshold_switches_criterion() {
        // Surrogate keeps the best fixed but rotates the rest after every true
        // evaluation (depends on archive size), so the elite set always
        // changes while the best never does.
        struct Shuffler(usize);
        impl Surrogate for Shuffler {
            fn predict(
                &self,
                archive: &TrainingArchive,
                _: &WhitenedArchive,
                x: &[f64],
            ) -> Result<f64> {
                let i = x[0] as usize;
                if i == 0 {
                    return Ok(-1000.0);
                }
                Ok(2.0 + ((i - 1 + archive.len()) % self.0) as f64)
            }
        }
        let run = |lambda: usize| {
            let (dist, params) = setup(lambda);
            let xs: Vec<f64> = (0..lambda).map(|i| i as f64).collect();
            let mut pop = population_1d(&xs);
            let mut archive = TrainingArchive::new();
            // the true value keeps individual 0 in front as well
            let mut eval = |x: &[f64]| if x[0] == 0.0 { -1000.0 } else { 1.0 };
            approximate_ranking_step(
                &mut pop,
                &mut archive,
                &dist,
                &params,
                DEFAULT_CYCLE_FRACTION,
                &Shuffler(lambda - 1),
                &mut eval,
                &|_: &[f64], r| r,
            )
            .unwrap()
        };
        // lambda = 8: (1 + 1) < 2 is false, only the best counts from cycle 1 on
        assert_eq!(run(8).true_evaluations, 1);
        // lambda = 12: cycle 1 uses the set criterion (2 < 3), cycle 2 does not (3 < 3)
        assert_eq!(run(12).true_evaluations, 2);
        // lambda = 20: cycles 1..=3 use the set criterion (n_ic + 1 < 5)
        assert_eq!(run(20).true_evaluations, 4);
    }

    #[test]
    fn failing_surrogate_falls_back_to_true_evaluation() {
        struct Broken;
        impl Surrogate for Broken {
            fn predict(&self, _: &TrainingArchive, _: &WhitenedArchive, _: &[f64]) -> Result<f64> {
                Err(Error::SurrogateUnavailable("test".into()))
            }
        }
        let (dist, params) = setup(6);
        let mut pop = population_1d(&[0.5, 0.1, -0.2, 0.9, 1.5, -1.0]);
        let mut archive = TrainingArchive::new();
        let mut eval = |x: &[f64]| f1(x);
        let out = approximate_ranking_step(
            &mut pop,
            &mut archive,
            &dist,
            &params,
            DEFAULT_CYCLE_FRACTION,
            &Broken,
            &mut eval,
            &|_: &[f64], r| r,
        )
        .unwrap();
        assert!(out.fell_back);
        assert_eq!(out.true_evaluations, 6);
        assert!(pop
            .iter()
            .all(|i| i.evaluated_by == EvalSource::TrueFunction));
    }

    #[test]
    fn local_quadratic_surrogate_on_exact_quadratic() {
        let n = 2;
        let mut rng = seeded(31);
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * x[1] * x[1] + x[0] * x[1];
        let mut archive = TrainingArchive::new();
        while archive.len() < 40 {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            archive.insert(&g, f(&g));
        }
        let dist = SearchDistribution::new(vec![0.0; n], 1.0).unwrap();
        let params = StrategyParams::new(n, 10).unwrap();
        let mut pop: Vec<Individual> = (0..10)
            .map(|_| Individual::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let truth = rank_values(&pop.iter().map(|i| f(&i.genome)).collect::<Vec<_>>());
        let mut eval = |x: &[f64]| f(x);
        let out = approximate_ranking_step(
            &mut pop,
            &mut archive,
            &dist,
            &params,
            DEFAULT_CYCLE_FRACTION,
            &LocalQuadratic { k: 20 },
            &mut eval,
            &|_: &[f64], r| r,
        )
        .unwrap();
        assert_eq!(out.true_evaluations, 1);
        assert_eq!(out.order, truth);
    }
}

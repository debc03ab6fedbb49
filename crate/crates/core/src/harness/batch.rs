//! Multi-seed batches, evaluations-to-target tables and optimizer comparisons.
//!
//! Runs of different lengths are aligned by generation; a run that stopped
//! early contributes its final values to every later generation.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::config::{OptimizerKind, RunConfig, ThresholdScale};
use super::record::{write_atomic, RunRecord};
use super::run::{build_problem, run_on};
use crate::error::{Error, Result};
use crate::stats;

pub const SUMMARY_SCHEMA: &str = "# schema: wellopt-summary v1";
pub const TARGETS_SCHEMA: &str = "# schema: wellopt-targets v1";
pub const COMPARE_SCHEMA: &str = "# schema: wellopt-compare v1";

/// Number of derived thresholds.
pub const N_THRESHOLDS: usize = 10;

/// Smallest log-scale threshold relative to the largest.
pub const LOG_RANGE_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub generation: usize,
    pub mean_evaluations: f64,
    pub mean_best: f64,
    pub std_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRow {
    pub threshold: f64,
    /// Runs whose best-so-far reached the threshold.
    pub reached: usize,
    pub runs: usize,
    /// Mean over the runs that reached it; `None` when none did.
    pub mean_evaluations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub optimizer: String,
    pub records: Vec<RunRecord>,
    pub generations: Vec<SummaryRow>,
    pub targets: Vec<TargetRow>,
}

/// Run every seed of `config` with `optimizer` in parallel; records come back
/// in seed order.
pub fn run_seeds(config: &RunConfig, optimizer: OptimizerKind) -> Result<Vec<RunRecord>> {
    let problem = build_problem(&config.problem)?;
    config
        .seeds
        .par_iter()
        .map(|&s| run_on(problem.as_ref(), config, optimizer, s))
        .collect()
}

/// Per-generation mean and standard deviation of best-so-far, padded with
/// final values. Generations where some run has no finite value yet report
/// `inf` means.
pub fn generation_summary(records: &[RunRecord]) -> Vec<SummaryRow> {
    let len = records.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    (0..len)
        .map(|g| {
            let rows: Vec<_> = records
                .iter()
                .filter_map(|r| r.rows.get(g).or(r.rows.last()))
                .collect();
            let evals: Vec<f64> = rows.iter().map(|r| r.evaluations as f64).collect();
            let best: Vec<f64> = rows.iter().map(|r| r.best_objective).collect();
            let (mean_best, std_best) = if best.iter().all(|v| v.is_finite()) {
                (
                    stats::mean(&best),
                    if best.len() > 1 {
                        stats::std_dev(&best)
                    } else {
                        0.0
                    },
                )
            } else {
                (f64::INFINITY, f64::NAN)
            };
            SummaryRow {
                generation: g + 1,
                mean_evaluations: stats::mean(&evals),
                mean_best,
                std_best,
            }
        })
        .collect()
}

/// Ten thresholds evenly spaced from the worst first-generation best to the
/// overall best. Log spacing needs a positive upper end (linear otherwise)
/// and floors the lower end at `LOG_RANGE_FLOOR` times the upper one. The
/// fifth threshold is the mid-range target.
pub fn derive_thresholds(records: &[RunRecord], scale: ThresholdScale) -> Vec<f64> {
    let hi = records
        .iter()
        .filter_map(RunRecord::first_finite_best)
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = records
        .iter()
        .map(RunRecord::final_best)
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !(hi.is_finite() && lo.is_finite()) {
        return Vec::new();
    }
    let frac = |i: usize| (i + 1) as f64 / N_THRESHOLDS as f64;
    match scale {
        ThresholdScale::Log if hi > 0.0 => {
            let (a, b) = (hi.log10(), lo.max(hi * LOG_RANGE_FLOOR).log10());
            (0..N_THRESHOLDS)
                .map(|i| 10f64.powf(a + (b - a) * frac(i)))
                .collect()
        }
        _ => (0..N_THRESHOLDS)
            .map(|i| hi + (lo - hi) * frac(i))
            .collect(),
    }
}

/// The mid-range target of a derived threshold list.
pub fn mid_threshold(thresholds: &[f64]) -> Option<f64> {
    thresholds
        .get(N_THRESHOLDS / 2 - 1)
        .or(thresholds.get(thresholds.len() / 2))
        .copied()
}

pub fn target_table(records: &[RunRecord], thresholds: &[f64]) -> Vec<TargetRow> {
    thresholds
        .iter()
        .map(|&t| {
            let hits: Vec<f64> = records
                .iter()
                .filter_map(|r| r.evaluations_to(t))
                .map(|e| e as f64)
                .collect();
            TargetRow {
                threshold: t,
                reached: hits.len(),
                runs: records.len(),
                mean_evaluations: (!hits.is_empty()).then(|| stats::mean(&hits)),
            }
        })
        .collect()
}

pub fn summarize(optimizer: &str, records: Vec<RunRecord>, thresholds: &[f64]) -> BatchSummary {
    BatchSummary {
        optimizer: optimizer.to_string(),
        generations: generation_summary(&records),
        targets: target_table(&records, thresholds),
        records,
    }
}

pub fn summary_csv(summary: &BatchSummary) -> Result<Vec<u8>> {
    let mut out = format!("{SUMMARY_SCHEMA}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["generation", "mean_evaluations", "mean_best", "std_best"])?;
        for r in &summary.generations {
            w.write_record([
                r.generation.to_string(),
                r.mean_evaluations.to_string(),
                r.mean_best.to_string(),
                r.std_best.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn targets_csv(summary: &BatchSummary) -> Result<Vec<u8>> {
    let mut out = format!("{TARGETS_SCHEMA}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["threshold", "reached", "runs", "mean_evaluations"])?;
        for r in &summary.targets {
            let mean = r
                .mean_evaluations
                .map_or_else(|| "not reached".to_string(), |m| m.to_string());
            w.write_record([
                r.threshold.to_string(),
                r.reached.to_string(),
                r.runs.to_string(),
                mean,
            ])?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn summary_text(summary: &BatchSummary) -> String {
    let mut s = String::new();
    let finals: Vec<f64> = summary.records.iter().map(RunRecord::final_best).collect();
    let _ = writeln!(s, "optimizer: {}", summary.optimizer);
    let _ = writeln!(s, "runs: {}", summary.records.len());
    for r in &summary.records {
        let _ = writeln!(
            s,
            "  seed {:>4}: best {:.6e} after {} evaluations ({} generations, {})",
            r.seed,
            r.final_best(),
            r.total_evaluations(),
            r.rows.len(),
            r.stop_reason.as_str()
        );
    }
    if finals.iter().all(|v| v.is_finite()) && !finals.is_empty() {
        let _ = writeln!(s, "median final best: {:.6e}", stats::median(&finals));
    }
    let _ = writeln!(s, "evaluations to target:");
    for t in &summary.targets {
        match t.mean_evaluations {
            Some(m) => {
                let _ = writeln!(
                    s,
                    "  <= {:.6e}: {:.1} ({}/{} runs)",
                    t.threshold, m, t.reached, t.runs
                );
            }
            None => {
                let _ = writeln!(s, "  <= {:.6e}: not reached", t.threshold);
            }
        }
    }
    s
}

/// Run all seeds of the config's optimizer, write the run files,
/// `summary.csv`, `targets.csv` and `summary.txt` into the output directory.
pub fn run_batch(config: &RunConfig) -> Result<BatchSummary> {
    if config.seeds.len() < 2 {
        return Err(Error::Config("a batch needs at least two seeds".into()));
    }
    let records = run_seeds(config, config.optimizer)?;
    let thresholds = config
        .thresholds
        .clone()
        .unwrap_or_else(|| derive_thresholds(&records, config.threshold_scale));
    let summary = summarize(config.optimizer.as_str(), records, &thresholds);
    write_batch(&summary, &config.output_dir)?;
    Ok(summary)
}

pub fn write_batch(summary: &BatchSummary, dir: &std::path::Path) -> Result<()> {
    for r in &summary.records {
        r.write(dir)?;
    }
    write_atomic(&dir.join("summary.csv"), &summary_csv(summary)?)?;
    write_atomic(&dir.join("targets.csv"), &targets_csv(summary)?)?;
    write_atomic(&dir.join("summary.txt"), summary_text(summary).as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub first_best: f64,
    pub final_best: f64,
    /// `(first - final) / |first|`: relative improvement of the minimized
    /// objective over the first generation.
    pub improvement: f64,
    pub final_genome: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerReport {
    pub optimizer: OptimizerKind,
    pub seeds: Vec<SeedResult>,
    pub median_final: f64,
    pub median_improvement: f64,
    pub batch: BatchSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub optimizers: Vec<OptimizerReport>,
    pub thresholds: Vec<f64>,
}

impl ComparisonReport {
    pub fn get(&self, kind: OptimizerKind) -> Option<&OptimizerReport> {
        self.optimizers.iter().find(|o| o.optimizer == kind)
    }
}

pub fn seed_result(r: &RunRecord) -> SeedResult {
    let first = r.first_finite_best().unwrap_or(f64::INFINITY);
    let last = r.final_best();
    let improvement = if first.is_finite() && first != 0.0 {
        (first - last) / first.abs()
    } else {
        0.0
    };
    SeedResult {
        seed: r.seed,
        first_best: first,
        final_best: last,
        improvement,
        final_genome: r
            .final_row()
            .map(|row| row.best_genome.clone())
            .unwrap_or_default(),
        evaluations: r.total_evaluations(),
    }
}

/// Matched-seed batches of every optimizer in `config.compare`, sharing one
/// threshold list derived from all runs.
pub fn compare_records(config: &RunConfig) -> Result<ComparisonReport> {
    if config.compare.len() < 2 {
        return Err(Error::Config(
            "compare needs at least two optimizers".into(),
        ));
    }
    let mut all = Vec::new();
    for &kind in &config.compare {
        all.push((kind, run_seeds(config, kind)?));
    }
    let thresholds = config.thresholds.clone().unwrap_or_else(|| {
        let flat: Vec<RunRecord> = all.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
        derive_thresholds(&flat, config.threshold_scale)
    });
    let optimizers = all
        .into_iter()
        .map(|(kind, records)| {
            let seeds: Vec<SeedResult> = records.iter().map(seed_result).collect();
            let finals: Vec<f64> = seeds.iter().map(|s| s.final_best).collect();
            let imps: Vec<f64> = seeds.iter().map(|s| s.improvement).collect();
            OptimizerReport {
                optimizer: kind,
                median_final: stats::median(&finals),
                median_improvement: stats::median(&imps),
                seeds,
                batch: summarize(kind.as_str(), records, &thresholds),
            }
        })
        .collect();
    Ok(ComparisonReport {
        optimizers,
        thresholds,
    })
}

pub fn comparison_csv(report: &ComparisonReport) -> Result<Vec<u8>> {
    let mut out = format!("{COMPARE_SCHEMA}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record([
            "optimizer",
            "seed",
            "first_best",
            "final_best",
            "improvement",
            "evaluations",
            "final_genome",
        ])?;
        for o in &report.optimizers {
            for s in &o.seeds {
                w.write_record([
                    o.optimizer.as_str().to_string(),
                    s.seed.to_string(),
                    s.first_best.to_string(),
                    s.final_best.to_string(),
                    s.improvement.to_string(),
                    s.evaluations.to_string(),
                    s.final_genome
                        .iter()
                        .map(f64::to_string)
                        .collect::<Vec<_>>()
                        .join(";"),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn comparison_text(report: &ComparisonReport) -> String {
    let mut s = String::new();
    for o in &report.optimizers {
        let _ = writeln!(
            s,
            "{:<14} median final {:.6e}  median improvement {:.1}%",
            o.optimizer.as_str(),
            o.median_final,
            100.0 * o.median_improvement
        );
    }
    if let Some(mid) = mid_threshold(&report.thresholds) {
        let _ = writeln!(s, "mid-range target {mid:.6e}:");
        for o in &report.optimizers {
            let row = target_table(&o.batch.records, &[mid]).remove(0);
            match row.mean_evaluations {
                Some(m) => {
                    let _ = writeln!(
                        s,
                        "  {:<14} {:.1} evaluations ({}/{} runs)",
                        o.optimizer.as_str(),
                        m,
                        row.reached,
                        row.runs
                    );
                }
                None => {
                    let _ = writeln!(s, "  {:<14} not reached", o.optimizer.as_str());
                }
            }
        }
    }
    s
}

/// Run the comparison and write `compare.csv`, `compare.txt` and one
/// sub-directory of batch outputs per optimizer.
pub fn compare_optimizers(config: &RunConfig) -> Result<ComparisonReport> {
    let report = compare_records(config)?;
    let dir = &config.output_dir;
    for o in &report.optimizers {
        write_batch(&o.batch, &dir.join(o.optimizer.as_str()))?;
    }
    write_atomic(&dir.join("compare.csv"), &comparison_csv(&report)?)?;
    write_atomic(
        &dir.join("compare.txt"),
        comparison_text(&report).as_bytes(),
    )?;
    Ok(report)
}

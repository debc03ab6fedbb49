//! Per-run records and their CSV form.
//!
//! File layout: one comment line `# schema: wellopt-run v1`, a header row,
//! then one row per generation. List-valued columns (`gammas`, `best_genome`)
//! are `;`-separated. Floats are written in Rust's shortest round-trip form,
//! so equal runs give byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cma::StopReason;
use crate::error::{Error, Result};
use crate::optimizer::GenerationRow;

pub const RUN_SCHEMA: &str = "# schema: wellopt-run v1";

pub const RUN_COLUMNS: [&str; 8] = [
    "generation",
    "evaluations",
    "best_objective",
    "resampled",
    "n_ic",
    "gammas",
    "errors",
    "best_genome",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub optimizer: String,
    pub rows: Vec<GenerationRow>,
    pub stop_reason: StopReason,
}

impl RunRecord {
    pub fn final_row(&self) -> Option<&GenerationRow> {
        self.rows.last()
    }

    /// Best-so-far of the first generation with a finite value.
    pub fn first_finite_best(&self) -> Option<f64> {
        self.rows
            .iter()
            .map(|r| r.best_objective)
            .find(|v| v.is_finite())
    }

    pub fn final_best(&self) -> f64 {
        self.rows.last().map_or(f64::INFINITY, |r| r.best_objective)
    }

    pub fn total_evaluations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.evaluations)
    }

    /// Evaluations spent when best-so-far first reached `threshold`.
    pub fn evaluations_to(&self, threshold: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.best_objective <= threshold)
            .map(|r| r.evaluations)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "{RUN_SCHEMA}")?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(RUN_COLUMNS)?;
            for r in &self.rows {
                w.write_record([
                    r.generation.to_string(),
                    r.evaluations.to_string(),
                    r.best_objective.to_string(),
                    r.resampled.to_string(),
                    r.n_ic.map(|v| v.to_string()).unwrap_or_default(),
                    join(&r.gammas),
                    r.errors.to_string(),
                    join(&r.best_genome),
                ])?;
            }
            w.flush()?;
        }
        Ok(out)
    }

    /// Parse the rows of a run file written by [`RunRecord::to_csv`].
    pub fn rows_from_csv(text: &str) -> Result<Vec<GenerationRow>> {
        let body = text
            .strip_prefix(RUN_SCHEMA)
            .ok_or_else(|| Error::Config("missing run schema line".into()))?
            .trim_start_matches(['\r', '\n']);
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != RUN_COLUMNS {
            return Err(Error::Config(format!("unexpected run columns {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("column {}: {e}", RUN_COLUMNS[i])))
            };
            let int = |i: usize| -> Result<usize> {
                rec[i]
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("column {}: {e}", RUN_COLUMNS[i])))
            };
            rows.push(GenerationRow {
                generation: int(0)?,
                evaluations: int(1)?,
                best_objective: num(2)?,
                resampled: int(3)?,
                n_ic: if rec[4].is_empty() {
                    None
                } else {
                    Some(int(4)?)
                },
                gammas: split(&rec[5])?,
                errors: int(6)?,
                best_genome: split(&rec[7])?,
            });
        }
        Ok(rows)
    }

    pub fn file_name(seed: u64) -> String {
        format!("run_{seed}.csv")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(self.seed));
        write_atomic(&path, &self.to_csv()?)?;
        Ok(path)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad list value {t:?}: {e}")))
        })
        .collect()
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(g: usize, best: f64) -> GenerationRow {
        GenerationRow {
            generation: g,
            evaluations: 10 * g,
            best_objective: best,
            best_genome: vec![0.1, -2.5e-7],
            resampled: 3,
            n_ic: if g.is_multiple_of(2) { Some(2) } else { None },
            gammas: vec![1.0 / 3.0],
            errors: 0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rec = RunRecord {
            seed: 4,
            optimizer: "cma".into(),
            rows: vec![row(1, f64::INFINITY), row(2, 0.7), row(3, 0.1 + 0.2)],
            stop_reason: StopReason::MaxGenerations,
        };
        let bytes = rec.to_csv().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("# schema: wellopt-run v1\ngeneration,evaluations,best_objective,resampled,n_ic,gammas,errors,best_genome\n"));
        assert_eq!(RunRecord::rows_from_csv(&text).unwrap(), rec.rows);
    }

    #[test]
    fn targets_and_first_best() {
        let rec = RunRecord {
            seed: 1,
            optimizer: "ga".into(),
            rows: vec![row(1, f64::INFINITY), row(2, 5.0), row(3, 1.0)],
            stop_reason: StopReason::MaxGenerations,
        };
        assert_eq!(rec.first_finite_best(), Some(5.0));
        assert_eq!(rec.evaluations_to(2.0), Some(30));
        assert_eq!(rec.evaluations_to(0.5), None);
    }

    #[test]
    fn atomic_write_creates_directories() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/c.txt");
        write_atomic(&path, b"x").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"x");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}

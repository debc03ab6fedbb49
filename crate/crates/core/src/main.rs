use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use wellopt::harness::{self, ProblemConfig, RunConfig};
use wellopt::well::{self, WellProblem, WellProblemConfig};

#[derive(Parser)]
#[command(
    name = "wellopt",
    version,
    about = "Constrained surrogate-assisted CMA-ES and well placement experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured optimizer for one seed, or for all seeds as a batch.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matched-seed comparison of the optimizers listed under `compare`.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one well configuration.
    Evaluate {
        /// Comma-separated genome, or a file holding one.
        #[arg(long)]
        genome: String,
        /// Run config with a well_placement problem; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic reservoir grid file.
    GenGrid {
        #[arg(long, default_value_t = well::grid::BUNDLED_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(config: &Path, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut c = RunConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(dir) = out {
        c.output_dir = dir;
    }
    Ok(c)
}

fn parse_genome(arg: &str) -> Result<Vec<f64>> {
    let text = match std::fs::read_to_string(arg) {
        Ok(t) => t,
        Err(_) => arg.to_string(),
    };
    text.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("bad genome value {t:?}"))
        })
        .collect()
}

fn fmt_point(p: [f64; 3]) -> String {
    format!("({:.2}, {:.2}, {:.2})", p[0], p[1], p[2])
}

fn evaluate(genome: &str, config: Option<PathBuf>) -> Result<()> {
    let problem_config = match config {
        Some(path) => match RunConfig::load(&path)?.problem {
            ProblemConfig::WellPlacement(w) => w,
            ProblemConfig::Benchmark(_) => bail!("evaluate needs a well_placement problem"),
        },
        None => WellProblemConfig::default(),
    };
    let problem = WellProblem::new(&problem_config)?;
    let genome = parse_genome(genome)?;
    let e = problem.evaluate_detailed(&genome)?;
    for (k, ((w, c), cfg)) in e
        .wells
        .iter()
        .zip(&e.checks)
        .zip(&problem_config.wells)
        .enumerate()
    {
        println!(
            "well {k} ({:?}): length {:.2} m, feasible {}",
            cfg.kind, c.length, c.feasible
        );
        for p in &w.mainbore {
            println!("  mainbore {}", fmt_point(*p));
        }
        for b in &w.branches {
            println!("  branch {} -> {}", fmt_point(b.start), fmt_point(b.end));
        }
        if !c.feasible {
            println!(
                "  violation {:.4} m (clamped for simulation)",
                c.violation()
            );
        }
    }
    println!("period,oil_bbl,water_bbl,gas");
    for n in 0..e.profile.periods() {
        println!(
            "{n},{:.1},{:.1},{:.1}",
            e.profile.oil[n], e.profile.water[n], e.profile.gas[n]
        );
    }
    println!("cumulative oil: {:.1} bbl", e.profile.total_oil());
    println!("drilling cost: {:.2}", e.cost);
    println!("NPV: {:.2}", e.npv);
    println!("objective: {:.6e}", e.objective);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Optimize { config, seed, out } => {
            let c = load(&config, out)?;
            match seed {
                Some(s) => {
                    let (rec, path) = harness::run_single_to(&c, s, &c.output_dir)?;
                    println!(
                        "seed {s}: best {:.6e} after {} evaluations ({})",
                        rec.final_best(),
                        rec.total_evaluations(),
                        rec.stop_reason.as_str()
                    );
                    println!("wrote {}", path.display());
                }
                None if c.seeds.len() == 1 => {
                    let (rec, path) = harness::run_single_to(&c, c.seeds[0], &c.output_dir)?;
                    println!("best {:.6e}; wrote {}", rec.final_best(), path.display());
                }
                None => {
                    let s = harness::run_batch(&c)?;
                    print!("{}", harness::batch::summary_text(&s));
                    println!("wrote {}", c.output_dir.display());
                }
            }
        }
        Command::Compare { config, out } => {
            let c = load(&config, out)?;
            let report = harness::compare_optimizers(&c)?;
            print!("{}", harness::batch::comparison_text(&report));
            println!("wrote {}", c.output_dir.display());
        }
        Command::Evaluate { genome, config } => evaluate(&genome, config)?,
        Command::GenGrid { seed, out } => {
            well::generate_grid(seed).save(&out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

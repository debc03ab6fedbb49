use wellopt::constraints::is_feasible;
use wellopt::harness::batch::{compare_records, mid_threshold};
use wellopt::harness::{run_single, OptimizerKind, RunConfig, RunRecord};
use wellopt::problem::Problem;
use wellopt::well::{WellProblem, WellProblemConfig};

fn config(json: &str) -> RunConfig {
    RunConfig::from_json(json).unwrap()
}

#[test]
fn csv_round_trip_preserves_rows() {
    let c = config(
        r#"{"problem": {"type": "benchmark", "function": "ellipsoid", "dimension": 4}, "optimizer": "cma_surrogate", "max_generations": 80}"#,
    );
    let rec = run_single(&c, 3).unwrap();
    let text = String::from_utf8(rec.to_csv().unwrap()).unwrap();
    assert_eq!(RunRecord::rows_from_csv(&text).unwrap(), rec.rows);
    assert!(rec.rows.iter().skip(20).any(|r| r.n_ic.is_some()));
}

#[test]
fn well_runs_end_feasible_and_improve() {
    let c = config(
        r#"{"problem": {"type": "well_placement"}, "optimizer": "cma", "max_generations": 30}"#,
    );
    let problem = WellProblem::new(&WellProblemConfig::default()).unwrap();
    for optimizer in [
        OptimizerKind::Cma,
        OptimizerKind::CmaSurrogate,
        OptimizerKind::Ga,
    ] {
        let rec = run_single(
            &RunConfig {
                optimizer,
                ..c.clone()
            },
            11,
        )
        .unwrap();
        let last = rec.final_row().unwrap();
        assert!(problem.is_feasible(&last.best_genome), "{optimizer:?}");
        assert!(
            is_feasible(&last.best_genome, &problem.constraints()),
            "{optimizer:?}"
        );
        assert_eq!(problem.evaluate(&last.best_genome), last.best_objective);
        assert!(
            rec.final_best() < rec.first_finite_best().unwrap(),
            "{optimizer:?}"
        );
    }
}

#[test]
fn extra_constraints_hold_for_the_reported_best() {
    let c = config(
        r#"{"problem": {"type": "benchmark", "function": "sphere", "dimension": 4, "center": 3.0},
            "optimizer": "cma", "max_generations": 300,
            "constraints": [{"indices": [0, 1], "lower": -2.0, "upper": 2.0}, {"indices": [3], "lower": 0.0, "upper": 1.0}]}"#,
    );
    let rec = run_single(&c, 4).unwrap();
    let best = &rec.final_row().unwrap().best_genome;
    assert!(is_feasible(best, &c.constraints));
    // optimum of the constrained problem: (1, 1, 3, 1) with value 12
    let want = [1.0, 1.0, 3.0, 1.0];
    assert!(
        best.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-2),
        "{best:?}"
    );
    assert!((rec.final_best() - 12.0).abs() < 1e-3);
    assert!(rec.rows.iter().any(|r| r.gammas.iter().any(|&g| g > 0.0)));
}

#[test]
fn comparison_shares_thresholds_across_optimizers() {
    let c = config(
        r#"{"problem": {"type": "benchmark", "function": "sphere", "dimension": 3}, "optimizer": "cma",
            "max_generations": 30, "seeds": [1, 2, 3, 4], "compare": ["cma", "ga"]}"#,
    );
    let report = compare_records(&c).unwrap();
    assert_eq!(report.thresholds.len(), 10);
    assert_eq!(
        mid_threshold(&report.thresholds),
        Some(report.thresholds[4])
    );
    for o in &report.optimizers {
        assert_eq!(
            o.batch
                .targets
                .iter()
                .map(|t| t.threshold)
                .collect::<Vec<_>>(),
            report.thresholds
        );
        assert_eq!(
            o.seeds.iter().map(|s| s.seed).collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );
    }
}

use rayon::prelude::*;
use wake_engine::Compensation;
use wake_predictors::evaluate;

use crate::checks::{self, Check};
use crate::layout::{Layout, TEST_SPLIT};
use crate::stages::*;
use crate::table::{experiment_hash, write_csv, write_json};
use crate::{BenchConfig, BenchError};

pub const CONDITION: &str = "nominal";

/// Open loop on the nominal test split; closed loop on fresh episodes for no
/// compensation, the oracle and every trained model.
pub fn run(cfg: &BenchConfig, layout: &Layout) -> Result<Vec<Check>, BenchError> {
    let test = read_nonempty(&layout.nominal(TEST_SPLIT), "test")?;
    let sc = &cfg.generate.scenario;
    let e = &cfg.eval;
    let rows = jobs(&cfg.models, &cfg.seeds)
        .par_iter()
        .map(|&(kind, seed)| {
            let model = load_model(layout, kind, seed)?;
            let row = MetricsRow {
                model: kind,
                seed,
                condition: CONDITION.into(),
                open_loop: evaluate(&model, &test)?,
                tracking: closed_loop(sc, e.seed, e.closed_loop_episodes, Flight::Model(&model))?,
            };
            write_json(&layout.job("eval", kind, seed).join("metrics.json"), &row)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    ensure_finite(&rows)?;
    let none = closed_loop(
        sc,
        e.seed,
        e.closed_loop_episodes,
        Flight::Baseline(Compensation::None),
    )?;
    let oracle = closed_loop(
        sc,
        e.seed,
        e.closed_loop_episodes,
        Flight::Baseline(Compensation::Oracle),
    )?;

    let hash = experiment_hash(cfg);
    let dir = layout.stage("eval");
    write_csv(
        &dir.join("metrics.csv"),
        &hash,
        &METRICS_HEADER,
        &rows.iter().map(MetricsRow::cells).collect::<Vec<_>>(),
    )?;
    let base = [
        baseline_cells("none", CONDITION, &none),
        baseline_cells("oracle", CONDITION, &oracle),
    ];
    write_csv(&dir.join("baselines.csv"), &hash, &BASELINE_HEADER, &base)?;
    for r in &rows {
        eprintln!(
            "eval: {} seed {}: open-loop rmse {:.4} N, tracking {:.4} m",
            r.model, r.seed, r.open_loop.rmse, r.tracking.rmse
        );
    }
    eprintln!(
        "eval: tracking none {:.4} m, oracle {:.4} m",
        none.rmse, oracle.rmse
    );

    let open = model_means(&rows, CONDITION, |r| r.open_loop.rmse);
    let tracking = model_means(&rows, CONDITION, |r| r.tracking.rmse);
    Ok(checks::ordering(&open, &tracking, none.rmse, oracle.rmse))
}

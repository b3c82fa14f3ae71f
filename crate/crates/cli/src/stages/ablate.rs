use rayon::prelude::*;
use wake_engine::{Compensation, Episode, ScenarioConfig};
use wake_predictors::evaluate;

use crate::checks::{self, Check};
use crate::layout::{tier_label, Layout, TEST_SPLIT};
use crate::stages::*;
use crate::table::{experiment_hash, write_csv};
use crate::{BenchConfig, BenchError};

struct Condition {
    label: String,
    test: Vec<Episode>,
    scenario: ScenarioConfig,
    seed: u64,
}

/// Models trained on nominal physics, evaluated at each perturbation tier
/// next to the nominal test split.
pub fn run(cfg: &BenchConfig, layout: &Layout) -> Result<Vec<Check>, BenchError> {
    let a = &cfg.ablate;
    let mut tiers: Vec<f64> = a.tiers.clone();
    tiers.sort_by(f64::total_cmp);
    let mut conditions = vec![Condition {
        label: "nominal".into(),
        test: read_nonempty(&layout.nominal(TEST_SPLIT), "test")?,
        scenario: cfg.generate.scenario.clone(),
        seed: a.seed,
    }];
    for (k, &p) in tiers.iter().enumerate() {
        conditions.push(Condition {
            label: tier_label(p),
            test: read_nonempty(&layout.tier(p), "perturbed test")?,
            scenario: ScenarioConfig {
                perturbation: p,
                ..cfg.generate.scenario.clone()
            },
            seed: a.seed + 1000 * (k as u64 + 1),
        });
    }

    let hash = experiment_hash(cfg);
    let n_closed = a.closed_loop_episodes;
    let per_job = jobs(&cfg.models, &cfg.seeds)
        .par_iter()
        .map(|&(kind, seed)| {
            let model = load_model(layout, kind, seed)?;
            let rows = conditions
                .iter()
                .map(|c| {
                    Ok(MetricsRow {
                        model: kind,
                        seed,
                        condition: c.label.clone(),
                        open_loop: evaluate(&model, &c.test)?,
                        tracking: closed_loop(
                            &c.scenario,
                            c.seed,
                            n_closed,
                            Flight::Model(&model),
                        )?,
                    })
                })
                .collect::<Result<Vec<_>, BenchError>>()?;
            let cells: Vec<Vec<String>> = rows.iter().map(MetricsRow::cells).collect();
            write_csv(
                &layout.job("ablate", kind, seed).join("metrics.csv"),
                &hash,
                &METRICS_HEADER,
                &cells,
            )?;
            Ok(rows)
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    let rows: Vec<MetricsRow> = per_job.into_iter().flatten().collect();
    ensure_finite(&rows)?;

    let mut base = Vec::new();
    for c in &conditions {
        let none = closed_loop(
            &c.scenario,
            c.seed,
            n_closed,
            Flight::Baseline(Compensation::None),
        )?;
        base.push(baseline_cells("none", &c.label, &none));
    }
    let dir = layout.stage("ablate");
    write_csv(
        &dir.join("metrics.csv"),
        &hash,
        &METRICS_HEADER,
        &rows.iter().map(MetricsRow::cells).collect::<Vec<_>>(),
    )?;
    write_csv(&dir.join("baselines.csv"), &hash, &BASELINE_HEADER, &base)?;

    let per_tier: Vec<(String, checks::ModelMeans)> = conditions
        .iter()
        .map(|c| {
            (
                c.label.clone(),
                model_means(&rows, &c.label, |r| r.open_loop.rmse),
            )
        })
        .collect();
    for (label, means) in &per_tier {
        let parts: Vec<String> = means.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
        eprintln!("ablate: {label}: {}", parts.join(", "));
    }
    // The ranking check is about the perturbed tiers; the nominal row only
    // anchors the degradation trend.
    let mut out = checks::ablation(&per_tier);
    out.retain(|c| !c.name.starts_with("ablation.nominal."));
    Ok(out)
}

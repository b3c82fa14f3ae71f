use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wake_engine::{generate_episodes, write_dataset, ScenarioConfig};
use wake_predictors::train::DelaySummary;
use wake_predictors::{introspect, train, ModelKind};

use crate::checks::{self, Check};
use crate::layout::{Layout, TEST_SPLIT, TRAIN_SPLIT, VAL_SPLIT};
use crate::stages::*;
use crate::table::{experiment_hash, num, write_csv, write_json};
use crate::{BenchConfig, BenchError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationRow {
    pub seed: u64,
    pub dz_sep: f64,
    pub physical_delay: f64,
    pub delay: DelaySummary,
    pub val_rmse: f64,
}

/// Lag profiles of the trained kernel and attention models on the nominal
/// test split, and the learned delay of freshly trained delay models across
/// vertical separations.
pub fn run(cfg: &BenchConfig, layout: &Layout) -> Result<Vec<Check>, BenchError> {
    let hash = experiment_hash(cfg);
    let sc = &cfg.generate.scenario;
    let delay_phys = sc.dz_sep / sc.fluid.w_a;
    let mut out = Vec::new();

    let kinds: Vec<ModelKind> = cfg
        .models
        .iter()
        .copied()
        .filter(|k| matches!(k, ModelKind::DelayEmbedding | ModelKind::CrossAttention))
        .collect();
    if !kinds.is_empty() {
        let test = read_nonempty(&layout.nominal(TEST_SPLIT), "test")?;
        let val = read_nonempty(&layout.nominal(VAL_SPLIT), "validation")?;
        for kind in kinds {
            let mut profiles: Vec<Vec<(f64, f64)>> = Vec::new();
            let mut mus = Vec::new();
            for &seed in &cfg.seeds {
                let model = load_model(layout, kind, seed)?;
                let (_, profile) = introspect(&model, &test)?;
                let profile: Vec<(f64, f64)> = profile
                    .unwrap_or_default()
                    .iter()
                    .map(|w| (w.lag, w.weight))
                    .collect();
                let rows: Vec<Vec<String>> =
                    profile.iter().map(|&(l, w)| vec![num(l), num(w)]).collect();
                let dir = layout.job("introspect", kind, seed);
                write_csv(
                    &dir.join("lag_profile.csv"),
                    &hash,
                    &["lag", "weight"],
                    &rows,
                )?;
                if kind == ModelKind::DelayEmbedding {
                    let (delay, _) = introspect(&model, &val)?;
                    let delay = delay.ok_or_else(|| {
                        BenchError::Numeric("delay model reported no kernel".into())
                    })?;
                    write_json(&dir.join("delay.json"), &delay)?;
                    mus.push(delay.mu_mean);
                }
                profiles.push(profile);
            }
            let mean_profile = average_profiles(&profiles);
            let rows: Vec<Vec<String>> = mean_profile
                .iter()
                .map(|&(l, w)| vec![num(l), num(w)])
                .collect();
            write_csv(
                &layout
                    .stage("introspect")
                    .join(kind.name())
                    .join("lag_profile.csv"),
                &hash,
                &["lag", "weight"],
                &rows,
            )?;
            let total: f64 = mean_profile.iter().map(|p| p.1).sum();
            out.push(Check::new(
                format!("introspect.{kind}.profile_sums_to_one"),
                (total - 1.0).abs() < 1e-9,
                format!("sum {total}"),
            ));
            match kind {
                ModelKind::CrossAttention => {
                    let peak = checks::peak_lag(&mean_profile);
                    out.push(Check::new(
                        "introspect.cross_attention.peak_near_delay",
                        (peak - delay_phys).abs() <= 0.15,
                        format!("peak at {peak:.3} s, transport delay {delay_phys:.3} s"),
                    ));
                }
                _ => {
                    let mu = checks::mean(&mus);
                    out.push(Check::new(
                        "introspect.delay_embedding.mu_in_window",
                        mu >= delay_phys && mu <= delay_phys + 0.2,
                        format!(
                            "mean mu {mu:.3} s, window [{delay_phys:.3}, {:.3}] s",
                            delay_phys + 0.2
                        ),
                    ));
                }
            }
        }
    }

    if cfg.models.contains(&ModelKind::DelayEmbedding) && !cfg.introspect.separations.is_empty() {
        out.extend(separations(cfg, layout, &hash)?);
    }
    Ok(out)
}

fn average_profiles(profiles: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let Some(first) = profiles.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(i, &(lag, _))| {
            (
                lag,
                checks::mean(&profiles.iter().map(|p| p[i].1).collect::<Vec<_>>()),
            )
        })
        .collect()
}

fn separations(cfg: &BenchConfig, layout: &Layout, hash: &str) -> Result<Vec<Check>, BenchError> {
    let ic = &cfg.introspect;
    let kind = ModelKind::DelayEmbedding;
    let mut data = Vec::new();
    for (k, &dz) in ic.separations.iter().enumerate() {
        cfg.check_window(kind, dz)?;
        let sc = ScenarioConfig {
            dz_sep: dz,
            seed: ic.seed + 1000 * k as u64,
            ..cfg.generate.scenario.clone()
        };
        let eps = generate_episodes(&sc, ic.train_episodes + ic.val_episodes)?;
        let (tr, va) = eps.split_at(ic.train_episodes);
        write_dataset(tr, &layout.separation(dz, TRAIN_SPLIT))?;
        write_dataset(va, &layout.separation(dz, VAL_SPLIT))?;
        data.push((dz, tr.to_vec(), va.to_vec()));
    }
    let w_a = cfg.generate.scenario.fluid.w_a;
    let pairs: Vec<(usize, u64)> = (0..data.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let rows = pairs
        .par_iter()
        .map(|&(i, seed)| {
            let (dz, tr, va) = &data[i];
            let (_, report) = train::<f64>(cfg.spec(kind), tr, va, cfg.train_settings(kind), seed)?;
            let delay = report
                .delay
                .ok_or_else(|| BenchError::Numeric("delay model reported no kernel".into()))?;
            eprintln!(
                "introspect: dz_sep {dz} m seed {seed}: mu {:.3} s",
                delay.mu_mean
            );
            Ok(SeparationRow {
                seed,
                dz_sep: *dz,
                physical_delay: dz / w_a,
                delay,
                val_rmse: report.val_metrics.rmse,
            })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    let header = [
        "seed",
        "dz_sep",
        "physical_delay",
        "mu_mean",
        "mu_std",
        "sigma_mean",
        "val_rmse",
    ];
    let cells = |r: &SeparationRow| {
        vec![
            r.seed.to_string(),
            num(r.dz_sep),
            num(r.physical_delay),
            num(r.delay.mu_mean),
            num(r.delay.mu_std),
            num(r.delay.sigma_mean),
            num(r.val_rmse),
        ]
    };
    for &seed in &cfg.seeds {
        let mine: Vec<Vec<String>> = rows.iter().filter(|r| r.seed == seed).map(cells).collect();
        write_csv(
            &layout.job("introspect", kind, seed).join("separations.csv"),
            hash,
            &header,
            &mine,
        )?;
    }
    write_csv(
        &layout.stage("introspect").join("separations.csv"),
        hash,
        &header,
        &rows.iter().map(cells).collect::<Vec<_>>(),
    )?;

    let mus: Vec<f64> = data
        .iter()
        .map(|(dz, _, _)| {
            checks::mean(
                &rows
                    .iter()
                    .filter(|r| r.dz_sep == *dz)
                    .map(|r| r.delay.mu_mean)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    Ok(vec![Check::new(
        "introspect.delay_embedding.mu_increases_with_separation",
        checks::strictly_increasing(&mus),
        format!("separations {:?} m, mean mu {mus:.3?} s", ic.separations),
    )])
}

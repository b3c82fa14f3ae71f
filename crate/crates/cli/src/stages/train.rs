use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use wake_engine::Episode;
use wake_predictors::{save_checkpoint, train, ModelKind, TrainReport};

use crate::layout::{Layout, TRAIN_SPLIT, VAL_SPLIT};
use crate::stages::{jobs, read_nonempty};
use crate::table::{experiment_hash, num, write_csv, write_json};
use crate::{BenchConfig, BenchError};

pub const REPORT_FILE: &str = "report.json";

/// Trains every (model, seed) pair in parallel.
pub fn run(cfg: &BenchConfig, layout: &Layout) -> Result<Vec<TrainReport>, BenchError> {
    let tr = read_nonempty(&layout.nominal(TRAIN_SPLIT), "training")?;
    let va = read_nonempty(&layout.nominal(VAL_SPLIT), "validation")?;
    let hash = experiment_hash(cfg);
    let reports = jobs(&cfg.models, &cfg.seeds)
        .par_iter()
        .map(|&(kind, seed)| train_job(cfg, layout, kind, seed, &tr, &va, &hash))
        .collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.model.to_string(),
                r.seed.to_string(),
                r.param_count.to_string(),
                r.epochs.len().to_string(),
                r.best_epoch.to_string(),
                num(r.best_val_loss),
                num(r.val_metrics.rmse),
                num(r.val_metrics.r2_x),
                num(r.val_metrics.r2_z),
            ]
        })
        .collect();
    let header = [
        "model",
        "seed",
        "params",
        "epochs",
        "best_epoch",
        "best_val_loss",
        "val_rmse",
        "val_r2_x",
        "val_r2_z",
    ];
    write_csv(
        &layout.stage("train").join("summary.csv"),
        &hash,
        &header,
        &rows,
    )?;
    Ok(reports)
}

fn train_job(
    cfg: &BenchConfig,
    layout: &Layout,
    kind: ModelKind,
    seed: u64,
    tr: &[Episode],
    va: &[Episode],
    hash: &str,
) -> Result<TrainReport, BenchError> {
    let start = Instant::now();
    let (model, report) = train::<f64>(cfg.spec(kind), tr, va, cfg.train_settings(kind), seed)?;
    let dir = layout.job("train", kind, seed);
    // Everything goes to a hidden sibling first, so an aborted job never
    // leaves a checkpoint that looks complete.
    let tmp = dir.with_file_name(format!(".{seed}.partial"));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    save_checkpoint(&model, &tmp)?;
    write_json(&tmp.join(REPORT_FILE), &report)?;
    write_epochs(&tmp.join("epochs.csv"), &report, hash)?;
    replace_dir(&tmp, &dir)?;
    eprintln!(
        "train: {kind} seed {seed}: {} epochs (best {}), val rmse {:.4} N, {:.1} s",
        report.epochs.len(),
        report.best_epoch,
        report.val_metrics.rmse,
        start.elapsed().as_secs_f64()
    );
    Ok(report)
}

fn write_epochs(path: &Path, report: &TrainReport, hash: &str) -> Result<(), BenchError> {
    let rows: Vec<Vec<String>> = report
        .epochs
        .iter()
        .map(|e| vec![e.epoch.to_string(), num(e.train_loss), num(e.val_loss)])
        .collect();
    write_csv(path, hash, &["epoch", "train_loss", "val_loss"], &rows)
}

pub fn replace_dir(tmp: &Path, dir: &Path) -> Result<(), BenchError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::rename(tmp, dir)?;
    Ok(())
}

//! Pipeline stages and the helpers they share.

pub mod ablate;
pub mod eval;
pub mod generate;
pub mod introspect;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use wake_engine::{
    read_dataset, run_episode, Compensation, Episode, ScenarioConfig, TrackingMetrics,
};
use wake_predictors::{load_checkpoint, ModelKind, OpenLoopMetrics, Predictor};

use crate::layout::Layout;
use crate::table::num;
use crate::BenchError;

pub fn read_split(path: &Path) -> Result<Vec<Episode>, BenchError> {
    if !path.exists() {
        return Err(BenchError::Config(format!(
            "{} not found; run the generate stage first",
            path.display()
        )));
    }
    Ok(read_dataset(path)?)
}

pub fn read_nonempty(path: &Path, what: &str) -> Result<Vec<Episode>, BenchError> {
    let eps = read_split(path)?;
    if eps.is_empty() {
        return Err(BenchError::Config(format!(
            "{} holds no {what} episodes",
            path.display()
        )));
    }
    Ok(eps)
}

pub fn load_model(layout: &Layout, kind: ModelKind, seed: u64) -> Result<Predictor, BenchError> {
    let dir = layout.job("train", kind, seed);
    if !dir.exists() {
        return Err(BenchError::Config(format!(
            "no checkpoint for {kind} seed {seed} at {}; run the train stage first",
            dir.display()
        )));
    }
    Ok(load_checkpoint(&dir)?)
}

/// Closed-loop condition being flown.
#[derive(Clone, Copy, Debug)]
pub enum Flight<'a> {
    Baseline(Compensation),
    Model(&'a Predictor),
}

/// Mean tracking error over `count` fresh episodes with seeds `seed + i`.
pub fn closed_loop(
    base: &ScenarioConfig,
    seed: u64,
    count: usize,
    flight: Flight,
) -> Result<TrackingMetrics, BenchError> {
    let mut sum = TrackingMetrics::default();
    for i in 0..count {
        let cfg = base.with_seed(seed + i as u64);
        let ep = match flight {
            Flight::Baseline(mode) => run_episode(&cfg, None, mode)?,
            Flight::Model(m) => {
                let mut s = m.stream();
                run_episode(&cfg, Some(&mut s), Compensation::Model)?
            }
        };
        sum.rmse += ep.metrics.rmse;
        sum.rmse_x += ep.metrics.rmse_x;
        sum.rmse_z += ep.metrics.rmse_z;
    }
    let n = count.max(1) as f64;
    Ok(TrackingMetrics {
        rmse: sum.rmse / n,
        rmse_x: sum.rmse_x / n,
        rmse_z: sum.rmse_z / n,
    })
}

/// One row of a metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: ModelKind,
    pub seed: u64,
    pub condition: String,
    pub open_loop: OpenLoopMetrics,
    pub tracking: TrackingMetrics,
}

pub const METRICS_HEADER: [&str; 12] = [
    "model",
    "seed",
    "condition",
    "rmse",
    "rmse_x",
    "rmse_z",
    "r2_x",
    "r2_z",
    "samples",
    "tracking_rmse",
    "tracking_rmse_x",
    "tracking_rmse_z",
];

impl MetricsRow {
    pub fn cells(&self) -> Vec<String> {
        let o = &self.open_loop;
        let t = &self.tracking;
        vec![
            self.model.to_string(),
            self.seed.to_string(),
            self.condition.clone(),
            num(o.rmse),
            num(o.rmse_x),
            num(o.rmse_z),
            num(o.r2_x),
            num(o.r2_z),
            o.samples.to_string(),
            num(t.rmse),
            num(t.rmse_x),
            num(t.rmse_z),
        ]
    }

    pub fn is_finite(&self) -> bool {
        let o = &self.open_loop;
        let t = &self.tracking;
        [
            o.rmse, o.rmse_x, o.rmse_z, o.r2_x, o.r2_z, t.rmse, t.rmse_x, t.rmse_z,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub const BASELINE_HEADER: [&str; 5] = [
    "compensation",
    "condition",
    "tracking_rmse",
    "tracking_rmse_x",
    "tracking_rmse_z",
];

pub fn baseline_cells(name: &str, condition: &str, t: &TrackingMetrics) -> Vec<String> {
    vec![
        name.into(),
        condition.into(),
        num(t.rmse),
        num(t.rmse_x),
        num(t.rmse_z),
    ]
}

/// Every (model, seed) pair in config order.
pub fn jobs(models: &[ModelKind], seeds: &[u64]) -> Vec<(ModelKind, u64)> {
    models
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect()
}

/// Seed-averaged value of `f` per model, in config order.
pub fn model_means(
    rows: &[MetricsRow],
    condition: &str,
    f: impl Fn(&MetricsRow) -> f64,
) -> Vec<(ModelKind, f64)> {
    let mut kinds: Vec<ModelKind> = Vec::new();
    for r in rows {
        if !kinds.contains(&r.model) {
            kinds.push(r.model);
        }
    }
    kinds
        .into_iter()
        .map(|k| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.model == k && r.condition == condition)
                .map(&f)
                .collect();
            (k, crate::checks::mean(&v))
        })
        .filter(|(_, v)| v.is_finite())
        .collect()
}

pub fn ensure_finite(rows: &[MetricsRow]) -> Result<(), BenchError> {
    match rows.iter().find(|r| !r.is_finite()) {
        Some(r) => Err(BenchError::Numeric(format!(
            "non-finite metrics for {} seed {} ({})",
            r.model, r.seed, r.condition
        ))),
        None => Ok(()),
    }
}

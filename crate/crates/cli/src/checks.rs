//! Properties checked on stage outputs; reused by the acceptance suite.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wake_predictors::ModelKind;

use crate::table::write_json;
use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn write(path: &Path, checks: &[Check]) -> Result<(), BenchError> {
    write_json(path, &checks)
}

/// Kinds whose open-loop error must beat the memoryless baseline.
pub const MEMORY_KINDS: [ModelKind; 4] = [
    ModelKind::HistoryMlp,
    ModelKind::DelayEmbedding,
    ModelKind::Gru,
    ModelKind::CrossAttention,
];

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Seed-averaged value per model.
pub type ModelMeans = Vec<(ModelKind, f64)>;

fn lookup(means: &[(ModelKind, f64)], kind: ModelKind) -> Option<f64> {
    means.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
}

/// Memory models below the memoryless model in open loop; closed loop ordered
/// oracle < none and no memory model worse than no compensation.
pub fn ordering(
    open: &[(ModelKind, f64)],
    tracking: &[(ModelKind, f64)],
    none: f64,
    oracle: f64,
) -> Vec<Check> {
    let mut out = vec![Check::new(
        "closed_loop.oracle_below_none",
        oracle < none,
        format!("oracle {oracle:.5} m, none {none:.5} m"),
    )];
    if let Some(agile) = lookup(open, ModelKind::AgileMlp) {
        for kind in MEMORY_KINDS {
            if let Some(v) = lookup(open, kind) {
                out.push(Check::new(
                    format!("open_loop.{kind}_below_agile_mlp"),
                    v < agile,
                    format!("{kind} {v:.5} N, agile_mlp {agile:.5} N"),
                ));
            }
        }
    }
    for kind in MEMORY_KINDS {
        if let Some(v) = lookup(tracking, kind) {
            out.push(Check::new(
                format!("closed_loop.{kind}_not_above_none"),
                v <= none,
                format!("{kind} {v:.5} m, none {none:.5} m"),
            ));
        }
    }
    out
}

/// `tiers` in increasing perturbation, each with seed-averaged open-loop RMSE.
pub fn ablation(tiers: &[(String, ModelMeans)]) -> Vec<Check> {
    let mut out = Vec::new();
    for (label, means) in tiers {
        if means.len() < 2 || lookup(means, ModelKind::AgileMlp).is_none() {
            continue;
        }
        let best = means
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        out.push(Check::new(
            format!("ablation.{label}.agile_mlp_not_best"),
            best.0 != ModelKind::AgileMlp,
            format!("lowest {} at {:.5} N", best.0, best.1),
        ));
    }
    let medians: Vec<f64> = tiers
        .iter()
        .map(|(_, m)| median(&m.iter().map(|x| x.1).collect::<Vec<_>>()))
        .collect();
    if medians.len() >= 2 {
        let drops = medians.windows(2).filter(|w| w[1] < w[0]).count();
        out.push(Check::new(
            "ablation.median_non_decreasing",
            drops <= 1,
            format!("medians {medians:.5?}, {drops} decrease(s)"),
        ));
    }
    out
}

pub fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// Lag of the largest weight.
pub fn peak_lag(profile: &[(f64, f64)]) -> f64 {
    profile
        .iter()
        .fold((0.0, f64::NEG_INFINITY), |best, &(l, w)| {
            if w > best.1 {
                (l, w)
            } else {
                best
            }
        })
        .0
}

//! Stable output paths: `out/<stage>/<model>/<seed>/` for per-job files.

use std::path::{Path, PathBuf};

use wake_predictors::ModelKind;

#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

pub const TRAIN_SPLIT: &str = "train";
pub const VAL_SPLIT: &str = "val";
pub const TEST_SPLIT: &str = "test";

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    pub fn job(&self, stage: &str, kind: ModelKind, seed: u64) -> PathBuf {
        self.stage(stage).join(kind.name()).join(seed.to_string())
    }

    pub fn nominal(&self, split: &str) -> PathBuf {
        self.stage("generate")
            .join("nominal")
            .join(format!("{split}.csv"))
    }

    pub fn tier(&self, perturbation: f64) -> PathBuf {
        self.stage("generate")
            .join(tier_label(perturbation))
            .join(format!("{TEST_SPLIT}.csv"))
    }

    pub fn separation(&self, dz_sep: f64, split: &str) -> PathBuf {
        self.stage("introspect")
            .join("data")
            .join(format!("dz_{dz_sep}"))
            .join(format!("{split}.csv"))
    }
}

/// `perturbed_10` for a 10% tier.
pub fn tier_label(perturbation: f64) -> String {
    format!("perturbed_{}", (perturbation * 100.0).round() as i64)
}

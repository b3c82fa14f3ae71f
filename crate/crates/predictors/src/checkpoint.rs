//! Parameters as little-endian f64 in `params.bin`, everything needed to
//! rebuild the model in `manifest.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wake_core::autodiff::Tensor;
use wake_core::{lit, to_f64, Real};
use wake_engine::io::atomic_write;

use crate::models::Model;
use crate::norm::Normalization;
use crate::spec::{ModelKind, PredictorSpec};
use crate::PredictorError;

const MAGIC: &[u8; 8] = b"WKPARAM1";
pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: ModelKind,
    pub spec: PredictorSpec,
    pub rate: f64,
    /// Initialization seed; also regenerates any frozen weights.
    pub seed: u64,
    pub normalization: Normalization,
    pub param_count: usize,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, dir: &Path) -> Result<(), PredictorError> {
    std::fs::create_dir_all(dir)?;
    let mut bin = Vec::with_capacity(16 + 8 * model.param_count());
    bin.extend_from_slice(MAGIC);
    bin.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for t in &model.params.tensors {
        for &v in t.data() {
            bin.extend_from_slice(&to_f64(v).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: 1,
        kind: model.kind(),
        spec: model.spec.clone(),
        rate: model.rate,
        seed: model.seed,
        normalization: model.norm.clone(),
        param_count: model.param_count(),
        tensors: model
            .params
            .tensors
            .iter()
            .zip(&model.params.names)
            .map(|(t, name)| TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    atomic_write(&dir.join(PARAMS_FILE), &bin)?;
    atomic_write(
        &dir.join(MANIFEST_FILE),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, PredictorError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_checkpoint<T: Real>(dir: &Path) -> Result<Model<T>, PredictorError> {
    let manifest = read_manifest(dir)?;
    let bad = |m: String| PredictorError::Checkpoint(format!("{}: {m}", dir.display()));
    let mut model = Model::<T>::new(manifest.spec.clone(), manifest.rate, manifest.seed)?;
    model.norm = manifest.normalization.clone();
    let layout: Vec<(&str, (usize, usize))> = model
        .params
        .names
        .iter()
        .zip(&model.params.tensors)
        .map(|(n, t)| (n.as_str(), t.shape()))
        .collect();
    let stored: Vec<(&str, (usize, usize))> = manifest
        .tensors
        .iter()
        .map(|e| (e.name.as_str(), (e.rows, e.cols)))
        .collect();
    if layout != stored {
        return Err(bad("tensor layout does not match the model spec".into()));
    }
    let bin = std::fs::read(dir.join(PARAMS_FILE))?;
    if bin.len() < 16 || &bin[..8] != MAGIC {
        return Err(bad("not a parameter file".into()));
    }
    let count = u64::from_le_bytes(bin[8..16].try_into().expect("8 bytes")) as usize;
    if count != model.param_count() || bin.len() != 16 + 8 * count {
        return Err(bad(format!(
            "expected {} parameters, file holds {count}",
            model.param_count()
        )));
    }
    let mut values = bin[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in model.params.tensors.iter_mut() {
        let (r, c) = t.shape();
        let data: Vec<T> = values.by_ref().take(r * c).map(lit).collect();
        *t = Tensor::from_vec(r, c, data);
        if !t.is_finite() {
            return Err(bad("non-finite parameter".into()));
        }
    }
    Ok(model)
}

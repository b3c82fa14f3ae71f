//! Dataset files: one CSV of samples plus a JSON sidecar of episode metadata.
//!
//! The CSV starts with a `# config_hash=<hex>` comment line, then the header
//! `t,obs_0,...,obs_7,fx,fz`. Episodes are stored back to back; the sidecar
//! records how many rows belong to each, in order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::episode::{Episode, Sample, TrackingMetrics};
use crate::io::{atomic_write, content_hash};
use crate::observation::OBS_DIM;
use crate::physics::RealizedPhysics;
use crate::{EngineError, ScenarioConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub config: ScenarioConfig,
    pub physics: RealizedPhysics,
    pub metrics: TrackingMetrics,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub config_hash: String,
    pub episodes: Vec<EpisodeMeta>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..OBS_DIM).map(|k| format!("obs_{k}")));
    h.push("fx".into());
    h.push("fz".into());
    h
}

pub fn dataset_hash(episodes: &[Episode]) -> String {
    let configs: Vec<&ScenarioConfig> = episodes.iter().map(|e| &e.config).collect();
    content_hash(&configs)
}

pub fn write_dataset(episodes: &[Episode], path: &Path) -> Result<(), EngineError> {
    let hash = dataset_hash(episodes);
    let mut buf = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header())?;
        for ep in episodes {
            for s in &ep.samples {
                let mut row = Vec::with_capacity(OBS_DIM + 3);
                row.push(s.t);
                row.extend_from_slice(&s.obs);
                row.extend_from_slice(&s.f_true);
                w.serialize(row)?;
            }
        }
        w.flush()?;
    }
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        config_hash: hash,
        episodes: episodes
            .iter()
            .map(|e| EpisodeMeta {
                config: e.config.clone(),
                physics: e.physics,
                metrics: e.metrics,
                n_samples: e.samples.len(),
            })
            .collect(),
    };
    // Sidecar last: a dataset is only complete once both files exist.
    atomic_write(path, &buf)?;
    atomic_write(&sidecar_path(path), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Episode>, EngineError> {
    let meta_path = sidecar_path(path);
    let meta_text = std::fs::read_to_string(&meta_path)?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text).map_err(|e| EngineError::Parse {
        path: meta_path.display().to_string(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let parse_err = |line: u64, msg: String| EngineError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    let expected = format!("# config_hash={}", meta.config_hash);
    if first != expected {
        return Err(parse_err(
            1,
            format!("expected `{expected}`, found `{first}`"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let hdr = reader.headers()?.clone();
    if hdr.iter().collect::<Vec<_>>() != header() {
        return Err(parse_err(2, format!("unexpected header {hdr:?}")));
    }
    let mut rows = reader.deserialize::<Vec<f64>>();
    let mut episodes = Vec::with_capacity(meta.episodes.len());
    for em in meta.episodes {
        let mut samples = Vec::with_capacity(em.n_samples);
        for _ in 0..em.n_samples {
            let rec = match rows.next() {
                Some(r) => r?,
                None => {
                    return Err(parse_err(
                        text.lines().count() as u64,
                        "file ends before the sample count recorded in the sidecar".into(),
                    ))
                }
            };
            if rec.len() != OBS_DIM + 3 {
                return Err(parse_err(0, format!("row has {} fields", rec.len())));
            }
            let mut obs = [0.0; OBS_DIM];
            obs.copy_from_slice(&rec[1..=OBS_DIM]);
            samples.push(Sample {
                t: rec[0],
                obs,
                f_true: [rec[OBS_DIM + 1], rec[OBS_DIM + 2]],
            });
        }
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(parse_err(
                0,
                "timestamps not strictly increasing within an episode".into(),
            ));
        }
        episodes.push(Episode {
            config: em.config,
            physics: em.physics,
            samples,
            metrics: em.metrics,
        });
    }
    if let Some(extra) = rows.next() {
        let pos = match extra {
            Ok(_) => 0,
            Err(e) => e.position().map_or(0, |p| p.line()),
        };
        return Err(parse_err(
            pos,
            "more rows than recorded in the sidecar".into(),
        ));
    }
    Ok(episodes)
}

//! CSV outputs: a `# config_hash=` line, a header row, then data rows.

use std::path::Path;

use serde::Serialize;
use wake_engine::io::{atomic_write, content_hash};

use crate::{BenchConfig, BenchError};

/// Hash of everything that affects results; the output directory and the
/// worker count are left out.
pub fn experiment_hash(cfg: &BenchConfig) -> String {
    let mut c = cfg.clone();
    c.out = Default::default();
    c.jobs = 0;
    content_hash(&c)
}

pub fn write_csv(
    path: &Path,
    hash: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), BenchError> {
    let mut buf = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            if r.len() != header.len() {
                return Err(BenchError::Io(format!(
                    "{}: row has {} fields, header {}",
                    path.display(),
                    r.len(),
                    header.len()
                )));
            }
            w.write_record(r)?;
        }
        w.flush()?;
    }
    atomic_write(path, &buf)?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), BenchError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)?;
    Ok(())
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

//! Experiment pipeline over the wake simulator and predictors.
//!
//! Stages run in the order generate, train, eval, ablate, introspect; each one
//! reads what the previous stages left under the output directory, so they
//! can also be invoked one at a time.

pub mod checks;
pub mod config;
pub mod layout;
pub mod stages;
pub mod table;

use rayon::ThreadPool;
use wake_engine::EngineError;
use wake_predictors::PredictorError;

pub use checks::Check;
pub use config::{BenchConfig, Overrides};
pub use layout::Layout;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{} acceptance check(s) failed: {}", .0.len(), .0.join("; "))]
    Acceptance(Vec<String>),
    #[error("io: {0}")]
    Io(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Numeric(_) => 3,
            BenchError::Acceptance(_) => 4,
            BenchError::Io(_) => 1,
        }
    }
}

impl From<PredictorError> for BenchError {
    fn from(e: PredictorError) -> Self {
        match e {
            e if e.is_numeric() => BenchError::Numeric(e.to_string()),
            PredictorError::InvalidSpec(_)
            | PredictorError::Budget { .. }
            | PredictorError::Data(_) => BenchError::Config(e.to_string()),
            e => BenchError::Io(e.to_string()),
        }
    }
}

impl From<EngineError> for BenchError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(m) => BenchError::Config(m),
            EngineError::Field(_) | EngineError::Control(_) | EngineError::Predictor { .. } => {
                BenchError::Numeric(e.to_string())
            }
            e => BenchError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Generate,
    Train,
    Eval,
    Ablate,
    Introspect,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Ablate => "ablate",
            Stage::Introspect => "introspect",
            Stage::All => "all",
        }
    }
}

pub fn thread_pool(jobs: usize) -> Result<ThreadPool, BenchError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start {jobs} workers: {e}")))
}

/// Runs one stage, or all of them in order. Property checks never stop the
/// pipeline early; with `gate` set, any failure turns into an acceptance error
/// once every requested stage has written its outputs.
pub fn run(stage: Stage, cfg: &BenchConfig) -> Result<Vec<Check>, BenchError> {
    let layout = Layout::new(&cfg.out);
    let pool = thread_pool(cfg.jobs)?;
    let order = match stage {
        Stage::All => vec![
            Stage::Generate,
            Stage::Train,
            Stage::Eval,
            Stage::Ablate,
            Stage::Introspect,
        ],
        s => vec![s],
    };
    let mut all = Vec::new();
    for s in order {
        let checks = pool.install(|| match s {
            Stage::Generate => stages::generate::run(cfg, &layout).map(|_| Vec::new()),
            Stage::Train => stages::train::run(cfg, &layout).map(|_| Vec::new()),
            Stage::Eval => stages::eval::run(cfg, &layout),
            Stage::Ablate => stages::ablate::run(cfg, &layout),
            Stage::Introspect => stages::introspect::run(cfg, &layout),
            Stage::All => unreachable!(),
        })?;
        if !checks.is_empty() {
            checks::write(&layout.stage(s.name()).join("checks.json"), &checks)?;
            for c in &checks {
                eprintln!(
                    "[{}] {} {}: {}",
                    s.name(),
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
        }
        all.extend(checks);
    }
    let failed: Vec<String> = all
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    if cfg.gate && !failed.is_empty() {
        return Err(BenchError::Acceptance(failed));
    }
    Ok(all)
}

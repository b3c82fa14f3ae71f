//! Scenario generation and closed-loop episodes for the two-vehicle wake study.
//!
//! A wake source rides a horizontal rail at fixed altitude with a random thrust
//! command; a sufferer flies below it under LQR control with optional
//! feedforward compensation of the predicted wake force. Each recorded sample
//! pairs the 8D relative observation with the true drag force on the sufferer.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod episode;
pub mod io;
pub mod observation;
pub mod physics;
pub mod reference;

pub use config::{MotionSpec, ScenarioConfig, ThrustSpec};
pub use dataset::{read_dataset, write_dataset};
pub use episode::{
    generate_episodes, run_episode, Compensation, Episode, OnlinePredictor, Sample, TrackingMetrics,
};
pub use observation::{build_observation, Force, Observation, OBS_DIM};
pub use physics::{perturb_physics, RealizedPhysics};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] wake_core::field::FieldError),
    #[error(transparent)]
    Control(#[from] wake_core::vehicle::ControlError),
    #[error("predictor failed at t = {t:.2} s: {msg}")]
    Predictor { t: f64, msg: String },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

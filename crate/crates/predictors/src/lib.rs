//! Wake-force predictors.
//!
//! Every model maps a causal stream of 8D relative observations to a 2D force
//! estimate. The families differ only in how they read the past:
//!
//! * `agile_mlp` sees the current observation only;
//! * `history_mlp` flattens a fixed window of snapshots;
//! * `delay_embedding` pools the window under a learned Gaussian delay kernel;
//! * `gru` carries a recurrent state;
//! * `esn` drives a fixed random reservoir and fits a ridge readout;
//! * `cross_attention` lets the current observation attend over the window.
//!
//! Models are generic over the scalar type; [`Predictor`] is the f64 alias.

pub mod checkpoint;
pub mod gradcheck;
pub mod history;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod models;
pub mod norm;
pub mod spec;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use metrics::{evaluate, OpenLoopMetrics};
pub use models::{Model, StreamPredictor, Trace};
pub use norm::Normalization;
pub use spec::{ModelKind, PredictorSpec, PARAM_BUDGET};
pub use train::{introspect, train, TrainConfig, TrainReport};

pub type Predictor = Model<f64>;

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("invalid predictor spec: {0}")]
    InvalidSpec(String),
    #[error("{kind} has {count} trainable parameters, over the budget of {limit}")]
    Budget {
        kind: ModelKind,
        count: usize,
        limit: usize,
    },
    #[error(transparent)]
    Autodiff(#[from] wake_core::autodiff::AutodiffError),
    #[error("linear algebra: {0}")]
    Linalg(#[from] wake_core::linalg::LinalgError),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("data: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl PredictorError {
    /// Numeric failures as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            PredictorError::Autodiff(_) | PredictorError::Linalg(_) | PredictorError::NonFinite(_)
        )
    }
}

use serde::{Deserialize, Serialize};
use wake_core::Real;
use wake_engine::{Episode, Force};

use crate::models::Model;
use crate::PredictorError;

/// Leading seconds of every episode excluded from reported errors, covering
/// the longest model context.
pub const WARMUP_SECONDS: f64 = 1.0;

/// Open-loop force prediction errors in Newtons.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopMetrics {
    /// `sqrt(mean(e_x^2 + e_z^2))`.
    pub rmse: f64,
    pub rmse_x: f64,
    pub rmse_z: f64,
    pub r2_x: f64,
    pub r2_z: f64,
    pub samples: usize,
}

pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

pub fn open_loop_metrics(pred: &[Force], truth: &[Force]) -> OpenLoopMetrics {
    let n = truth.len().max(1) as f64;
    let sx: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p[0] - t[0]).powi(2))
        .sum();
    let sz: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p[1] - t[1]).powi(2))
        .sum();
    let axis = |k: usize, v: &[Force]| v.iter().map(|f| f[k]).collect::<Vec<_>>();
    OpenLoopMetrics {
        rmse: ((sx + sz) / n).sqrt(),
        rmse_x: (sx / n).sqrt(),
        rmse_z: (sz / n).sqrt(),
        r2_x: r_squared(&axis(0, pred), &axis(0, truth)),
        r2_z: r_squared(&axis(1, pred), &axis(1, truth)),
        samples: truth.len(),
    }
}

pub fn warmup_steps(rate: f64) -> usize {
    (WARMUP_SECONDS * rate).round() as usize
}

/// Predictions pooled over all episodes after the warm-up.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    episodes: &[Episode],
) -> Result<OpenLoopMetrics, PredictorError> {
    let skip = warmup_steps(model.rate);
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for ep in episodes {
        let p = model.predict_sequence(&ep.observations())?;
        pred.extend_from_slice(p.get(skip..).unwrap_or(&[]));
        truth.extend(ep.samples.iter().skip(skip).map(|s| s.f_true));
    }
    if truth.is_empty() {
        return Err(PredictorError::Data("no samples after the warm-up".into()));
    }
    Ok(open_loop_metrics(&pred, &truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_mean_predictions() {
        let truth = [[1.0, 0.0], [2.0, 1.0], [3.0, 2.0]];
        let m = open_loop_metrics(&truth, &truth);
        assert_eq!((m.rmse, m.r2_x, m.r2_z), (0.0, 1.0, 1.0));
        let mean = [[2.0, 1.0]; 3];
        let m = open_loop_metrics(&mean, &truth);
        assert!(m.r2_x.abs() < 1e-15 && m.r2_z.abs() < 1e-15);
        assert!((m.rmse - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}

use rand::Rng;
use wake_core::autodiff::{AutodiffError, Tape, Var};
use wake_core::Real;
use wake_engine::OBS_DIM;

use super::WindowOut;
use crate::layers::{Mlp, Params};

/// Flattens the `k` snapshots of a window into one input vector.
#[derive(Clone, Debug)]
pub struct MlpNet {
    mlp: Mlp,
    k: usize,
}

impl MlpNet {
    pub fn new<T: Real, R: Rng>(
        params: &mut Params<T>,
        k: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        Self {
            mlp: Mlp::new(params, "mlp", k * OBS_DIM, hidden, 2, rng),
            k,
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        hist: Var,
        batch: usize,
    ) -> Result<WindowOut, AutodiffError> {
        let x = tape.reshape(hist, batch, self.k * OBS_DIM)?;
        Ok(WindowOut::force(self.mlp.forward(tape, p, x)?))
    }
}

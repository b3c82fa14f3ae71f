use rand::Rng;
use wake_core::autodiff::{AutodiffError, Tape, Var};
use wake_core::Real;
use wake_engine::OBS_DIM;

use crate::layers::{Dense, Params, LINEAR_GAIN};

/// Linear input projection, a gated recurrent unit, linear force readout.
///
/// `z` is the fraction of the state replaced per step and the reset gate `r`
/// scales the recurrent part of the candidate, so `z = 1, r = 0` is a
/// memoryless map of the current input.
#[derive(Clone, Debug)]
pub struct GruNet {
    projection: Dense,
    input: Dense,
    recurrent: Dense,
    out: Dense,
    pub hidden: usize,
}

impl GruNet {
    pub fn new<T: Real, R: Rng>(params: &mut Params<T>, hidden: usize, rng: &mut R) -> Self {
        Self {
            projection: Dense::new(params, "gru.projection", OBS_DIM, hidden, LINEAR_GAIN, rng),
            input: Dense::new(params, "gru.input", hidden, 3 * hidden, LINEAR_GAIN, rng),
            recurrent: Dense::new(
                params,
                "gru.recurrent",
                hidden,
                3 * hidden,
                LINEAR_GAIN,
                rng,
            ),
            out: Dense::new(params, "gru.out", hidden, 2, LINEAR_GAIN, rng),
            hidden,
        }
    }

    /// Indices of the input-side gate bias, for tests that pin gates.
    pub fn input_bias(&self) -> usize {
        self.input.bias()
    }

    pub fn step<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        x: Var,
        h: Var,
    ) -> Result<Var, AutodiffError> {
        let d = self.hidden;
        let xp = self.projection.forward(tape, p, x)?;
        let gi = self.input.forward(tape, p, xp)?;
        let gh = self.recurrent.forward(tape, p, h)?;
        let zi = tape.slice_cols(gi, 0, d)?;
        let zh = tape.slice_cols(gh, 0, d)?;
        let z = tape.add(zi, zh)?;
        let z = tape.sigmoid(z)?;
        let ri = tape.slice_cols(gi, d, 2 * d)?;
        let rh = tape.slice_cols(gh, d, 2 * d)?;
        let r = tape.add(ri, rh)?;
        let r = tape.sigmoid(r)?;
        let ni = tape.slice_cols(gi, 2 * d, 3 * d)?;
        let nh = tape.slice_cols(gh, 2 * d, 3 * d)?;
        let nh = tape.mul(r, nh)?;
        let n = tape.add(ni, nh)?;
        let n = tape.tanh(n)?;
        let delta = tape.sub(n, h)?;
        let delta = tape.mul(z, delta)?;
        tape.add(h, delta)
    }

    pub fn readout<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        h: Var,
    ) -> Result<Var, AutodiffError> {
        self.out.forward(tape, p, h)
    }
}

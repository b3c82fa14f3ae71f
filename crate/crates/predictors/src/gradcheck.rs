//! Full-model gradients against central finite differences.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wake_core::autodiff::{Tape, Tensor, Var};
use wake_core::{lit, to_f64, Real};
use wake_engine::OBS_DIM;

use crate::loss::{weighted_mse, LossWeights};
use crate::models::Model;
use crate::PredictorError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Training loss of `model` on normalized streams: every step of every
/// stream for window models, one full-length truncated-BPTT chunk for the GRU.
pub fn loss_and_grads<T: Real>(
    model: &Model<T>,
    obs: &[Vec<[T; OBS_DIM]>],
    target: &[Vec<[T; 2]>],
    w: LossWeights,
    with_grads: bool,
) -> Result<(f64, Vec<Tensor<T>>), PredictorError> {
    let mut tape = Tape::new();
    let p = model.params.leaves(&mut tape);
    let loss = build_loss(model, &mut tape, &p, obs, target, w)?;
    let value = to_f64(tape.value(loss).data()[0]);
    if !with_grads {
        return Ok((value, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    Ok((value, p.iter().map(|&v| grads.get(v)).collect()))
}

fn build_loss<T: Real>(
    model: &Model<T>,
    tape: &mut Tape<T>,
    p: &[Var],
    obs: &[Vec<[T; OBS_DIM]>],
    target: &[Vec<[T; 2]>],
    w: LossWeights,
) -> Result<Var, PredictorError> {
    if let Some(net) = model.gru() {
        let b = obs.len();
        let len = obs.iter().map(Vec::len).min().unwrap_or(0);
        let mut h = tape.constant(Tensor::zeros(b, net.hidden));
        let mut losses = Vec::with_capacity(len);
        for t in 0..len {
            let x = tape.constant(Tensor::from_vec(
                b,
                OBS_DIM,
                obs.iter().flat_map(|s| s[t]).collect(),
            ));
            h = net.step(tape, p, x, h)?;
            let y = net.readout(tape, p, h)?;
            let yt = tape.constant(Tensor::from_vec(
                b,
                2,
                target.iter().flat_map(|s| s[t]).collect(),
            ));
            losses.push(weighted_mse(tape, y, yt, w)?);
        }
        let cat = tape.concat_cols(&losses)?;
        return Ok(tape.mean(cat)?);
    }
    if model.esn().is_some() {
        return Err(PredictorError::InvalidSpec(
            "the reservoir readout is fit in closed form".into(),
        ));
    }
    let picks: Vec<(usize, usize)> = obs
        .iter()
        .enumerate()
        .flat_map(|(s, o)| (0..o.len()).map(move |t| (s, t)))
        .collect();
    let (hist, cur) = model.window_batch(obs, &picks);
    let hv = tape.constant(hist);
    let cv = tape.constant(cur);
    let out = model.window_forward(tape, p, hv, cv, picks.len())?;
    let yt = tape.constant(Tensor::from_vec(
        picks.len(),
        2,
        picks.iter().flat_map(|&(s, t)| target[s][t]).collect(),
    ));
    Ok(weighted_mse(tape, out.force, yt, w)?)
}

/// Compares analytic gradients with central differences of step `h` on up to
/// `probes` randomly chosen entries of every parameter tensor. The relative
/// error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn check_gradients<T: Real>(
    model: &Model<T>,
    obs: &[Vec<[T; OBS_DIM]>],
    target: &[Vec<[T; 2]>],
    w: LossWeights,
    probes: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheck, PredictorError> {
    let (_, grads) = loss_and_grads(model, obs, target, w, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut result = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
    };
    for (k, g) in grads.iter().enumerate() {
        let n = g.len();
        for idx in sample(&mut rng, n, probes.min(n)) {
            let orig = model.params.tensors[k].data()[idx];
            probe.params.tensors[k].data_mut()[idx] = orig + lit(h);
            let (up, _) = loss_and_grads(&probe, obs, target, w, false)?;
            probe.params.tensors[k].data_mut()[idx] = orig - lit(h);
            let (down, _) = loss_and_grads(&probe, obs, target, w, false)?;
            probe.params.tensors[k].data_mut()[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = to_f64(g.data()[idx]);
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            result.max_rel_error = result.max_rel_error.max(rel);
            result.checked += 1;
        }
    }
    Ok(result)
}

use rand::Rng;
use wake_core::autodiff::{AutodiffError, Tape, Tensor, Var};
use wake_core::{lit, Real};
use wake_engine::OBS_DIM;

use super::WindowOut;
use crate::layers::{uniform_init, Dense, Params, LINEAR_GAIN, RELU_GAIN};
use crate::spec::AttentionSpec;

/// Sinusoidal code of position `pos` in dimension `i` of `d`.
fn position_code(pos: usize, i: usize, d: usize) -> f64 {
    let freq = 10_000f64.powf(-((i / 2 * 2) as f64) / d as f64);
    let a = pos as f64 * freq;
    if i % 2 == 0 {
        a.sin()
    } else {
        a.cos()
    }
}

/// The current observation queries embedded history tokens.
///
/// Per head, scores are `tok_i . (W_k q)` and the context is
/// `(sum_i w_i tok_i) W_v`, which equals standard multi-head attention but
/// never maps every token through the key and value matrices.
#[derive(Clone, Debug)]
pub struct AttentionNet {
    token: Dense,
    query: Dense,
    wq: usize,
    /// Per head `(head_dim, embed)`: the transposed key map.
    wk: Vec<usize>,
    /// Per head `(embed, head_dim)`.
    wv: Vec<usize>,
    mix: Dense,
    hidden: Dense,
    out: Dense,
    k: usize,
    embed: usize,
    heads: usize,
    /// `(k, embed)` position codes, row-major.
    codes: Vec<f64>,
}

impl AttentionNet {
    pub fn new<T: Real, R: Rng>(params: &mut Params<T>, spec: &AttentionSpec, rng: &mut R) -> Self {
        let e = spec.embed;
        let dh = e / spec.heads;
        let token = Dense::new(params, "token", OBS_DIM, e, LINEAR_GAIN, rng);
        let query = Dense::new(params, "query", OBS_DIM, e, LINEAR_GAIN, rng);
        let wq = params.push("attn.wq", uniform_init(rng, e, e, LINEAR_GAIN));
        let bound = |fan_in: usize| (LINEAR_GAIN / fan_in as f64).sqrt();
        let wk = (0..spec.heads)
            .map(|h| {
                let b = bound(e);
                let t = Tensor::from_fn(dh, e, |_, _| lit(rng.gen_range(-b..=b)));
                params.push(format!("attn.wk.{h}"), t)
            })
            .collect();
        let wv = (0..spec.heads)
            .map(|h| {
                params.push(
                    format!("attn.wv.{h}"),
                    uniform_init(rng, e, dh, LINEAR_GAIN),
                )
            })
            .collect();
        let mix = Dense::new(params, "attn.out", e, e, LINEAR_GAIN, rng);
        let hidden = Dense::new(params, "head.0", e, spec.head_hidden, RELU_GAIN, rng);
        let out = Dense::new(params, "head.out", spec.head_hidden, 2, LINEAR_GAIN, rng);
        Self {
            token,
            query,
            wq,
            wk,
            wv,
            mix,
            hidden,
            out,
            k: spec.history.snapshots,
            embed: e,
            heads: spec.heads,
            codes: (0..spec.history.snapshots * e)
                .map(|n| position_code(n / e, n % e, e))
                .collect(),
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        hist: Var,
        current: Var,
        batch: usize,
    ) -> Result<WindowOut, AutodiffError> {
        let (k, e) = (self.k, self.embed);
        let dh = e / self.heads;
        let tok = self.token.forward(tape, p, hist)?;
        let codes: Vec<T> = self.codes.iter().map(|&c| lit(c)).collect();
        let pe = tape.constant(Tensor::from_vec(batch * k, e, codes.repeat(batch)));
        let tok = tape.add(tok, pe)?;
        let q0 = self.query.forward(tape, p, current)?;
        let q = tape.matmul(q0, p[self.wq])?;

        let mut contexts = Vec::with_capacity(self.heads);
        let mut mean_weights: Option<Var> = None;
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, (h + 1) * dh)?;
            let qk = tape.matmul(qh, p[self.wk[h]])?;
            let qk = tape.repeat_rows(qk, k)?;
            let score = tape.mul(tok, qk)?;
            let score = tape.sum_cols(score)?;
            let score = tape.scale(score, lit(1.0 / (dh as f64).sqrt()))?;
            let score = tape.reshape(score, batch, k)?;
            let w = tape.softmax_rows(score)?;
            mean_weights = Some(match mean_weights {
                None => w,
                Some(acc) => tape.add(acc, w)?,
            });
            let w_col = tape.reshape(w, batch * k, 1)?;
            let w_rep = tape.expand_cols(w_col, e)?;
            let weighted = tape.mul(w_rep, tok)?;
            let pooled = tape.group_sum_rows(weighted, k)?;
            contexts.push(tape.matmul(pooled, p[self.wv[h]])?);
        }
        let ctx = tape.concat_cols(&contexts)?;
        let mixed = self.mix.forward(tape, p, ctx)?;
        let h = tape.add(q0, mixed)?;
        let h = self.hidden.forward(tape, p, h)?;
        let h = tape.relu(h)?;
        let force = self.out.forward(tape, p, h)?;
        let weights = tape.scale(
            mean_weights.expect("at least one head"),
            lit(1.0 / self.heads as f64),
        )?;
        Ok(WindowOut {
            force,
            mu: None,
            sigma: None,
            attention: Some(weights),
        })
    }
}

use rand::Rng;
use wake_core::autodiff::{AutodiffError, Tape, Tensor, Var};
use wake_core::{lit, Real};
use wake_engine::OBS_DIM;

use super::WindowOut;
use crate::layers::{Mlp, Params};
use crate::spec::DelaySpec;

/// `x` such that `softplus(x) = y`.
pub fn inv_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// A selector network reads the window and emits a per-sample Gaussian kernel
/// over snapshot lags; the head maps the kernel-weighted snapshot, next to
/// the current observation, to a force.
#[derive(Clone, Debug)]
pub struct DelayNet {
    selector: Mlp,
    head: Mlp,
    k: usize,
    mask: usize,
    /// Lags of the unmasked snapshots [s].
    taus: Vec<f64>,
    mu_shift: f64,
    sigma_shift: f64,
    head_sees_current: bool,
}

impl DelayNet {
    pub fn new<T: Real, R: Rng>(
        params: &mut Params<T>,
        spec: &DelaySpec,
        lags: &[usize],
        rate: f64,
        rng: &mut R,
    ) -> Self {
        let k = spec.history.snapshots;
        let kept = k - spec.mask;
        let selector = Mlp::new(
            params,
            "selector",
            kept * OBS_DIM,
            &spec.selector_hidden,
            2,
            rng,
        );
        // Start every sample at the prior kernel.
        let w = selector.output_layer().weight();
        params.tensors[w] = params.tensors[w].map(|v| v * lit(0.01));
        let head_in = if spec.head_sees_current {
            2 * OBS_DIM
        } else {
            OBS_DIM
        };
        let head = Mlp::new(params, "head", head_in, &spec.head_hidden, 2, rng);
        Self {
            selector,
            head,
            k,
            mask: spec.mask,
            taus: lags[spec.mask..].iter().map(|&l| l as f64 / rate).collect(),
            mu_shift: inv_softplus(spec.mu0),
            sigma_shift: inv_softplus(spec.sigma0),
            head_sees_current: spec.head_sees_current,
        }
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        hist: Var,
        current: Var,
        batch: usize,
    ) -> Result<WindowOut, AutodiffError> {
        let kept = self.k - self.mask;
        let flat = tape.reshape(hist, batch, self.k * OBS_DIM)?;
        let visible = tape.slice_cols(flat, self.mask * OBS_DIM, self.k * OBS_DIM)?;
        let a = self.selector.forward(tape, p, visible)?;
        let a_mu = tape.slice_cols(a, 0, 1)?;
        let a_mu = tape.offset(a_mu, lit(self.mu_shift))?;
        let mu = tape.softplus(a_mu)?;
        let a_sigma = tape.slice_cols(a, 1, 2)?;
        let a_sigma = tape.offset(a_sigma, lit(self.sigma_shift))?;
        let sigma = tape.softplus(a_sigma)?;

        let taus = tape.constant(Tensor::from_fn(batch, kept, |_, j| lit(self.taus[j])));
        let mu_k = tape.expand_cols(mu, kept)?;
        let d = tape.sub(mu_k, taus)?;
        let d2 = tape.square(d)?;
        let var = tape.square(sigma)?;
        let two_var = tape.scale(var, lit(2.0))?;
        let two_var = tape.expand_cols(two_var, kept)?;
        let z = tape.div(d2, two_var)?;
        let logits = tape.scale(z, lit(-1.0))?;
        let weights = tape.softmax_rows(logits)?;

        let w_col = tape.reshape(weights, batch * kept, 1)?;
        let w_obs = tape.expand_cols(w_col, OBS_DIM)?;
        let snaps = tape.reshape(visible, batch * kept, OBS_DIM)?;
        let weighted = tape.mul(w_obs, snaps)?;
        let pooled = tape.group_sum_rows(weighted, kept)?;
        let head_in = if self.head_sees_current {
            tape.concat_cols(&[pooled, current])?
        } else {
            pooled
        };
        let force = self.head.forward(tape, p, head_in)?;
        Ok(WindowOut {
            force,
            mu: Some(mu),
            sigma: Some(sigma),
            attention: Some(weights),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::HistoryWindow;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(mu0: f64, sigma0: f64) -> (DelayNet, Params<f64>) {
        let spec = DelaySpec {
            history: HistoryWindow {
                snapshots: 9,
                window: 0.8,
                gap: 0.0,
            },
            mask: 1,
            mu0,
            sigma0,
            selector_hidden: vec![6],
            head_hidden: vec![6],
            head_sees_current: true,
        };
        let lags = spec.history.lag_steps(10.0);
        let mut params = Params::default();
        let net = DelayNet::new(
            &mut params,
            &spec,
            &lags,
            10.0,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        // Exactly the prior kernel for every input.
        let w = net.selector.output_layer().weight();
        params.tensors[w] = Tensor::zeros(params.tensors[w].rows(), params.tensors[w].cols());
        (net, params)
    }

    fn run(net: &DelayNet, params: &Params<f64>, hist: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let p = params.leaves(&mut tape);
        let h = tape.constant(hist.clone());
        let c = tape.constant(Tensor::from_fn(1, OBS_DIM, |_, j| hist.get(0, j)));
        let out = net.forward(&mut tape, &p, h, c, 1).unwrap();
        let w = tape.value(out.attention.unwrap()).data().to_vec();
        (tape.value(out.force).data().to_vec(), w)
    }

    #[test]
    fn inverse_softplus() {
        for y in [1e-3, 0.05, 0.2, 3.0] {
            let x = inv_softplus(y);
            assert!(((1.0 + x.exp()).ln() - y).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_kernel_selects_one_snapshot() {
        let (net, params) = net(0.4, 1e-3);
        assert!((net.taus()[3] - 0.4).abs() < 1e-12);
        let hist = Tensor::from_fn(9, OBS_DIM, |i, j| (i * OBS_DIM + j) as f64 * 0.01);
        let (force, w) = run(&net, &params, &hist);
        assert!((w[3] - 1.0).abs() < 1e-12, "{w:?}");
        let picked = Tensor::from_fn(1, 2 * OBS_DIM, |_, j| {
            hist.get(if j < OBS_DIM { 4 } else { 0 }, j % OBS_DIM)
        });
        let mut tape = Tape::new();
        let p = params.leaves(&mut tape);
        let x = tape.constant(picked);
        let direct = net.head.forward(&mut tape, &p, x).unwrap();
        for (a, b) in force.iter().zip(tape.value(direct).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_snapshots_make_the_lag_irrelevant() {
        let hist = Tensor::from_fn(9, OBS_DIM, |_, j| j as f64 - 3.0);
        let (n1, p1) = net(0.15, 0.05);
        let (n2, p2) = net(0.65, 0.3);
        let (a, _) = run(&n1, &p1, &hist);
        let (b, _) = run(&n2, &p2, &hist);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

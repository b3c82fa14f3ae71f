//! The six predictor families behind one [`Model`] type.

pub mod attention;
pub mod delay;
pub mod esn;
pub mod gru;
pub mod mlp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wake_core::autodiff::{Tape, Tensor, Var};
use wake_core::{lit, to_f64, Real};
use wake_engine::{Force, Observation, OnlinePredictor, OBS_DIM};

use crate::history::build_history_input;
use crate::layers::Params;
use crate::norm::Normalization;
use crate::spec::{ModelKind, PredictorSpec, PARAM_BUDGET};
use crate::PredictorError;

/// Outputs of one batched window forward pass.
pub struct WindowOut {
    pub force: Var,
    pub mu: Option<Var>,
    pub sigma: Option<Var>,
    /// `(batch, lags)` weights over snapshots.
    pub attention: Option<Var>,
}

impl WindowOut {
    fn force(force: Var) -> Self {
        Self {
            force,
            mu: None,
            sigma: None,
            attention: None,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Net<T> {
    Mlp(mlp::MlpNet),
    Delay(delay::DelayNet),
    Attention(attention::AttentionNet),
    Gru(gru::GruNet),
    Esn(esn::EsnNet<T>),
}

/// A predictor: spec, normalization and parameters.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub spec: PredictorSpec,
    /// Observation rate the lags are expressed in [Hz].
    pub rate: f64,
    pub seed: u64,
    pub norm: Normalization,
    pub params: Params<T>,
    pub(crate) net: Net<T>,
    lags: Vec<usize>,
}

/// Per-step outputs of a sequence pass, in physical units.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub forces: Vec<Force>,
    /// Delay-kernel centre and width per step [s].
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Weights over `lags` per step.
    pub weights: Vec<Vec<f64>>,
    /// Lags the weights refer to [s].
    pub lags: Vec<f64>,
}

const INFER_BATCH: usize = 256;

impl<T: Real> Model<T> {
    /// Builds a freshly initialized model; deterministic in `seed`.
    pub fn new(spec: PredictorSpec, rate: f64, seed: u64) -> Result<Self, PredictorError> {
        spec.validate().map_err(PredictorError::InvalidSpec)?;
        if !(rate > 0.0) {
            return Err(PredictorError::InvalidSpec(format!(
                "observation rate must be positive, got {rate}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let lags = spec
            .history()
            .map(|h| h.lag_steps(rate))
            .unwrap_or_default();
        let net = match &spec {
            PredictorSpec::AgileMlp(s) => {
                Net::Mlp(mlp::MlpNet::new(&mut params, 1, &s.hidden, &mut rng))
            }
            PredictorSpec::HistoryMlp(s) => Net::Mlp(mlp::MlpNet::new(
                &mut params,
                s.history.snapshots,
                &s.hidden,
                &mut rng,
            )),
            PredictorSpec::DelayEmbedding(s) => {
                Net::Delay(delay::DelayNet::new(&mut params, s, &lags, rate, &mut rng))
            }
            PredictorSpec::CrossAttention(s) => {
                Net::Attention(attention::AttentionNet::new(&mut params, s, &mut rng))
            }
            PredictorSpec::Gru(s) => Net::Gru(gru::GruNet::new(&mut params, s.hidden, &mut rng)),
            PredictorSpec::Esn(s) => Net::Esn(esn::EsnNet::new(&mut params, s, &mut rng)),
        };
        let count = params.count();
        if count > PARAM_BUDGET {
            return Err(PredictorError::Budget {
                kind: spec.kind(),
                count,
                limit: PARAM_BUDGET,
            });
        }
        Ok(Self {
            spec,
            rate,
            seed,
            norm: Normalization::identity(),
            params,
            net,
            lags,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.net, Net::Gru(_) | Net::Esn(_))
    }

    /// Snapshot lags of a window model in samples, most recent first.
    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    /// Lags the attention or delay weights refer to [s].
    pub fn weight_lags(&self) -> Vec<f64> {
        match &self.net {
            Net::Delay(d) => d.taus().to_vec(),
            Net::Attention(_) => self.lags.iter().map(|&l| l as f64 / self.rate).collect(),
            _ => Vec::new(),
        }
    }

    pub fn gru(&self) -> Option<&gru::GruNet> {
        match &self.net {
            Net::Gru(g) => Some(g),
            _ => None,
        }
    }

    pub fn esn(&self) -> Option<&esn::EsnNet<T>> {
        match &self.net {
            Net::Esn(e) => Some(e),
            _ => None,
        }
    }

    /// Batched forward pass of a window model. `hist` is `(batch * k, 8)`
    /// with the snapshots of each sample in lag order, `current` is `(batch, 8)`.
    pub fn window_forward(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        hist: Var,
        current: Var,
        batch: usize,
    ) -> Result<WindowOut, PredictorError> {
        let out = match &self.net {
            Net::Mlp(m) => m.forward(tape, p, hist, batch)?,
            Net::Delay(d) => d.forward(tape, p, hist, current, batch)?,
            Net::Attention(a) => a.forward(tape, p, hist, current, batch)?,
            Net::Gru(_) | Net::Esn(_) => {
                return Err(PredictorError::InvalidSpec(format!(
                    "{} is not a window model",
                    self.kind()
                )))
            }
        };
        Ok(out)
    }

    /// History and current-observation tensors for samples `(stream, t)`.
    pub fn window_batch(
        &self,
        streams: &[Vec<[T; OBS_DIM]>],
        picks: &[(usize, usize)],
    ) -> (Tensor<T>, Tensor<T>) {
        let k = self.lags.len();
        let mut hist = Vec::with_capacity(picks.len() * k * OBS_DIM);
        let mut cur = Vec::with_capacity(picks.len() * OBS_DIM);
        for &(s, t) in picks {
            build_history_input(&streams[s], t, &self.lags, &mut hist);
            cur.extend_from_slice(&streams[s][t]);
        }
        (
            Tensor::from_vec(picks.len() * k, OBS_DIM, hist),
            Tensor::from_vec(picks.len(), OBS_DIM, cur),
        )
    }

    pub fn normalize_stream(&self, obs: &[Observation]) -> Vec<[T; OBS_DIM]> {
        obs.iter().map(|o| self.norm.obs(o).map(lit)).collect()
    }

    fn to_force(&self, y: [T; 2]) -> Force {
        self.norm.denorm_force(&[to_f64(y[0]), to_f64(y[1])])
    }

    /// Causal predictions for every step of an observation stream.
    pub fn predict_sequence(&self, obs: &[Observation]) -> Result<Vec<Force>, PredictorError> {
        Ok(self.trace(obs, false)?.forces)
    }

    /// Like [`predict_sequence`](Self::predict_sequence), also recording delay
    /// kernels and attention weights where the model has them.
    pub fn trace(&self, obs: &[Observation], extras: bool) -> Result<Trace, PredictorError> {
        let stream = vec![self.normalize_stream(obs)];
        let mut trace = Trace {
            lags: if extras {
                self.weight_lags()
            } else {
                Vec::new()
            },
            ..Trace::default()
        };
        match &self.net {
            Net::Gru(g) => {
                let mut h = Tensor::zeros(1, g.hidden);
                for x in &stream[0] {
                    let mut tape = Tape::new();
                    let p = self.params.leaves(&mut tape);
                    let xv = tape.constant(Tensor::from_vec(1, OBS_DIM, x.to_vec()));
                    let hv = tape.constant(h);
                    let hn = g.step(&mut tape, &p, xv, hv)?;
                    let y = g.readout(&mut tape, &p, hn)?;
                    let yv = tape.value(y);
                    trace
                        .forces
                        .push(self.to_force([yv.get(0, 0), yv.get(0, 1)]));
                    h = tape.value(hn).clone();
                }
            }
            Net::Esn(e) => {
                let mut h = e.zero_state();
                let mut scratch = Vec::new();
                for x in &stream[0] {
                    e.update(&mut h, x, &mut scratch);
                    let y = e.readout(&self.params, &h);
                    if !(y[0].is_finite() && y[1].is_finite()) {
                        return Err(PredictorError::NonFinite("esn readout".into()));
                    }
                    trace.forces.push(self.to_force(y));
                }
            }
            _ => {
                let picks: Vec<(usize, usize)> = (0..obs.len()).map(|t| (0, t)).collect();
                for chunk in picks.chunks(INFER_BATCH) {
                    let (hist, cur) = self.window_batch(&stream, chunk);
                    let mut tape = Tape::new();
                    let p = self.params.leaves(&mut tape);
                    let hv = tape.constant(hist);
                    let cv = tape.constant(cur);
                    let out = self.window_forward(&mut tape, &p, hv, cv, chunk.len())?;
                    let y = tape.value(out.force);
                    for r in 0..chunk.len() {
                        trace.forces.push(self.to_force([y.get(r, 0), y.get(r, 1)]));
                    }
                    if extras {
                        if let (Some(mu), Some(sigma)) = (out.mu, out.sigma) {
                            trace
                                .mu
                                .extend(tape.value(mu).data().iter().map(|&v| to_f64(v)));
                            trace
                                .sigma
                                .extend(tape.value(sigma).data().iter().map(|&v| to_f64(v)));
                        }
                        if let Some(w) = out.attention {
                            let w = tape.value(w);
                            for r in 0..w.rows() {
                                trace
                                    .weights
                                    .push(w.row(r).iter().map(|&v| to_f64(v)).collect());
                            }
                        }
                    }
                }
            }
        }
        Ok(trace)
    }

    /// Step-by-step predictor for closed-loop use.
    pub fn stream(&self) -> StreamPredictor<'_, T> {
        StreamPredictor {
            model: self,
            history: Vec::new(),
            gru_state: None,
            esn_state: None,
            scratch: Vec::new(),
        }
    }
}

/// Feeds observations one at a time, keeping whatever state the model needs.
pub struct StreamPredictor<'a, T: Real> {
    model: &'a Model<T>,
    history: Vec<Vec<[T; OBS_DIM]>>,
    gru_state: Option<Tensor<T>>,
    esn_state: Option<Vec<T>>,
    scratch: Vec<T>,
}

impl<T: Real> StreamPredictor<'_, T> {
    pub fn step(&mut self, obs: &Observation) -> Result<Force, PredictorError> {
        let m = self.model;
        let x: [T; OBS_DIM] = m.norm.obs(obs).map(lit);
        let y = match &m.net {
            Net::Gru(g) => {
                let h = self
                    .gru_state
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(1, g.hidden));
                let mut tape = Tape::new();
                let p = m.params.leaves(&mut tape);
                let xv = tape.constant(Tensor::from_vec(1, OBS_DIM, x.to_vec()));
                let hv = tape.constant(h);
                let hn = g.step(&mut tape, &p, xv, hv)?;
                let y = g.readout(&mut tape, &p, hn)?;
                self.gru_state = Some(tape.value(hn).clone());
                let yv = tape.value(y);
                [yv.get(0, 0), yv.get(0, 1)]
            }
            Net::Esn(e) => {
                let h = self.esn_state.get_or_insert_with(|| e.zero_state());
                e.update(h, &x, &mut self.scratch);
                e.readout(&m.params, h)
            }
            _ => {
                if self.history.is_empty() {
                    self.history.push(Vec::new());
                }
                let buf = &mut self.history[0];
                buf.push(x);
                // Only the deepest lag is ever read back.
                let keep = m.lags.iter().copied().max().unwrap_or(0) + 1;
                if buf.len() > 2 * keep {
                    buf.drain(..buf.len() - keep);
                }
                let t = buf.len() - 1;
                let (hist, cur) = m.window_batch(&self.history, &[(0, t)]);
                let mut tape = Tape::new();
                let p = m.params.leaves(&mut tape);
                let hv = tape.constant(hist);
                let cv = tape.constant(cur);
                let out = m.window_forward(&mut tape, &p, hv, cv, 1)?;
                let yv = tape.value(out.force);
                [yv.get(0, 0), yv.get(0, 1)]
            }
        };
        let f = m.to_force(y);
        if !(f[0].is_finite() && f[1].is_finite()) {
            return Err(PredictorError::NonFinite(format!(
                "{} prediction",
                m.kind()
            )));
        }
        Ok(f)
    }
}

impl<T: Real> OnlinePredictor for StreamPredictor<'_, T> {
    fn reset(&mut self) {
        self.history.clear();
        self.gru_state = None;
        self.esn_state = None;
    }

    fn predict(&mut self, obs: &Observation) -> Result<Force, String> {
        self.step(obs).map_err(|e| e.to_string())
    }
}

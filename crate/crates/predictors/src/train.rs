//! Deterministic minibatch training with early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wake_core::autodiff::{Adam, AdamConfig, Tape, Tensor, Var};
use wake_core::{lit, to_f64, Real};
use wake_engine::{Episode, OBS_DIM};

use crate::loss::{weighted_mse, LossWeights};
use crate::metrics::{evaluate, warmup_steps, OpenLoopMetrics};
use crate::models::esn::RidgeAccumulator;
use crate::models::Model;
use crate::norm::Normalization;
use crate::spec::{ModelKind, PredictorSpec};
use crate::PredictorError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub loss_weights: LossWeights,
    /// Window models train on every n-th sample, with a fresh random phase per
    /// episode and epoch.
    pub train_stride: usize,
    pub val_stride: usize,
    /// Truncated backpropagation length for recurrent models [steps].
    pub tbptt: usize,
    /// Episodes per recurrent minibatch.
    pub sequence_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            loss_weights: LossWeights::default(),
            train_stride: 1,
            val_stride: 1,
            tbptt: 50,
            sequence_batch: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 || self.train_stride == 0 || self.val_stride == 0 {
            return Err("batch size and strides must be positive".into());
        }
        if self.tbptt == 0 || self.sequence_batch == 0 {
            return Err("tbptt length and sequence batch must be positive".into());
        }
        if !(self.adam.lr > 0.0) {
            return Err(format!(
                "learning rate must be positive, got {}",
                self.adam.lr
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Statistics of the delay kernel over the validation set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub mu_mean: f64,
    pub mu_std: f64,
    pub sigma_mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagWeight {
    pub lag: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelKind,
    pub seed: u64,
    pub param_count: usize,
    pub train_samples: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub val_metrics: OpenLoopMetrics,
    pub delay: Option<DelaySummary>,
    /// Mean attention or kernel weight per snapshot lag over validation.
    pub lag_profile: Option<Vec<LagWeight>>,
}

type Stream<T> = Vec<[T; OBS_DIM]>;

struct Prepared<T> {
    obs: Vec<Stream<T>>,
    target: Vec<Vec<[T; 2]>>,
}

fn prepare<T: Real>(episodes: &[Episode], norm: &Normalization) -> Prepared<T> {
    Prepared {
        obs: episodes
            .iter()
            .map(|e| {
                e.samples
                    .iter()
                    .map(|s| norm.obs(&s.obs).map(lit))
                    .collect()
            })
            .collect(),
        target: episodes
            .iter()
            .map(|e| {
                e.samples
                    .iter()
                    .map(|s| norm.force(&s.f_true).map(lit))
                    .collect()
            })
            .collect(),
    }
}

fn target_tensor<T: Real>(data: &Prepared<T>, picks: &[(usize, usize)]) -> Tensor<T> {
    let v = picks.iter().flat_map(|&(e, t)| data.target[e][t]).collect();
    Tensor::from_vec(picks.len(), 2, v)
}

fn check_split(train: &[Episode], val: &[Episode]) -> Result<f64, PredictorError> {
    if train.is_empty() || val.is_empty() {
        return Err(PredictorError::Data(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let rate = train[0].config.record_rate;
    if train
        .iter()
        .chain(val)
        .any(|e| e.config.record_rate != rate)
    {
        return Err(PredictorError::Data(
            "all episodes must share one record rate".into(),
        ));
    }
    if train.iter().chain(val).any(|e| e.samples.is_empty()) {
        return Err(PredictorError::Data("empty episode".into()));
    }
    Ok(rate)
}

/// Fits normalization on `train`, then the model. Early stopping restores the
/// parameters of the best validation epoch.
pub fn train<T: Real>(
    spec: PredictorSpec,
    train: &[Episode],
    val: &[Episode],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Model<T>, TrainReport), PredictorError> {
    cfg.validate().map_err(PredictorError::InvalidSpec)?;
    let rate = check_split(train, val)?;
    let mut model = Model::<T>::new(spec, rate, seed)?;
    model.norm = Normalization::fit(train);
    let tr = prepare::<T>(train, &model.norm);
    let va = prepare::<T>(val, &model.norm);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);

    let mut report = TrainReport {
        model: model.kind(),
        seed,
        param_count: model.param_count(),
        train_samples: train.iter().map(|e| e.samples.len()).sum(),
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        val_metrics: OpenLoopMetrics::default(),
        delay: None,
        lag_profile: None,
    };

    match model.kind() {
        ModelKind::Esn => {
            fit_esn(&mut model, &tr)?;
            report.best_val_loss = sequence_loss(&model, &va, cfg.loss_weights)?;
        }
        kind => {
            let mut adam = Adam::new(cfg.adam, &model.params.tensors);
            let mut best = model.params.tensors.clone();
            let mut since_best = 0;
            for epoch in 1..=cfg.max_epochs {
                let train_loss = if kind == ModelKind::Gru {
                    gru_epoch(&mut model, &mut adam, &tr, cfg, &mut rng)?
                } else {
                    window_epoch(&mut model, &mut adam, &tr, cfg, &mut rng)?
                };
                let val_loss = if kind == ModelKind::Gru {
                    sequence_loss(&model, &va, cfg.loss_weights)?
                } else {
                    window_loss(&model, &va, cfg)?
                };
                if !(train_loss.is_finite() && val_loss.is_finite()) {
                    return Err(PredictorError::NonFinite(format!(
                        "{kind} training diverged at epoch {epoch}: train loss {train_loss}, validation loss {val_loss}"
                    )));
                }
                report.epochs.push(EpochRecord {
                    epoch,
                    train_loss,
                    val_loss,
                });
                if val_loss < report.best_val_loss {
                    report.best_val_loss = val_loss;
                    report.best_epoch = epoch;
                    best.clone_from(&model.params.tensors);
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.patience {
                        report.stopped_early = true;
                        break;
                    }
                }
            }
            model.params.tensors = best;
        }
    }

    report.val_metrics = evaluate(&model, val)?;
    (report.delay, report.lag_profile) = introspect(&model, val)?;
    Ok((model, report))
}

fn apply_grads<T: Real>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    tape: &Tape<T>,
    loss: Var,
    p: &[Var],
) -> Result<f64, PredictorError> {
    let grads = tape.backward(loss)?;
    let g: Vec<Tensor<T>> = p.iter().map(|&v| grads.get(v)).collect();
    adam.step(&mut model.params.tensors, &g)?;
    Ok(to_f64(tape.value(loss).data()[0]))
}

fn window_epoch<T: Real>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    data: &Prepared<T>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, PredictorError> {
    let mut picks = Vec::new();
    for (e, s) in data.obs.iter().enumerate() {
        let phase = rng.gen_range(0..cfg.train_stride);
        picks.extend((phase..s.len()).step_by(cfg.train_stride).map(|t| (e, t)));
    }
    picks.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in picks.chunks(cfg.batch_size) {
        let (hist, cur) = model.window_batch(&data.obs, chunk);
        let mut tape = Tape::new();
        let p = model.params.leaves(&mut tape);
        let hv = tape.constant(hist);
        let cv = tape.constant(cur);
        let out = model.window_forward(&mut tape, &p, hv, cv, chunk.len())?;
        let target = tape.constant(target_tensor(data, chunk));
        let loss = weighted_mse(&mut tape, out.force, target, cfg.loss_weights)?;
        total += apply_grads(model, adam, &tape, loss, &p)?;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

fn window_loss<T: Real>(
    model: &Model<T>,
    data: &Prepared<T>,
    cfg: &TrainConfig,
) -> Result<f64, PredictorError> {
    let picks: Vec<(usize, usize)> = data
        .obs
        .iter()
        .enumerate()
        .flat_map(|(e, s)| (0..s.len()).step_by(cfg.val_stride).map(move |t| (e, t)))
        .collect();
    let mut sum = 0.0;
    for chunk in picks.chunks(cfg.batch_size.max(256)) {
        let (hist, cur) = model.window_batch(&data.obs, chunk);
        let mut tape = Tape::new();
        let p = model.params.leaves(&mut tape);
        let hv = tape.constant(hist);
        let cv = tape.constant(cur);
        let out = model.window_forward(&mut tape, &p, hv, cv, chunk.len())?;
        let target = tape.constant(target_tensor(data, chunk));
        let loss = weighted_mse(&mut tape, out.force, target, cfg.loss_weights)?;
        sum += to_f64(tape.value(loss).data()[0]) * chunk.len() as f64;
    }
    Ok(sum / picks.len() as f64)
}

fn gru_epoch<T: Real>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    data: &Prepared<T>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, PredictorError> {
    let net = model.gru().expect("gru model").clone();
    let mut order: Vec<usize> = (0..data.obs.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut chunks = 0;
    for group in order.chunks(cfg.sequence_batch) {
        let b = group.len();
        let len = group.iter().map(|&e| data.obs[e].len()).min().unwrap_or(0);
        let mut h = Tensor::zeros(b, net.hidden);
        let mut start = 0;
        while start < len {
            let end = (start + cfg.tbptt).min(len);
            let mut tape = Tape::new();
            let p = model.params.leaves(&mut tape);
            // The carried state enters as a constant: gradients stop at chunk edges.
            let mut hv = tape.constant(h);
            let mut losses = Vec::with_capacity(end - start);
            for t in start..end {
                let x = Tensor::from_vec(
                    b,
                    OBS_DIM,
                    group.iter().flat_map(|&e| data.obs[e][t]).collect(),
                );
                let y = Tensor::from_vec(
                    b,
                    2,
                    group.iter().flat_map(|&e| data.target[e][t]).collect(),
                );
                let xv = tape.constant(x);
                hv = net.step(&mut tape, &p, xv, hv)?;
                let pred = net.readout(&mut tape, &p, hv)?;
                let yv = tape.constant(y);
                losses.push(weighted_mse(&mut tape, pred, yv, cfg.loss_weights)?);
            }
            let cat = tape.concat_cols(&losses)?;
            let loss = tape.mean(cat)?;
            total += apply_grads(model, adam, &tape, loss, &p)?;
            chunks += 1;
            h = tape.value(hv).clone();
            start = end;
        }
    }
    Ok(total / chunks.max(1) as f64)
}

/// Weighted loss of full-sequence predictions in normalized units.
fn sequence_loss<T: Real>(
    model: &Model<T>,
    data: &Prepared<T>,
    w: LossWeights,
) -> Result<f64, PredictorError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (obs, target) in data.obs.iter().zip(&data.target) {
        let pred = sequence_normalized(model, obs)?;
        for (p, t) in pred.iter().zip(target) {
            let (ex, ez) = (to_f64(p[0] - t[0]), to_f64(p[1] - t[1]));
            sum += (w.x * ex * ex + w.z * ez * ez) / 2.0;
            n += 1;
        }
    }
    Ok(sum / n.max(1) as f64)
}

fn sequence_normalized<T: Real>(
    model: &Model<T>,
    obs: &[[T; OBS_DIM]],
) -> Result<Vec<[T; 2]>, PredictorError> {
    let mut out = Vec::with_capacity(obs.len());
    if let Some(g) = model.gru() {
        let mut h = Tensor::zeros(1, g.hidden);
        for x in obs {
            let mut tape = Tape::new();
            let p = model.params.leaves(&mut tape);
            let xv = tape.constant(Tensor::from_vec(1, OBS_DIM, x.to_vec()));
            let hv = tape.constant(h);
            let hn = g.step(&mut tape, &p, xv, hv)?;
            let y = g.readout(&mut tape, &p, hn)?;
            let yv = tape.value(y);
            out.push([yv.get(0, 0), yv.get(0, 1)]);
            h = tape.value(hn).clone();
        }
    } else if let Some(e) = model.esn() {
        let mut h = e.zero_state();
        let mut scratch = Vec::new();
        for x in obs {
            e.update(&mut h, x, &mut scratch);
            out.push(e.readout(&model.params, &h));
        }
    }
    Ok(out)
}

fn fit_esn<T: Real>(model: &mut Model<T>, data: &Prepared<T>) -> Result<(), PredictorError> {
    let PredictorSpec::Esn(spec) = model.spec.clone() else {
        unreachable!("fit_esn on a non-reservoir model")
    };
    let net = model.esn().expect("esn model").clone();
    let mut acc = RidgeAccumulator::new(net.size + 1);
    let mut phi = vec![T::zero(); net.size + 1];
    let mut scratch = Vec::new();
    for (obs, target) in data.obs.iter().zip(&data.target) {
        let mut h = net.zero_state();
        for (t, (x, y)) in obs.iter().zip(target).enumerate() {
            net.update(&mut h, x, &mut scratch);
            if t >= spec.washout && (t - spec.washout) % spec.fit_stride == 0 {
                phi[..net.size].copy_from_slice(&h);
                phi[net.size] = T::one();
                acc.add(&phi, *y);
            }
        }
    }
    if acc.samples == 0 {
        return Err(PredictorError::Data(
            "no reservoir states after the washout".into(),
        ));
    }
    model.params.tensors[net.readout] = match acc.solve(spec.ridge) {
        Err(wake_core::linalg::LinalgError::Singular) if spec.ridge == 0.0 => {
            return Err(PredictorError::InvalidSpec(
                "reservoir normal matrix is singular; set a positive ridge".into(),
            ))
        }
        r => r?,
    };
    Ok(())
}

/// Kernel centre statistics (delay model) and the mean weight per lag (delay
/// and attention models) over `episodes`, excluding each warm-up.
pub fn introspect<T: Real>(
    model: &Model<T>,
    episodes: &[Episode],
) -> Result<(Option<DelaySummary>, Option<Vec<LagWeight>>), PredictorError> {
    if !matches!(
        model.kind(),
        ModelKind::DelayEmbedding | ModelKind::CrossAttention
    ) {
        return Ok((None, None));
    }
    let skip = warmup_steps(model.rate);
    let (mut mu, mut sigma) = (Vec::new(), Vec::new());
    let lags = model.weight_lags();
    let mut profile = vec![0.0; lags.len()];
    let mut rows = 0usize;
    for ep in episodes {
        let trace = model.trace(&ep.observations(), true)?;
        mu.extend(trace.mu.iter().skip(skip));
        sigma.extend(trace.sigma.iter().skip(skip));
        for w in trace.weights.iter().skip(skip) {
            for (p, v) in profile.iter_mut().zip(w) {
                *p += v;
            }
            rows += 1;
        }
    }
    let mut delay = None;
    if !mu.is_empty() {
        let n = mu.len() as f64;
        let mean = mu.iter().sum::<f64>() / n;
        delay = Some(DelaySummary {
            mu_mean: mean,
            mu_std: (mu.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt(),
            sigma_mean: sigma.iter().sum::<f64>() / n,
        });
    }
    let mut lag_profile = None;
    if rows > 0 {
        lag_profile = Some(
            lags.iter()
                .zip(&profile)
                .map(|(&lag, &w)| LagWeight {
                    lag,
                    weight: w / rows as f64,
                })
                .collect(),
        );
    }
    Ok((delay, lag_profile))
}

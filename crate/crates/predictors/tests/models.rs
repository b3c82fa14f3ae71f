use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wake_core::autodiff::Tensor;
use wake_engine::{Observation, OnlinePredictor};
use wake_predictors::checkpoint::PARAMS_FILE;
use wake_predictors::spec::*;
use wake_predictors::{
    load_checkpoint, save_checkpoint, ModelKind, Predictor, PredictorError, PredictorSpec,
};

fn random_stream(seed: u64, len: usize) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
        .collect()
}

/// Default specs, with a smaller reservoir whose readout is randomized so
/// its output actually depends on the state.
fn models() -> Vec<Predictor> {
    ModelKind::ALL
        .into_iter()
        .map(|k| {
            let mut spec = PredictorSpec::default_for(k);
            if let PredictorSpec::Esn(s) = &mut spec {
                s.reservoir = 120;
                s.density = 0.1;
            }
            let mut m = Predictor::new(spec, 100.0, 7).unwrap();
            if k == ModelKind::Esn {
                let mut rng = ChaCha8Rng::seed_from_u64(1);
                for t in m.params.tensors.iter_mut() {
                    *t = Tensor::from_fn(t.rows(), t.cols(), |_, _| rng.gen_range(-0.5..0.5));
                }
            }
            m
        })
        .collect()
}

#[test]
fn default_specs_fit_the_budget() {
    let counts: Vec<(ModelKind, usize)> = ModelKind::ALL
        .into_iter()
        .map(|k| {
            (
                k,
                Predictor::new(PredictorSpec::default_for(k), 100.0, 0)
                    .unwrap()
                    .param_count(),
            )
        })
        .collect();
    for &(k, n) in &counts {
        assert!(n > 0 && n < PARAM_BUDGET, "{k}: {n}");
    }
    assert_eq!(counts[0].1, 8 * 64 + 64 + 2 * (64 * 64 + 64) + 64 * 2 + 2);
    assert_eq!(counts[4].1, 2 * 1001);
}

#[test]
fn oversized_spec_is_rejected() {
    let spec = PredictorSpec::HistoryMlp(HistorySpec {
        history: HistoryWindow {
            snapshots: 40,
            window: 0.8,
            gap: 0.0,
        },
        hidden: vec![400, 400],
    });
    match Predictor::new(spec, 100.0, 0) {
        Err(PredictorError::Budget { count, limit, .. }) => assert!(count > limit),
        other => panic!("expected a budget error, got {other:?}"),
    }
    let bad = PredictorSpec::CrossAttention(AttentionSpec {
        history: HistoryWindow {
            snapshots: 10,
            window: 0.5,
            gap: 0.0,
        },
        embed: 30,
        heads: 4,
        head_hidden: 8,
    });
    assert!(matches!(
        Predictor::new(bad, 100.0, 0),
        Err(PredictorError::InvalidSpec(_))
    ));
}

#[test]
fn future_observations_never_change_the_past() {
    let base = random_stream(3, 120);
    let t0 = 70;
    let mut changed = base.clone();
    for o in &mut changed[t0 + 1..] {
        for v in o.iter_mut() {
            *v = -3.0 * *v + 1.0;
        }
    }
    for m in models() {
        let a = m.predict_sequence(&base).unwrap();
        let b = m.predict_sequence(&changed).unwrap();
        assert_eq!(a.len(), base.len());
        assert_eq!(a[..=t0], b[..=t0], "{}", m.kind());
        assert_ne!(a[t0 + 1..], b[t0 + 1..], "{} ignores its input", m.kind());
    }
}

#[test]
fn agile_mlp_is_memoryless() {
    let m = Predictor::new(PredictorSpec::default_for(ModelKind::AgileMlp), 100.0, 0).unwrap();
    let base = random_stream(4, 20);
    let mut changed = base.clone();
    changed[9] = [5.0; 8];
    let (a, b) = (
        m.predict_sequence(&base).unwrap(),
        m.predict_sequence(&changed).unwrap(),
    );
    for t in 0..20 {
        assert_eq!(a[t] == b[t], t != 9, "step {t}");
    }
}

#[test]
fn gru_perturbation_propagates_forward_only() {
    let m = Predictor::new(PredictorSpec::default_for(ModelKind::Gru), 100.0, 2).unwrap();
    let base = random_stream(5, 60);
    let mut changed = base.clone();
    changed[30][2] += 1.0;
    let (a, b) = (
        m.predict_sequence(&base).unwrap(),
        m.predict_sequence(&changed).unwrap(),
    );
    assert_eq!(a[..30], b[..30]);
    assert!((30..60).all(|t| a[t] != b[t]));
}

#[test]
fn zero_stream_gives_constant_output() {
    let zeros = vec![[0.0; 8]; 50];
    for k in ModelKind::ALL {
        let m = Predictor::new(PredictorSpec::default_for(k), 100.0, 9).unwrap();
        let p = m.predict_sequence(&zeros).unwrap();
        assert!(p.iter().all(|f| *f == p[0]), "{k}");
    }
}

#[test]
fn streaming_matches_batch_prediction() {
    let obs = random_stream(6, 150);
    for m in models() {
        let batch = m.predict_sequence(&obs).unwrap();
        let mut s = m.stream();
        for _ in 0..2 {
            s.reset();
            for (o, want) in obs.iter().zip(&batch) {
                let got = s.predict(o).unwrap();
                for k in 0..2 {
                    assert!(
                        (got[k] - want[k]).abs() < 1e-12,
                        "{}: {got:?} vs {want:?}",
                        m.kind()
                    );
                }
            }
        }
    }
}

#[test]
fn saturated_gates_make_the_gru_memoryless() {
    let mut m = Predictor::new(PredictorSpec::default_for(ModelKind::Gru), 100.0, 4).unwrap();
    let d = match &m.spec {
        PredictorSpec::Gru(s) => s.hidden,
        _ => unreachable!(),
    };
    let idx = m
        .params
        .names
        .iter()
        .position(|n| n == "gru.input.b")
        .unwrap();
    // Update gate fully open, reset gate closed.
    let bias = &mut m.params.tensors[idx];
    for j in 0..d {
        bias.set(0, j, 60.0);
        bias.set(0, d + j, -60.0);
    }
    let base = random_stream(8, 40);
    let mut changed = base.clone();
    changed[10] = [1.5; 8];
    let (a, b) = (
        m.predict_sequence(&base).unwrap(),
        m.predict_sequence(&changed).unwrap(),
    );
    for t in 11..40 {
        for k in 0..2 {
            assert!((a[t][k] - b[t][k]).abs() < 1e-12, "step {t}");
        }
    }
    assert_ne!(a[10], b[10]);
}

#[test]
fn zero_weight_gru_outputs_zero() {
    let mut m = Predictor::new(PredictorSpec::default_for(ModelKind::Gru), 100.0, 4).unwrap();
    for t in m.params.tensors.iter_mut() {
        *t = Tensor::zeros(t.rows(), t.cols());
    }
    let p = m.predict_sequence(&random_stream(1, 30)).unwrap();
    assert!(p.iter().all(|f| *f == [0.0, 0.0]));
}

#[test]
fn attention_weights_are_distributions() {
    for k in [ModelKind::CrossAttention, ModelKind::DelayEmbedding] {
        let m = Predictor::new(PredictorSpec::default_for(k), 100.0, 1).unwrap();
        let trace = m.trace(&random_stream(2, 40), true).unwrap();
        assert_eq!(trace.weights.len(), 40);
        assert_eq!(trace.lags.len(), trace.weights[0].len());
        for w in &trace.weights {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn delay_kernel_starts_at_its_prior() {
    let m = Predictor::new(
        PredictorSpec::default_for(ModelKind::DelayEmbedding),
        100.0,
        1,
    )
    .unwrap();
    let trace = m.trace(&random_stream(2, 30), true).unwrap();
    for (&mu, &sigma) in trace.mu.iter().zip(&trace.sigma) {
        assert!((mu - 0.2).abs() < 0.02, "mu {mu}");
        assert!((sigma - 0.05).abs() < 0.02, "sigma {sigma}");
    }
    // Masked snapshots carry no weight: the first kernel lag is past the mask.
    assert!(trace.lags[0] >= 0.09);
}

#[test]
fn checkpoints_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let obs = random_stream(11, 80);
    for m in models() {
        let path = dir.path().join(m.kind().name());
        save_checkpoint(&m, &path).unwrap();
        let back: Predictor = load_checkpoint(&path).unwrap();
        assert_eq!(back.spec, m.spec);
        assert_eq!(back.norm, m.norm);
        assert_eq!(
            m.predict_sequence(&obs).unwrap(),
            back.predict_sequence(&obs).unwrap()
        );
    }
    let path = dir.path().join("gru");
    let bin = std::fs::read(path.join(PARAMS_FILE)).unwrap();
    std::fs::write(path.join(PARAMS_FILE), &bin[..bin.len() - 8]).unwrap();
    assert!(matches!(
        load_checkpoint::<f64>(&path),
        Err(PredictorError::Checkpoint(_))
    ));
}

#[test]
fn single_precision_models_track_double() {
    let spec = PredictorSpec::default_for(ModelKind::HistoryMlp);
    let m64 = Predictor::new(spec.clone(), 100.0, 3).unwrap();
    let m32 = wake_predictors::Model::<f32>::new(spec, 100.0, 3).unwrap();
    let obs = random_stream(12, 30);
    let (a, b) = (
        m64.predict_sequence(&obs).unwrap(),
        m32.predict_sequence(&obs).unwrap(),
    );
    for (x, y) in a.iter().zip(&b) {
        assert!((x[0] - y[0]).abs() < 1e-3 && (x[1] - y[1]).abs() < 1e-3);
    }
}

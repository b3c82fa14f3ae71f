//! Every tape op against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wake_core::autodiff::{AutodiffError, Tape, Tensor, Var};

type Build = fn(&mut Tape<f64>, &[Var]) -> Result<Var, AutodiffError>;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.5..1.5))
}

/// Reduces an op output to a scalar with fixed random weights, so that every
/// output element contributes a distinct adjoint.
fn scalarize(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let w = tape.leaf(random(&mut rng, r, c));
    let m = tape.mul(out, w).unwrap();
    tape.sum(m).unwrap()
}

fn eval(inputs: &[Tensor<f64>], build: Build, seed: u64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let loss = scalarize(&mut tape, out, seed);
    tape.value(loss).get(0, 0)
}

fn check(name: &str, shapes: &[(usize, usize)], build: Build) {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor<f64>> = shapes
            .iter()
            .map(|&(r, c)| random(&mut rng, r, c))
            .collect();
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        let loss = scalarize(&mut tape, out, seed);
        let grads = tape.backward(loss).unwrap();
        let h = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]);
            for idx in 0..input.len() {
                let mut plus = inputs.clone();
                plus[k].data_mut()[idx] += h;
                let mut minus = inputs.clone();
                minus[k].data_mut()[idx] -= h;
                let fd = (eval(&plus, build, seed) - eval(&minus, build, seed)) / (2.0 * h);
                let an = analytic.data()[idx];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                assert!(
                    rel < 1e-4,
                    "{name} seed {seed} input {k}[{idx}]: analytic {an} vs fd {fd}"
                );
            }
        }
    }
}

#[test]
fn matmul() {
    check("matmul", &[(4, 4), (4, 4)], |t, v| t.matmul(v[0], v[1]));
    check("matmul rect", &[(3, 5), (5, 2)], |t, v| {
        t.matmul(v[0], v[1])
    });
}

#[test]
fn add_sub_mul_div() {
    check("add", &[(4, 4), (4, 4)], |t, v| t.add(v[0], v[1]));
    check("add row broadcast", &[(4, 4), (1, 4)], |t, v| {
        t.add(v[0], v[1])
    });
    check("sub", &[(4, 4), (4, 4)], |t, v| t.sub(v[0], v[1]));
    check("mul", &[(4, 4), (4, 4)], |t, v| t.mul(v[0], v[1]));
    check("div", &[(4, 4), (4, 4)], |t, v| {
        let d = t.square(v[1])?;
        let d = t.offset(d, 0.5)?;
        t.div(v[0], d)
    });
    check("scale", &[(4, 4)], |t, v| t.scale(v[0], -2.5));
}

#[test]
fn pointwise() {
    check("relu", &[(4, 4)], |t, v| t.relu(v[0]));
    check("tanh", &[(4, 4)], |t, v| t.tanh(v[0]));
    check("sigmoid", &[(4, 4)], |t, v| t.sigmoid(v[0]));
    check("exp", &[(4, 4)], |t, v| t.exp(v[0]));
    check("softplus", &[(4, 4)], |t, v| t.softplus(v[0]));
    check("square", &[(4, 4)], |t, v| t.square(v[0]));
}

#[test]
fn reductions_and_layout() {
    check("softmax_rows", &[(4, 4)], |t, v| t.softmax_rows(v[0]));
    check("concat_cols", &[(4, 4), (4, 2)], |t, v| {
        t.concat_cols(&[v[0], v[1]])
    });
    check("slice_cols", &[(4, 4)], |t, v| t.slice_cols(v[0], 1, 3));
    check("sum", &[(4, 4)], |t, v| t.sum(v[0]));
    check("mean", &[(4, 4)], |t, v| t.mean(v[0]));
    check("sum_cols", &[(4, 4)], |t, v| t.sum_cols(v[0]));
    check("expand_cols", &[(4, 1)], |t, v| t.expand_cols(v[0], 3));
    check("reshape", &[(4, 4)], |t, v| t.reshape(v[0], 2, 8));
    check("transpose", &[(4, 3)], |t, v| t.transpose(v[0]));
    check("repeat_rows", &[(4, 4)], |t, v| t.repeat_rows(v[0], 3));
    check("group_sum_rows", &[(4, 4)], |t, v| {
        t.group_sum_rows(v[0], 2)
    });
}

#[test]
fn reused_node_accumulates() {
    check("x*x + x", &[(4, 4)], |t, v| {
        let m = t.mul(v[0], v[0])?;
        t.add(m, v[0])
    });
}

#[test]
fn basic_values() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::from_fn(3, 2, |i, j| (i * 2 + j) as f64));
    let eye = t.leaf(Tensor::identity(3));
    let y = t.matmul(eye, x).unwrap();
    assert_eq!(t.value(y), t.value(x));

    let r = t.leaf(Tensor::from_vec(1, 2, vec![-2.0, 3.0]));
    let relu = t.relu(r).unwrap();
    assert_eq!(t.value(relu).data(), &[0.0, 3.0]);

    let flat = t.leaf(Tensor::filled(1, 5, 0.7));
    let s = t.softmax_rows(flat).unwrap();
    for &p in t.value(s).data() {
        assert!((p - 0.2).abs() < 1e-15);
    }
}

#[test]
fn scalar_square_gradient() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::scalar(3.0));
    let w = t.leaf(Tensor::scalar(-7.0));
    let sq = t.square(x).unwrap();
    let loss = t.sum(sq).unwrap();
    let g = t.backward(loss).unwrap();
    assert_eq!(g.get(x).data(), &[6.0]);
    assert_eq!(g.get(w).data(), &[0.0]);
}

#[test]
fn errors_name_shapes() {
    let mut t = Tape::<f64>::new();
    let a = t.leaf(Tensor::zeros(2, 3));
    let b = t.leaf(Tensor::zeros(2, 3));
    match t.matmul(a, b) {
        Err(AutodiffError::Shape { op, lhs, rhs }) => {
            assert_eq!((op, lhs, rhs), ("matmul", (2, 3), (2, 3)));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        t.backward(a),
        Err(AutodiffError::NonScalarLoss((2, 3)))
    ));
    let z = t.leaf(Tensor::zeros(2, 3));
    assert!(matches!(t.div(a, z), Err(AutodiffError::NonFinite("div"))));
}

#[test]
fn softmax_rows_sum_and_shift_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let x = Tensor::from_fn(3, 7, |_, _| rng.gen_range(-30.0..30.0));
        let c: f64 = rng.gen_range(-100.0..100.0);
        let mut t = Tape::new();
        let a = t.leaf(x.clone());
        let b = t.leaf(x.map(|v| v + c));
        let sa = t.softmax_rows(a).unwrap();
        let sb = t.softmax_rows(b).unwrap();
        for i in 0..3 {
            let s: f64 = t.value(sa).row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for (p, q) in t.value(sa).row(i).iter().zip(t.value(sb).row(i)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn replay_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut t = Tape::<f64>::new();
        let x = t.leaf(random(&mut rng, 8, 5));
        let w = t.leaf(random(&mut rng, 5, 3));
        let h = t.matmul(x, w).unwrap();
        let h = t.tanh(h).unwrap();
        let s = t.softmax_rows(h).unwrap();
        let loss = t.mean(s).unwrap();
        let l2 = t.square(loss).unwrap();
        t.backward(l2).unwrap().get(w)
    };
    assert_eq!(run(), run());
}

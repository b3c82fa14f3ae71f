use rand::Rng;
use wake_core::autodiff::{AutodiffError, Tape, Tensor, Var};
use wake_core::{lit, Real};

/// Named trainable tensors of one model, in a fixed order.
#[derive(Clone, Debug, Default)]
pub struct Params<T> {
    pub tensors: Vec<Tensor<T>>,
    pub names: Vec<String>,
}

impl<T: Real> Params<T> {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.tensors.push(t);
        self.names.push(name.into());
        self.tensors.len() - 1
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every tensor as a leaf, returning vars in parameter order.
    pub fn leaves(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }
}

/// Uniform fan-in initialization: bound `sqrt(gain / fan_in)`.
pub fn uniform_init<T: Real, R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    gain: f64,
) -> Tensor<T> {
    let bound = (gain / rows as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| lit(rng.gen_range(-bound..=bound)))
}

/// Gain for layers feeding a ReLU (variance 2 / fan_in).
pub const RELU_GAIN: f64 = 6.0;
/// Gain for linear, tanh and sigmoid layers (variance 1 / fan_in).
pub const LINEAR_GAIN: f64 = 3.0;

#[derive(Clone, Copy, Debug)]
pub struct Dense {
    w: usize,
    b: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<T: Real, R: Rng>(
        params: &mut Params<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let w = params.push(
            format!("{name}.w"),
            uniform_init(rng, inputs, outputs, gain),
        );
        let b = params.push(format!("{name}.b"), Tensor::zeros(1, outputs));
        Self {
            w,
            b,
            inputs,
            outputs,
        }
    }

    pub fn weight(&self) -> usize {
        self.w
    }

    pub fn bias(&self) -> usize {
        self.b
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        x: Var,
    ) -> Result<Var, AutodiffError> {
        let y = tape.matmul(x, p[self.w])?;
        tape.add(y, p[self.b])
    }
}

/// ReLU hidden layers followed by a linear output layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new<T: Real, R: Rng>(
        params: &mut Params<T>,
        name: &str,
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = inputs;
        for (l, &h) in hidden.iter().enumerate() {
            layers.push(Dense::new(
                params,
                &format!("{name}.{l}"),
                fan_in,
                h,
                RELU_GAIN,
                rng,
            ));
            fan_in = h;
        }
        layers.push(Dense::new(
            params,
            &format!("{name}.out"),
            fan_in,
            outputs,
            LINEAR_GAIN,
            rng,
        ));
        Self { layers }
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.last().expect("at least the output layer")
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        x: Var,
    ) -> Result<Var, AutodiffError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, p, h)?;
            if l < last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

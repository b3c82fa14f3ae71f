use rand::Rng;
use wake_core::autodiff::Tensor;
use wake_core::linalg::{LinalgError, Mat};
use wake_core::{lit, to_f64, Real};
use wake_engine::OBS_DIM;

use crate::layers::Params;
use crate::spec::EsnSpec;

/// Leaky echo-state reservoir with a sparse fixed recurrent matrix. Only the
/// linear readout over `[state, 1]` is trained.
#[derive(Clone, Debug)]
pub struct EsnNet<T> {
    pub size: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<T>,
    w_in: Vec<T>,
    bias: Vec<T>,
    leak: T,
    pub readout: usize,
}

/// Growth rate of `w^k v`, averaged geometrically over the tail of a power
/// iteration; also converges when the dominant eigenvalues are a complex pair.
pub fn power_iteration<T: Real, R: Rng>(
    size: usize,
    matvec: impl Fn(&[T], &mut [T]),
    iterations: usize,
    rng: &mut R,
) -> f64 {
    let mut v: Vec<T> = (0..size).map(|_| lit(rng.gen_range(-1.0..1.0))).collect();
    let mut u = vec![T::zero(); size];
    let mut log_sum = 0.0;
    let burn_in = iterations / 2;
    for it in 0..iterations {
        let norm_v = to_f64(v.iter().map(|&x| x * x).sum::<T>().sqrt());
        matvec(&v, &mut u);
        let norm_u = to_f64(u.iter().map(|&x| x * x).sum::<T>().sqrt());
        if norm_u == 0.0 {
            return 0.0;
        }
        if it >= burn_in {
            log_sum += (norm_u / norm_v).ln();
        }
        let inv: T = lit(1.0 / norm_u);
        for (a, &b) in v.iter_mut().zip(&u) {
            *a = b * inv;
        }
    }
    (log_sum / (iterations - burn_in) as f64).exp()
}

impl<T: Real> EsnNet<T> {
    pub fn new<R: Rng>(params: &mut Params<T>, spec: &EsnSpec, rng: &mut R) -> Self {
        let n = spec.reservoir;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val: Vec<T> = Vec::new();
        row_ptr.push(0);
        for _ in 0..n {
            for j in 0..n {
                if rng.gen_bool(spec.density) {
                    col.push(j);
                    val.push(lit(rng.gen_range(-1.0..1.0)));
                }
            }
            row_ptr.push(col.len());
        }
        let w_in = (0..n * OBS_DIM)
            .map(|_| lit(rng.gen_range(-spec.input_scale..spec.input_scale)))
            .collect();
        let bias = (0..n).map(|_| lit(rng.gen_range(-0.2..0.2))).collect();
        let readout = params.push("esn.readout", Tensor::zeros(n + 1, 2));
        let mut net = Self {
            size: n,
            row_ptr,
            col,
            val,
            w_in,
            bias,
            leak: lit(spec.leak),
            readout,
        };
        let rho = net.spectral_radius(rng);
        if rho > 0.0 {
            let s: T = lit(spec.spectral_radius / rho);
            net.val.iter_mut().for_each(|v| *v *= s);
        }
        net
    }

    fn matvec(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            *o = self.col[a..b]
                .iter()
                .zip(&self.val[a..b])
                .map(|(&j, &w)| w * x[j])
                .sum();
        }
    }

    pub fn spectral_radius<R: Rng>(&self, rng: &mut R) -> f64 {
        power_iteration(self.size, |x, o| self.matvec(x, o), 200, rng)
    }

    /// Row-major dense copy of the recurrent matrix.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.size;
        let mut d = vec![T::zero(); n * n];
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i * n + self.col[k]] = self.val[k];
            }
        }
        d
    }

    pub fn input_weights(&self) -> &[T] {
        &self.w_in
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn nonzeros(&self) -> usize {
        self.val.len()
    }

    pub fn zero_state(&self) -> Vec<T> {
        vec![T::zero(); self.size]
    }

    /// `h <- (1 - a) h + a tanh(W h + W_in x + b)`.
    pub fn update(&self, h: &mut [T], x: &[T; OBS_DIM], scratch: &mut Vec<T>) {
        scratch.resize(self.size, T::zero());
        self.matvec(h, scratch);
        let one_minus = T::one() - self.leak;
        for (i, hi) in h.iter_mut().enumerate() {
            let drive: T = self.w_in[i * OBS_DIM..(i + 1) * OBS_DIM]
                .iter()
                .zip(x)
                .map(|(&w, &xi)| w * xi)
                .sum();
            let pre = scratch[i] + drive + self.bias[i];
            *hi = one_minus * *hi + self.leak * pre.tanh();
        }
    }

    pub fn readout(&self, params: &Params<T>, h: &[T]) -> [T; 2] {
        let w = &params.tensors[self.readout];
        let mut y = [w.get(self.size, 0), w.get(self.size, 1)];
        for (i, &hi) in h.iter().enumerate() {
            y[0] += hi * w.get(i, 0);
            y[1] += hi * w.get(i, 1);
        }
        y
    }
}

/// Accumulates the normal equations of a ridge regression with 2 outputs.
#[derive(Clone, Debug)]
pub struct RidgeAccumulator<T> {
    dim: usize,
    gram: Vec<T>,
    cross: Vec<T>,
    pub samples: usize,
}

impl<T: Real> RidgeAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            gram: vec![T::zero(); dim * dim],
            cross: vec![T::zero(); dim * 2],
            samples: 0,
        }
    }

    pub fn add(&mut self, phi: &[T], y: [T; 2]) {
        let d = self.dim;
        for i in 0..d {
            let pi = phi[i];
            if pi == T::zero() {
                continue;
            }
            let row = &mut self.gram[i * d..(i + 1) * d];
            for (g, &pj) in row[i..].iter_mut().zip(&phi[i..]) {
                *g += pi * pj;
            }
            self.cross[2 * i] += pi * y[0];
            self.cross[2 * i + 1] += pi * y[1];
        }
        self.samples += 1;
    }

    /// Solves `(Phi^T Phi + beta I) W = Phi^T Y` by Cholesky.
    pub fn solve(&self, beta: f64) -> Result<Tensor<T>, LinalgError> {
        let d = self.dim;
        let mut g = self.gram.clone();
        for i in 0..d {
            for j in 0..i {
                g[i * d + j] = g[j * d + i];
            }
            g[i * d + i] += lit(beta);
        }
        let a = Mat::from_vec(d, d, g);
        let b = Mat::from_vec(d, 2, self.cross.clone());
        let w = a.cholesky_solve(&b)?;
        Ok(Tensor::from_vec(d, 2, w.as_slice().to_vec()))
    }
}

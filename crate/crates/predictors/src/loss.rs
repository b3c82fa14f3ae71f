use serde::{Deserialize, Serialize};
use wake_core::autodiff::{AutodiffError, Tape, Tensor, Var};
use wake_core::{lit, Real};

/// Per-axis weights on the squared error of normalized forces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub x: f64,
    pub z: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { x: 10.0, z: 1.0 }
    }
}

/// `w_x mean(e_x^2) + w_z mean(e_z^2)` on the tape, for `(batch, 2)` operands.
pub fn weighted_mse<T: Real>(
    tape: &mut Tape<T>,
    pred: Var,
    target: Var,
    w: LossWeights,
) -> Result<Var, AutodiffError> {
    let rows = tape.shape(pred).0;
    let e = tape.sub(pred, target)?;
    let e2 = tape.square(e)?;
    let weights = tape.constant(Tensor::from_fn(rows, 2, |_, j| {
        lit(if j == 0 { w.x } else { w.z })
    }));
    let we = tape.mul(e2, weights)?;
    let m = tape.mean(we)?;
    tape.scale(m, lit(2.0))
}

/// Same loss on plain values.
pub fn weighted_mse_values(
    pred: &[[f64; 2]],
    target: &[[f64; 2]],
    w: LossWeights,
) -> Result<f64, String> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(format!(
            "loss needs equal non-empty series, got {} and {}",
            pred.len(),
            target.len()
        ));
    }
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| w.x * (p[0] - t[0]).powi(2) + w.z * (p[1] - t[1]).powi(2))
        .sum();
    Ok(s / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tape_and_plain_losses_agree() {
        let pred = [[0.5, -1.0], [2.0, 0.25]];
        let target = [[0.0, 0.0], [1.0, 1.0]];
        let mut tape = Tape::<f64>::new();
        let p = tape.leaf(Tensor::from_vec(2, 2, pred.concat()));
        let t = tape.leaf(Tensor::from_vec(2, 2, target.concat()));
        let l = weighted_mse(&mut tape, p, t, LossWeights::default()).unwrap();
        let want = weighted_mse_values(&pred, &target, LossWeights::default()).unwrap();
        assert!((tape.value(l).data()[0] - want).abs() < 1e-15);
        assert!((want - (2.5 + 1.0 + 10.0 + 0.5625) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_unit_error() {
        let w = LossWeights::default();
        assert_eq!(
            weighted_mse_values(&[[1.0, 1.0]], &[[0.0, 0.0]], w).unwrap(),
            11.0
        );
        assert_eq!(
            weighted_mse_values(&[[1.0, 1.0]], &[[1.0, 1.0]], w).unwrap(),
            0.0
        );
        assert!(weighted_mse_values(&[[1.0, 1.0]], &[], w).is_err());
        let doubled = LossWeights { x: 20.0, z: 2.0 };
        assert_eq!(
            weighted_mse_values(&[[1.0, 2.0]], &[[0.0, 0.0]], doubled).unwrap(),
            28.0
        );
    }
}

use serde::{Deserialize, Serialize};
use wake_engine::{Episode, Force, Observation, OBS_DIM};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel affine normalization for observations and force targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub obs_mean: [f64; OBS_DIM],
    pub obs_std: [f64; OBS_DIM],
    pub force_mean: [f64; 2],
    pub force_std: [f64; 2],
}

impl Default for Normalization {
    fn default() -> Self {
        Self::identity()
    }
}

fn moments<const N: usize>(rows: impl Iterator<Item = [f64; N]>) -> ([f64; N], [f64; N]) {
    let mut n = 0usize;
    let mut mean = [0.0; N];
    let mut m2 = [0.0; N];
    // Welford, so 10^5 samples of near-constant channels stay accurate.
    for r in rows {
        n += 1;
        for k in 0..N {
            let d = r[k] - mean[k];
            mean[k] += d / n as f64;
            m2[k] += d * (r[k] - mean[k]);
        }
    }
    let mut std = [STD_FLOOR; N];
    if n > 0 {
        for k in 0..N {
            std[k] = (m2[k] / n as f64).sqrt().max(STD_FLOOR);
        }
    }
    (mean, std)
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            obs_mean: [0.0; OBS_DIM],
            obs_std: [1.0; OBS_DIM],
            force_mean: [0.0; 2],
            force_std: [1.0; 2],
        }
    }

    pub fn fit(episodes: &[Episode]) -> Self {
        let samples = || episodes.iter().flat_map(|e| e.samples.iter());
        let (obs_mean, obs_std) = moments(samples().map(|s| s.obs));
        let (force_mean, force_std) = moments(samples().map(|s| s.f_true));
        Self {
            obs_mean,
            obs_std,
            force_mean,
            force_std,
        }
    }

    pub fn obs(&self, o: &Observation) -> Observation {
        std::array::from_fn(|k| (o[k] - self.obs_mean[k]) / self.obs_std[k])
    }

    pub fn force(&self, f: &Force) -> Force {
        std::array::from_fn(|k| (f[k] - self.force_mean[k]) / self.force_std[k])
    }

    pub fn denorm_force(&self, f: &Force) -> Force {
        std::array::from_fn(|k| f[k] * self.force_std[k] + self.force_mean[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_two_pass() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64, 3.0]).collect();
        let (m, s) = moments(rows.iter().copied());
        assert!((m[0] - 24.5).abs() < 1e-12);
        let var: f64 = rows.iter().map(|r| (r[0] - 24.5).powi(2)).sum::<f64>() / 50.0;
        assert!((s[0] - var.sqrt()).abs() < 1e-12);
        assert_eq!((m[1], s[1]), (3.0, STD_FLOOR));
    }

    #[test]
    fn force_round_trip() {
        let n = Normalization {
            force_mean: [0.1, -0.2],
            force_std: [0.5, 2.0],
            ..Normalization::identity()
        };
        let f = [0.3, 0.7];
        let back = n.denorm_force(&n.force(&f));
        assert!((back[0] - f[0]).abs() < 1e-15 && (back[1] - f[1]).abs() < 1e-15);
    }
}

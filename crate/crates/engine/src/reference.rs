//! Smooth random reference trajectories.
//!
//! Waypoints are drawn uniformly in the workspace every `waypoint_period`
//! seconds and joined by cubic Hermite segments with zero end tangents, which
//! keeps the path C1. The peak speed of such a segment is `1.5 |d| / period`,
//! so each displacement `d` is shortened to respect the speed bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::MotionSpec;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefPoint {
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub waypoints: Vec<(f64, f64)>,
    pub period: f64,
}

impl Reference {
    pub fn at(&self, t: f64) -> RefPoint {
        let last = self.waypoints.len() - 1;
        let seg = ((t / self.period).floor().max(0.0) as usize).min(last.saturating_sub(1));
        let (a, b) = (self.waypoints[seg], self.waypoints[(seg + 1).min(last)]);
        let s = ((t - seg as f64 * self.period) / self.period).clamp(0.0, 1.0);
        let h = s * s * (3.0 - 2.0 * s);
        let dh = 6.0 * s * (1.0 - s) / self.period;
        RefPoint {
            x: a.0 + (b.0 - a.0) * h,
            z: a.1 + (b.1 - a.1) * h,
            vx: (b.0 - a.0) * dh,
            vz: (b.1 - a.1) * dh,
        }
    }

    /// The trajectory sampled every `dt` seconds over `[0, length)`.
    pub fn sample(&self, length: f64, dt: f64) -> Vec<RefPoint> {
        let n = (length / dt).round() as usize;
        (0..n).map(|k| self.at(k as f64 * dt)).collect()
    }
}

pub fn generate_reference_with<R: Rng>(
    rng: &mut R,
    length: f64,
    bounds: &MotionSpec,
    altitude: f64,
) -> Reference {
    let n = (length / bounds.waypoint_period).ceil() as usize + 2;
    let max_step = bounds.v_max * bounds.waypoint_period / 1.5;
    let mut draw = |half: f64, center: f64| {
        if half > 0.0 {
            rng.gen_range(center - half..=center + half)
        } else {
            center
        }
    };
    let mut waypoints = Vec::with_capacity(n);
    let mut cur = (
        draw(bounds.half_width_x, bounds.center_x),
        draw(bounds.half_width_z, altitude),
    );
    waypoints.push(cur);
    for _ in 1..n {
        let target = (
            draw(bounds.half_width_x, bounds.center_x),
            draw(bounds.half_width_z, altitude),
        );
        let (dx, dz) = (target.0 - cur.0, target.1 - cur.1);
        let dist = (dx * dx + dz * dz).sqrt();
        let f = if dist > max_step {
            max_step / dist
        } else {
            1.0
        };
        cur = (cur.0 + dx * f, cur.1 + dz * f);
        waypoints.push(cur);
    }
    Reference {
        waypoints,
        period: bounds.waypoint_period,
    }
}

pub fn generate_reference(seed: u64, length: f64, bounds: &MotionSpec, altitude: f64) -> Reference {
    generate_reference_with(
        &mut ChaCha8Rng::seed_from_u64(seed),
        length,
        bounds,
        altitude,
    )
}

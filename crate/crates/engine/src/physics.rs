use rand::Rng;
use serde::{Deserialize, Serialize};

use wake_core::Fluid;

/// Physics actually used by one episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizedPhysics {
    pub fluid: Fluid,
    pub dz_sep: f64,
    /// Integration step after any CFL halving.
    pub dt: f64,
}

impl RealizedPhysics {
    pub fn transport_delay(&self) -> f64 {
        self.dz_sep / self.fluid.w_a
    }
}

/// Scales `w_a`, `kappa` and `dz_sep` by independent factors in `[1 - p, 1 + p]`.
pub fn perturb_physics<R: Rng>(nominal: &Fluid, dz_sep: f64, p: f64, rng: &mut R) -> (Fluid, f64) {
    debug_assert!((0.0..1.0).contains(&p));
    if p == 0.0 {
        return (*nominal, dz_sep);
    }
    let mut factor = || rng.gen_range(1.0 - p..=1.0 + p);
    let mut fluid = *nominal;
    fluid.w_a *= factor();
    fluid.kappa *= factor();
    (fluid, dz_sep * factor())
}

/// Halves `dt` until the vertical CFL bound holds.
pub fn cfl_step(w_a: f64, dt: f64, dz_cell: f64) -> f64 {
    let mut dt = dt;
    while w_a * dt > dz_cell {
        dt *= 0.5;
    }
    dt
}

use wake_core::{Input, State};

pub const OBS_DIM: usize = 8;

pub type Observation = [f64; OBS_DIM];
pub type Force = [f64; 2];

/// `[dx, dz, dvx, dvz, source thrust (x, z), sufferer thrust (x, z)]`,
/// relative quantities taken as source minus sufferer, thrusts in world axes.
pub fn build_observation(
    src: &State,
    src_input: &Input,
    suf: &State,
    suf_input: &Input,
) -> Observation {
    let (sx, sz) = src_input.thrust_world(src.theta);
    let (fx, fz) = suf_input.thrust_world(suf.theta);
    [
        src.x - suf.x,
        src.z - suf.z,
        src.vx - suf.vx,
        src.vz - suf.vz,
        sx,
        sz,
        fx,
        fz,
    ]
}

//! Coupled simulation of the wake field, the wake source and the sufferer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use wake_core::field::{self, SourceActuation, VelocityField};
use wake_core::vehicle::{self, control, dynamics_step};
use wake_core::{Gain, Input, State};

use crate::config::{ScenarioConfig, ThrustSpec};
use crate::observation::{build_observation, Force, Observation};
use crate::physics::{cfl_step, perturb_physics, RealizedPhysics};
use crate::reference::{generate_reference_with, Reference};
use crate::EngineError;

/// One recorded tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub obs: Observation,
    pub f_true: Force,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub rmse_x: f64,
    pub rmse_z: f64,
    /// Root mean squared Euclidean position error.
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub config: ScenarioConfig,
    pub physics: RealizedPhysics,
    pub samples: Vec<Sample>,
    pub metrics: TrackingMetrics,
}

impl Episode {
    pub fn observations(&self) -> Vec<Observation> {
        self.samples.iter().map(|s| s.obs).collect()
    }

    pub fn forces(&self) -> Vec<Force> {
        self.samples.iter().map(|s| s.f_true).collect()
    }

    /// Wraps externally generated series, such as synthetic benchmarks, with
    /// nominal metadata.
    pub fn from_series(observations: &[Observation], forces: &[Force], record_rate: f64) -> Self {
        assert_eq!(
            observations.len(),
            forces.len(),
            "one force per observation"
        );
        let config = ScenarioConfig {
            record_rate,
            episode_length: observations.len() as f64 / record_rate,
            ..ScenarioConfig::default()
        };
        let physics = RealizedPhysics {
            fluid: config.fluid,
            dz_sep: config.dz_sep,
            dt: config.dt,
        };
        let samples = observations
            .iter()
            .zip(forces)
            .enumerate()
            .map(|(i, (&obs, &f_true))| Sample {
                t: i as f64 / record_rate,
                obs,
                f_true,
            })
            .collect();
        Self {
            config,
            physics,
            samples,
            metrics: TrackingMetrics::default(),
        }
    }
}

/// Source of the disturbance estimate fed to the sufferer's feedforward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compensation {
    None,
    Oracle,
    Model,
}

impl std::fmt::Display for Compensation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Compensation::None => "none",
            Compensation::Oracle => "oracle",
            Compensation::Model => "model",
        })
    }
}

/// A causal force predictor driven one observation at a time.
pub trait OnlinePredictor {
    /// Clears any stream state; called once before each episode.
    fn reset(&mut self);
    fn predict(&mut self, obs: &Observation) -> Result<Force, String>;
}

/// Smooth random thrust command in newtons.
#[derive(Clone, Debug, PartialEq)]
pub struct ThrustCommand {
    knots: Vec<f64>,
    knot_dt: f64,
}

impl ThrustCommand {
    pub fn generate<R: Rng>(rng: &mut R, spec: &ThrustSpec, u_hover: f64, length: f64) -> Self {
        let knot_dt = 1.0 / (2.0 * spec.bandwidth_hz);
        let n = (length / knot_dt).ceil() as usize + 2;
        let knots = (0..n)
            .map(|_| {
                let f = if spec.high > spec.low {
                    rng.gen_range(spec.low..=spec.high)
                } else {
                    spec.low
                };
                f * u_hover
            })
            .collect();
        Self { knots, knot_dt }
    }

    pub fn constant(u: f64) -> Self {
        Self {
            knots: vec![u, u],
            knot_dt: 1.0,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let last = self.knots.len() - 1;
        let k = ((t / self.knot_dt).floor().max(0.0) as usize).min(last - 1);
        let s = ((t - k as f64 * self.knot_dt) / self.knot_dt).clamp(0.0, 1.0);
        let h = s * s * (3.0 - 2.0 * s);
        self.knots[k] + (self.knots[k + 1] - self.knots[k]) * h
    }
}

/// Everything random about an episode, drawn from independent streams of the seed.
#[derive(Clone, Debug)]
pub struct EpisodePlan {
    pub physics: RealizedPhysics,
    pub source_ref: Reference,
    pub sufferer_ref: Reference,
    pub thrust: ThrustCommand,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl EpisodePlan {
    pub fn draw(cfg: &ScenarioConfig) -> Self {
        let (fluid, dz_sep) = perturb_physics(
            &cfg.fluid,
            cfg.dz_sep,
            cfg.perturbation,
            &mut stream(cfg.seed, 1),
        );
        let dt = cfl_step(fluid.w_a, cfg.dt, cfg.grid.dz_cell);
        let len = cfg.episode_length;
        let source_ref = generate_reference_with(
            &mut stream(cfg.seed, 2),
            len,
            &cfg.source_motion,
            cfg.source_altitude,
        );
        let sufferer_ref = generate_reference_with(
            &mut stream(cfg.seed, 3),
            len,
            &cfg.sufferer_motion,
            cfg.source_altitude - dz_sep,
        );
        let thrust = ThrustCommand::generate(
            &mut stream(cfg.seed, 4),
            &cfg.thrust,
            cfg.fluid.u_hover,
            len,
        );
        Self {
            physics: RealizedPhysics { fluid, dz_sep, dt },
            source_ref,
            sufferer_ref,
            thrust,
        }
    }
}

fn ref_state(r: &Reference, t: f64) -> State {
    let p = r.at(t);
    State {
        x: p.x,
        z: p.z,
        vx: p.vx,
        vz: p.vz,
        theta: 0.0,
        theta_dot: 0.0,
    }
}

pub fn run_episode(
    cfg: &ScenarioConfig,
    predictor: Option<&mut dyn OnlinePredictor>,
    mode: Compensation,
) -> Result<Episode, EngineError> {
    cfg.validate()?;
    let plan = EpisodePlan::draw(cfg);
    run_plan(cfg, &plan, predictor, mode)
}

/// Runs a pre-drawn plan; lets callers override the random parts.
pub fn run_plan(
    cfg: &ScenarioConfig,
    plan: &EpisodePlan,
    mut predictor: Option<&mut dyn OnlinePredictor>,
    mode: Compensation,
) -> Result<Episode, EngineError> {
    if (mode == Compensation::Model) != predictor.is_some() {
        return Err(EngineError::Config(
            "a predictor is required exactly when mode = model".into(),
        ));
    }
    let veh = cfg.vehicle;
    let gain: Gain = vehicle::hover_lqr(&veh)?;
    let phys = plan.physics;
    let dt = phys.dt;
    let substeps = cfg.substeps(dt)?;
    let n_samples = cfg.samples_per_episode();
    let mut field_state = VelocityField::zeros(cfg.grid);

    let mut src = ref_state(&plan.source_ref, 0.0);
    src.vx = 0.0;
    let mut suf = ref_state(&plan.sufferer_ref, 0.0);
    suf.vx = 0.0;
    let mut src_input = Input::hover(&veh);
    let mut suf_input = Input::hover(&veh);
    let mut f_hat: Force = [0.0, 0.0];
    if let Some(p) = predictor.as_deref_mut() {
        p.reset();
    }

    let mut samples = Vec::with_capacity(n_samples);
    let (mut se_x, mut se_z) = (0.0, 0.0);
    for n in 0..n_samples * substeps {
        let t = n as f64 * dt;
        let (vx, vz) = field::sample_velocity(&field_state, suf.x, suf.z);
        let (fx, fz) = field::drag_force((vx, vz), phys.fluid.rho, phys.fluid.c_d);
        let f_true = [fx, fz];
        let suf_ref = ref_state(&plan.sufferer_ref, t);

        if n % substeps == 0 {
            let obs = build_observation(&src, &src_input, &suf, &suf_input);
            samples.push(Sample {
                t: (n / substeps) as f64 / cfg.record_rate,
                obs,
                f_true,
            });
            f_hat = match mode {
                Compensation::None => [0.0, 0.0],
                Compensation::Oracle => f_true,
                Compensation::Model => {
                    let p = predictor.as_deref_mut().expect("checked above");
                    let est = p
                        .predict(&obs)
                        .map_err(|msg| EngineError::Predictor { t, msg })?;
                    if !est.iter().all(|v| v.is_finite()) {
                        return Err(EngineError::Predictor {
                            t,
                            msg: format!("non-finite prediction {est:?}"),
                        });
                    }
                    est
                }
            };
            se_x += (suf.x - suf_ref.x).powi(2);
            se_z += (suf.z - suf_ref.z).powi(2);
        }

        // Source rides a vertical rail: torque from the x-tracking LQR, thrust commanded.
        let src_ref = ref_state(&plan.source_ref, t);
        let src_ctrl = control(&src, &src_ref, &gain, (0.0, 0.0), &veh);
        src_input = Input {
            u: plan.thrust.at(t).clamp(veh.u_min, veh.u_max),
            tau: src_ctrl.tau,
        };
        suf_input = control(&suf, &suf_ref, &gain, (f_hat[0], f_hat[1]), &veh);

        let actuation = SourceActuation {
            px: src.x,
            pz: src.z,
            theta: src.theta,
            u: src_input.u,
        };
        field_state = field::step(&field_state, &[actuation], &phys.fluid, dt)?;
        src = dynamics_step(&src, &src_input, (0.0, 0.0), &veh, dt)?;
        src.z = cfg.source_altitude;
        src.vz = 0.0;
        suf = dynamics_step(&suf, &suf_input, (fx, fz), &veh, dt)?;
    }
    let n = n_samples as f64;
    let metrics = TrackingMetrics {
        rmse_x: (se_x / n).sqrt(),
        rmse_z: (se_z / n).sqrt(),
        rmse: ((se_x + se_z) / n).sqrt(),
    };
    Ok(Episode {
        config: cfg.clone(),
        physics: phys,
        samples,
        metrics,
    })
}

/// Runs `count` independent episodes with seeds `base.seed + i` on the rayon pool.
pub fn generate_episodes(base: &ScenarioConfig, count: usize) -> Result<Vec<Episode>, EngineError> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| {
            run_episode(
                &base.with_seed(base.seed + i as u64),
                None,
                Compensation::None,
            )
        })
        .collect()
}

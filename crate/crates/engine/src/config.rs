use serde::{Deserialize, Serialize};

use wake_core::{Fluid, Grid, Vehicle};

use crate::EngineError;

/// Horizontal and vertical workspace for one vehicle's random waypoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    /// Waypoints are drawn in `center_x +- half_width_x`.
    pub half_width_x: f64,
    /// Waypoints are drawn in `altitude +- half_width_z`.
    pub half_width_z: f64,
    pub center_x: f64,
    /// Speed bound along the reference [m/s].
    pub v_max: f64,
    /// Time between waypoints [s].
    pub waypoint_period: f64,
}

/// Source thrust command: smooth random knots in `[low, high] * u_hover`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThrustSpec {
    pub low: f64,
    pub high: f64,
    /// Approximate band limit; knots are drawn at twice this rate.
    pub bandwidth_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Nominal vertical separation between source and sufferer [m].
    pub dz_sep: f64,
    /// Episode duration [s].
    pub episode_length: f64,
    /// Recording and prediction rate [Hz].
    pub record_rate: f64,
    /// Nominal integration step [s]; halved per episode while the CFL bound fails.
    pub dt: f64,
    /// Source flight altitude [m].
    pub source_altitude: f64,
    pub source_motion: MotionSpec,
    pub sufferer_motion: MotionSpec,
    pub thrust: ThrustSpec,
    /// Physics perturbation fraction applied to `w_a`, `kappa`, `dz_sep`.
    pub perturbation: f64,
    pub seed: u64,
    pub fluid: Fluid,
    pub vehicle: Vehicle,
    pub grid: Grid,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dz_sep: 2.3,
            episode_length: 30.0,
            record_rate: 100.0,
            dt: 0.01,
            source_altitude: 6.0,
            source_motion: MotionSpec {
                half_width_x: 0.9,
                half_width_z: 0.0,
                center_x: 0.0,
                v_max: 1.2,
                waypoint_period: 2.0,
            },
            sufferer_motion: MotionSpec {
                half_width_x: 0.6,
                half_width_z: 0.0,
                center_x: 0.0,
                v_max: 0.6,
                waypoint_period: 2.0,
            },
            thrust: ThrustSpec {
                low: 0.5,
                high: 1.5,
                bandwidth_hz: 2.0,
            },
            perturbation: 0.0,
            seed: 0,
            fluid: Fluid::nominal(),
            vehicle: Vehicle::nominal(),
            grid: Grid::nominal(),
        }
    }
}

impl ScenarioConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Number of integration steps between two recorded samples at step `dt`.
    pub fn substeps(&self, dt: f64) -> Result<usize, EngineError> {
        let ratio = 1.0 / (dt * self.record_rate);
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
            return Err(EngineError::Config(format!(
                "record rate {} Hz does not divide the step rate {} Hz",
                self.record_rate,
                1.0 / dt
            )));
        }
        Ok(n as usize)
    }

    pub fn samples_per_episode(&self) -> usize {
        (self.episode_length * self.record_rate).round() as usize
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if !(self.episode_length > 0.0) {
            return bad(format!(
                "episode_length must be positive, got {}",
                self.episode_length
            ));
        }
        if !(self.record_rate > 0.0 && self.dt > 0.0) {
            return bad("record_rate and dt must be positive".into());
        }
        self.substeps(self.dt)?;
        if !(0.0..1.0).contains(&self.perturbation) {
            return bad(format!(
                "perturbation must lie in [0, 1), got {}",
                self.perturbation
            ));
        }
        if !(self.dz_sep > 0.0) {
            return bad(format!("dz_sep must be positive, got {}", self.dz_sep));
        }
        for (name, m) in [
            ("source", &self.source_motion),
            ("sufferer", &self.sufferer_motion),
        ] {
            if !(m.v_max > 0.0
                && m.waypoint_period > 0.0
                && m.half_width_x >= 0.0
                && m.half_width_z >= 0.0)
            {
                return bad(format!("{name} motion bounds must be positive"));
            }
        }
        let t = &self.thrust;
        if !(t.low >= 0.0 && t.low <= t.high && t.bandwidth_hz > 0.0) {
            return bad("thrust range must satisfy 0 <= low <= high, bandwidth > 0".into());
        }
        self.fluid
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        self.vehicle
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        self.grid
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        Ok(())
    }
}

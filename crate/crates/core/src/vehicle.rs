//! Planar multicopter: rigid-body dynamics, hover linearization, LQR gain
//! synthesis and the feedforward wake compensation used in closed loop.
//!
//! State ordering everywhere is `(x, z, vx, vz, theta, theta_dot)`; control
//! ordering is `(thrust, torque)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{LinalgError, Mat};
use crate::scalar::{lit, Real};

pub const STATE_DIM: usize = 6;
pub const INPUT_DIM: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "Riccati iteration did not converge after {iterations} steps (last change {last_change:e})"
    )]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("closed loop A - BK is not Hurwitz")]
    UnstableClosedLoop,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams<T> {
    pub mass: T,
    pub inertia: T,
    pub gravity: T,
    pub u_min: T,
    pub u_max: T,
    pub tau_max: T,
}

impl<T: Real> VehicleParams<T> {
    pub fn nominal() -> Self {
        Self {
            mass: lit(1.0),
            inertia: lit(0.01),
            gravity: lit(9.81),
            u_min: T::zero(),
            u_max: lit(20.0),
            tau_max: T::one(),
        }
    }

    pub fn hover_thrust(&self) -> T {
        self.mass * self.gravity
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.mass > T::zero() && self.inertia > T::zero()) {
            return Err(ControlError::InvalidArgument(
                "mass and inertia must be positive".into(),
            ));
        }
        if !(self.u_min >= T::zero() && self.u_min < self.u_max) {
            return Err(ControlError::InvalidArgument(
                "need 0 <= u_min < u_max".into(),
            ));
        }
        if !(self.tau_max > T::zero()) {
            return Err(ControlError::InvalidArgument(
                "tau_max must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState<T> {
    pub x: T,
    pub z: T,
    pub vx: T,
    pub vz: T,
    pub theta: T,
    pub theta_dot: T,
}

impl<T: Real> VehicleState<T> {
    pub fn at_rest(x: T, z: T) -> Self {
        Self {
            x,
            z,
            vx: T::zero(),
            vz: T::zero(),
            theta: T::zero(),
            theta_dot: T::zero(),
        }
    }

    pub fn to_array(&self) -> [T; STATE_DIM] {
        [self.x, self.z, self.vx, self.vz, self.theta, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let pi = lit::<T>(PI);
    let two_pi = pi + pi;
    let mut w = a - two_pi * ((a + pi) / two_pi).floor();
    if w <= -pi {
        w += two_pi;
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput<T> {
    pub u: T,
    pub tau: T,
}

impl<T: Real> ControlInput<T> {
    pub fn hover(p: &VehicleParams<T>) -> Self {
        Self {
            u: p.hover_thrust(),
            tau: T::zero(),
        }
    }

    pub fn clamped(self, p: &VehicleParams<T>) -> Self {
        Self {
            u: self.u.max(p.u_min).min(p.u_max),
            tau: self.tau.max(-p.tau_max).min(p.tau_max),
        }
    }

    /// Thrust vector in world axes, `(u sin theta, u cos theta)`.
    pub fn thrust_world(&self, theta: T) -> (T, T) {
        (self.u * theta.sin(), self.u * theta.cos())
    }
}

/// Semi-implicit Euler step of the planar rigid body.
pub fn dynamics_step<T: Real>(
    s: &VehicleState<T>,
    c: &ControlInput<T>,
    f_ext: (T, T),
    p: &VehicleParams<T>,
    dt: T,
) -> Result<VehicleState<T>, ControlError> {
    if !s.is_finite()
        || !f_ext.0.is_finite()
        || !f_ext.1.is_finite()
        || !c.u.is_finite()
        || !c.tau.is_finite()
    {
        return Err(ControlError::InvalidArgument(
            "non-finite state, input or force".into(),
        ));
    }
    if !(dt > T::zero()) {
        return Err(ControlError::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let c = c.clamped(p);
    let ax = (c.u * s.theta.sin() + f_ext.0) / p.mass;
    let az = (c.u * s.theta.cos() - p.mass * p.gravity + f_ext.1) / p.mass;
    let alpha = c.tau / p.inertia;
    let vx = s.vx + ax * dt;
    let vz = s.vz + az * dt;
    let theta_dot = s.theta_dot + alpha * dt;
    Ok(VehicleState {
        x: s.x + vx * dt,
        z: s.z + vz * dt,
        vx,
        vz,
        theta: wrap_angle(s.theta + theta_dot * dt),
        theta_dot,
    })
}

/// Jacobians `(A, B)` of the dynamics at hover (`theta = 0`, `u = m g`).
pub fn linearize_hover<T: Real>(p: &VehicleParams<T>) -> (Mat<T>, Mat<T>) {
    let mut a = Mat::zeros(STATE_DIM, STATE_DIM);
    a[(0, 2)] = T::one();
    a[(1, 3)] = T::one();
    a[(2, 4)] = p.gravity;
    a[(4, 5)] = T::one();
    let mut b = Mat::zeros(STATE_DIM, INPUT_DIM);
    b[(3, 0)] = T::one() / p.mass;
    b[(5, 1)] = T::one() / p.inertia;
    (a, b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LqrGain<T> {
    pub k: Mat<T>,
    pub p: Mat<T>,
    pub a: Mat<T>,
    pub b: Mat<T>,
    pub q: Mat<T>,
    pub r: Mat<T>,
}

/// Settings for the Riccati flow iteration.
#[derive(Clone, Copy, Debug)]
pub struct RiccatiSettings<T> {
    /// Euler step of the Riccati differential equation.
    pub step: T,
    /// Stop when successive iterates differ by less than this in max norm.
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for RiccatiSettings<T> {
    fn default() -> Self {
        Self {
            step: lit(1e-3),
            tolerance: lit(1e-10),
            max_iterations: 2_000_000,
        }
    }
}

/// Residual of the continuous algebraic Riccati equation at `p`.
pub fn care_residual<T: Real>(
    a: &Mat<T>,
    b: &Mat<T>,
    q: &Mat<T>,
    r_inv: &Mat<T>,
    p: &Mat<T>,
) -> Result<Mat<T>, LinalgError> {
    let at = a.transpose();
    let pb = p.matmul(b)?;
    let quad = pb.matmul(r_inv)?.matmul(&pb.transpose())?;
    at.matmul(p)?.add(&p.matmul(a)?)?.sub(&quad)?.add(q)
}

pub fn lqr_gain<T: Real>(
    a: &Mat<T>,
    b: &Mat<T>,
    q: &Mat<T>,
    r: &Mat<T>,
) -> Result<LqrGain<T>, ControlError> {
    lqr_gain_with(a, b, q, r, RiccatiSettings::default())
}

/// Continuous-time LQR gain `K = R^-1 B^T P`.
///
/// `P` is obtained by integrating the Riccati differential equation
/// `dP/ds = A^T P + P A - P B R^-1 B^T P + Q` from `P = 0` with a fixed
/// Euler step until it stops moving; its fixed point is the stabilizing
/// solution of the algebraic equation.
pub fn lqr_gain_with<T: Real>(
    a: &Mat<T>,
    b: &Mat<T>,
    q: &Mat<T>,
    r: &Mat<T>,
    settings: RiccatiSettings<T>,
) -> Result<LqrGain<T>, ControlError> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n || q.shape() != (n, n) || r.shape() != (b.cols(), b.cols()) {
        return Err(ControlError::InvalidArgument(format!(
            "incompatible shapes A{:?} B{:?} Q{:?} R{:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let r_inv = r.inverse()?;
    let mut p = Mat::zeros(n, n);
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    for _ in 0..settings.max_iterations {
        let delta = care_residual(a, b, q, &r_inv, &p)?.scale(settings.step);
        p = p.add(&delta)?;
        // keep P symmetric against round-off drift
        p = p.add(&p.transpose())?.scale(lit(0.5));
        let change = delta.max_abs();
        last_change = change.to_f64().unwrap_or(f64::NAN);
        if !p.is_finite() {
            break;
        }
        if change < settings.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ControlError::NoConvergence {
            iterations: settings.max_iterations,
            last_change,
        });
    }
    let k = r_inv.matmul(&b.transpose())?.matmul(&p)?;
    let closed = a.sub(&b.matmul(&k)?)?;
    if !closed.is_hurwitz()? {
        return Err(ControlError::UnstableClosedLoop);
    }
    Ok(LqrGain {
        k,
        p,
        a: a.clone(),
        b: b.clone(),
        q: q.clone(),
        r: r.clone(),
    })
}

/// Default tracking weights for the planar vehicle.
pub fn default_weights<T: Real>() -> (Mat<T>, Mat<T>) {
    let q = Mat::diag(&[10.0, 10.0, 1.0, 1.0, 5.0, 0.5].map(lit::<T>));
    let r = Mat::diag(&[0.1, 0.1].map(lit::<T>));
    (q, r)
}

pub fn hover_lqr<T: Real>(p: &VehicleParams<T>) -> Result<LqrGain<T>, ControlError> {
    let (a, b) = linearize_hover(p);
    let (q, r) = default_weights();
    lqr_gain(&a, &b, &q, &r)
}

/// Largest tilt the pitch feedforward may request, as a fraction of `m g`.
const MAX_FF_RATIO: f64 = 0.5;

/// Reference with the pitch feedforward folded in, plus the thrust feedforward.
///
/// Cancelling a horizontal push `f_x` needs `u sin(theta) = -f_x`, so the pitch
/// reference tilts by `-asin(f_x / (m g))`; a vertical push is cancelled by
/// adding `-f_z` to the thrust.
pub fn compensated_reference<T: Real>(
    reference: &VehicleState<T>,
    f_hat: (T, T),
    p: &VehicleParams<T>,
) -> (VehicleState<T>, T) {
    let limit = lit::<T>(MAX_FF_RATIO);
    let ratio = (f_hat.0 / p.hover_thrust()).max(-limit).min(limit);
    let mut r = *reference;
    r.theta = reference.theta - ratio.asin();
    (r, -f_hat.1)
}

/// LQR feedback around hover with feedforward wake compensation.
pub fn control<T: Real>(
    s: &VehicleState<T>,
    reference: &VehicleState<T>,
    gain: &LqrGain<T>,
    f_hat: (T, T),
    p: &VehicleParams<T>,
) -> ControlInput<T> {
    let (r, du_ff) = compensated_reference(reference, f_hat, p);
    let mut err = [T::zero(); STATE_DIM];
    for (e, (a, b)) in err
        .iter_mut()
        .zip(s.to_array().iter().zip(r.to_array().iter()))
    {
        *e = *a - *b;
    }
    err[4] = wrap_angle(err[4]);
    let k = &gain.k;
    let mut fb = [T::zero(); INPUT_DIM];
    for (row, out) in fb.iter_mut().enumerate() {
        *out = -(0..STATE_DIM).map(|c| k[(row, c)] * err[c]).sum::<T>();
    }
    ControlInput {
        u: p.hover_thrust() + fb[0] + du_ff,
        tau: fb[1],
    }
    .clamped(p)
}

//! Eulerian 2D velocity field carrying the wake of a multicopter.
//!
//! One simulation step applies, in order: Gaussian momentum injection from
//! every wake source, first-order upwind transport toward -z at the constant
//! wake speed, semi-Lagrangian horizontal self-advection, Gaussian-blur
//! diffusion and exponential decay. The disturbance felt by a vehicle is the
//! quadratic drag of the bilinearly sampled local velocity.
//!
//! Cells are indexed `(i, j)` with `i` along +x and `j` along +z (so `j + 1`
//! is the cell above). Storage is row-major in `j`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "CFL violated: w_a = {w_a}, dt = {dt}, dz_cell = {dz_cell} (need w_a * dt <= dz_cell)"
    )]
    Cfl { w_a: f64, dt: f64, dz_cell: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry<T> {
    pub nx: usize,
    pub nz: usize,
    pub dx: T,
    pub dz_cell: T,
    /// World x of the center of cell (0, 0).
    pub origin_x: T,
    /// World z of the center of cell (0, 0).
    pub origin_z: T,
}

impl<T: Real> GridGeometry<T> {
    pub fn new(
        nx: usize,
        nz: usize,
        dx: T,
        dz_cell: T,
        origin_x: T,
        origin_z: T,
    ) -> Result<Self, FieldError> {
        let g = Self {
            nx,
            nz,
            dx,
            dz_cell,
            origin_x,
            origin_z,
        };
        g.validate()?;
        Ok(g)
    }

    /// 96 x 96 cells of 8 cm, x centered on 0, z starting at the floor.
    pub fn nominal() -> Self {
        let dx = lit::<T>(0.08);
        Self {
            nx: 96,
            nz: 96,
            dx,
            dz_cell: dx,
            origin_x: lit::<T>(-47.5) * dx,
            origin_z: dx / lit(2.0),
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.nx < 4 || self.nz < 4 {
            return Err(FieldError::InvalidArgument(format!(
                "grid must be at least 4x4, got {}x{}",
                self.nx, self.nz
            )));
        }
        if !(self.dx > T::zero()) || !(self.dz_cell > T::zero()) {
            return Err(FieldError::InvalidArgument(
                "cell sizes must be positive".into(),
            ));
        }
        if !self.origin_x.is_finite() || !self.origin_z.is_finite() {
            return Err(FieldError::InvalidArgument(
                "grid origin must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell_x(&self, i: usize) -> T {
        self.origin_x + lit::<T>(i as f64) * self.dx
    }

    #[inline]
    pub fn cell_z(&self, j: usize) -> T {
        self.origin_z + lit::<T>(j as f64) * self.dz_cell
    }

    /// Fractional cell coordinates of a world position.
    #[inline]
    pub fn to_index(&self, x: T, z: T) -> (T, T) {
        (
            (x - self.origin_x) / self.dx,
            (z - self.origin_z) / self.dz_cell,
        )
    }

    /// World position of fractional cell coordinates.
    #[inline]
    pub fn to_world(&self, fi: T, fj: T) -> (T, T) {
        (
            self.origin_x + fi * self.dx,
            self.origin_z + fj * self.dz_cell,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField<T> {
    pub geometry: GridGeometry<T>,
    pub vx: Vec<T>,
    pub vz: Vec<T>,
}

impl<T: Real> VelocityField<T> {
    pub fn zeros(geometry: GridGeometry<T>) -> Self {
        let n = geometry.len();
        Self {
            geometry,
            vx: vec![T::zero(); n],
            vz: vec![T::zero(); n],
        }
    }

    pub fn from_fn(geometry: GridGeometry<T>, mut f: impl FnMut(usize, usize) -> (T, T)) -> Self {
        let mut out = Self::zeros(geometry);
        for j in 0..geometry.nz {
            for i in 0..geometry.nx {
                let (a, b) = f(i, j);
                let k = geometry.index(i, j);
                out.vx[k] = a;
                out.vz[k] = b;
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> (T, T) {
        let k = self.geometry.index(i, j);
        (self.vx[k], self.vz[k])
    }

    pub fn is_finite(&self) -> bool {
        self.vx.iter().chain(&self.vz).all(|v| v.is_finite())
    }

    /// Largest absolute component over the grid.
    pub fn max_abs(&self) -> T {
        self.vx
            .iter()
            .chain(&self.vz)
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Euclidean norm over both components of every cell.
    pub fn l2_norm(&self) -> T {
        self.vx
            .iter()
            .chain(&self.vz)
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    /// Max-norm distance to another field on the same grid.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.vx
            .iter()
            .zip(&other.vx)
            .chain(self.vz.iter().zip(&other.vz))
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Snapshot as CSV rows `i,j,x,z,vx,vz`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        writeln!(w, "i,j,x,z,vx,vz")?;
        let g = &self.geometry;
        for j in 0..g.nz {
            for i in 0..g.nx {
                let (vx, vz) = self.get(i, j);
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    i,
                    j,
                    g.cell_x(i),
                    g.cell_z(j),
                    vx,
                    vz
                )?;
            }
        }
        Ok(())
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            geometry: self.geometry,
            vx: self.vx.iter().map(|&v| f(v)).collect(),
            vz: self.vz.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Physical constants of the medium and of the injection model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidParams<T> {
    /// Injection strength [m/s^2].
    pub strength: T,
    /// Gaussian width of the injection profile [m].
    pub sigma_inj: T,
    /// Downward wake transport speed [m/s].
    pub w_a: T,
    /// Diffusivity [m^2/s].
    pub kappa: T,
    /// Exponential decay rate [1/s].
    pub lambda_decay: T,
    /// Fluid density [kg/m^3].
    pub rho: T,
    /// Drag coefficient times reference area [m^2].
    pub c_d: T,
    /// Source thrust at hover [N].
    pub u_hover: T,
}

impl<T: Real> FluidParams<T> {
    pub fn nominal() -> Self {
        Self {
            strength: lit(100.0),
            sigma_inj: lit(0.25),
            w_a: lit(6.0),
            kappa: lit(0.3),
            lambda_decay: lit(0.8),
            rho: lit(1.225),
            c_d: lit(0.12),
            u_hover: lit(9.81),
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let positive = [
            ("strength", self.strength),
            ("sigma_inj", self.sigma_inj),
            ("w_a", self.w_a),
            ("rho", self.rho),
            ("c_d", self.c_d),
            ("u_hover", self.u_hover),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(FieldError::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [("kappa", self.kappa), ("lambda_decay", self.lambda_decay)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(FieldError::InvalidArgument(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Transport delay over a vertical separation.
    pub fn transport_delay(&self, dz_sep: T) -> T {
        dz_sep / self.w_a
    }
}

/// Actuation of one wake source at the current step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceActuation<T> {
    pub px: T,
    pub pz: T,
    pub theta: T,
    /// Thrust [N].
    pub u: T,
}

/// Adds the Gaussian momentum of one source to every cell.
pub fn inject_momentum<T: Real>(
    field: &VelocityField<T>,
    src: &SourceActuation<T>,
    params: &FluidParams<T>,
    dt: T,
) -> Result<VelocityField<T>, FieldError> {
    let mut out = field.clone();
    inject_in_place(&mut out, src, params, dt)?;
    Ok(out)
}

fn inject_in_place<T: Real>(
    field: &mut VelocityField<T>,
    src: &SourceActuation<T>,
    params: &FluidParams<T>,
    dt: T,
) -> Result<(), FieldError> {
    let finite = [src.px, src.pz, src.theta, src.u, dt]
        .iter()
        .all(|v| v.is_finite());
    if !finite || !field.is_finite() {
        return Err(FieldError::InvalidArgument(
            "non-finite injection input".into(),
        ));
    }
    if !(dt > T::zero()) {
        return Err(FieldError::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if src.u < T::zero() {
        return Err(FieldError::InvalidArgument(format!(
            "thrust must be non-negative, got {}",
            src.u
        )));
    }
    let amplitude = params.strength * (src.u / params.u_hover).sqrt() * dt;
    if amplitude == T::zero() {
        return Ok(());
    }
    let (dir_x, dir_z) = (src.theta.sin(), -src.theta.cos());
    let g = field.geometry;
    let inv_two_var = T::one() / (lit::<T>(2.0) * params.sigma_inj * params.sigma_inj);
    // The Gaussian is separable: exp(-(dx^2 + dz^2)/2s^2) = gx * gz.
    let gx: Vec<T> = (0..g.nx)
        .map(|i| {
            let d = g.cell_x(i) - src.px;
            (-d * d * inv_two_var).exp()
        })
        .collect();
    for j in 0..g.nz {
        let d = g.cell_z(j) - src.pz;
        let gz = (-d * d * inv_two_var).exp() * amplitude;
        if gz == T::zero() {
            continue;
        }
        let row = j * g.nx;
        for (i, &wx) in gx.iter().enumerate() {
            let w = wx * gz;
            field.vx[row + i] += w * dir_x;
            field.vz[row + i] += w * dir_z;
        }
    }
    Ok(())
}

/// Checks the vertical CFL bound `w_a * dt <= dz_cell`.
pub fn check_cfl<T: Real>(w_a: T, dt: T, dz_cell: T) -> Result<(), FieldError> {
    if w_a * dt > dz_cell || w_a < T::zero() {
        return Err(FieldError::Cfl {
            w_a: w_a.to_f64().unwrap_or(f64::NAN),
            dt: dt.to_f64().unwrap_or(f64::NAN),
            dz_cell: dz_cell.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// First-order upwind transport of both components toward -z.
///
/// The row above the top of the grid is treated as zero inflow.
pub fn advect_vertical<T: Real>(
    field: &VelocityField<T>,
    w_a: T,
    dt: T,
) -> Result<VelocityField<T>, FieldError> {
    let g = field.geometry;
    check_cfl(w_a, dt, g.dz_cell)?;
    let c = w_a * dt / g.dz_cell;
    if c == T::zero() {
        return Ok(field.clone());
    }
    let mut out = field.clone();
    for comp in [(&field.vx, &mut out.vx), (&field.vz, &mut out.vz)] {
        let (src, dst) = comp;
        for j in 0..g.nz {
            for i in 0..g.nx {
                let k = g.index(i, j);
                let above = if j + 1 < g.nz {
                    src[g.index(i, j + 1)]
                } else {
                    T::zero()
                };
                dst[k] = src[k] - c * (src[k] - above);
            }
        }
    }
    Ok(out)
}

/// Semi-Lagrangian horizontal advection by the field's own `vx`.
///
/// Each cell traces back to `i - vx * dt / dx` in its own row and takes the
/// linearly interpolated value there; backtraces off the grid clamp to the
/// boundary column. Both components are backtraced with the pre-step `vx`.
pub fn advect_horizontal<T: Real>(field: &VelocityField<T>, dt: T) -> VelocityField<T> {
    let g = field.geometry;
    let mut out = field.clone();
    let last = lit::<T>((g.nx - 1) as f64);
    let ratio = dt / g.dx;
    for j in 0..g.nz {
        let row = j * g.nx;
        for i in 0..g.nx {
            let vx = field.vx[row + i];
            if vx == T::zero() {
                continue;
            }
            let x_src = (lit::<T>(i as f64) - vx * ratio).max(T::zero()).min(last);
            let i0 = x_src.floor().to_usize().unwrap_or(0).min(g.nx - 2);
            let frac = x_src - lit(i0 as f64);
            let one = T::one() - frac;
            out.vx[row + i] = field.vx[row + i0] * one + field.vx[row + i0 + 1] * frac;
            out.vz[row + i] = field.vz[row + i0] * one + field.vz[row + i0 + 1] * frac;
        }
    }
    out
}

/// Normalized discrete Gaussian truncated at three standard deviations.
fn gaussian_kernel<T: Real>(sigma_cells: T) -> Vec<T> {
    if !(sigma_cells > T::zero()) {
        return vec![T::one()];
    }
    let radius = (lit::<T>(3.0) * sigma_cells).ceil().to_usize().unwrap_or(0);
    let inv = T::one() / (lit::<T>(2.0) * sigma_cells * sigma_cells);
    let mut k: Vec<T> = (0..=2 * radius)
        .map(|n| {
            let d = lit::<T>(n as f64) - lit(radius as f64);
            // Taps beyond 3 sigma are dropped.
            if d.abs() > lit::<T>(3.0) * sigma_cells {
                T::zero()
            } else {
                (-d * d * inv).exp()
            }
        })
        .collect();
    let total: T = k.iter().copied().sum();
    for w in &mut k {
        *w /= total;
    }
    k
}

fn convolve_rows<T: Real>(src: &[T], dst: &mut [T], nx: usize, nz: usize, kernel: &[T]) {
    let r = kernel.len() / 2;
    for j in 0..nz {
        let row = &src[j * nx..(j + 1) * nx];
        let out = &mut dst[j * nx..(j + 1) * nx];
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(nx - 1);
            let mut s = T::zero();
            for (n, &v) in row.iter().enumerate().take(hi + 1).skip(lo) {
                s += kernel[n + r - i] * v;
            }
            *o = s;
        }
    }
}

fn convolve_cols<T: Real>(src: &[T], dst: &mut [T], nx: usize, nz: usize, kernel: &[T]) {
    let r = kernel.len() / 2;
    for v in dst.iter_mut() {
        *v = T::zero();
    }
    for j in 0..nz {
        let lo = j.saturating_sub(r);
        let hi = (j + r).min(nz - 1);
        let out = j * nx;
        for n in lo..=hi {
            let w = kernel[n + r - j];
            let inp = &src[n * nx..(n + 1) * nx];
            for (o, &v) in dst[out..out + nx].iter_mut().zip(inp) {
                *o += w * v;
            }
        }
    }
}

/// Gaussian blur with standard deviation `sqrt(2 kappa dt)`, separable,
/// zero-padded at the boundary.
pub fn diffuse<T: Real>(
    field: &VelocityField<T>,
    kappa: T,
    dt: T,
) -> Result<VelocityField<T>, FieldError> {
    if !(kappa >= T::zero()) {
        return Err(FieldError::InvalidArgument(format!(
            "kappa must be non-negative, got {kappa}"
        )));
    }
    let g = field.geometry;
    let ell = (lit::<T>(2.0) * kappa * dt).sqrt();
    let kx = gaussian_kernel(ell / g.dx);
    let kz = gaussian_kernel(ell / g.dz_cell);
    if kx.len() == 1 && kz.len() == 1 {
        return Ok(field.clone());
    }
    let mut out = field.clone();
    let mut scratch = vec![T::zero(); g.len()];
    for (src, dst) in [(&field.vx, &mut out.vx), (&field.vz, &mut out.vz)] {
        convolve_rows(src, &mut scratch, g.nx, g.nz, &kx);
        convolve_cols(&scratch, dst, g.nx, g.nz, &kz);
    }
    Ok(out)
}

/// Multiplies every component by `exp(-lambda dt)`.
pub fn decay<T: Real>(field: &VelocityField<T>, lambda_decay: T, dt: T) -> VelocityField<T> {
    let f = (-lambda_decay * dt).exp();
    if f == T::one() {
        return field.clone();
    }
    field.map(|v| v * f)
}

/// One full step: inject, advect down, advect across, diffuse, decay.
pub fn step<T: Real>(
    field: &VelocityField<T>,
    sources: &[SourceActuation<T>],
    params: &FluidParams<T>,
    dt: T,
) -> Result<VelocityField<T>, FieldError> {
    check_cfl(params.w_a, dt, field.geometry.dz_cell)?;
    let mut f = field.clone();
    for src in sources {
        inject_in_place(&mut f, src, params, dt)?;
    }
    let f = advect_vertical(&f, params.w_a, dt)?;
    let f = advect_horizontal(&f, dt);
    let f = diffuse(&f, params.kappa, dt)?;
    Ok(decay(&f, params.lambda_decay, dt))
}

/// Bilinear interpolation between the four enclosing cell centers.
/// Positions outside the hull of cell centers read as still air.
pub fn sample_velocity<T: Real>(field: &VelocityField<T>, x: T, z: T) -> (T, T) {
    let g = &field.geometry;
    let (fi, fj) = g.to_index(x, z);
    // Snap round-off so that queries at cell centers return stored values exactly.
    let snap = |f: T| {
        let r = f.round();
        if (f - r).abs() <= T::epsilon() * lit(64.0) * r.abs().max(T::one()) {
            r
        } else {
            f
        }
    };
    let (fi, fj) = (snap(fi), snap(fj));
    let (max_i, max_j) = (lit::<T>((g.nx - 1) as f64), lit::<T>((g.nz - 1) as f64));
    if !(fi >= T::zero() && fi <= max_i && fj >= T::zero() && fj <= max_j) {
        return (T::zero(), T::zero());
    }
    let i0 = fi.floor().to_usize().unwrap_or(0).min(g.nx - 2);
    let j0 = fj.floor().to_usize().unwrap_or(0).min(g.nz - 2);
    let (a, b) = (fi - lit(i0 as f64), fj - lit(j0 as f64));
    let corner = |di: usize, dj: usize| field.get(i0 + di, j0 + dj);
    let w = [
        ((T::one() - a) * (T::one() - b), corner(0, 0)),
        (a * (T::one() - b), corner(1, 0)),
        ((T::one() - a) * b, corner(0, 1)),
        (a * b, corner(1, 1)),
    ];
    w.iter()
        .fold((T::zero(), T::zero()), |(sx, sz), &(wt, (vx, vz))| {
            if wt == T::zero() {
                (sx, sz)
            } else {
                (sx + wt * vx, sz + wt * vz)
            }
        })
}

/// Quadratic drag `0.5 rho c_d v |v|`.
pub fn drag_force<T: Real>(v: (T, T), rho: T, c_d: T) -> (T, T) {
    let speed = (v.0 * v.0 + v.1 * v.1).sqrt();
    let k = lit::<T>(0.5) * rho * c_d * speed;
    (k * v.0, k * v.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> GridGeometry<f64> {
        GridGeometry::new(16, 12, 0.1, 0.1, -0.75, 0.05).unwrap()
    }

    fn impulse(g: GridGeometry<f64>, i: usize, j: usize) -> VelocityField<f64> {
        VelocityField::from_fn(g, |a, b| {
            if (a, b) == (i, j) {
                (1.0, -2.0)
            } else {
                (0.0, 0.0)
            }
        })
    }

    #[test]
    fn geometry_rejects_tiny_grids() {
        assert!(GridGeometry::new(3, 10, 0.1, 0.1, 0.0, 0.0).is_err());
        assert!(GridGeometry::new(10, 10, 0.0, 0.1, 0.0, 0.0).is_err());
        let g = GridGeometry::<f64>::nominal();
        g.validate().unwrap();
        let (fi, fj) = g.to_index(g.cell_x(7), g.cell_z(40));
        assert!((fi - 7.0).abs() < 1e-12 && (fj - 40.0).abs() < 1e-12);
        let (x, z) = g.to_world(fi, fj);
        assert!((x - g.cell_x(7)).abs() < 1e-12 && (z - g.cell_z(40)).abs() < 1e-12);
    }

    #[test]
    fn nominal_params_are_valid() {
        FluidParams::<f64>::nominal().validate().unwrap();
        let mut p = FluidParams::<f64>::nominal();
        p.w_a = -1.0;
        assert!(p.validate().is_err());
        assert!((FluidParams::<f64>::nominal().transport_delay(2.3) - 0.38333).abs() < 1e-4);
    }

    #[test]
    fn zero_thrust_injects_nothing() {
        let f = VelocityField::zeros(small_grid());
        let src = SourceActuation {
            px: 0.0,
            pz: 0.5,
            theta: 0.3,
            u: 0.0,
        };
        let out = inject_momentum(&f, &src, &FluidParams::nominal(), 0.01).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn hover_injection_at_source_cell() {
        let g = small_grid();
        let p = FluidParams::<f64>::nominal();
        let f = VelocityField::zeros(g);
        let (px, pz) = (g.cell_x(5), g.cell_z(4));
        let src = SourceActuation {
            px,
            pz,
            theta: 0.0,
            u: p.u_hover,
        };
        let out = inject_momentum(&f, &src, &p, 0.01).unwrap();
        let (vx, vz) = out.get(5, 4);
        assert!(vx.abs() < 1e-15);
        assert!((vz + p.strength * 0.01).abs() < 1e-12);

        let tilted = SourceActuation {
            theta: std::f64::consts::FRAC_PI_2,
            ..src
        };
        let out = inject_momentum(&f, &tilted, &p, 0.01).unwrap();
        let (vx, vz) = out.get(5, 4);
        assert!((vx - p.strength * 0.01).abs() < 1e-12);
        assert!(vz.abs() < 1e-15);
        // input untouched
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn injection_profile_is_gaussian_in_distance() {
        let g = small_grid();
        let p = FluidParams::<f64>::nominal();
        let src = SourceActuation {
            px: 0.013,
            pz: 0.61,
            theta: 0.0,
            u: 2.0 * p.u_hover,
        };
        let out = inject_momentum(&VelocityField::zeros(g), &src, &p, 0.02).unwrap();
        for (i, j) in [(0, 0), (3, 7), (9, 2), (15, 11)] {
            let r2 = (g.cell_x(i) - src.px).powi(2) + (g.cell_z(j) - src.pz).powi(2);
            let want = -p.strength * 2f64.sqrt() * (-r2 / (2.0 * p.sigma_inj.powi(2))).exp() * 0.02;
            assert!((out.get(i, j).1 - want).abs() < 1e-14);
        }
    }

    #[test]
    fn injection_rejects_non_finite() {
        let f = VelocityField::zeros(small_grid());
        let src = SourceActuation {
            px: f64::NAN,
            pz: 0.0,
            theta: 0.0,
            u: 1.0,
        };
        assert!(matches!(
            inject_momentum(&f, &src, &FluidParams::nominal(), 0.01),
            Err(FieldError::InvalidArgument(_))
        ));
    }

    #[test]
    fn vertical_advection_cfl_check() {
        let f = VelocityField::zeros(small_grid());
        let err = advect_vertical(&f, 20.0, 0.01).unwrap_err();
        match err {
            FieldError::Cfl { w_a, dt, dz_cell } => {
                assert_eq!((w_a, dt, dz_cell), (20.0, 0.01, 0.1));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn vertical_advection_uniform_interior_identity() {
        let g = small_grid();
        let f = VelocityField::from_fn(g, |_, _| (0.7, -1.3));
        let out = advect_vertical(&f, 6.0, 0.01).unwrap();
        for j in 0..g.nz - 1 {
            for i in 0..g.nx {
                assert_eq!(out.get(i, j), (0.7, -1.3));
            }
        }
        // Zero inflow at the top.
        assert!(out.get(3, g.nz - 1).1 > -1.3);
        assert_eq!(advect_vertical(&f, 0.0, 0.01).unwrap(), f);
    }

    #[test]
    fn vertical_shift_at_cfl_one() {
        let g = small_grid();
        let mut f = impulse(g, 6, 9);
        for n in 1..=9 {
            f = advect_vertical(&f, 10.0, 0.01).unwrap();
            let want = impulse(g, 6, 9 - n);
            assert_eq!(f, want, "after {n} steps");
        }
        f = advect_vertical(&f, 10.0, 0.01).unwrap();
        assert_eq!(f.max_abs(), 0.0, "impulse leaves through the bottom");
    }

    #[test]
    fn horizontal_advection_integer_shift() {
        let g = small_grid();
        let c = 5.0; // c * dt = dx with dt = 0.02
        let f = VelocityField::from_fn(g, |i, j| (c, (i * 3 + j) as f64));
        let out = advect_horizontal(&f, 0.02);
        for j in 0..g.nz {
            for i in 0..g.nx {
                let want = (i.max(1) - 1) * 3 + j;
                assert!((out.get(i, j).1 - want as f64).abs() < 1e-12);
                assert!((out.get(i, j).0 - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn horizontal_advection_half_cell() {
        let g = small_grid();
        let f = VelocityField::from_fn(g, |i, j| (5.0, ((i * i) as f64) - j as f64));
        let out = advect_horizontal(&f, 0.01);
        for j in 0..g.nz {
            for i in 1..g.nx {
                let want = 0.5 * (f.get(i, j).1 + f.get(i - 1, j).1);
                assert!((out.get(i, j).1 - want).abs() < 1e-12);
            }
        }
        let still = VelocityField::from_fn(g, |i, j| (0.0, (i + j) as f64));
        assert_eq!(advect_horizontal(&still, 0.01), still);
    }

    #[test]
    fn kernel_degenerates_without_diffusivity() {
        let g = small_grid();
        let f = impulse(g, 4, 4);
        assert_eq!(diffuse(&f, 0.0, 0.01).unwrap(), f);
        assert!(diffuse(&f, -1.0, 0.01).is_err());
        let k = gaussian_kernel(1.3f64);
        assert_eq!(k.len(), 2 * 4 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decay_closed_form() {
        let g = small_grid();
        let f = VelocityField::from_fn(g, |_, _| (1.0, 1.0));
        let out = decay(&f, 0.5, 0.01);
        assert!((out.get(0, 0).0 - 0.995_012_479_192_682_3).abs() < 1e-15);
        assert_eq!(decay(&f, 0.0, 0.01), f);
        let twice = decay(&decay(&f, 0.5, 0.01), 0.5, 0.01);
        let once = decay(&f, 0.5, 0.02);
        assert!(twice.max_abs_diff(&once) < 1e-15);
    }

    #[test]
    fn empty_step_stays_zero() {
        let f = VelocityField::zeros(GridGeometry::<f64>::nominal());
        let out = step(&f, &[], &FluidParams::nominal(), 0.01).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn sampling_contract() {
        let g = small_grid();
        let f = VelocityField::from_fn(g, |i, j| (i as f64, (j * j) as f64));
        assert_eq!(sample_velocity(&f, g.cell_x(3), g.cell_z(5)), (3.0, 25.0));
        let mid = sample_velocity(&f, 0.5 * (g.cell_x(3) + g.cell_x(4)), g.cell_z(5));
        assert!((mid.0 - 3.5).abs() < 1e-12 && (mid.1 - 25.0).abs() < 1e-12);
        assert_eq!(sample_velocity(&f, -10.0, 0.3), (0.0, 0.0));
        assert_eq!(sample_velocity(&f, 0.0, 100.0), (0.0, 0.0));
        // last node is inside the hull
        let corner = sample_velocity(&f, g.cell_x(g.nx - 1), g.cell_z(g.nz - 1));
        assert!((corner.0 - 15.0).abs() < 1e-12 && (corner.1 - 121.0).abs() < 1e-9);
    }

    #[test]
    fn drag_law() {
        assert_eq!(drag_force((0.0, 0.0), 1.225, 1.0), (0.0, 0.0));
        let f: (f64, f64) = drag_force((0.0, -1.0), 1.225, 1.0);
        assert!(f.0 == 0.0 && (f.1 + 0.6125).abs() < 1e-15);
        let a: (f64, f64) = drag_force((0.3, -0.4), 1.225, 0.12);
        let b: (f64, f64) = drag_force((0.6, -0.8), 1.225, 0.12);
        assert!((b.0 - 4.0 * a.0).abs() < 1e-15 && (b.1 - 4.0 * a.1).abs() < 1e-15);
    }

    #[test]
    fn csv_snapshot_has_header_and_rows() {
        let g = small_grid();
        let f = VelocityField::from_fn(g, |i, _| (i as f64, 0.0));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("i,j,x,z,vx,vz"));
        assert_eq!(lines.count(), g.len());
    }

    #[test]
    fn works_in_single_precision() {
        let g = GridGeometry::<f32>::nominal();
        let src = SourceActuation {
            px: 0.0f32,
            pz: 6.0,
            theta: 0.0,
            u: 9.81,
        };
        let mut f = VelocityField::zeros(g);
        for _ in 0..10 {
            f = step(&f, &[src], &FluidParams::nominal(), 0.01).unwrap();
        }
        assert!(f.is_finite() && f.max_abs() > 0.0);
    }
}

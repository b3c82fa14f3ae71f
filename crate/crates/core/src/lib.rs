//! Numeric kernels for the wake-prediction benchmark.
//!
//! Everything here is generic over a [`Real`] scalar (`f32` or `f64`); the
//! rest of the workspace runs in double precision through the aliases below.

pub mod autodiff;
pub mod field;
pub mod linalg;
pub mod scalar;
pub mod vehicle;

pub use scalar::{lit, to_f64, Real};

pub type Field = field::VelocityField<f64>;
pub type Grid = field::GridGeometry<f64>;
pub type Fluid = field::FluidParams<f64>;
pub type Source = field::SourceActuation<f64>;
pub type Vehicle = vehicle::VehicleParams<f64>;
pub type State = vehicle::VehicleState<f64>;
pub type Input = vehicle::ControlInput<f64>;
pub type Gain = vehicle::LqrGain<f64>;
pub type Matrix = linalg::Mat<f64>;
pub type Tensor = autodiff::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;

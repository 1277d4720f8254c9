//! Numerical laboratory for time-dependent weighted graphs.
//!
//! The crate instantiates a one-parameter family of finite metric measure
//! spaces `(X, d_t, m_t)`, solves the associated forward, adjoint and dual
//! heat flows, computes exact Kantorovich distances, and checks the analytic
//! inequalities that characterize super-Ricci flows: gradient estimates,
//! `L^p` transport estimates, the pointwise dynamic Bochner inequality,
//! entropy convexity along displacement geodesics, and pathwise contraction
//! of coupled backward random walks.
//!
//! All core math is generic over the scalar type (`f32` or `f64`) through
//! [`Scalar`]; concrete `f64` aliases are exported at the crate root.

pub mod error;
pub mod flows;
pub mod heat;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod space;
pub mod stochastic;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use space::{AssumptionReport, DynamicSpace, Field, Measure};

/// `f64` instantiations of the core types.
pub type DynamicSpace64 = space::DynamicSpace<f64>;
pub type Field64 = space::Field<f64>;
pub type Measure64 = space::Measure<f64>;
pub type Propagator64 = heat::Propagator<f64>;
pub type HeatKernel64 = heat::HeatKernel<f64>;
pub type TransportPlan64 = transport::TransportPlan<f64>;
pub type CheckReport64 = verify::CheckReport<f64>;
pub type PathEnsemble64 = stochastic::PathEnsemble<f64>;

/// `f32` instantiations, for quick low-precision experiments.
pub type DynamicSpace32 = space::DynamicSpace<f32>;
pub type Field32 = space::Field<f32>;
pub type Measure32 = space::Measure<f32>;

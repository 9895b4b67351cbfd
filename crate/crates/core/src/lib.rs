//! NFFT-accelerated additive Gaussian process regression.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.

pub mod aafn;
pub mod bounds;
pub mod data;
pub mod error;
pub mod fastsum;
pub mod grouping;
pub mod kernels;
pub mod krylov;
pub mod linalg;
pub mod scalar;
pub mod streams;
pub mod synthetic;
pub mod trainer;
pub mod transform;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Points = data::PointSet<f64>;
pub type Points32 = data::PointSet<f32>;
pub type Params = kernels::HyperParams<f64>;
pub type Params32 = kernels::HyperParams<f32>;
pub type Spec = kernels::KernelSpec<f64>;
pub type Spec32 = kernels::KernelSpec<f32>;
pub type Engine = fastsum::AdditiveMatvecEngine<f64>;
pub type Engine32 = fastsum::AdditiveMatvecEngine<f32>;
pub type Precond = aafn::AafnPrecond<f64>;
pub type Precond32 = aafn::AafnPrecond<f32>;
pub type Plan = transform::FourierPlan<f64>;
pub type Plan32 = transform::FourierPlan<f32>;
pub type Prediction = trainer::Prediction<f64>;
pub type Dataset = synthetic::Dataset<f64>;

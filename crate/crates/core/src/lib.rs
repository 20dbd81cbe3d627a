//! Design and analysis toolkit for Fabry-Perot ion-cavity interfaces used as
//! single-photon sources.
//!
//! The numerical core is written against the [`Scalar`] trait so that every
//! model runs in `f32` or `f64`; the aliases at the crate root fix `f64`,
//! which is what the optimizers and the command-line front end use.

// `!(x > 0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod losses;
pub mod optimizer;
pub mod performance;
pub mod quadrature;
pub mod scalar;
pub mod vstirap;

pub use error::{CavityError, Result};
pub use scalar::Scalar;

pub type Geometry = geometry::CavityGeometry<f64>;
pub type Tilt = geometry::Misalignment<f64>;
pub type Mode = geometry::EffectiveMode<f64>;
pub type Atom = geometry::AtomicSystem<f64>;
pub type Budget = losses::LossBudget<f64>;
pub type Rates = losses::CavityRates<f64>;
pub type Point = performance::PerformancePoint<f64>;
pub type Network = performance::NetworkBudget<f64>;
pub type Inputs = optimizer::DesignInputs<f64>;
pub type Evaluation = optimizer::DesignEvaluation<f64>;
pub type Constraints = optimizer::DesignConstraints<f64>;
pub type Design = optimizer::OptimalDesign<f64>;
pub type LambdaSystem = vstirap::LambdaCavitySystem<f64>;
pub type Pulse = vstirap::PulseSpec<f64>;

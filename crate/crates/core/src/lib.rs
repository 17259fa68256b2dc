//! Class-incremental learning laboratory.
//!
//! A small feed-forward classifier learns a sequence of class groups. Each
//! step trains on new-class data plus a fixed-budget exemplar memory, with
//! knowledge distillation from the previous step's frozen model. The
//! distillation term can be regularized by the student's entropy, and
//! mini-batches can be thinned of new-class samples by DropOut Sampling
//! (random early, highest cross-entropy late). The [`metrics`] module scores
//! runs with accuracy, average task accuracy, forgetting, intransigence and
//! the per-sample Sample Dynamics measures.
//!
//! Numeric code is generic over [`Scalar`] (`f64` and `f32`); the aliases
//! below fix the working precision used by the experiment harness.

pub mod error;
pub mod harness;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod nncore;
pub mod sampling;
pub mod scalar;
pub mod seed;
pub mod tasks;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = nncore::ClassifierModel<f64>;
pub type Model32 = nncore::ClassifierModel<f32>;
pub type Teacher = nncore::TeacherSnapshot<f64>;
pub type Optimizer = nncore::OptimizerState<f64>;
pub type Distribution = losses::ProbabilityDistribution<f64>;
pub type Objective = losses::ObjectiveConfig<f64>;
pub type Breakdown = losses::LossBreakdown<f64>;
pub type DataSample = sampling::Sample<f64>;
pub type Memory = sampling::ExemplarMemory<f64>;

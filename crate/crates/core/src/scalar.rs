//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that does arithmetic on features, parameters or probabilities is
//! generic over [`Scalar`]. `f64` is the working precision of the experiment
//! harness; `f32` is supported for the model and loss code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type usable by the model, losses and samplers.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Floor applied to probabilities before taking a logarithm.
    fn log_floor() -> Self;

    /// Lossy conversion from `f64`; every `f64` maps to some value of `Self`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f64 {
    fn log_floor() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn log_floor() -> Self {
        1e-12
    }
}

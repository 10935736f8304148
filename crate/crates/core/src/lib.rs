//! Reference CPU implementations of adaptive shape convolution (ASC), large
//! kernel shift convolution (LKSC), the C2f block variants built on them,
//! parameter/MAC accounting and mAP@50 evaluation.
//!
//! Every operator is a pure function over dense NCHW [`Tensor4`] values and
//! is shipped with analytic gradients where gradients make sense. The
//! [`oracle`] module holds deliberately naive re-derivations used to check the
//! fast paths.

pub mod asc;
pub mod c2f;
pub mod conv;
pub mod cost;
mod error;
pub mod gradcheck;
pub mod lksc;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod sample;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DType, Dims4, Real, Tensor4};

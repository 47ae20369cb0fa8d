//! Desk-scale numerical laboratory for class-imbalanced segmentation training.
//!
//! The crate provides the pieces of a language-guided semi-supervised
//! domain-adaptation pipeline at a size where everything is checkable:
//! a dense f64 tensor kernel ([`tensor`]), training objectives with
//! hand-derived gradients ([`losses`]), dense language-guidance attention
//! fusion ([`dlg`]), a toy encoder/decoder model ([`model`]), a
//! student-teacher training loop with EMA ([`trainer`]), a deterministic
//! long-tailed data generator ([`synthdata`]), segmentation metrics
//! ([`metrics`]), and the independent verification machinery that keeps
//! all of the above honest ([`oracle`]).
//!
//! Every analytic gradient in the crate is validated against central
//! finite differences, and every vectorized loss against a scalar-loop
//! re-implementation. The crate is `no_std` (with `alloc`); IO, file
//! formats and the CLI live in the companion `dyce-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dlg;
pub mod error;
pub(crate) mod fmath;
pub mod grid;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod synthdata;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;

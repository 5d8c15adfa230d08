//! Compositional finite abstractions of interconnected discrete-time control systems.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstraction;
pub mod certificate;
pub mod composition;
pub mod error;
pub mod kfn;
pub mod linalg;
pub mod refinement;
pub mod sampling;
pub mod system;

pub use error::{Error, Result};

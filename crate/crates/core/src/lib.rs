//! Recovery of sparse spike trains from a contiguous band of Fourier samples
//! by superset selection and pruning, with a matrix pencil baseline and a
//! seeded experiment harness.

pub mod error;
pub mod experiments;
pub mod fourier;
pub mod hankel;
pub mod linalg;
pub mod pencil;
pub mod pruning;

pub use error::{Error, Result};

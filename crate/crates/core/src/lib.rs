pub mod compidx;
pub mod error;
pub mod hamgen;
pub mod lagrangian;
pub mod lidskii;
pub mod maslov;
pub mod matlib;
pub mod oscnum;
pub mod pathio;
pub mod suites;

pub use error::{Error, Result};
pub use matlib::{ComplexMatrix, RealMatrix, Tolerances};

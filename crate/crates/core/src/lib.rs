pub mod dgp;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod inference;
mod format;
pub mod linalg;
pub mod model;
pub mod spectral;

#[cfg(test)]
mod test_oracles;

pub use error::{DyadError, ErrorClass, Result};
pub use linalg::SymMatrix;
pub use model::{DyadicDesign, OutcomeMatrix, ParamVector, ResidualMatrix};
pub use spectral::SpectralSummary;

//! Block-structured matrices and the shared linear-algebra kernels.

mod block;
mod factor;
mod matrix;
mod power;
pub mod vector;

pub use block::BlockKind;
pub use factor::{factorize, BandFactorization, SolvePath, SINGULARITY_THRESHOLD};
pub use matrix::{StructuredMatrix, DENSE_LIMIT};
pub use power::spectral_radius_estimate;

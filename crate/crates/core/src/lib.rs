//! Waveform relaxation solvers for linear differential-algebraic systems
//!
//! ```text
//!     A y'(t) + B y(t) = f(t),   y(t0) = y0,   A singular
//! ```
//!
//! discretized by implicit Euler. The crate provides
//!
//! - [`linalg`]: block-structured matrices with banded, block-tridiagonal and
//!   diagonal solve paths plus a power-iteration radius estimate,
//! - [`dae`]: the problem record and a manufactured `[cos t, sin t, t, ...]` test case,
//! - [`splittings`]: the stage splittings `A = M_A - N_A`, `B = M_1 - N_1`,
//!   `M_1 = M_2 - N_2`, `M_2 = M_3 - N_3` and the partition-of-unity weights,
//! - [`stages`]: one-, two- and three-stage waveform relaxation (stepwise and
//!   windowed) and the direct implicit-Euler reference,
//! - [`multisplit`]: Jacobi and Gauss-Seidel multisplitting with two
//!   overlapping subproblems and the mixing guard,
//! - [`harness`]: error norms, experiment configuration, method comparison and CSV output.

pub mod dae;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod multisplit;
pub mod splittings;
pub mod stages;

pub use error::{Error, Result};

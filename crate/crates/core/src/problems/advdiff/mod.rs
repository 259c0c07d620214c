//! Steady advection-diffusion on `(0, 1)` with Robin boundaries, and the
//! regularized least-squares problem of recovering `(κ, v)` from full-field
//! temperature data.

mod inverse;
mod model;
mod tridiag;

pub use inverse::{synthesize_observations, InverseProblem, InverseProblemConfig};
pub use model::{AdvDiffModel, Coefficients, SOURCE_SHARPNESS};
pub use tridiag::{Tridiagonal, TridiagonalLu};

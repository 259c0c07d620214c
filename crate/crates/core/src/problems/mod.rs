//! Built-in problems: three closed-form scalar problems and the
//! advection-diffusion inverse problem.

pub mod advdiff;
mod cubic;
mod logistic;
mod quadratic;

pub use advdiff::{AdvDiffModel, InverseProblem, InverseProblemConfig};
pub use cubic::CubicIllustration;
pub use logistic::Logistic1D;
pub use quadratic::Quadratic;

//! Propagating parameter uncertainty to the minimizer of `J(m, θ)` by
//! marching the post-optimality sensitivity ODE
//!
//! ```text
//! dm*/dt = −H(m*, θ(t))⁻¹ B(m*, θ(t)) (θ̃ − θ̄),   θ(t) = θ̄ + t(θ̃ − θ̄),
//! ```
//!
//! from the nominal minimizer at `t = 0` to `t = 1`, where `H = ∂²J/∂m²` and
//! `B = ∂²J/∂m∂θ`. One nominal optimization then serves every parameter
//! sample, and a Newton re-solve at each sample acts as the reference.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod marching;
pub mod newton;
pub mod problem;
pub mod problems;
pub mod sensitivity;
pub mod uq;

pub use error::{Error, Result};
pub use marching::{march, march_error_vs_oracle, MarchConfig, MarchStatus, Scheme, Trajectory};
pub use newton::{newton_solve, reference_distribution, solve_nominal, NewtonConfig, SolveResult};
pub use problem::derivatives::{check_derivatives, DerivativeCheckReport};
pub use problem::{Basin, DecisionVector, ParameterBox, ParameterVector, Problem};
pub use sensitivity::{ivp_rhs, post_optimality_apply, sensitivity_operator, ParameterLine, SensitivityApply};

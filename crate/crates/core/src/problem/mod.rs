//! Parameterized optimization problems `min_m J(m, θ)` and the types shared
//! by every stage of the pipeline.
//!
//! A [`Problem`] exposes the objective together with its gradient `g`,
//! Hessian `H = ∂²J/∂m²` and mixed second derivative `B = ∂²J/∂m∂θ`. How the
//! second derivatives are produced (closed form or differencing an exact
//! gradient) is up to the implementation; [`derivatives`] provides the
//! finite-difference machinery and the consistency checks.

pub mod derivatives;
mod parameter_box;

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parameter_box::{sample_stream, ParameterBox};

macro_rules! finite_vector {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
        pub struct $name(DVector<f64>);

        impl $name {
            /// Wraps `values`, rejecting empty or non-finite input.
            pub fn new(values: Vec<f64>) -> Result<Self> {
                Self::from_vector(DVector::from_vec(values))
            }

            pub fn from_slice(values: &[f64]) -> Result<Self> {
                Self::from_vector(DVector::from_column_slice(values))
            }

            pub fn from_vector(values: DVector<f64>) -> Result<Self> {
                if values.is_empty() {
                    return Err(Error::InvalidInput(concat!($what, " must not be empty").into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite($what));
                }
                Ok(Self(values))
            }

            pub fn zeros(len: usize) -> Self {
                Self(DVector::zeros(len.max(1)))
            }

            pub fn as_vector(&self) -> &DVector<f64> {
                &self.0
            }

            pub fn into_inner(self) -> DVector<f64> {
                self.0
            }

            pub fn to_vec(&self) -> Vec<f64> {
                self.0.as_slice().to_vec()
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;

            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl TryFrom<Vec<f64>> for $name {
            type Error = Error;

            fn try_from(values: Vec<f64>) -> Result<Self> {
                Self::new(values)
            }
        }

        impl From<$name> for Vec<f64> {
            fn from(v: $name) -> Vec<f64> {
                v.0.as_slice().to_vec()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "[")?;
                for (i, v) in self.0.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
        }
    };
}

finite_vector!(
    /// The optimization variable `m ∈ ℝᵈ`.
    DecisionVector,
    "decision vector"
);

finite_vector!(
    /// The problem parameters `θ ∈ ℝᵖ`.
    ParameterVector,
    "parameter vector"
);

/// An open axis-aligned box in decision space inside which the minimizer is
/// assumed unique. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basin {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Basin {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidInput(format!(
                "basin bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().chain(&upper).any(|v| v.is_nan()) {
            return Err(Error::NonFinite("basin bounds"));
        }
        if let Some(k) = (0..lower.len()).find(|&k| lower[k] >= upper[k]) {
            return Err(Error::InvalidInput(format!(
                "basin coordinate {} is empty: ({}, {})",
                k + 1,
                lower[k],
                upper[k]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Strict membership in the open box.
    pub fn contains(&self, m: &DVector<f64>) -> bool {
        m.len() == self.lower.len()
            && m.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x > lo && x < hi)
    }
}

/// Evaluation contract for a parameterized objective `J(m, θ)`.
///
/// Implementations must be safe to evaluate concurrently from several
/// threads; none of the built-in problems hold mutable state.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    /// Dimension `d` of the decision variable.
    fn decision_dim(&self) -> usize;

    /// Dimension `p` of the parameter vector.
    fn param_dim(&self) -> usize;

    fn objective(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<f64>;

    /// `∂J/∂m`, length `d`.
    fn gradient(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>>;

    /// `∂²J/∂m²`, `d × d` and symmetric.
    fn hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// `∂²J/∂m∂θ`, `d × p`.
    fn mixed_hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// `(H, B)` together; override when the two share work.
    fn second_derivatives(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((self.hessian(m, theta)?, self.mixed_hessian(m, theta)?))
    }

    fn basin_hint(&self) -> Option<&Basin> {
        None
    }

    /// Rejects parameter values the problem is not defined for.
    fn validate_parameters(&self, theta: &DVector<f64>) -> Result<()> {
        check_len("parameter vector", self.param_dim(), theta.len())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, actual })
    }
}

/// Checks that `m` and `theta` have the dimensions `problem` expects.
pub(crate) fn check_dims<P: Problem + ?Sized>(problem: &P, m: &DVector<f64>, theta: &DVector<f64>) -> Result<()> {
    check_len("decision vector", problem.decision_dim(), m.len())?;
    check_len("parameter vector", problem.param_dim(), theta.len())
}

impl<P: Problem + ?Sized> Problem for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn decision_dim(&self) -> usize {
        (**self).decision_dim()
    }
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn objective(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        (**self).objective(m, theta)
    }
    fn gradient(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).gradient(m, theta)
    }
    fn hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).hessian(m, theta)
    }
    fn mixed_hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).mixed_hessian(m, theta)
    }
    fn second_derivatives(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        (**self).second_derivatives(m, theta)
    }
    fn basin_hint(&self) -> Option<&Basin> {
        (**self).basin_hint()
    }
    fn validate_parameters(&self, theta: &DVector<f64>) -> Result<()> {
        (**self).validate_parameters(theta)
    }
}

impl<P: Problem + ?Sized> Problem for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn decision_dim(&self) -> usize {
        (**self).decision_dim()
    }
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn objective(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        (**self).objective(m, theta)
    }
    fn gradient(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).gradient(m, theta)
    }
    fn hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).hessian(m, theta)
    }
    fn mixed_hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).mixed_hessian(m, theta)
    }
    fn second_derivatives(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        (**self).second_derivatives(m, theta)
    }
    fn basin_hint(&self) -> Option<&Basin> {
        (**self).basin_hint()
    }
    fn validate_parameters(&self, theta: &DVector<f64>) -> Result<()> {
        (**self).validate_parameters(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_reject_nonfinite_and_empty() {
        assert!(DecisionVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParameterVector::new(vec![]).is_err());
        assert_eq!(DecisionVector::new(vec![0.5]).unwrap().len(), 1);
    }

    #[test]
    fn vector_serde_is_a_plain_array() {
        let m = DecisionVector::new(vec![0.25, -1.5]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "[0.25,-1.5]");
        let back: DecisionVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<DecisionVector>("[]").is_err());
    }

    #[test]
    fn basin_is_open() {
        let basin = Basin::new(vec![0.5], vec![1.0]).unwrap();
        assert!(basin.contains(&DVector::from_element(1, 0.75)));
        assert!(!basin.contains(&DVector::from_element(1, 0.5)));
        assert!(!basin.contains(&DVector::from_element(1, 1.0)));
        assert!(Basin::new(vec![1.0], vec![0.5]).is_err());
        let half_line = Basin::new(vec![0.0], vec![f64::INFINITY]).unwrap();
        assert!(half_line.contains(&DVector::from_element(1, 1e300)));
    }
}

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::problem::{check_dims, Problem};

/// `J(m, θ) = ½(m − θ₁)²`, whose minimizer is `θ₁` itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn decision_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn objective(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        check_dims(self, m, theta)?;
        Ok(0.5 * (m[0] - theta[0]).powi(2))
    }

    fn gradient(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dims(self, m, theta)?;
        Ok(DVector::from_element(1, m[0] - theta[0]))
    }

    fn hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dims(self, m, theta)?;
        Ok(DMatrix::from_element(1, 1, 1.0))
    }

    fn mixed_hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dims(self, m, theta)?;
        Ok(DMatrix::from_element(1, 1, -1.0))
    }
}

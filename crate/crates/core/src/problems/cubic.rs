use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{check_dims, Basin, ParameterBox, Problem};

/// The double-well `J` with `J′(m) = (m − θ₁)(m − ½)(m − θ₂)`.
///
/// For `θ₁ < ½ < θ₂` it has local minima at `θ₁` and `θ₂`; the basin hint
/// `U₀ = (½, 1)` selects the one at `θ₂`.
#[derive(Debug, Clone)]
pub struct CubicIllustration {
    basin: Basin,
}

impl Default for CubicIllustration {
    fn default() -> Self {
        Self {
            basin: Basin::new(vec![0.5], vec![1.0]).expect("valid basin"),
        }
    }
}

impl CubicIllustration {
    /// Requires every `θ` in the box to satisfy `θ₁ < ½ < θ₂`.
    pub fn for_box(parameters: &ParameterBox) -> Result<Self> {
        if parameters.dim() != 2 {
            return Err(Error::DimensionMismatch {
                what: "cubic parameter box",
                expected: 2,
                actual: parameters.dim(),
            });
        }
        let (lower, upper) = (parameters.lower(), parameters.upper());
        if !(upper[0] < 0.5 && lower[1] > 0.5) {
            return Err(Error::InvalidInput(format!(
                "cubic problem needs theta_1 < 0.5 < theta_2 on the whole box, got theta_1 <= {} and theta_2 >= {}",
                upper[0], lower[1]
            )));
        }
        Ok(Self::default())
    }

    fn coefficients(theta: &DVector<f64>) -> (f64, f64, f64) {
        let (t1, t2) = (theta[0], theta[1]);
        // J' = m³ − s m² + q m − r
        let s = t1 + t2 + 0.5;
        let q = t1 * t2 + 0.5 * (t1 + t2);
        let r = 0.5 * t1 * t2;
        (s, q, r)
    }
}

impl Problem for CubicIllustration {
    fn name(&self) -> &str {
        "cubic"
    }

    fn decision_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn objective(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        check_dims(self, m, theta)?;
        let (s, q, r) = Self::coefficients(theta);
        let x = m[0];
        Ok(x.powi(4) / 4.0 - s * x.powi(3) / 3.0 + q * x * x / 2.0 - r * x)
    }

    fn gradient(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dims(self, m, theta)?;
        let x = m[0];
        Ok(DVector::from_element(1, (x - theta[0]) * (x - 0.5) * (x - theta[1])))
    }

    fn hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dims(self, m, theta)?;
        let (s, q, _) = Self::coefficients(theta);
        let x = m[0];
        Ok(DMatrix::from_element(1, 1, 3.0 * x * x - 2.0 * s * x + q))
    }

    fn mixed_hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dims(self, m, theta)?;
        let x = m[0];
        Ok(DMatrix::from_row_slice(
            1,
            2,
            &[-(x - 0.5) * (x - theta[1]), -(x - theta[0]) * (x - 0.5)],
        ))
    }

    fn basin_hint(&self) -> Option<&Basin> {
        Some(&self.basin)
    }

    fn validate_parameters(&self, theta: &DVector<f64>) -> Result<()> {
        check_dims(self, &DVector::zeros(1), theta)?;
        if theta[0] < 0.5 && 0.5 < theta[1] {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "cubic problem needs theta_1 < 0.5 < theta_2, got ({}, {})",
                theta[0], theta[1]
            )))
        }
    }
}

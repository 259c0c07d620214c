use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::problem::{check_dims, Problem};

/// `J(m, θ) = θ₁ / (1 + e^{θ₂ m}) + θ₃ m²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Logistic1D;

/// `s = 1/(1 + e^z)` evaluated without overflow.
fn logistic_tail(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

struct Terms {
    s: f64,
    // s(1 − s) = −ds/dz
    w: f64,
    // s(1 − s)(1 − 2s) = d²s/dz²
    w2: f64,
}

impl Terms {
    fn at(m: f64, theta: &DVector<f64>) -> Self {
        let s = logistic_tail(theta[1] * m);
        let w = s * (1.0 - s);
        Self {
            s,
            w,
            w2: w * (1.0 - 2.0 * s),
        }
    }
}

impl Problem for Logistic1D {
    fn name(&self) -> &str {
        "logistic1d"
    }

    fn decision_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn objective(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        check_dims(self, m, theta)?;
        let x = m[0];
        Ok(theta[0] * Terms::at(x, theta).s + theta[2] * x * x)
    }

    fn gradient(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dims(self, m, theta)?;
        let x = m[0];
        let t = Terms::at(x, theta);
        Ok(DVector::from_element(
            1,
            -theta[0] * theta[1] * t.w + 2.0 * theta[2] * x,
        ))
    }

    fn hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dims(self, m, theta)?;
        let t = Terms::at(m[0], theta);
        Ok(DMatrix::from_element(
            1,
            1,
            theta[0] * theta[1] * theta[1] * t.w2 + 2.0 * theta[2],
        ))
    }

    fn mixed_hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dims(self, m, theta)?;
        let x = m[0];
        let t = Terms::at(x, theta);
        Ok(DMatrix::from_row_slice(
            1,
            3,
            &[
                -theta[1] * t.w,
                -theta[0] * t.w + theta[0] * theta[1] * x * t.w2,
                2.0 * x,
            ],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tail_is_stable_for_large_arguments() {
        assert_eq!(logistic_tail(1000.0), 0.0);
        assert_eq!(logistic_tail(-1000.0), 1.0);
        assert!((logistic_tail(0.0) - 0.5).abs() < 1e-16);
    }

    proptest! {
        #[test]
        fn objective_at_zero_is_half_theta1(
            t1 in 0.1f64..10.0, t2 in -10.0f64..10.0, t3 in 0.0f64..1.0,
        ) {
            let j = Logistic1D
                .objective(&DVector::from_element(1, 0.0), &DVector::from_vec(vec![t1, t2, t3]))
                .unwrap();
            prop_assert_eq!(j, t1 / 2.0);
        }
    }
}

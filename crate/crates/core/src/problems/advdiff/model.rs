use serde::{Deserialize, Serialize};

use super::tridiag::{Tridiagonal, TridiagonalLu};
use crate::error::{Error, Result};

/// Width parameter of the Gaussian source `a·exp(−200(x − c)²)`.
pub const SOURCE_SHARPNESS: f64 = 200.0;

/// Coefficients of `−κu″ + vu′ = s` on `(0, 1)` with
/// `κu′(0) = αu(0)` and `κu′(1) = −αu(1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub kappa: f64,
    pub velocity: f64,
    pub alpha: f64,
}

impl Coefficients {
    fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.velocity.is_finite() && self.alpha.is_finite()) {
            return Err(Error::NonFinite("advection-diffusion coefficients"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Evaluation(format!(
                "diffusion coefficient must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Second-order central differences on `n` uniform cells (`n + 1` nodes).
/// The Robin conditions are imposed by eliminating a ghost node with a
/// centered flux difference, which keeps the boundary rows second order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvDiffModel {
    cells: usize,
}

impl AdvDiffModel {
    pub const MIN_CELLS: usize = 16;

    pub fn new(cells: usize) -> Result<Self> {
        if cells < Self::MIN_CELLS {
            return Err(Error::InvalidInput(format!(
                "need at least {} grid cells, got {cells}",
                Self::MIN_CELLS
            )));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.nodes()).map(|j| j as f64 * dx).collect()
    }

    /// Trapezoid-rule weights on the grid.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let dx = self.spacing();
        let mut w = vec![dx; self.nodes()];
        w[0] = 0.5 * dx;
        w[self.cells] = 0.5 * dx;
        w
    }

    pub fn source(&self, magnitude: f64, location: f64) -> Vec<f64> {
        self.grid()
            .into_iter()
            .map(|x| magnitude * (-SOURCE_SHARPNESS * (x - location).powi(2)).exp())
            .collect()
    }

    pub fn operator(&self, c: &Coefficients) -> Tridiagonal {
        let n = self.cells;
        let dx = self.spacing();
        let diff = c.kappa / (dx * dx);
        let adv = c.velocity / (2.0 * dx);
        let mut a = Tridiagonal::zeros(n + 1);
        for j in 1..n {
            a.lower[j] = -diff - adv;
            a.diag[j] = 2.0 * diff;
            a.upper[j] = -diff + adv;
        }
        let robin = 2.0 * c.alpha / dx;
        let upwind = c.velocity * c.alpha / c.kappa;
        a.diag[0] = 2.0 * diff + robin + upwind;
        a.upper[0] = -2.0 * diff;
        a.lower[n] = -2.0 * diff;
        a.diag[n] = 2.0 * diff + robin - upwind;
        a
    }

    /// `∂A/∂κ`.
    pub fn operator_dkappa(&self, c: &Coefficients) -> Tridiagonal {
        let n = self.cells;
        let dx = self.spacing();
        let inv = 1.0 / (dx * dx);
        let mut d = Tridiagonal::zeros(n + 1);
        for j in 1..n {
            d.lower[j] = -inv;
            d.diag[j] = 2.0 * inv;
            d.upper[j] = -inv;
        }
        let upwind = c.velocity * c.alpha / (c.kappa * c.kappa);
        d.diag[0] = 2.0 * inv - upwind;
        d.upper[0] = -2.0 * inv;
        d.lower[n] = -2.0 * inv;
        d.diag[n] = 2.0 * inv + upwind;
        d
    }

    /// `∂A/∂v`.
    pub fn operator_dvelocity(&self, c: &Coefficients) -> Tridiagonal {
        let n = self.cells;
        let half = 1.0 / (2.0 * self.spacing());
        let mut d = Tridiagonal::zeros(n + 1);
        for j in 1..n {
            d.lower[j] = -half;
            d.upper[j] = half;
        }
        d.diag[0] = c.alpha / c.kappa;
        d.diag[n] = -c.alpha / c.kappa;
        d
    }

    pub fn factor(&self, c: &Coefficients) -> Result<TridiagonalLu> {
        c.validate()?;
        self.operator(c).factor().map_err(|e| match e {
            Error::SingularSystem { context, pivot_ratio } => Error::SingularSystem {
                context: format!(
                    "advection-diffusion operator (kappa={}, v={}, alpha={}): {context}",
                    c.kappa, c.velocity, c.alpha
                ),
                pivot_ratio,
            },
            other => other,
        })
    }

    /// Nodal temperatures for the Gaussian source with homogeneous Robin
    /// conditions.
    pub fn solve(&self, c: &Coefficients, magnitude: f64, location: f64) -> Result<Vec<f64>> {
        if !(magnitude.is_finite() && location.is_finite()) {
            return Err(Error::NonFinite("source parameters"));
        }
        let lu = self.factor(c)?;
        Ok(lu.solve(&self.source(magnitude, location)))
    }

    /// Solves with a nodal forcing and inhomogeneous Robin data
    /// `κu′(0) − αu(0) = left` and `κu′(1) + αu(1) = right`.
    pub fn solve_with_boundary_data(
        &self,
        c: &Coefficients,
        forcing: &[f64],
        left: f64,
        right: f64,
    ) -> Result<Vec<f64>> {
        if forcing.len() != self.nodes() {
            return Err(Error::DimensionMismatch {
                what: "forcing",
                expected: self.nodes(),
                actual: forcing.len(),
            });
        }
        let lu = self.factor(c)?;
        let dx = self.spacing();
        let n = self.cells;
        let mut rhs = forcing.to_vec();
        rhs[0] -= (2.0 / dx + c.velocity / c.kappa) * left;
        rhs[n] += (2.0 / dx - c.velocity / c.kappa) * right;
        Ok(lu.solve(&rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const NOMINAL: Coefficients = Coefficients {
        kappa: 0.05,
        velocity: 0.4,
        alpha: 1.0,
    };

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let model = AdvDiffModel::new(64).unwrap();
        let u = model.solve(&NOMINAL, 0.0, 0.5).unwrap();
        assert!(u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_coarse_grids_and_bad_kappa() {
        assert!(AdvDiffModel::new(8).is_err());
        let model = AdvDiffModel::new(32).unwrap();
        let bad = Coefficients { kappa: -0.1, ..NOMINAL };
        assert!(model.solve(&bad, 1.0, 0.5).is_err());
    }

    #[test]
    fn solve_residual_is_small() {
        let model = AdvDiffModel::new(200).unwrap();
        let u = model.solve(&NOMINAL, 10.0, 0.05).unwrap();
        let s = model.source(10.0, 0.05);
        let r = model.operator(&NOMINAL).matvec(&u);
        let res = r.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(res <= 1e-10 * scale, "residual {res}");
    }

    #[test]
    fn peak_is_shifted_downstream() {
        let model = AdvDiffModel::new(200).unwrap();
        let c = 0.05;
        let u = model.solve(&NOMINAL, 10.0, c).unwrap();
        let (argmax, _) = u.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        );
        assert!(model.grid()[argmax] > c, "peak at {}", model.grid()[argmax]);
    }

    /// Max-norm error against u(x) = cos(πx) for each resolution.
    pub(crate) fn manufactured_errors(cells: &[usize]) -> Vec<f64> {
        let co = Coefficients {
            kappa: 0.05,
            velocity: 0.4,
            alpha: 1.0,
        };
        cells
            .iter()
            .map(|&n| {
                let model = AdvDiffModel::new(n).unwrap();
                let x = model.grid();
                // -κu'' + vu' for u = cos(πx)
                let forcing: Vec<f64> = x
                    .iter()
                    .map(|&x| co.kappa * PI * PI * (PI * x).cos() - co.velocity * PI * (PI * x).sin())
                    .collect();
                // κu'(0) − αu(0) = −α;  κu'(1) + αu(1) = −α
                let u = model
                    .solve_with_boundary_data(&co, &forcing, -co.alpha, -co.alpha)
                    .unwrap();
                x.iter()
                    .zip(&u)
                    .map(|(&x, &u)| (u - (PI * x).cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    #[test]
    fn manufactured_solution_converges_second_order() {
        let cells = [32, 64, 128, 256];
        let errors = manufactured_errors(&cells);
        let points: Vec<(f64, f64)> = cells.iter().zip(&errors).map(|(&n, &e)| (1.0 / n as f64, e)).collect();
        let slope = crate::uq::loglog_slope(&points).unwrap();
        assert!((1.8..=2.2).contains(&slope), "slope {slope}, errors {errors:?}");
    }

    #[test]
    fn operator_derivatives_match_differences() {
        let model = AdvDiffModel::new(20).unwrap();
        let h = 1e-7;
        let dk = model.operator_dkappa(&NOMINAL);
        let dv = model.operator_dvelocity(&NOMINAL);
        let plus = model.operator(&Coefficients {
            kappa: NOMINAL.kappa + h,
            ..NOMINAL
        });
        let minus = model.operator(&Coefficients {
            kappa: NOMINAL.kappa - h,
            ..NOMINAL
        });
        for i in 0..model.nodes() {
            let fd = (plus.diag[i] - minus.diag[i]) / (2.0 * h);
            assert!((fd - dk.diag[i]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
        let plus = model.operator(&Coefficients {
            velocity: NOMINAL.velocity + h,
            ..NOMINAL
        });
        let minus = model.operator(&Coefficients {
            velocity: NOMINAL.velocity - h,
            ..NOMINAL
        });
        for i in 0..model.nodes() {
            let fd = (plus.diag[i] - minus.diag[i]) / (2.0 * h);
            assert!((fd - dv.diag[i]).abs() <= 1e-6 * fd.abs().max(1.0));
            let fd = (plus.upper[i] - minus.upper[i]) / (2.0 * h);
            assert!((fd - dv.upper[i]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }
}

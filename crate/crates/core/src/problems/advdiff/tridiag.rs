use crate::error::{Error, Result};

/// A tridiagonal matrix stored by diagonals. `lower[0]` and `upper[n-1]`
/// are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Pivots below this fraction of the largest entry are treated as zero.
const PIVOT_TOLERANCE: f64 = 1e-13;

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// LU factorization without pivoting (Thomas algorithm).
    pub fn factor(&self) -> Result<TridiagonalLu> {
        let n = self.len();
        let scale = self.max_abs();
        if n == 0 || !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::SingularSystem {
                context: "empty, zero or non-finite tridiagonal matrix".into(),
                pivot_ratio: 0.0,
            });
        }
        let mut pivots = vec![0.0; n];
        let mut multipliers = vec![0.0; n];
        let mut min_pivot = f64::INFINITY;
        for i in 0..n {
            let mut p = self.diag[i];
            if i > 0 {
                multipliers[i] = self.lower[i] / pivots[i - 1];
                p -= multipliers[i] * self.upper[i - 1];
            }
            min_pivot = min_pivot.min(p.abs());
            if !(p.abs() > PIVOT_TOLERANCE * scale) {
                return Err(Error::SingularSystem {
                    context: format!("zero pivot in row {i} of {n}"),
                    pivot_ratio: p.abs() / scale,
                });
            }
            pivots[i] = p;
        }
        Ok(TridiagonalLu {
            multipliers,
            pivots,
            upper: self.upper.clone(),
            pivot_ratio: min_pivot / scale,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(rhs))
    }
}

#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    multipliers: Vec<f64>,
    pivots: Vec<f64>,
    upper: Vec<f64>,
    pivot_ratio: f64,
}

impl TridiagonalLu {
    /// Smallest pivot magnitude relative to the largest matrix entry.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.pivots.len();
        assert_eq!(rhs.len(), n, "rhs length");
        let mut y = rhs.to_vec();
        for i in 1..n {
            y[i] -= self.multipliers[i] * y[i - 1];
        }
        y[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = (y[i] - self.upper[i] * y[i + 1]) / self.pivots[i];
        }
        y
    }
}

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::problem::DecisionVector;

/// Fewest samples accepted by [`kde`].
pub const MIN_KDE_SAMPLES: usize = 30;

/// Which coordinates of the decision vectors to estimate the density of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensitySelector {
    Marginal(usize),
    Joint(usize, usize),
}

/// Evaluation grid. Each axis spans the sample range padded by
/// `padding` bandwidths on both sides, with at least `points_1d` /
/// `points_2d` nodes and a node spacing no coarser than
/// `max_spacing` bandwidths (up to `max_points_1d` / `max_points_2d`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub points_1d: usize,
    pub points_2d: usize,
    pub padding: f64,
    pub max_spacing: f64,
    pub max_points_1d: usize,
    pub max_points_2d: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_1d: 256,
            points_2d: 64,
            padding: 4.0,
            max_spacing: 0.5,
            max_points_1d: 2048,
            max_points_2d: 256,
        }
    }
}

impl GridSpec {
    fn axis(&self, lo: f64, hi: f64, h: f64, min_points: usize, max_points: usize) -> Vec<f64> {
        let a = lo - self.padding * h;
        let b = hi + self.padding * h;
        let wanted = ((b - a) / (self.max_spacing * h)).ceil() as usize + 1;
        let n = wanted.clamp(min_points.max(2), max_points.max(min_points).max(2));
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }
}

/// A Gaussian kernel density estimate tabulated on a grid.
///
/// In two dimensions `density[i * ys.len() + j]` is the value at
/// `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub selector: DensitySelector,
    pub dimension: usize,
    pub xs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ys: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub kernel: String,
    pub bandwidth_rule: String,
    pub num_samples: usize,
}

fn trapezoid(xs: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    xs.windows(2)
        .enumerate()
        .map(|(i, w)| 0.5 * (w[1] - w[0]) * (f(i) + f(i + 1)))
        .sum()
}

impl DensityEstimate {
    /// Trapezoid-rule integral over the grid.
    pub fn integrate(&self) -> f64 {
        if self.dimension == 1 {
            trapezoid(&self.xs, |i| self.density[i])
        } else {
            let ny = self.ys.len();
            trapezoid(&self.xs, |i| trapezoid(&self.ys, |j| self.density[i * ny + j]))
        }
    }

    /// Linear interpolation of a 1D estimate; zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&g| g < x);
        if i == 0 {
            return if x == self.xs[0] { self.density[0] } else { 0.0 };
        }
        if i == self.xs.len() {
            return 0.0;
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let w = (x - x0) / (x1 - x0);
        (1.0 - w) * self.density[i - 1] + w * self.density[i]
    }

    /// Trapezoid-rule integral of a 1D estimate over `[a, b]`, using the grid
    /// nodes inside the interval and interpolated end values.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let mut xs = vec![a];
        xs.extend(self.xs.iter().copied().filter(|&x| x > a && x < b));
        xs.push(b);
        let fs: Vec<f64> = xs.iter().map(|&x| self.value_at(x)).collect();
        trapezoid(&xs, |i| fs[i])
    }

    /// Columns `x, density` or `x, y, density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        if self.dimension == 1 {
            writeln!(out, "x,density")?;
            for (x, f) in self.xs.iter().zip(&self.density) {
                writeln!(out, "{},{}", fmt_f64(*x), fmt_f64(*f))?;
            }
        } else {
            writeln!(out, "x,y,density")?;
            let ny = self.ys.len();
            for (i, x) in self.xs.iter().enumerate() {
                for (j, y) in self.ys.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{}",
                        fmt_f64(*x),
                        fmt_f64(*y),
                        fmt_f64(self.density[i * ny + j])
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Silverman's rule of thumb for a `d`-dimensional product Gaussian kernel:
/// `σ·(4 / ((d + 2)·n))^(1/(d + 4))`.
pub fn silverman_bandwidth(std_dev: f64, n: usize, d: usize) -> f64 {
    let d = d as f64;
    std_dev * (4.0 / ((d + 2.0) * n as f64)).powf(1.0 / (d + 4.0))
}

fn column(values: &[DecisionVector], k: usize) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|v| {
            v.as_vector()
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("coordinate {k} out of range for dimension {}", v.len())))
        })
        .collect()
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn bounds(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Kernel matrix `K[i, k] = φ((grid[i] − samples[k]) / h) / h`.
fn kernel_matrix(grid: &[f64], samples: &[f64], h: f64) -> DMatrix<f64> {
    let norm = 1.0 / ((2.0 * PI).sqrt() * h);
    DMatrix::from_fn(grid.len(), samples.len(), |i, k| {
        let z = (grid[i] - samples[k]) / h;
        norm * (-0.5 * z * z).exp()
    })
}

/// Gaussian kernel density estimate of one coordinate, or the joint density
/// of two, with Silverman's bandwidth per coordinate.
pub fn kde(values: &[DecisionVector], selector: DensitySelector, grid: &GridSpec) -> Result<DensityEstimate> {
    let n = values.len();
    if n < MIN_KDE_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "density estimation needs at least {MIN_KDE_SAMPLES} samples, got {n}"
        )));
    }
    let coords = match selector {
        DensitySelector::Marginal(k) => vec![k],
        DensitySelector::Joint(a, b) if a != b => vec![a, b],
        DensitySelector::Joint(a, _) => {
            return Err(Error::InvalidInput(format!(
                "joint density needs two distinct coordinates, got {a} twice"
            )))
        }
    };
    let d = coords.len();
    let mut columns = Vec::with_capacity(d);
    let mut bandwidth = Vec::with_capacity(d);
    for &k in &coords {
        let xs = column(values, k)?;
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("density samples"));
        }
        let s = std_dev(&xs);
        if !(s > 0.0) {
            return Err(Error::DegenerateBandwidth(k));
        }
        bandwidth.push(silverman_bandwidth(s, n, d));
        columns.push(xs);
    }

    let inv_n = 1.0 / n as f64;
    let axes: Vec<Vec<f64>> = columns
        .iter()
        .zip(&bandwidth)
        .map(|(xs, &h)| {
            let (lo, hi) = bounds(xs);
            if d == 1 {
                grid.axis(lo, hi, h, grid.points_1d, grid.max_points_1d)
            } else {
                grid.axis(lo, hi, h, grid.points_2d, grid.max_points_2d)
            }
        })
        .collect();

    let (xs, ys, density) = if d == 1 {
        let k = kernel_matrix(&axes[0], &columns[0], bandwidth[0]);
        let density = k.column_sum().iter().map(|v| v * inv_n).collect();
        (axes[0].clone(), Vec::new(), density)
    } else {
        // separable product kernel: F = Kx · Kyᵀ / n
        let kx = kernel_matrix(&axes[0], &columns[0], bandwidth[0]);
        let ky = kernel_matrix(&axes[1], &columns[1], bandwidth[1]);
        let f = kx * ky.transpose() * inv_n;
        let ny = axes[1].len();
        let density = (0..axes[0].len() * ny).map(|idx| f[(idx / ny, idx % ny)]).collect();
        (axes[0].clone(), axes[1].clone(), density)
    };

    Ok(DensityEstimate {
        selector,
        dimension: d,
        xs,
        ys,
        density,
        bandwidth,
        kernel: "gaussian".into(),
        bandwidth_rule: "silverman".into(),
        num_samples: n,
    })
}

//! Central finite differences: the second-derivative fallback for problems
//! with an exact gradient, and consistency checks of supplied derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_dims, DecisionVector, ParameterVector, Problem};
use crate::error::{Error, Result};

/// Base relative step; the step for a component `x` is `base · max(1, |x|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Largest relative discrepancy accepted by [`DerivativeCheckReport::passes`].
pub const DERIVATIVE_TOLERANCE: f64 = 1e-5;

/// Denominator floor in [`relative_error`].
const RELATIVE_FLOOR: f64 = 1e-8;

pub fn fd_step(x: f64, base: f64) -> f64 {
    base * x.abs().max(1.0)
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, with the denominator floored at `1e-8`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return f64::NAN;
    }
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(RELATIVE_FLOOR, f64::max);
    diff / scale
}

fn perturbed_pair(x: &DVector<f64>, i: usize, base: f64) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let h = fd_step(x[i], base);
    let mut plus = x.clone();
    let mut minus = x.clone();
    plus[i] += h;
    minus[i] -= h;
    let width = plus[i] - minus[i];
    if !(width > 0.0) {
        return Err(Error::DegenerateStep(format!(
            "step {h:e} vanishes against component {i} = {}",
            x[i]
        )));
    }
    // dividing by the representable width removes one rounding error
    Ok((plus, minus, width))
}

fn with_context<T>(r: Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| Error::Evaluation(format!("{what}: {e}")))
}

/// Central-difference gradient of `J` in `m`.
pub fn fd_gradient<P: Problem + ?Sized>(
    problem: &P,
    m: &DVector<f64>,
    theta: &DVector<f64>,
    base: f64,
) -> Result<DVector<f64>> {
    check_dims(problem, m, theta)?;
    let mut g = DVector::zeros(m.len());
    for i in 0..m.len() {
        let (plus, minus, width) = perturbed_pair(m, i, base)?;
        let jp = with_context(problem.objective(&plus, theta), &format!("J at m + h e_{}", i + 1))?;
        let jm = with_context(problem.objective(&minus, theta), &format!("J at m - h e_{}", i + 1))?;
        g[i] = (jp - jm) / width;
    }
    Ok(g)
}

/// Second derivatives obtained by differencing a gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondDerivatives {
    /// Symmetrized Hessian `(H + Hᵀ)/2`.
    pub hessian: DMatrix<f64>,
    /// `d × p` mixed derivative.
    pub mixed: DMatrix<f64>,
    /// `max |H − Hᵀ| / 2` of the raw differenced Hessian, i.e. the max-norm
    /// distance between the raw and symmetrized matrices.
    pub asymmetry: f64,
}

fn check_base(base: f64) -> Result<()> {
    if base > 0.0 && base.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("fd step must be positive, got {base}")))
    }
}

/// Differences `gradient` in `m`. Returns the symmetrized Hessian and the
/// max-norm distance between it and the raw differenced matrix.
pub fn fd_hessian_with<G>(gradient: G, m: &DVector<f64>, theta: &DVector<f64>, base: f64) -> Result<(DMatrix<f64>, f64)>
where
    G: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    check_base(base)?;
    let d = m.len();
    let mut raw = DMatrix::zeros(d, d);
    for j in 0..d {
        let (plus, minus, width) = perturbed_pair(m, j, base)?;
        let gp = with_context(gradient(&plus, theta), &format!("g at m + h e_{}", j + 1))?;
        let gm = with_context(gradient(&minus, theta), &format!("g at m - h e_{}", j + 1))?;
        raw.set_column(j, &((gp - gm) / width));
    }
    if raw.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateStep(format!(
            "differenced Hessian is identically zero with step {base:e}"
        )));
    }
    let hessian = (&raw + raw.transpose()) * 0.5;
    let asymmetry = (&raw - &hessian).amax();
    Ok((hessian, asymmetry))
}

/// Differences `gradient` in `θ`, giving the `d × p` mixed derivative.
pub fn fd_mixed_with<G>(gradient: G, m: &DVector<f64>, theta: &DVector<f64>, base: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    check_base(base)?;
    let mut mixed = DMatrix::zeros(m.len(), theta.len());
    for k in 0..theta.len() {
        let (plus, minus, width) = perturbed_pair(theta, k, base)?;
        let gp = with_context(gradient(m, &plus), &format!("g at theta + h e_{}", k + 1))?;
        let gm = with_context(gradient(m, &minus), &format!("g at theta - h e_{}", k + 1))?;
        mixed.set_column(k, &((gp - gm) / width));
    }
    Ok(mixed)
}

/// Differences `gradient` in `m` and `θ`.
pub fn fd_second_derivatives_with<G>(
    gradient: G,
    m: &DVector<f64>,
    theta: &DVector<f64>,
    base: f64,
) -> Result<SecondDerivatives>
where
    G: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let (hessian, asymmetry) = fd_hessian_with(&gradient, m, theta, base)?;
    let mixed = fd_mixed_with(&gradient, m, theta, base)?;
    Ok(SecondDerivatives {
        hessian,
        mixed,
        asymmetry,
    })
}

/// `H` and `B` from central differences of the problem's gradient.
pub fn fd_second_derivatives<P: Problem + ?Sized>(
    problem: &P,
    m: &DecisionVector,
    theta: &ParameterVector,
    base: f64,
) -> Result<SecondDerivatives> {
    check_dims(problem, m, theta)?;
    fd_second_derivatives_with(|m, t| problem.gradient(m, t), m, theta, base)
}

/// Relative discrepancies between a problem's derivatives and central
/// differences of `J` (for `g`) and of `g` (for `H` and `B`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheckReport {
    pub max_rel_error_gradient: f64,
    pub max_rel_error_hessian: f64,
    pub max_rel_error_mixed: f64,
    pub fd_step: f64,
}

impl DerivativeCheckReport {
    pub fn max_error(&self) -> f64 {
        self.max_rel_error_gradient
            .max(self.max_rel_error_hessian)
            .max(self.max_rel_error_mixed)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        // NaN must fail
        self.max_error() <= tolerance
    }

    /// Componentwise maximum of two reports.
    pub fn worst(self, other: Self) -> Self {
        Self {
            max_rel_error_gradient: self.max_rel_error_gradient.max(other.max_rel_error_gradient),
            max_rel_error_hessian: self.max_rel_error_hessian.max(other.max_rel_error_hessian),
            max_rel_error_mixed: self.max_rel_error_mixed.max(other.max_rel_error_mixed),
            fd_step: self.fd_step,
        }
    }
}

pub fn check_derivatives<P: Problem + ?Sized>(
    problem: &P,
    m: &DecisionVector,
    theta: &ParameterVector,
    fd_step: f64,
) -> Result<DerivativeCheckReport> {
    check_dims(problem, m, theta)?;
    check_base(fd_step)?;
    let g = problem.gradient(m, theta)?;
    let h = problem.hessian(m, theta)?;
    let b = problem.mixed_hessian(m, theta)?;

    let g_fd = fd_gradient(problem, m, theta, fd_step)?;
    let fd = fd_second_derivatives(problem, m, theta, fd_step)?;

    let report = DerivativeCheckReport {
        max_rel_error_gradient: relative_error(g.as_slice(), g_fd.as_slice()),
        max_rel_error_hessian: relative_error(h.as_slice(), fd.hessian.as_slice()),
        max_rel_error_mixed: relative_error(b.as_slice(), fd.mixed.as_slice()),
        fd_step,
    };
    let errors = [
        report.max_rel_error_gradient,
        report.max_rel_error_hessian,
        report.max_rel_error_mixed,
    ];
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("derivative check"));
    }
    Ok(report)
}

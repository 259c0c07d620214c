//! The post-optimality sensitivity operator `D = −H⁻¹B` and the right-hand
//! side of the minimizer ODE `dm*/dt = D(m*, θ(t))(θ̃ − θ̄)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{check_dims, check_len, DecisionVector, ParameterVector, Problem};

/// Eigenvalues at or below this fraction of the spectral radius (or of one,
/// if larger) count as zero.
const SINGULAR_RATIO: f64 = 1e-14;

/// The segment `θ(t) = θ̄ + t(θ̃ − θ̄)`, `t ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLine {
    start: ParameterVector,
    end: ParameterVector,
}

impl ParameterLine {
    pub fn new(start: ParameterVector, end: ParameterVector) -> Result<Self> {
        check_len("line end point", start.len(), end.len())?;
        Ok(Self { start, end })
    }

    pub fn start(&self) -> &ParameterVector {
        &self.start
    }

    pub fn end(&self) -> &ParameterVector {
        &self.end
    }

    /// `θ̃ − θ̄`.
    pub fn direction(&self) -> DVector<f64> {
        self.end.as_vector() - self.start.as_vector()
    }

    /// `θ(t)`. Both endpoints are reproduced exactly.
    pub fn theta_at(&self, t: f64) -> Result<ParameterVector> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("line parameter t = {t} outside [0, 1]")));
        }
        let v = self.start.as_vector() * (1.0 - t) + self.end.as_vector() * t;
        ParameterVector::from_vector(v)
    }
}

/// Whether [`post_optimality_apply_with`] accepts a Hessian that is not
/// positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DefinitenessPolicy {
    #[default]
    RequirePositive,
    /// Solve with any nonsingular Hessian and flag the result instead.
    Allow,
}

/// `D·Δθ` at one point, with spectral diagnostics of the Hessian there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityApply {
    pub direction: ParameterVector,
    pub result: DecisionVector,
    pub hessian_min_eigenvalue: f64,
    /// `max |λ| / min |λ|` over the Hessian spectrum.
    pub condition_estimate: f64,
    /// Set when the Hessian is not positive definite.
    pub definiteness_warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub min_eigenvalue: f64,
    pub max_magnitude: f64,
    pub min_magnitude: f64,
    pub condition: f64,
}

impl Spectrum {
    pub fn is_singular(&self) -> bool {
        self.min_magnitude <= SINGULAR_RATIO * self.max_magnitude.max(1.0)
    }
}

pub fn hessian_spectrum(h: &DMatrix<f64>) -> Result<Spectrum> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hessian"));
    }
    let eig = SymmetricEigen::new(h.clone()).eigenvalues;
    let min_eigenvalue = eig.min();
    let max_abs = eig.amax();
    let min_abs = eig.amin();
    let condition = if min_abs > 0.0 {
        max_abs / min_abs
    } else {
        f64::INFINITY
    };
    Ok(Spectrum {
        min_eigenvalue,
        max_magnitude: max_abs,
        min_magnitude: min_abs,
        condition,
    })
}

/// Solves `H x = rhs` for a symmetric `H`.
fn solve_symmetric(
    h: &DMatrix<f64>,
    rhs: &DVector<f64>,
    spectrum: &Spectrum,
    policy: DefinitenessPolicy,
) -> Result<(DVector<f64>, bool)> {
    let singular = spectrum.is_singular();
    let indefinite = !(spectrum.min_eigenvalue > 0.0);
    if (indefinite || singular) && policy == DefinitenessPolicy::RequirePositive {
        return Err(Error::IndefiniteHessian {
            min_eigenvalue: spectrum.min_eigenvalue,
            t: None,
        });
    }
    if singular {
        return Err(Error::SingularSystem {
            context: format!("Hessian with min eigenvalue {:e}", spectrum.min_eigenvalue),
            pivot_ratio: 1.0 / spectrum.condition,
        });
    }
    if !indefinite {
        if let Some(chol) = h.clone().cholesky() {
            return Ok((chol.solve(rhs), false));
        }
    }
    let x = h.clone().lu().solve(rhs).ok_or_else(|| Error::SingularSystem {
        context: "Hessian LU".into(),
        pivot_ratio: 0.0,
    })?;
    Ok((x, indefinite))
}

/// `D·Δθ = −H⁻¹B Δθ` at `(m, θ)`, rejecting Hessians that are not positive
/// definite.
pub fn post_optimality_apply<P: Problem + ?Sized>(
    problem: &P,
    m: &DecisionVector,
    theta: &ParameterVector,
    direction: &ParameterVector,
) -> Result<SensitivityApply> {
    post_optimality_apply_with(problem, m, theta, direction, DefinitenessPolicy::RequirePositive)
}

pub fn post_optimality_apply_with<P: Problem + ?Sized>(
    problem: &P,
    m: &DecisionVector,
    theta: &ParameterVector,
    direction: &ParameterVector,
    policy: DefinitenessPolicy,
) -> Result<SensitivityApply> {
    check_dims(problem, m, theta)?;
    check_len("sensitivity direction", problem.param_dim(), direction.len())?;
    let (h, b) = problem.second_derivatives(m, theta)?;
    let spectrum = hessian_spectrum(&h)?;
    let rhs = -(b * direction.as_vector());
    let (x, definiteness_warning) = solve_symmetric(&h, &rhs, &spectrum, policy)?;
    Ok(SensitivityApply {
        direction: direction.clone(),
        result: DecisionVector::from_vector(x)?,
        hessian_min_eigenvalue: spectrum.min_eigenvalue,
        condition_estimate: spectrum.condition,
        definiteness_warning,
    })
}

/// The full `d × p` operator `D = −H⁻¹B`.
pub fn sensitivity_operator<P: Problem + ?Sized>(
    problem: &P,
    m: &DecisionVector,
    theta: &ParameterVector,
) -> Result<DMatrix<f64>> {
    check_dims(problem, m, theta)?;
    let (h, b) = problem.second_derivatives(m, theta)?;
    let spectrum = hessian_spectrum(&h)?;
    if !(spectrum.min_eigenvalue > 0.0) {
        return Err(Error::IndefiniteHessian {
            min_eigenvalue: spectrum.min_eigenvalue,
            t: None,
        });
    }
    let mut d = DMatrix::zeros(b.nrows(), b.ncols());
    for k in 0..b.ncols() {
        let col = -b.column(k).into_owned();
        let (x, _) = solve_symmetric(&h, &col, &spectrum, DefinitenessPolicy::RequirePositive)?;
        d.set_column(k, &x);
    }
    Ok(d)
}

/// `f(t, m) = −H(m, θ(t))⁻¹ B(m, θ(t)) (θ̃ − θ̄)` with its diagnostics.
/// Hessian failures carry `t`.
pub fn ivp_rhs_apply<P: Problem + ?Sized>(
    problem: &P,
    line: &ParameterLine,
    t: f64,
    m: &DecisionVector,
) -> Result<SensitivityApply> {
    let theta = line.theta_at(t)?;
    let direction = ParameterVector::from_vector(line.direction())?;
    post_optimality_apply(problem, m, &theta, &direction).map_err(|e| match e {
        Error::IndefiniteHessian { min_eigenvalue, .. } => Error::IndefiniteHessian {
            min_eigenvalue,
            t: Some(t),
        },
        other => other,
    })
}

/// `f(t, m)`.
pub fn ivp_rhs<P: Problem + ?Sized>(
    problem: &P,
    line: &ParameterLine,
    t: f64,
    m: &DecisionVector,
) -> Result<DecisionVector> {
    Ok(ivp_rhs_apply(problem, line, t, m)?.result)
}

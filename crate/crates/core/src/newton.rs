//! Newton's method with Armijo backtracking: the nominal solve that seeds
//! the marching, and the re-solve oracle it is validated against.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{check_dims, DecisionVector, ParameterBox, ParameterVector, Problem};
use crate::sensitivity::hessian_spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    /// Converged when `‖g‖ ≤ grad_tol·(1 + |J|)`.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iters: 100,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidInput(format!(
                "armijo_c must lie in (0, 1), got {}",
                self.armijo_c
            )));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidInput(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        Ok(())
    }
}

/// One accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    /// `J` before the step.
    pub objective: f64,
    /// `J` after the step.
    pub trial_objective: f64,
    pub grad_norm: f64,
    pub step_length: f64,
    /// `gᵀp`.
    pub slope: f64,
    /// False when the Hessian was not positive definite and `−g` was used.
    pub newton_direction: bool,
    pub backtracks: usize,
    /// Accepted because `‖g‖` decreased, the predicted change in `J` being
    /// below its rounding error.
    pub gradient_accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub minimizer: DecisionVector,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub hessian_min_eigenvalue: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip)]
    pub history: Vec<NewtonStep>,
}

impl SolveResult {
    fn failed(start: &DecisionVector, reason: String) -> Self {
        Self {
            minimizer: start.clone(),
            objective: f64::NAN,
            grad_norm: f64::NAN,
            iterations: 0,
            converged: false,
            hessian_min_eigenvalue: f64::NAN,
            failure: Some(reason),
            history: Vec::new(),
        }
    }
}

/// Increase in `J` tolerated by the sufficient-decrease test, as a multiple
/// of `ε·|J|`. Near convergence the predicted decrease falls below the
/// rounding error of `J` itself.
const ROUNDOFF_SLACK: f64 = 16.0;

/// Extra Newton steps taken after the tolerance is met, reusing the last
/// Hessian. Each is kept only if it reduces `‖g‖`, which drives converged
/// minimizers to rounding level.
const POLISH_STEPS: usize = 3;

/// When `|gᵀp| ≤ NOISE_SLOPE·(1 + |J|)` the sufficient-decrease test on `J`
/// only sees rounding noise, and a full Newton step is accepted if it
/// reduces `‖g‖` instead.
const NOISE_SLOPE: f64 = 1e-12;

/// `(J, g)` at `m`, or `None` if either is unavailable or non-finite.
fn evaluate<P: Problem + ?Sized>(
    problem: &P,
    m: &DVector<f64>,
    theta: &ParameterVector,
) -> Option<(f64, DVector<f64>)> {
    let j = problem.objective(m, theta).ok()?;
    let g = problem.gradient(m, theta).ok()?;
    (j.is_finite() && g.iter().all(|v| v.is_finite())).then_some((j, g))
}

/// Returns the polished point, objective and gradient.
fn polish<P: Problem + ?Sized>(
    problem: &P,
    theta: &ParameterVector,
    hessian: &DMatrix<f64>,
    mut m: DVector<f64>,
    mut objective: f64,
    mut gradient: DVector<f64>,
) -> (DVector<f64>, f64, DVector<f64>) {
    let Some(chol) = hessian.clone().cholesky() else {
        return (m, objective, gradient);
    };
    for _ in 0..POLISH_STEPS {
        let grad_norm = gradient.norm();
        if grad_norm == 0.0 {
            break;
        }
        let trial = &m - chol.solve(&gradient);
        let Some((j, g)) = evaluate(problem, &trial, theta) else {
            break;
        };
        if !(g.norm() < grad_norm) {
            break;
        }
        m = trial;
        objective = j;
        gradient = g;
    }
    (m, objective, gradient)
}

/// Minimizes `J(·, θ)` from `m0`.
///
/// Errors are returned only for unusable input; failure to converge is
/// reported through [`SolveResult::converged`].
pub fn newton_solve<P: Problem + ?Sized>(
    problem: &P,
    theta: &ParameterVector,
    m0: &DecisionVector,
    config: &NewtonConfig,
) -> Result<SolveResult> {
    config.validate()?;
    check_dims(problem, m0, theta)?;
    problem.validate_parameters(theta)?;

    let mut m: DVector<f64> = m0.as_vector().clone();
    let mut objective = problem.objective(&m, theta)?;
    let mut gradient = problem.gradient(&m, theta)?;
    if !objective.is_finite() || gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the initial guess"));
    }
    let mut history = Vec::new();
    let mut failure = None;
    let mut min_eig = f64::NAN;

    for iter in 0..=config.max_iters {
        let grad_norm = gradient.norm();
        let hessian = match problem.hessian(&m, theta) {
            Ok(h) => h,
            Err(e) => {
                failure = Some(format!("Hessian evaluation failed: {e}"));
                break;
            }
        };
        let spectrum = match hessian_spectrum(&hessian) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        min_eig = spectrum.min_eigenvalue;
        if grad_norm <= config.grad_tol * (1.0 + objective.abs()) && min_eig > 0.0 {
            let (m, objective, gradient) = polish(problem, theta, &hessian, m, objective, gradient);
            return Ok(SolveResult {
                minimizer: DecisionVector::from_vector(m)?,
                objective,
                grad_norm: gradient.norm(),
                iterations: iter,
                converged: true,
                hessian_min_eigenvalue: min_eig,
                failure: None,
                history,
            });
        }
        if iter == config.max_iters {
            failure = Some(format!("no convergence in {} iterations", config.max_iters));
            break;
        }

        let newton = if min_eig > 0.0 {
            hessian.cholesky().map(|c| -c.solve(&gradient))
        } else {
            None
        };
        let (direction, newton_direction) = match newton {
            Some(p) if p.dot(&gradient) < 0.0 => (p, true),
            _ => (-&gradient, false),
        };
        let slope = gradient.dot(&direction);

        let mut accepted = None;
        if newton_direction && -slope <= NOISE_SLOPE * (1.0 + objective.abs()) {
            let trial = &m + &direction;
            if let Some((j, g)) = evaluate(problem, &trial, theta) {
                if g.norm() < grad_norm {
                    accepted = Some((trial, j, Some(g), 0, 1.0, true));
                }
            }
        }
        if accepted.is_none() {
            let slack = ROUNDOFF_SLACK * f64::EPSILON * objective.abs();
            let mut step = 1.0;
            for backtracks in 0..=config.max_backtracks {
                let trial = &m + &direction * step;
                // failed evaluations (e.g. leaving the PDE's domain) shrink the step
                if let Ok(j) = problem.objective(&trial, theta) {
                    if j.is_finite() && j <= objective + config.armijo_c * step * slope + slack {
                        accepted = Some((trial, j, None, backtracks, step, false));
                        break;
                    }
                }
                step *= config.backtrack_factor;
            }
        }
        let Some((trial, trial_objective, trial_gradient, backtracks, step, gradient_accepted)) = accepted else {
            failure = Some(format!(
                "line search failed after {} backtracks at |g| = {grad_norm:e}",
                config.max_backtracks
            ));
            break;
        };
        let new_gradient = match trial_gradient
            .map(Ok)
            .unwrap_or_else(|| problem.gradient(&trial, theta))
        {
            Ok(g) if g.iter().all(|v| v.is_finite()) => g,
            Ok(_) => {
                failure = Some("non-finite gradient".into());
                break;
            }
            Err(e) => {
                failure = Some(format!("gradient evaluation failed: {e}"));
                break;
            }
        };
        history.push(NewtonStep {
            objective,
            trial_objective,
            grad_norm,
            step_length: step,
            slope,
            newton_direction,
            backtracks,
            gradient_accepted,
        });
        m = trial;
        objective = trial_objective;
        gradient = new_gradient;
    }

    Ok(SolveResult {
        minimizer: DecisionVector::from_vector(m)?,
        objective,
        grad_norm: gradient.norm(),
        iterations: history.len(),
        converged: false,
        hessian_min_eigenvalue: min_eig,
        failure,
        history,
    })
}

/// The single solve at `θ̄` that seeds every march. Anything other than a
/// converged strict local minimizer is an error.
pub fn solve_nominal<P: Problem + ?Sized>(
    problem: &P,
    parameters: &ParameterBox,
    m0: &DecisionVector,
    config: &NewtonConfig,
) -> Result<SolveResult> {
    let result =
        newton_solve(problem, parameters.nominal(), m0, config).map_err(|e| Error::NominalSolve(e.to_string()))?;
    if !result.converged {
        return Err(Error::NominalSolve(
            result.failure.unwrap_or_else(|| "did not converge".into()),
        ));
    }
    if !(result.hessian_min_eigenvalue > 0.0) {
        return Err(Error::NominalSolve(format!(
            "stationary point is not a strict minimizer (min eigenvalue {:e})",
            result.hessian_min_eigenvalue
        )));
    }
    Ok(result)
}

/// Re-solves at each sample, all from `initial_guess`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBatch {
    pub results: Vec<SolveResult>,
    pub non_converged: usize,
}

pub fn reference_distribution<P: Problem + ?Sized>(
    problem: &P,
    samples: &[ParameterVector],
    initial_guess: &DecisionVector,
    config: &NewtonConfig,
) -> ReferenceBatch {
    let results: Vec<SolveResult> = samples
        .par_iter()
        .map(|theta| solve_or_record(problem, theta, initial_guess, config))
        .collect();
    let non_converged = results.iter().filter(|r| !r.converged).count();
    ReferenceBatch { results, non_converged }
}

/// [`newton_solve`] with input errors folded into a failed result.
pub fn solve_or_record<P: Problem + ?Sized>(
    problem: &P,
    theta: &ParameterVector,
    initial_guess: &DecisionVector,
    config: &NewtonConfig,
) -> SolveResult {
    newton_solve(problem, theta, initial_guess, config)
        .unwrap_or_else(|e| SolveResult::failed(initial_guess, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{CubicIllustration, Logistic1D, Quadratic};

    fn dv(v: &[f64]) -> DecisionVector {
        DecisionVector::from_slice(v).unwrap()
    }
    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::from_slice(v).unwrap()
    }

    /// Root of J' on [lo, hi] by bisection.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quadratic_converges_in_one_full_step() {
        let r = newton_solve(&Quadratic, &pv(&[0.4]), &dv(&[0.0]), &NewtonConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.history[0].step_length, 1.0);
        assert!((r.minimizer[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn logistic_nominal_matches_bisection() {
        let theta = pv(&[1.0, 3.0, 0.1]);
        let r = newton_solve(&Logistic1D, &theta, &dv(&[0.5]), &NewtonConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        let g = |x: f64| Logistic1D.gradient(&DVector::from_element(1, x), &theta).unwrap()[0];
        let root = bisect(g, 0.5, 1.5);
        assert!((r.minimizer[0] - root).abs() < 1e-10);
        assert!((r.minimizer[0] - 0.897).abs() < 2e-3);
        assert!(g(r.minimizer[0]).abs() <= 1e-10);
    }

    #[test]
    fn cubic_finds_the_basin_minimizer() {
        let r = newton_solve(
            &CubicIllustration::default(),
            &pv(&[0.3, 0.75]),
            &dv(&[0.8]),
            &NewtonConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.minimizer[0] - 0.75).abs() <= 1e-10);
    }

    #[test]
    fn armijo_and_monotone_descent_hold() {
        let theta = pv(&[1.3, 2.0, 0.07]);
        let cfg = NewtonConfig::default();
        for start in [-2.0, 0.0, 3.0] {
            let r = newton_solve(&Logistic1D, &theta, &dv(&[start]), &cfg).unwrap();
            assert!(r.converged);
            for s in &r.history {
                assert!(s.slope < 0.0);
                if s.gradient_accepted {
                    assert!(-s.slope <= NOISE_SLOPE * (1.0 + s.objective.abs()));
                    assert!(s.trial_objective - s.objective <= 1e3 * f64::EPSILON * s.objective.abs());
                } else {
                    let slack = ROUNDOFF_SLACK * f64::EPSILON * s.objective.abs();
                    assert!(s.trial_objective <= s.objective + cfg.armijo_c * s.step_length * s.slope + slack);
                    assert!(s.trial_objective <= s.objective + slack);
                }
            }
        }
    }

    #[test]
    fn starting_points_in_the_basin_agree() {
        let p = CubicIllustration::default();
        let theta = pv(&[0.25, 0.82]);
        let a = newton_solve(&p, &theta, &dv(&[0.6]), &NewtonConfig::default()).unwrap();
        let b = newton_solve(&p, &theta, &dv(&[0.98]), &NewtonConfig::default()).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.minimizer[0] - b.minimizer[0]).abs() <= 1e-8);
        let theta = pv(&[0.8, 3.5, 0.12]);
        let a = newton_solve(&Logistic1D, &theta, &dv(&[0.1]), &NewtonConfig::default()).unwrap();
        let b = newton_solve(&Logistic1D, &theta, &dv(&[2.0]), &NewtonConfig::default()).unwrap();
        assert!((a.minimizer[0] - b.minimizer[0]).abs() <= 1e-8);
    }

    #[test]
    fn steepest_descent_fallback_away_from_the_minimum() {
        // start on the wrong side of the cubic's local maximum at 1/2
        let p = CubicIllustration::default();
        let r = newton_solve(&p, &pv(&[0.3, 0.75]), &dv(&[0.6]), &NewtonConfig::default()).unwrap();
        assert!(r.converged);
        assert!(!r.history[0].newton_direction);
        assert!(r.hessian_min_eigenvalue > 0.0);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let cfg = NewtonConfig {
            max_iters: 1,
            ..Default::default()
        };
        let r = newton_solve(&Logistic1D, &pv(&[1.0, 3.0, 0.1]), &dv(&[-3.0]), &cfg).unwrap();
        assert!(!r.converged);
        assert!(r.failure.unwrap().contains("iterations"));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = NewtonConfig {
            armijo_c: 1.5,
            ..Default::default()
        };
        assert!(newton_solve(&Quadratic, &pv(&[0.4]), &dv(&[0.0]), &cfg).is_err());
    }

    #[test]
    fn nominal_solve_requires_a_minimizer() {
        let b = ParameterBox::from_relative(pv(&[0.1]), &[0.4]).unwrap();
        let r = solve_nominal(&Quadratic, &b, &dv(&[3.0]), &NewtonConfig::default()).unwrap();
        assert!((r.minimizer[0] - 0.1).abs() < 1e-15);
        let tight = NewtonConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(matches!(
            solve_nominal(&Quadratic, &b, &dv(&[3.0]), &tight),
            Err(Error::NominalSolve(_))
        ));
    }

    #[test]
    fn batch_at_nominal_reproduces_nominal() {
        let theta = pv(&[1.0, 3.0, 0.1]);
        let nominal = newton_solve(&Logistic1D, &theta, &dv(&[0.5]), &NewtonConfig::default()).unwrap();
        let batch = reference_distribution(
            &Logistic1D,
            &vec![theta; 4],
            &nominal.minimizer,
            &NewtonConfig::default(),
        );
        assert_eq!(batch.non_converged, 0);
        for r in &batch.results {
            assert_eq!(r.iterations, 0);
            assert!((r.minimizer[0] - nominal.minimizer[0]).abs() <= 1e-15);
        }
    }

    #[test]
    fn batch_records_individual_failures() {
        let samples = vec![pv(&[0.3, 0.75]), pv(&[0.7, 0.75])];
        let batch = reference_distribution(
            &CubicIllustration::default(),
            &samples,
            &dv(&[0.8]),
            &NewtonConfig::default(),
        );
        assert_eq!(batch.non_converged, 1);
        assert!(batch.results[1].failure.is_some());
    }
}

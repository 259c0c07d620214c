use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{AdvDiffModel, Coefficients};
use crate::error::{Error, Result};
use crate::problem::derivatives::{fd_hessian_with, fd_mixed_with, fd_second_derivatives_with, DEFAULT_FD_STEP};
use crate::problem::{check_dims, sample_stream, Basin, DecisionVector, ParameterVector, Problem};

/// Settings for the synthetic inverse problem. `m = (κ, v)`,
/// `θ = (a, c, α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InverseProblemConfig {
    pub cells: usize,
    /// Data-generating `(κ, v)`.
    pub m_true: Vec<f64>,
    /// Parameters the observations are generated at.
    pub theta_data: Vec<f64>,
    /// Prior estimate `m⁰`.
    pub prior: Vec<f64>,
    pub beta: f64,
    pub noise_std: f64,
    pub noise_seed: u64,
    /// Optional basin bounds `[κ_lo, v_lo]`, `[κ_hi, v_hi]`.
    pub basin_lower: Option<Vec<f64>>,
    pub basin_upper: Option<Vec<f64>>,
}

impl Default for InverseProblemConfig {
    fn default() -> Self {
        Self {
            cells: 200,
            m_true: vec![0.05, 0.4],
            theta_data: vec![10.0, 0.05, 1.0],
            prior: vec![0.06, 0.32],
            beta: 1e-3,
            noise_std: 0.0,
            noise_seed: 0,
            basin_lower: None,
            basin_upper: None,
        }
    }
}

/// `J(m, θ) = ½∫(u − u_obs)² dx + (β/2)‖m − m⁰‖²` with `u` the discrete
/// solution of the advection-diffusion problem.
///
/// The gradient is exact for the discrete objective (forward sensitivities
/// sharing one factorization); `H` and `B` difference that gradient.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    model: AdvDiffModel,
    observations: Vec<f64>,
    weights: Vec<f64>,
    prior: DecisionVector,
    beta: f64,
    fd_step: f64,
    basin: Option<Basin>,
}

fn coefficients(m: &DVector<f64>, theta: &DVector<f64>) -> Coefficients {
    Coefficients {
        kappa: m[0],
        velocity: m[1],
        alpha: theta[2],
    }
}

/// `u(m_true, θ_data)` plus i.i.d. Gaussian noise per node.
pub fn synthesize_observations(
    model: &AdvDiffModel,
    m_true: &DecisionVector,
    theta_data: &ParameterVector,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    check_dims_raw(m_true, theta_data)?;
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidInput(format!("noise std must be >= 0, got {noise_std}")));
    }
    let mut u = model.solve(&coefficients(m_true, theta_data), theta_data[0], theta_data[1])?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("valid std");
        let mut rng = sample_stream(seed, 0);
        for v in &mut u {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(u)
}

fn check_dims_raw(m: &DVector<f64>, theta: &DVector<f64>) -> Result<()> {
    crate::problem::check_len("decision vector", 2, m.len())?;
    crate::problem::check_len("parameter vector", 3, theta.len())
}

impl InverseProblem {
    pub fn new(model: AdvDiffModel, observations: Vec<f64>, prior: DecisionVector, beta: f64) -> Result<Self> {
        if observations.len() != model.nodes() {
            return Err(Error::DimensionMismatch {
                what: "observations",
                expected: model.nodes(),
                actual: observations.len(),
            });
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observations"));
        }
        crate::problem::check_len("prior", 2, prior.len())?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
        }
        let weights = model.quadrature_weights();
        Ok(Self {
            model,
            observations,
            weights,
            prior,
            beta,
            fd_step: DEFAULT_FD_STEP,
            basin: None,
        })
    }

    pub fn from_config(config: &InverseProblemConfig) -> Result<Self> {
        let model = AdvDiffModel::new(config.cells)?;
        let m_true = DecisionVector::from_slice(&config.m_true)?;
        let theta = ParameterVector::from_slice(&config.theta_data)?;
        let observations = synthesize_observations(&model, &m_true, &theta, config.noise_std, config.noise_seed)?;
        let mut problem = Self::new(
            model,
            observations,
            DecisionVector::from_slice(&config.prior)?,
            config.beta,
        )?;
        match (&config.basin_lower, &config.basin_upper) {
            (Some(lo), Some(hi)) => problem.basin = Some(Basin::new(lo.clone(), hi.clone())?),
            (None, None) => {
                problem.basin = Some(Basin::new(
                    vec![0.0, f64::NEG_INFINITY],
                    vec![f64::INFINITY, f64::INFINITY],
                )?)
            }
            _ => {
                return Err(Error::InvalidInput(
                    "basin_lower and basin_upper must be given together".into(),
                ))
            }
        }
        Ok(problem)
    }

    pub fn with_fd_step(mut self, fd_step: f64) -> Self {
        self.fd_step = fd_step;
        self
    }

    pub fn model(&self) -> &AdvDiffModel {
        &self.model
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn prior(&self) -> &DecisionVector {
        &self.prior
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Forward solve at `(m, θ)`.
    pub fn state(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<Vec<f64>> {
        check_dims(self, m, theta)?;
        self.model.solve(&coefficients(m, theta), theta[0], theta[1])
    }

    fn regularization(&self, m: &DVector<f64>) -> f64 {
        0.5 * self.beta * (m - self.prior.as_vector()).norm_squared()
    }

    fn misfit(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let residual: Vec<f64> = u.iter().zip(&self.observations).map(|(a, b)| a - b).collect();
        let value = 0.5 * residual.iter().zip(&self.weights).map(|(r, w)| w * r * r).sum::<f64>();
        (value, residual)
    }

    /// `J` and the exact gradient of the discrete objective.
    pub fn objective_and_gradient(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        check_dims(self, m, theta)?;
        let c = coefficients(m, theta);
        let lu = self.model.factor(&c)?;
        let u = lu.solve(&self.model.source(theta[0], theta[1]));
        let (misfit, residual) = self.misfit(&u);
        let weighted: Vec<f64> = residual.iter().zip(&self.weights).map(|(r, w)| r * w).collect();

        let mut g = DVector::zeros(2);
        for (i, da) in [self.model.operator_dkappa(&c), self.model.operator_dvelocity(&c)]
            .iter()
            .enumerate()
        {
            // A wᵢ = −(∂A/∂mᵢ) u
            let rhs: Vec<f64> = da.matvec(&u).into_iter().map(|v| -v).collect();
            let w = lu.solve(&rhs);
            g[i] = weighted.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + self.beta * (m[i] - self.prior[i]);
        }
        let j = misfit + self.regularization(m);
        if !j.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("inverse-problem objective"));
        }
        Ok((j, g))
    }
}

impl Problem for InverseProblem {
    fn name(&self) -> &str {
        "advdiff"
    }

    fn decision_dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn objective(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        let u = self.state(m, theta)?;
        Ok(self.misfit(&u).0 + self.regularization(m))
    }

    fn gradient(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.objective_and_gradient(m, theta)?.1)
    }

    fn hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dims(self, m, theta)?;
        Ok(fd_hessian_with(|m, t| self.gradient(m, t), m, theta, self.fd_step)?.0)
    }

    fn mixed_hessian(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dims(self, m, theta)?;
        fd_mixed_with(|m, t| self.gradient(m, t), m, theta, self.fd_step)
    }

    fn second_derivatives(&self, m: &DVector<f64>, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_dims(self, m, theta)?;
        let sd = fd_second_derivatives_with(|m, t| self.gradient(m, t), m, theta, self.fd_step)?;
        Ok((sd.hessian, sd.mixed))
    }

    fn basin_hint(&self) -> Option<&Basin> {
        self.basin.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::derivatives::{check_derivatives, fd_gradient, relative_error};

    fn nominal() -> (InverseProblem, DVector<f64>, DVector<f64>) {
        let cfg = InverseProblemConfig::default();
        let p = InverseProblem::from_config(&cfg).unwrap();
        (p, DVector::from_vec(cfg.m_true), DVector::from_vec(cfg.theta_data))
    }

    #[test]
    fn perfect_fit_at_prior() {
        let cfg = InverseProblemConfig {
            m_true: vec![0.06, 0.32],
            ..Default::default()
        };
        let p = InverseProblem::from_config(&cfg).unwrap();
        let (j, g) = p
            .objective_and_gradient(
                &DVector::from_vec(cfg.prior.clone()),
                &DVector::from_vec(cfg.theta_data.clone()),
            )
            .unwrap();
        assert_eq!(j, 0.0);
        assert!(g.iter().all(|&v| v == 0.0), "{g}");
    }

    #[test]
    fn gradient_matches_differences_at_random_points() {
        let (p, _, theta) = nominal();
        let mut rng = sample_stream(99, 0);
        use rand::Rng;
        for _ in 0..10 {
            let m = DVector::from_vec(vec![rng.random_range(0.03..0.08), rng.random_range(0.2..0.6)]);
            let g = p.gradient(&m, &theta).unwrap();
            let fd = fd_gradient(&p, &m, &theta, DEFAULT_FD_STEP).unwrap();
            let e = relative_error(g.as_slice(), fd.as_slice());
            assert!(e <= 1e-5, "m={m} rel err {e}");
        }
    }

    #[test]
    fn passes_derivative_check_at_truth() {
        let (p, m, theta) = nominal();
        let r = check_derivatives(
            &p,
            &DecisionVector::from_vector(m).unwrap(),
            &ParameterVector::from_vector(theta).unwrap(),
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!(r.passes(1e-4), "{r:?}");
    }

    #[test]
    fn second_derivatives_match_second_differences_of_objective() {
        let (p, m, theta) = nominal();
        let (h, b) = p.second_derivatives(&m, &theta).unwrap();
        // independent route: second differences of J itself
        let step = 1e-4;
        let j = |m: &DVector<f64>, t: &DVector<f64>| p.objective(m, t).unwrap();
        let hm: Vec<f64> = m.iter().map(|x| step * x.abs().max(1.0)).collect();
        let ht: Vec<f64> = theta.iter().map(|x| step * x.abs().max(1.0)).collect();
        let shift = |v: &DVector<f64>, i: usize, d: f64| {
            let mut w = v.clone();
            w[i] += d;
            w
        };
        let mut h_fd = DMatrix::zeros(2, 2);
        for r in 0..2 {
            for c in 0..2 {
                let (a, bb) = (hm[r], hm[c]);
                h_fd[(r, c)] = (j(&shift(&shift(&m, r, a), c, bb), &theta)
                    - j(&shift(&shift(&m, r, a), c, -bb), &theta)
                    - j(&shift(&shift(&m, r, -a), c, bb), &theta)
                    + j(&shift(&shift(&m, r, -a), c, -bb), &theta))
                    / (4.0 * a * bb);
            }
        }
        let mut b_fd = DMatrix::zeros(2, 3);
        for r in 0..2 {
            for c in 0..3 {
                let (a, bb) = (hm[r], ht[c]);
                b_fd[(r, c)] = (j(&shift(&m, r, a), &shift(&theta, c, bb))
                    - j(&shift(&m, r, a), &shift(&theta, c, -bb))
                    - j(&shift(&m, r, -a), &shift(&theta, c, bb))
                    + j(&shift(&m, r, -a), &shift(&theta, c, -bb)))
                    / (4.0 * a * bb);
            }
        }
        assert!(relative_error(h.as_slice(), h_fd.as_slice()) <= 1e-4, "{h} vs {h_fd}");
        assert!(relative_error(b.as_slice(), b_fd.as_slice()) <= 1e-4, "{b} vs {b_fd}");
    }

    #[test]
    fn source_magnitude_column_is_nonzero() {
        let (p, m, theta) = nominal();
        let b = p.mixed_hessian(&m, &theta).unwrap();
        assert!(b.column(0).norm() > 0.0);
    }

    #[test]
    fn regularizer_adds_beta_to_hessian_diagonal() {
        let (p, m, theta) = nominal();
        let h0 = p.hessian(&m, &theta).unwrap();
        let h1 = p.clone().with_beta(p.beta() + 0.5).hessian(&m, &theta).unwrap();
        for i in 0..2 {
            assert!((h1[(i, i)] - h0[(i, i)] - 0.5).abs() <= 1e-6);
        }
        assert!((h1[(0, 1)] - h0[(0, 1)]).abs() <= 1e-6);
    }

    #[test]
    fn objective_is_nonnegative() {
        let (p, _, theta) = nominal();
        for k in [0.02, 0.05, 0.1] {
            for v in [-0.5, 0.0, 0.4, 1.0] {
                assert!(p.objective(&DVector::from_vec(vec![k, v]), &theta).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn noiseless_observations_equal_forward_solve() {
        let (p, m, theta) = nominal();
        assert_eq!(p.observations(), &p.state(&m, &theta).unwrap()[..]);
    }

    #[test]
    fn noisy_observations_are_reproducible() {
        let model = AdvDiffModel::new(64).unwrap();
        let m = DecisionVector::new(vec![0.05, 0.4]).unwrap();
        let t = ParameterVector::new(vec![10.0, 0.05, 1.0]).unwrap();
        let a = synthesize_observations(&model, &m, &t, 0.01, 5).unwrap();
        let b = synthesize_observations(&model, &m, &t, 0.01, 5).unwrap();
        let c = synthesize_observations(&model, &m, &t, 0.01, 6).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a, c);
    }

    #[test]
    fn nonpositive_kappa_is_an_evaluation_error() {
        let (p, _, theta) = nominal();
        let err = p.objective(&DVector::from_vec(vec![-0.01, 0.4]), &theta).unwrap_err();
        assert!(matches!(err, Error::Evaluation(_)), "{err}");
    }
}

//! Explicit time stepping of `dm*/dt = f(t, m*)`, `m*(0) = m*(θ̄)`, from
//! `t = 0` to `t = 1`. The final state approximates `m*(θ̃)`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::problem::{check_dims, DecisionVector, Problem};
use crate::sensitivity::{hessian_spectrum, ivp_rhs_apply, ParameterLine, SensitivityApply};
use crate::uq::loglog_slope;

/// The initial state must satisfy `‖g‖ ≤ STATIONARITY_TOL·(1 + |J|)`.
pub const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ForwardEuler,
    Heun,
    Rk4,
}

impl Scheme {
    /// Right-hand-side evaluations per step.
    pub fn stages(self) -> usize {
        match self {
            Scheme::ForwardEuler => 1,
            Scheme::Heun => 2,
            Scheme::Rk4 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::ForwardEuler => "forward_euler",
            Scheme::Heun => "heun",
            Scheme::Rk4 => "rk4",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "forward_euler" | "euler" => Ok(Scheme::ForwardEuler),
            "heun" => Ok(Scheme::Heun),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(Error::InvalidInput(format!(
                "unknown scheme {other:?} (expected forward_euler, heun or rk4)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarchConfig {
    pub num_steps: usize,
    pub scheme: Scheme,
    /// Keep every intermediate state and right-hand side, not just the
    /// endpoints.
    pub record_trajectory: bool,
}

impl MarchConfig {
    pub fn new(num_steps: usize) -> Result<Self> {
        let config = Self {
            num_steps,
            scheme: Scheme::ForwardEuler,
            record_trajectory: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn recording(mut self, record: bool) -> Self {
        self.record_trajectory = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_steps == 0 {
            return Err(Error::InvalidInput("number of steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        1.0 / self.num_steps as f64
    }

    /// `tₙ = n/N`; `t_N` is exactly 1.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.num_steps as f64
    }

    fn half_time(&self, n: usize) -> f64 {
        (n as f64 + 0.5) / self.num_steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarchStatus {
    Completed,
    /// The Hessian stopped being positive definite.
    AbortedIndefinite,
    /// A state or right-hand side became NaN or infinite.
    AbortedNonfinite,
    /// The problem failed to evaluate (e.g. the forward PDE solve).
    AbortedEvaluation,
}

impl MarchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MarchStatus::Completed => "completed",
            MarchStatus::AbortedIndefinite => "aborted_indefinite",
            MarchStatus::AbortedNonfinite => "aborted_nonfinite",
            MarchStatus::AbortedEvaluation => "aborted_evaluation",
        }
    }
}

impl fmt::Display for MarchStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The iterates `m*₀ … m*_N` of one march.
///
/// Without `record_trajectory` only the first and last states are kept. On
/// abnormal termination the last state is the last good one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub num_steps: usize,
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub states: Vec<DecisionVector>,
    pub rhs_evals: usize,
    /// Smallest Hessian eigenvalue at `(m*ₙ, θ(tₙ))` for each step taken.
    pub min_eigenvalues: Vec<f64>,
    /// `f(tₙ, m*ₙ) = D(m*ₙ, θ(tₙ))(θ̃ − θ̄)` for each step taken (recorded
    /// runs only).
    pub sensitivities: Vec<DecisionVector>,
    /// Smallest Hessian eigenvalue at the final state (recorded runs only).
    pub final_min_eigenvalue: Option<f64>,
    pub status: MarchStatus,
    /// Set when an iterate left the problem's basin hint.
    pub left_basin: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DecisionVector {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn is_completed(&self) -> bool {
        self.status == MarchStatus::Completed
    }

    /// CSV with columns `t, m_1..m_d, min_eig`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.states[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("m_{i}")));
        header.push("min_eig".into());
        writeln!(out, "{}", header.join(","))?;
        for (t, m) in self.times.iter().zip(&self.states) {
            let step = (t * self.num_steps as f64).round() as usize;
            let eig = if step < self.min_eigenvalues.len() {
                self.min_eigenvalues[step]
            } else if step == self.num_steps {
                self.final_min_eigenvalue.unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            let mut row = vec![fmt_f64(*t)];
            row.extend(m.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(eig));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn status_of(err: &Error) -> MarchStatus {
    match err {
        Error::IndefiniteHessian { .. } => MarchStatus::AbortedIndefinite,
        Error::NonFinite(_) => MarchStatus::AbortedNonfinite,
        _ => MarchStatus::AbortedEvaluation,
    }
}

/// `m + h·Σ wᵢ kᵢ`, rejecting non-finite results.
fn combine(m: &DecisionVector, h: f64, terms: &[(f64, &DecisionVector)]) -> Result<DecisionVector> {
    let mut next = m.as_vector().clone();
    for (w, k) in terms {
        next += k.as_vector() * (h * w);
    }
    DecisionVector::from_vector(next).map_err(|_| Error::NonFinite("march state"))
}

/// Marches from `initial` (a stationary point at `θ̄ = line.start()`) to
/// `t = 1`.
///
/// Returns `Err` only when the inputs are unusable; numerical breakdown
/// during the march ends it early with the corresponding [`MarchStatus`].
pub fn march<P: Problem + ?Sized>(
    problem: &P,
    initial: &DecisionVector,
    line: &ParameterLine,
    config: &MarchConfig,
) -> Result<Trajectory> {
    config.validate()?;
    check_dims(problem, initial, line.start())?;
    check_dims(problem, initial, line.end())?;

    let objective = problem.objective(initial, line.start())?;
    let grad_norm = problem.gradient(initial, line.start())?.norm();
    let tolerance = STATIONARITY_TOL * (1.0 + objective.abs());
    if !(grad_norm <= tolerance) {
        return Err(Error::NotStationary { grad_norm, tolerance });
    }

    let n_steps = config.num_steps;
    let h = config.step_size();
    let record = config.record_trajectory;
    let basin = problem.basin_hint();

    let mut traj = Trajectory {
        num_steps: n_steps,
        scheme: config.scheme,
        times: vec![0.0],
        states: vec![initial.clone()],
        rhs_evals: 0,
        min_eigenvalues: Vec::with_capacity(n_steps),
        sensitivities: Vec::new(),
        final_min_eigenvalue: None,
        status: MarchStatus::Completed,
        left_basin: false,
        failure: None,
    };

    let mut m = initial.clone();
    for n in 0..n_steps {
        let t = config.time(n);
        let t_next = config.time(n + 1);
        let mut evals = 0usize;
        let mut rhs = |t: f64, state: &DecisionVector| -> Result<SensitivityApply> {
            let r = ivp_rhs_apply(problem, line, t, state);
            if r.is_ok() {
                evals += 1;
            }
            r
        };
        let step: Result<(DecisionVector, SensitivityApply)> = (|| {
            let k1 = rhs(t, &m)?;
            let next = match config.scheme {
                Scheme::ForwardEuler => combine(&m, h, &[(1.0, &k1.result)])?,
                Scheme::Heun => {
                    let predictor = combine(&m, h, &[(1.0, &k1.result)])?;
                    let k2 = rhs(t_next, &predictor)?;
                    combine(&m, h, &[(0.5, &k1.result), (0.5, &k2.result)])?
                }
                Scheme::Rk4 => {
                    let t_half = config.half_time(n);
                    let k2 = rhs(t_half, &combine(&m, h, &[(0.5, &k1.result)])?)?;
                    let k3 = rhs(t_half, &combine(&m, h, &[(0.5, &k2.result)])?)?;
                    let k4 = rhs(t_next, &combine(&m, h, &[(1.0, &k3.result)])?)?;
                    combine(
                        &m,
                        h,
                        &[
                            (1.0 / 6.0, &k1.result),
                            (1.0 / 3.0, &k2.result),
                            (1.0 / 3.0, &k3.result),
                            (1.0 / 6.0, &k4.result),
                        ],
                    )?
                }
            };
            Ok((next, k1))
        })();
        traj.rhs_evals += evals;

        match step {
            Ok((next, k1)) => {
                traj.min_eigenvalues.push(k1.hessian_min_eigenvalue);
                if record {
                    traj.sensitivities.push(k1.result);
                }
                if let Some(b) = basin {
                    if !b.contains(&next) {
                        traj.left_basin = true;
                    }
                }
                m = next;
                if record || n + 1 == n_steps {
                    traj.times.push(t_next);
                    traj.states.push(m.clone());
                }
            }
            Err(e) => {
                traj.status = status_of(&e);
                traj.failure = Some(format!("step {n} (t = {t}): {e}"));
                if !record && n > 0 {
                    traj.times.push(t);
                    traj.states.push(m);
                }
                return Ok(traj);
            }
        }
    }

    if record {
        let theta_end = line.end();
        traj.final_min_eigenvalue = problem
            .hessian(&m, theta_end)
            .ok()
            .and_then(|hm| hessian_spectrum(&hm).ok())
            .map(|s| s.min_eigenvalue);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub num_steps: usize,
    pub step_size: f64,
    /// `‖m*_N − oracle‖₂`, NaN for a failed march.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSweep {
    pub points: Vec<SweepPoint>,
    pub failed: usize,
}

impl ErrorSweep {
    /// Least-squares slope of `log error` against `log h` over the
    /// successful marches.
    pub fn slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.step_size, p.error)).collect();
        loglog_slope(&pts)
    }
}

/// Final-state error against a known minimizer at `θ̃` for each step count.
pub fn march_error_vs_oracle<P: Problem + ?Sized>(
    problem: &P,
    initial: &DecisionVector,
    line: &ParameterLine,
    step_counts: &[usize],
    scheme: Scheme,
    oracle: &DecisionVector,
) -> Result<ErrorSweep> {
    check_dims(problem, oracle, line.end())?;
    let mut points = Vec::with_capacity(step_counts.len());
    let mut failed = 0;
    for &n in step_counts {
        let config = MarchConfig::new(n)?.with_scheme(scheme);
        let traj = march(problem, initial, line, &config)?;
        let error = if traj.is_completed() {
            (traj.final_state().as_vector() - oracle.as_vector()).norm()
        } else {
            failed += 1;
            f64::NAN
        };
        points.push(SweepPoint {
            num_steps: n,
            step_size: config.step_size(),
            error,
        });
    }
    Ok(ErrorSweep { points, failed })
}

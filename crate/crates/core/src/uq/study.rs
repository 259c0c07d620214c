use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marching::{march, MarchConfig, MarchStatus, Scheme};
use crate::newton::{solve_nominal, solve_or_record, NewtonConfig, SolveResult};
use crate::problem::{DecisionVector, ParameterBox, ParameterVector, Problem};
use crate::sensitivity::ParameterLine;
use crate::uq::loglog_slope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub num_samples: usize,
    /// Step counts `N` to march each sample with.
    pub step_counts: Vec<usize>,
    pub seed: u64,
    /// Re-solve every sample with Newton as a reference.
    pub with_oracle: bool,
    pub scheme: Scheme,
    /// Keep per-step right-hand sides for [`sensitivity_log`].
    pub record_trajectory: bool,
    pub newton: NewtonConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            num_samples: 5000,
            step_counts: vec![1, 2, 4, 8, 16],
            seed: 0,
            with_oracle: true,
            scheme: Scheme::ForwardEuler,
            record_trajectory: false,
            newton: NewtonConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidInput("num_samples must be at least 1".into()));
        }
        if self.step_counts.is_empty() {
            return Err(Error::InvalidInput("at least one step count is required".into()));
        }
        if let Some(bad) = self.step_counts.iter().find(|&&n| n == 0) {
            return Err(Error::InvalidInput(format!("step counts must be positive, got {bad}")));
        }
        self.newton.validate()
    }
}

/// The result of marching one sample with one step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchOutcome {
    pub num_steps: usize,
    /// Final state, or the last good state of an aborted march.
    pub state: DecisionVector,
    pub status: MarchStatus,
    pub left_basin: bool,
    pub rhs_evals: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensitivities: Vec<DecisionVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub minimizer: DecisionVector,
    pub converged: bool,
    pub iterations: usize,
    /// Absent when the solve failed before producing a gradient.
    pub grad_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl From<SolveResult> for OracleOutcome {
    fn from(r: SolveResult) -> Self {
        Self {
            minimizer: r.minimizer,
            converged: r.converged,
            iterations: r.iterations,
            grad_norm: r.grad_norm.is_finite().then_some(r.grad_norm),
            failure: r.failure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok,
    /// At least one march ended early.
    MarchFailed,
    /// Every march completed but the reference solve did not converge.
    OracleFailed,
}

impl SampleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleStatus::Ok => "ok",
            SampleStatus::MarchFailed => "march_failed",
            SampleStatus::OracleFailed => "oracle_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub theta: ParameterVector,
    /// One entry per step count, in the study's order.
    pub marches: Vec<MarchOutcome>,
    pub oracle: Option<OracleOutcome>,
    pub status: SampleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStudy {
    pub problem: String,
    pub parameter_box: ParameterBox,
    pub config: StudyConfig,
    pub nominal: SolveResult,
    pub samples: Vec<SampleRecord>,
}

impl SampleStudy {
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn step_counts(&self) -> &[usize] {
        &self.config.step_counts
    }

    pub fn count_status(&self, status: SampleStatus) -> usize {
        self.samples.iter().filter(|s| s.status == status).count()
    }

    /// Samples whose reference solve did not converge, whatever their march
    /// status.
    pub fn oracle_failures(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.oracle.as_ref().is_some_and(|o| !o.converged))
            .count()
    }

    /// Marches (over all samples and step counts) that ended with `status`.
    pub fn count_marches(&self, status: MarchStatus) -> usize {
        self.samples
            .iter()
            .flat_map(|s| &s.marches)
            .filter(|m| m.status == status)
            .count()
    }

    /// Final march states for step-count position `k`, over samples with
    /// status [`SampleStatus::Ok`].
    pub fn march_states(&self, k: usize) -> Vec<DecisionVector> {
        self.usable().map(|s| s.marches[k].state.clone()).collect()
    }

    /// Reference minimizers over samples with status [`SampleStatus::Ok`].
    pub fn oracle_states(&self) -> Vec<DecisionVector> {
        self.usable()
            .filter_map(|s| s.oracle.as_ref().map(|o| o.minimizer.clone()))
            .collect()
    }

    fn usable(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(|s| s.status == SampleStatus::Ok)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::InvalidInput(format!("study serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("study deserialization: {e}")))
    }
}

/// Solves at the nominal parameters from `initial_guess`, then marches
/// `config.num_samples` uniform draws from `parameters`.
///
/// Sample `i` is drawn from its own random stream, so the study does not
/// depend on how the work is scheduled across threads.
pub fn propagate_study<P: Problem + ?Sized>(
    problem: &P,
    parameters: &ParameterBox,
    initial_guess: &DecisionVector,
    config: &StudyConfig,
) -> Result<SampleStudy> {
    config.validate()?;
    let thetas: Vec<ParameterVector> = (0..config.num_samples as u64)
        .into_par_iter()
        .map(|i| parameters.sample_at(config.seed, i))
        .collect();
    propagate_samples(problem, parameters, initial_guess, thetas, config)
}

/// [`propagate_study`] over given parameter samples instead of random draws.
pub fn propagate_samples<P: Problem + ?Sized>(
    problem: &P,
    parameters: &ParameterBox,
    initial_guess: &DecisionVector,
    thetas: Vec<ParameterVector>,
    config: &StudyConfig,
) -> Result<SampleStudy> {
    config.validate()?;
    if thetas.is_empty() {
        return Err(Error::InvalidInput("no parameter samples".into()));
    }
    for theta in &thetas {
        parameters.check_membership(theta)?;
    }
    let nominal = solve_nominal(problem, parameters, initial_guess, &config.newton)?;
    let m0 = &nominal.minimizer;
    let march_configs: Vec<MarchConfig> = config
        .step_counts
        .iter()
        .map(|&n| MarchConfig::new(n).map(|c| c.with_scheme(config.scheme).recording(config.record_trajectory)))
        .collect::<Result<_>>()?;

    let samples: Vec<SampleRecord> = thetas
        .into_par_iter()
        .enumerate()
        .map(|(index, theta)| -> Result<SampleRecord> {
            let line = ParameterLine::new(parameters.nominal().clone(), theta.clone())?;
            let marches = march_configs
                .iter()
                .map(|mc| {
                    let traj = march(problem, m0, &line, mc)?;
                    Ok(MarchOutcome {
                        num_steps: mc.num_steps,
                        state: traj.final_state().clone(),
                        status: traj.status,
                        left_basin: traj.left_basin,
                        rhs_evals: traj.rhs_evals,
                        sensitivities: traj.sensitivities,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            // warm start from the nominal minimizer
            let oracle = config
                .with_oracle
                .then(|| OracleOutcome::from(solve_or_record(problem, &theta, m0, &config.newton)));
            let status = if marches.iter().any(|m| m.status != MarchStatus::Completed) {
                SampleStatus::MarchFailed
            } else if oracle.as_ref().is_some_and(|o| !o.converged) {
                SampleStatus::OracleFailed
            } else {
                SampleStatus::Ok
            };
            Ok(SampleRecord {
                index,
                theta,
                marches,
                oracle,
                status,
            })
        })
        .collect::<Result<_>>()?;

    Ok(SampleStudy {
        problem: problem.name().to_string(),
        parameter_box: parameters.clone(),
        config: config.clone(),
        nominal,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `|mean(m*_N) − mean(oracle)|` per coordinate.
    Mean,
    /// `|std(m*_N) − std(oracle)|` per coordinate.
    StdDev,
    /// Mean over samples of `‖m*_N − oracle‖₂`.
    PerSampleError,
}

/// Error of one statistic against the reference distribution for each step
/// count, with the fitted log-log slope per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub statistic: Statistic,
    pub step_counts: Vec<usize>,
    pub step_sizes: Vec<f64>,
    /// `errors[k][i]`: step count `k`, column `i` (one column per decision
    /// coordinate, or a single column for [`Statistic::PerSampleError`]).
    pub errors: Vec<Vec<f64>>,
    /// `None` when fewer than three step counts give a positive error.
    pub slopes: Vec<Option<f64>>,
    /// Order of the reference line the slopes are compared with.
    pub reference_order: f64,
    pub samples_used: usize,
    pub samples_excluded: usize,
}

fn mean_std(columns: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = columns.clone().count() as f64;
    let mean = columns.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        columns.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// `‖m*_N − oracle‖₂` for step-count position `k`, over usable samples in
/// index order.
pub fn per_sample_errors(study: &SampleStudy, k: usize) -> Result<Vec<f64>> {
    if k >= study.config.step_counts.len() {
        return Err(Error::InvalidInput(format!("step-count position {k} out of range")));
    }
    study
        .usable()
        .map(|s| {
            let oracle = s
                .oracle
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("study was run without reference solves".into()))?;
            Ok((s.marches[k].state.as_vector() - oracle.minimizer.as_vector()).norm())
        })
        .collect()
}

/// Mean, standard-deviation and per-sample error reports. Samples with a
/// failed march or reference solve are excluded and counted.
pub fn summary_errors(study: &SampleStudy) -> Result<Vec<ConvergenceReport>> {
    if !study.config.with_oracle {
        return Err(Error::InvalidInput("study was run without reference solves".into()));
    }
    let usable: Vec<&SampleRecord> = study.usable().collect();
    if usable.is_empty() {
        return Err(Error::InvalidInput(
            "no sample completed every march and reference solve".into(),
        ));
    }
    let excluded = study.samples.len() - usable.len();
    let d = study.nominal.minimizer.len();
    let step_counts = study.config.step_counts.clone();
    let step_sizes: Vec<f64> = step_counts.iter().map(|&n| 1.0 / n as f64).collect();

    let oracle_col = |i: usize| {
        usable
            .iter()
            .map(move |s| s.oracle.as_ref().map_or(f64::NAN, |o| o.minimizer[i]))
    };
    let oracle_moments: Vec<(f64, f64)> = (0..d).map(|i| mean_std(oracle_col(i))).collect();

    let mut mean_errors = Vec::with_capacity(step_counts.len());
    let mut std_errors = Vec::with_capacity(step_counts.len());
    let mut sample_errors = Vec::with_capacity(step_counts.len());
    for k in 0..step_counts.len() {
        let mut me = Vec::with_capacity(d);
        let mut se = Vec::with_capacity(d);
        for (i, (om, os)) in oracle_moments.iter().enumerate() {
            let (m, s) = mean_std(usable.iter().map(|r| r.marches[k].state[i]));
            me.push((m - om).abs());
            se.push((s - os).abs());
        }
        mean_errors.push(me);
        std_errors.push(se);
        let errs = per_sample_errors(study, k)?;
        sample_errors.push(vec![errs.iter().sum::<f64>() / errs.len() as f64]);
    }

    let report = |statistic, errors: Vec<Vec<f64>>| {
        let cols = errors.first().map_or(0, Vec::len);
        let slopes = (0..cols)
            .map(|i| {
                let pts: Vec<(f64, f64)> = step_sizes.iter().zip(&errors).map(|(&h, e)| (h, e[i])).collect();
                loglog_slope(&pts)
            })
            .collect();
        ConvergenceReport {
            statistic,
            step_counts: step_counts.clone(),
            step_sizes: step_sizes.clone(),
            errors,
            slopes,
            reference_order: study.config.scheme_order(),
            samples_used: usable.len(),
            samples_excluded: excluded,
        }
    };
    Ok(vec![
        report(Statistic::Mean, mean_errors),
        report(Statistic::StdDev, std_errors),
        report(Statistic::PerSampleError, sample_errors),
    ])
}

impl StudyConfig {
    fn scheme_order(&self) -> f64 {
        match self.scheme {
            Scheme::ForwardEuler => 1.0,
            Scheme::Heun => 2.0,
            Scheme::Rk4 => 4.0,
        }
    }
}

/// One step of one march: `f(tₙ, m*ₙ) = D·(θ̃ − θ̄)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub sample: usize,
    pub num_steps: usize,
    pub step: usize,
    pub t: f64,
    pub norm: f64,
    pub components: Vec<f64>,
}

/// Every recorded right-hand side of every march, ordered by sample, step
/// count and step.
pub fn sensitivity_log(study: &SampleStudy) -> Result<Vec<SensitivityRow>> {
    if !study.config.record_trajectory {
        return Err(Error::InvalidInput(
            "study was run without recording trajectories".into(),
        ));
    }
    let mut rows = Vec::new();
    for s in &study.samples {
        for m in &s.marches {
            for (n, f) in m.sensitivities.iter().enumerate() {
                rows.push(SensitivityRow {
                    sample: s.index,
                    num_steps: m.num_steps,
                    step: n,
                    t: n as f64 / m.num_steps as f64,
                    norm: f.as_vector().norm(),
                    components: f.to_vec(),
                });
            }
        }
    }
    Ok(rows)
}

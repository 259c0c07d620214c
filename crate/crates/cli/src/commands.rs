//! The `check`, `study` and `trajectory` commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::Rng;
use serde_json::{json, Value};

use postopt_core::io::fmt_f64;
use postopt_core::problem::sample_stream;
use postopt_core::uq::{
    kde, propagate_study, sensitivity_log, summary_errors, ConvergenceReport, DensitySelector, SampleStatus,
    SampleStudy, StudyConfig, MIN_KDE_SAMPLES,
};
use postopt_core::{
    check_derivatives, march, solve_nominal, DecisionVector, DerivativeCheckReport, MarchConfig, MarchStatus,
    ParameterLine, ParameterVector, SolveResult, Trajectory,
};

use crate::config::{ConfigFile, ProblemKind, RunConfig};
use crate::output::{errors_csv, oracle_csv, samples_csv, sensitivity_csv, write_atomic};

/// Random points per problem in `check`, besides the nominal minimizer.
pub const CHECK_POINTS: usize = 10;

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub problem: ProblemKind,
    pub tolerance: f64,
    /// Worst report over all points, when every evaluation succeeded.
    pub report: Option<DerivativeCheckReport>,
    pub error: Option<String>,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.report.is_some_and(|r| r.passes(self.tolerance))
    }
}

/// Settings for `kind` in `check`: the run's own settings if it targets that
/// problem, otherwise its defaults with the shared numerical options.
fn check_settings(config: &RunConfig, kind: ProblemKind) -> Result<RunConfig> {
    if kind == config.problem {
        return Ok(config.clone());
    }
    let file = ConfigFile {
        problem: Some(kind),
        seed: Some(config.seed),
        fd_step: Some(config.fd_step),
        newton: Some(config.newton),
        advdiff: Some(config.advdiff.clone()),
        ..Default::default()
    };
    RunConfig::resolve(file, Default::default())
}

fn check_one(config: &RunConfig) -> Result<DerivativeCheckReport> {
    let problem = config.build_problem()?;
    let parameters = config.parameter_box()?;
    let nominal = solve_nominal(&problem, &parameters, &config.initial_guess()?, &config.newton)?;
    let mut rng = sample_stream(config.seed, u64::MAX);
    let mut worst: Option<DerivativeCheckReport> = None;
    for i in 0..CHECK_POINTS as u64 {
        let theta = parameters.sample_at(config.seed, i);
        let m: Vec<f64> = nominal
            .minimizer
            .iter()
            .map(|x| x * rng.random_range(0.9..1.1))
            .collect();
        let r = check_derivatives(&problem, &DecisionVector::new(m)?, &theta, config.fd_step)?;
        worst = Some(worst.map_or(r, |w| w.worst(r)));
    }
    Ok(worst.expect("at least one point"))
}

/// Finite-difference checks of `g`, `H` and `B` for every built-in problem.
pub fn check(config: &RunConfig) -> Vec<CheckRow> {
    ProblemKind::ALL
        .iter()
        .map(|&kind| {
            let result = check_settings(config, kind).and_then(|c| check_one(&c));
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(format!("{e:#}"))),
            };
            CheckRow {
                problem: kind,
                tolerance: kind.check_tolerance(),
                report,
                error,
            }
        })
        .collect()
}

/// A density written (or skipped) by `study`.
#[derive(Debug, Clone)]
pub struct KdeFile {
    pub name: String,
    pub bandwidth: Vec<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug)]
pub struct StudyOutcome {
    pub study: SampleStudy,
    pub reports: Option<Vec<ConvergenceReport>>,
    pub kde_files: Vec<KdeFile>,
    pub output_dir: PathBuf,
}

impl StudyOutcome {
    pub fn report(&self, statistic: postopt_core::uq::Statistic) -> Option<&ConvergenceReport> {
        self.reports.as_ref()?.iter().find(|r| r.statistic == statistic)
    }
}

fn study_config(config: &RunConfig) -> StudyConfig {
    StudyConfig {
        num_samples: config.num_samples,
        step_counts: config.step_counts.clone(),
        seed: config.seed,
        with_oracle: config.with_oracle,
        scheme: config.scheme,
        record_trajectory: config.record_trajectory,
        newton: config.newton,
    }
}

fn selectors(d: usize) -> Vec<(DensitySelector, String)> {
    let mut out: Vec<_> = (0..d)
        .map(|k| (DensitySelector::Marginal(k), format!("kde_marginal_{}", k + 1)))
        .collect();
    if d == 2 {
        out.push((DensitySelector::Joint(0, 1), "kde_joint".to_string()));
    }
    out
}

fn write_densities(
    dir: &Path,
    states: &[DecisionVector],
    suffix: &str,
    config: &RunConfig,
    files: &mut Vec<KdeFile>,
) -> Result<()> {
    let d = states.first().map_or(0, |s| s.len());
    for (selector, stem) in selectors(d) {
        let name = format!("{stem}_{suffix}.csv");
        match kde(states, selector, &config.kde) {
            Ok(est) => {
                let mut bytes = Vec::new();
                est.write_csv(&mut bytes)?;
                write_atomic(&dir.join(&name), &bytes)?;
                files.push(KdeFile {
                    name,
                    bandwidth: est.bandwidth.clone(),
                    skipped: None,
                });
            }
            Err(e) => files.push(KdeFile {
                name,
                bandwidth: Vec::new(),
                skipped: Some(e.to_string()),
            }),
        }
    }
    Ok(())
}

fn slopes_json(reports: &Option<Vec<ConvergenceReport>>) -> Value {
    let Some(reports) = reports else { return Value::Null };
    reports
        .iter()
        .map(|r| {
            let key = serde_json::to_value(r.statistic).expect("statistic serializes");
            (key.as_str().unwrap_or_default().to_string(), json!(r.slopes))
        })
        .collect::<serde_json::Map<_, _>>()
        .into()
}

/// Samples the box, marches every sample for each step count, optionally
/// re-solves it, and writes the tables, densities and manifest to the
/// output directory.
pub fn study(config: &RunConfig) -> Result<StudyOutcome> {
    let start = Instant::now();
    let problem = config.build_problem()?;
    let parameters = config.parameter_box()?;
    let initial = config.initial_guess()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let pool = config.thread_pool()?;
    let threads = pool.current_num_threads();
    let study = pool.install(|| propagate_study(&problem, &parameters, &initial, &study_config(config)))?;
    let propagate_seconds = start.elapsed().as_secs_f64();

    let report_start = Instant::now();
    let reports = if config.with_oracle {
        match summary_errors(&study) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!("warning: no convergence report: {e}");
                None
            }
        }
    } else {
        None
    };

    write_atomic(&dir.join("samples.csv"), &samples_csv(&study))?;
    if config.with_oracle {
        write_atomic(&dir.join("oracle.csv"), &oracle_csv(&study))?;
    }
    if let Some(r) = &reports {
        write_atomic(&dir.join("errors_vs_N.csv"), &errors_csv(r))?;
    }
    if config.record_trajectory {
        let rows = sensitivity_log(&study)?;
        write_atomic(
            &dir.join("sensitivity_log.csv"),
            &sensitivity_csv(&rows, study.nominal.minimizer.len()),
        )?;
    }

    let mut kde_files = Vec::new();
    for (k, n) in study.step_counts().iter().enumerate() {
        let states: Vec<DecisionVector> = study
            .samples
            .iter()
            .filter(|s| s.marches[k].status == MarchStatus::Completed)
            .map(|s| s.marches[k].state.clone())
            .collect();
        write_densities(&dir, &states, &format!("N{n}"), config, &mut kde_files)?;
    }
    if config.with_oracle {
        write_densities(&dir, &study.oracle_states(), "oracle", config, &mut kde_files)?;
    }
    let report_seconds = report_start.elapsed().as_secs_f64();

    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "problem": study.problem,
        "config": config,
        "parameter_box": {
            "nominal": study.parameter_box.nominal().to_vec(),
            "half_widths": study.parameter_box.half_widths(),
        },
        "nominal": nominal_json(&study.nominal),
        "oracle_initial_guess": "nominal_minimizer",
        "workers": threads,
        "timings_seconds": {
            "propagate": propagate_seconds,
            "report": report_seconds,
            "total": start.elapsed().as_secs_f64(),
        },
        "counts": {
            "samples": study.num_samples(),
            "ok": study.count_status(SampleStatus::Ok),
            "march_failed": study.count_status(SampleStatus::MarchFailed),
            "oracle_failed": study.count_status(SampleStatus::OracleFailed),
            "oracle_non_converged": study.oracle_failures(),
            "marches_aborted_indefinite": study.count_marches(MarchStatus::AbortedIndefinite),
            "marches_aborted_nonfinite": study.count_marches(MarchStatus::AbortedNonfinite),
            "marches_aborted_evaluation": study.count_marches(MarchStatus::AbortedEvaluation),
            "marches_left_basin": study.samples.iter().flat_map(|s| &s.marches).filter(|m| m.left_basin).count(),
        },
        "slopes": slopes_json(&reports),
        "kde": {
            "kernel": "gaussian",
            "bandwidth_rule": "silverman",
            "min_samples": MIN_KDE_SAMPLES,
            "grid": config.kde,
            "files": kde_files.iter().map(|f| json!({
                "name": f.name,
                "bandwidth": f.bandwidth,
                "skipped": f.skipped,
            })).collect::<Vec<_>>(),
        },
    });
    write_atomic(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;

    Ok(StudyOutcome {
        study,
        reports,
        kde_files,
        output_dir: dir,
    })
}

fn nominal_json(r: &SolveResult) -> Value {
    json!({
        "minimizer": r.minimizer.to_vec(),
        "objective": r.objective,
        "grad_norm": r.grad_norm,
        "iterations": r.iterations,
        "converged": r.converged,
        "hessian_min_eigenvalue": r.hessian_min_eigenvalue,
    })
}

#[derive(Debug)]
pub struct TrajectoryOutcome {
    pub theta: ParameterVector,
    pub nominal: SolveResult,
    pub trajectory: Trajectory,
    /// Newton re-solve at `θ̃`, when the oracle is enabled.
    pub oracle: Option<SolveResult>,
}

/// Marches one sample `θ̃` with recording on and writes
/// `trajectory.csv`, `trajectory_sensitivity.csv` and `trajectory.json`.
pub fn trajectory(config: &RunConfig) -> Result<TrajectoryOutcome> {
    let problem = config.build_problem()?;
    let parameters = config.parameter_box()?;
    let theta = match &config.trajectory.theta {
        Some(t) => ParameterVector::from_slice(t)?,
        None => parameters.nominal().clone(),
    };
    parameters.check_membership(theta.as_vector())?;
    let num_steps = config
        .trajectory
        .num_steps
        .unwrap_or(crate::config::DEFAULT_TRAJECTORY_STEPS);
    let march_config = MarchConfig::new(num_steps)?.with_scheme(config.scheme).recording(true);

    let nominal = solve_nominal(&problem, &parameters, &config.initial_guess()?, &config.newton)?;
    let line = ParameterLine::new(parameters.nominal().clone(), theta.clone())?;
    let traj = march(&problem, &nominal.minimizer, &line, &march_config)?;
    let oracle = if config.with_oracle {
        Some(postopt_core::newton_solve(
            &problem,
            &theta,
            &nominal.minimizer,
            &config.newton,
        )?)
    } else {
        None
    };

    let dir = &config.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut bytes = Vec::new();
    traj.write_csv(&mut bytes)?;
    write_atomic(&dir.join("trajectory.csv"), &bytes)?;

    let d = nominal.minimizer.len();
    let rows: Vec<_> = traj
        .sensitivities
        .iter()
        .enumerate()
        .map(|(n, f)| postopt_core::uq::SensitivityRow {
            sample: 0,
            num_steps,
            step: n,
            t: traj.times[n],
            norm: f.as_vector().norm(),
            components: f.to_vec(),
        })
        .collect();
    write_atomic(&dir.join("trajectory_sensitivity.csv"), &sensitivity_csv(&rows, d))?;

    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "problem": problem.name(),
        "theta": theta.to_vec(),
        "num_steps": num_steps,
        "scheme": config.scheme,
        "status": traj.status,
        "failure": traj.failure,
        "left_basin": traj.left_basin,
        "rhs_evals": traj.rhs_evals,
        "final_state": traj.final_state().to_vec(),
        "nominal": nominal_json(&nominal),
        "oracle": oracle.as_ref().map(nominal_json),
    });
    write_atomic(
        &dir.join("trajectory.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;

    Ok(TrajectoryOutcome {
        theta,
        nominal,
        trajectory: traj,
        oracle,
    })
}

/// Human-readable lines for a finished study.
pub fn describe_study(outcome: &StudyOutcome) -> Vec<String> {
    let s = &outcome.study;
    let mut lines = vec![format!(
        "{}: {} samples, {} ok, {} march failures, {} reference failures",
        s.problem,
        s.num_samples(),
        s.count_status(SampleStatus::Ok),
        s.count_status(SampleStatus::MarchFailed),
        s.oracle_failures(),
    )];
    if let Some(reports) = &outcome.reports {
        for r in reports {
            let slopes: Vec<String> = r
                .slopes
                .iter()
                .map(|s| s.map_or("n/a".to_string(), |v| format!("{v:.3}")))
                .collect();
            lines.push(format!("{:?} error slope: {}", r.statistic, slopes.join(", ")));
        }
    }
    for f in outcome.kde_files.iter().filter(|f| f.skipped.is_some()) {
        lines.push(format!(
            "skipped {}: {}",
            f.name,
            f.skipped.as_deref().unwrap_or_default()
        ));
    }
    lines.push(format!("wrote {}", outcome.output_dir.display()));
    lines
}

pub fn describe_trajectory(outcome: &TrajectoryOutcome) -> Result<Vec<String>> {
    let t = &outcome.trajectory;
    let fmt = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
    let mut lines = vec![format!(
        "{} after {} steps: m = [{}]",
        t.status.as_str(),
        t.num_steps,
        fmt(t.final_state().as_slice())
    )];
    if let Some(f) = &t.failure {
        lines.push(format!("failure: {f}"));
    }
    if let Some(o) = &outcome.oracle {
        if !o.converged {
            bail!(
                "reference solve did not converge: {}",
                o.failure.as_deref().unwrap_or("unknown")
            );
        }
        let err = (t.final_state().as_vector() - o.minimizer.as_vector()).norm();
        lines.push(format!(
            "newton m = [{}], error {}",
            fmt(o.minimizer.as_slice()),
            fmt_f64(err)
        ));
    }
    Ok(lines)
}

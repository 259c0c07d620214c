//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use postopt_cli::commands::study;
use postopt_cli::{ProblemKind, RunConfig};
use postopt_core::newton::newton_solve;
use postopt_core::problem::derivatives::relative_error;
use postopt_core::problems::advdiff::{AdvDiffModel, Coefficients};
use postopt_core::uq::{loglog_slope, per_sample_errors, Statistic};
use postopt_core::{post_optimality_apply, solve_nominal, ParameterVector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn config(kind: ProblemKind, dir: &Path) -> RunConfig {
    let mut c = RunConfig::defaults(kind).unwrap();
    c.output_dir = dir.to_path_buf();
    c.seed = 2024;
    c
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn logistic_first_order() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let c = config(ProblemKind::Logistic1d, dir.path());
    assert_eq!((c.num_samples, c.step_counts.clone()), (5000, vec![1, 2, 4, 8, 16]));
    assert_eq!(c.parameter_box.relative, Some(vec![0.4]));
    let out = study(&c).map_err(|e| e.to_string())?;
    let mean = out.report(Statistic::Mean).unwrap().slopes[0].unwrap_or(f64::NAN);
    let std = out.report(Statistic::StdDev).unwrap().slopes[0].unwrap_or(f64::NAN);
    let ok = (0.8..=1.2).contains(&mean) && (0.8..=1.2).contains(&std);
    // slope between the two finest step counts, for context
    let e = &out.report(Statistic::StdDev).unwrap().errors;
    let local = (e[3][0] / e[4][0]).log2();
    verdict(
        ok,
        format!("mean-error slope {mean:.3}, std-error slope {std:.3}, required [0.8, 1.2] (std-error local slope N=8..16 {local:.3})"),
    )
}

fn logistic_matches_oracle_at_large_n() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(ProblemKind::Logistic1d, dir.path());
    c.step_counts = vec![128];
    let out = study(&c).map_err(|e| e.to_string())?;
    let errs = per_sample_errors(&out.study, 0).map_err(|e| e.to_string())?;
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let max = errs.iter().cloned().fold(0.0, f64::max);
    let ok = errs.len() == 5000 && mean <= 5e-3 && max <= 5e-2;
    verdict(
        ok,
        format!(
            "{} samples, mean error {mean:.3e} (≤ 5e-3), max {max:.3e} (≤ 5e-2)",
            errs.len()
        ),
    )
}

fn affine_maps_are_exact() -> Outcome {
    let mut worst = Vec::new();
    let mut ok = true;
    for (kind, coordinate) in [(ProblemKind::Quadratic, 0), (ProblemKind::Cubic, 1)] {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(kind, dir.path());
        c.num_samples = 1000;
        c.step_counts = vec![1, 2, 3, 5, 8, 16, 32, 64];
        let out = study(&c).map_err(|e| e.to_string())?;
        let mut err: f64 = 0.0;
        for s in &out.study.samples {
            let exact = s.theta[coordinate];
            for m in &s.marches {
                ok &= m.status.as_str() == "completed";
                err = err.max((m.state[0] - exact).abs());
            }
            ok &= s
                .oracle
                .as_ref()
                .is_some_and(|o| (o.minimizer[0] - exact).abs() <= 1e-12);
        }
        ok &= err <= 1e-12;
        worst.push(format!("{kind} max error {err:.2e}"));
    }
    verdict(ok, format!("{} over N in 1..64 (≤ 1e-12)", worst.join(", ")))
}

fn operator_matches_argmin_differences() -> Outcome {
    let delta = 1e-4;
    let mut details = Vec::new();
    let mut ok = true;
    for kind in ProblemKind::ALL {
        let c = RunConfig::defaults(kind).unwrap();
        let problem = c.build_problem().unwrap();
        let parameters = c.parameter_box().unwrap();
        let nominal =
            solve_nominal(&problem, &parameters, &c.initial_guess().unwrap(), &c.newton).map_err(|e| e.to_string())?;
        let center = parameters.nominal().as_vector();
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            let direction = parameters.sample_at(77, i).as_vector() - center;
            let solve = |sign: f64| {
                let theta = ParameterVector::from_vector(center + &direction * (sign * delta)).unwrap();
                let r = newton_solve(&problem, &theta, &nominal.minimizer, &c.newton).unwrap();
                assert!(r.converged, "{kind}: {:?}", r.failure);
                r.minimizer.into_inner()
            };
            let fd = (solve(1.0) - solve(-1.0)) / (2.0 * delta);
            let applied = post_optimality_apply(
                &problem,
                &nominal.minimizer,
                parameters.nominal(),
                &ParameterVector::from_vector(direction.clone()).unwrap(),
            )
            .map_err(|e| e.to_string())?;
            worst = worst.max(relative_error(applied.result.as_slice(), fd.as_slice()));
        }
        ok &= worst <= 1e-3;
        details.push(format!("{kind} {worst:.1e}"));
    }
    verdict(
        ok,
        format!(
            "worst relative error over 10 directions: {} (≤ 1e-3)",
            details.join(", ")
        ),
    )
}

/// `u = x²e⁻ˣ + ½` substituted into `−κu″ + vu′` with Robin data
/// `κu′(0) − αu(0)` and `κu′(1) + αu(1)`.
fn manufactured_max_error(cells: usize) -> f64 {
    let co = Coefficients {
        kappa: 0.1,
        velocity: 0.5,
        alpha: 2.0,
    };
    let u = |x: f64| x * x * (-x).exp() + 0.5;
    let du = |x: f64| (2.0 * x - x * x) * (-x).exp();
    let d2u = |x: f64| (2.0 - 4.0 * x + x * x) * (-x).exp();
    let model = AdvDiffModel::new(cells).unwrap();
    let x = model.grid();
    let forcing: Vec<f64> = x.iter().map(|&x| -co.kappa * d2u(x) + co.velocity * du(x)).collect();
    let left = co.kappa * du(0.0) - co.alpha * u(0.0);
    let right = co.kappa * du(1.0) + co.alpha * u(1.0);
    let sol = model.solve_with_boundary_data(&co, &forcing, left, right).unwrap();
    x.iter().zip(&sol).map(|(&x, &v)| (v - u(x)).abs()).fold(0.0, f64::max)
}

fn pde_second_order() -> Outcome {
    let cells = [32, 64, 128, 256];
    let points: Vec<(f64, f64)> = cells
        .iter()
        .map(|&n| (1.0 / n as f64, manufactured_max_error(n)))
        .collect();
    let slope = loglog_slope(&points).unwrap_or(f64::NAN);
    let errors: Vec<String> = points.iter().map(|(_, e)| format!("{e:.2e}")).collect();
    verdict(
        (1.8..=2.2).contains(&slope),
        format!(
            "max-norm slope {slope:.3} (errors {}), required [1.8, 2.2]",
            errors.join(", ")
        ),
    )
}

fn advdiff_errors_decrease() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let c = config(ProblemKind::Advdiff, dir.path());
    assert_eq!((c.num_samples, c.step_counts.clone()), (5000, vec![1, 6, 12, 20]));
    assert_eq!(c.parameter_box.relative, Some(vec![0.2]));
    let out = study(&c).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut details = Vec::new();
    for statistic in [Statistic::Mean, Statistic::StdDev] {
        let r = out.report(statistic).unwrap();
        for i in 0..2 {
            let col: Vec<f64> = r.errors.iter().map(|e| e[i]).collect();
            ok &= col.windows(2).all(|w| w[1] < w[0]);
            let shown: Vec<String> = col.iter().map(|e| format!("{e:.2e}")).collect();
            details.push(format!("{statistic:?} m_{}: {}", i + 1, shown.join(", ")));
        }
    }
    let failures = out.study.oracle_failures();
    ok &= failures * 100 <= out.study.num_samples();
    details.push(format!("newton non-convergence {failures}/{}", out.study.num_samples()));
    verdict(ok, details.join("; "))
}

fn check_command_passes() -> Outcome {
    let o = Command::new(env!("CARGO_BIN_EXE_postopt"))
        .arg("check")
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&o.stdout);
    let passed = stdout
        .lines()
        .filter(|l| l.split_whitespace().nth(1) == Some("ok"))
        .count();
    verdict(
        o.status.success() && passed == 4,
        format!("{passed}/4 problems pass, exit {:?}", o.status.code()),
    )
}

fn run_study(dir: &Path, problem: &str, samples: &str, steps: &str, workers: &str) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_postopt"))
        .args([
            "study",
            "--problem",
            problem,
            "--samples",
            samples,
            "--steps",
            steps,
            "--seed",
            "5",
        ])
        .args(["--workers", workers, "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    Ok(())
}

fn csv_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn studies_are_reproducible() -> Outcome {
    let mut compared = 0;
    for (problem, samples, steps) in [("logistic1d", "1000", "1,4,16"), ("advdiff", "200", "1,6")] {
        let runs: Vec<_> = ["1", "4", "4"]
            .iter()
            .map(|w| {
                let dir = tempfile::tempdir().unwrap();
                run_study(dir.path(), problem, samples, steps, w).map(|_| csv_contents(dir.path()))
            })
            .collect::<Result<_, _>>()?;
        for other in &runs[1..] {
            if other != &runs[0] {
                return Err(format!("{problem}: CSV outputs differ between runs"));
            }
        }
        compared += runs[0].len();
    }
    Ok(format!(
        "{compared} CSV files byte-identical across runs with 1 and 4 workers"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("logistic first-order convergence", logistic_first_order),
        (
            "logistic oracle equivalence at N=128",
            logistic_matches_oracle_at_large_n,
        ),
        ("exactness on affine minimizer maps", affine_maps_are_exact),
        (
            "sensitivity operator vs argmin differences",
            operator_matches_argmin_differences,
        ),
        ("PDE solver second order", pde_second_order),
        ("advection-diffusion moment errors decrease", advdiff_errors_decrease),
        ("derivative check command", check_command_passes),
        ("reproducible study outputs", studies_are_reproducible),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

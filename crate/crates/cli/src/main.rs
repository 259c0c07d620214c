use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use postopt_cli::commands::{describe_study, describe_trajectory};
use postopt_cli::{check, study, trajectory, ConfigFile, Overrides, ProblemKind, RunConfig};
use postopt_core::io::fmt_f64;
use postopt_core::Scheme;

/// Propagate parameter uncertainty to the minimizer of J(m, θ) by marching
/// the post-optimality sensitivity ODE.
#[derive(Parser, Debug)]
#[command(name = "postopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare analytic derivatives with finite differences for every
    /// built-in problem.
    Check(Common),
    /// Sample the parameter box and march every sample.
    Study(Common),
    /// March a single parameter sample and log each step.
    Trajectory {
        #[command(flatten)]
        common: Common,
        /// Target parameters, comma separated (defaults to the box nominal).
        #[arg(long, value_delimiter = ',')]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        num_steps: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// quadratic, cubic, logistic1d or advdiff.
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Step counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// forward_euler, heun or rk4.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Re-solve every sample with Newton.
    #[arg(long, overrides_with = "no_oracle")]
    oracle: bool,
    #[arg(long)]
    no_oracle: bool,
    /// Worker threads (0 uses every core).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(self, theta: Option<Vec<f64>>, num_steps: Option<usize>) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let with_oracle = match (self.oracle, self.no_oracle) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        };
        RunConfig::resolve(
            file,
            Overrides {
                problem: self.problem,
                seed: self.seed,
                num_samples: self.samples,
                step_counts: self.steps,
                scheme: self.scheme,
                with_oracle,
                workers: self.workers,
                output_dir: self.out,
                trajectory_steps: num_steps,
                trajectory_theta: theta,
            },
        )
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Check(common) => {
            let config = common.resolve(None, None)?;
            let rows = check(&config);
            for r in &rows {
                let verdict = if r.passed() { "ok" } else { "FAILED" };
                match (&r.report, &r.error) {
                    (Some(rep), _) => println!(
                        "{:<11} {verdict:<6} gradient {} hessian {} mixed {} (tolerance {})",
                        r.problem.as_str(),
                        fmt_f64(rep.max_rel_error_gradient),
                        fmt_f64(rep.max_rel_error_hessian),
                        fmt_f64(rep.max_rel_error_mixed),
                        r.tolerance
                    ),
                    (None, Some(e)) => println!("{:<11} {verdict:<6} {e}", r.problem.as_str()),
                    (None, None) => println!("{:<11} {verdict}", r.problem.as_str()),
                }
            }
            Ok(rows.iter().all(|r| r.passed()))
        }
        Command::Study(common) => {
            let config = common.resolve(None, None)?;
            let outcome = study(&config)?;
            for line in describe_study(&outcome) {
                println!("{line}");
            }
            Ok(true)
        }
        Command::Trajectory {
            common,
            theta,
            num_steps,
        } => {
            let config = common.resolve(theta, num_steps)?;
            let outcome = trajectory(&config)?;
            for line in describe_trajectory(&outcome)? {
                println!("{line}");
            }
            Ok(outcome.trajectory.is_completed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

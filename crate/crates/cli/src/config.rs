//! Run configuration: a TOML file, per-problem defaults, and command-line
//! overrides, resolved and validated before any numerics run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use postopt_core::problem::derivatives::DEFAULT_FD_STEP;
use postopt_core::problems::{CubicIllustration, InverseProblem, InverseProblemConfig, Logistic1D, Quadratic};
use postopt_core::uq::GridSpec;
use postopt_core::{DecisionVector, NewtonConfig, ParameterBox, ParameterVector, Problem, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Quadratic,
    Cubic,
    #[default]
    Logistic1d,
    Advdiff,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::Quadratic,
        ProblemKind::Cubic,
        ProblemKind::Logistic1d,
        ProblemKind::Advdiff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Cubic => "cubic",
            ProblemKind::Logistic1d => "logistic1d",
            ProblemKind::Advdiff => "advdiff",
        }
    }

    fn default_box(self) -> BoxSpec {
        let (nominal, relative, half_widths) = match self {
            ProblemKind::Quadratic => (vec![0.1], Some(vec![0.4]), None),
            ProblemKind::Cubic => (vec![0.3, 0.75], None, Some(vec![0.1, 0.1])),
            ProblemKind::Logistic1d => (vec![1.0, 3.0, 0.1], Some(vec![0.4]), None),
            ProblemKind::Advdiff => (vec![10.0, 0.05, 1.0], Some(vec![0.2]), None),
        };
        BoxSpec {
            nominal: Some(nominal),
            relative,
            half_widths,
        }
    }

    fn default_steps(self) -> Vec<usize> {
        match self {
            ProblemKind::Advdiff => vec![1, 6, 12, 20],
            _ => vec![1, 2, 4, 8, 16],
        }
    }

    fn default_initial_guess(self, advdiff: &InverseProblemConfig) -> Vec<f64> {
        match self {
            ProblemKind::Quadratic => vec![0.0],
            ProblemKind::Cubic => vec![0.75],
            ProblemKind::Logistic1d => vec![0.5],
            ProblemKind::Advdiff => advdiff.prior.clone(),
        }
    }

    /// Tolerance the `check` command applies to this problem's derivatives.
    pub fn check_tolerance(self) -> f64 {
        match self {
            ProblemKind::Advdiff => 1e-4,
            _ => postopt_core::problem::derivatives::DERIVATIVE_TOLERANCE,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ProblemKind::Quadratic),
            "cubic" => Ok(ProblemKind::Cubic),
            "logistic1d" => Ok(ProblemKind::Logistic1d),
            "advdiff" => Ok(ProblemKind::Advdiff),
            other => bail!("unknown problem {other:?} (expected quadratic, cubic, logistic1d or advdiff)"),
        }
    }
}

/// The parameter box: nominal values plus either relative fractions `r`
/// (`εₖ = rₖ|θ̄ₖ|`, one value broadcasts) or absolute half-widths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub nominal: Option<Vec<f64>>,
    pub relative: Option<Vec<f64>>,
    pub half_widths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub num_steps: Option<usize>,
    pub theta: Option<Vec<f64>>,
}

/// The on-disk format. Every field is optional.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: Option<ProblemKind>,
    pub num_samples: Option<usize>,
    pub seed: Option<u64>,
    pub step_counts: Option<Vec<usize>>,
    pub scheme: Option<Scheme>,
    pub with_oracle: Option<bool>,
    pub record_trajectory: Option<bool>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub fd_step: Option<f64>,
    pub initial_guess: Option<Vec<f64>>,
    #[serde(rename = "box")]
    pub parameter_box: Option<BoxSpec>,
    pub newton: Option<NewtonConfig>,
    pub advdiff: Option<InverseProblemConfig>,
    pub kde: Option<GridSpec>,
    pub trajectory: Option<TrajectorySpec>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub problem: Option<ProblemKind>,
    pub seed: Option<u64>,
    pub num_samples: Option<usize>,
    pub step_counts: Option<Vec<usize>>,
    pub scheme: Option<Scheme>,
    pub with_oracle: Option<bool>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub trajectory_steps: Option<usize>,
    pub trajectory_theta: Option<Vec<f64>>,
}

/// Fully resolved settings, echoed into `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub num_samples: usize,
    pub seed: u64,
    pub step_counts: Vec<usize>,
    pub scheme: Scheme,
    pub with_oracle: bool,
    pub record_trajectory: bool,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub fd_step: f64,
    pub initial_guess: Vec<f64>,
    #[serde(rename = "box")]
    pub parameter_box: BoxSpec,
    pub newton: NewtonConfig,
    pub advdiff: InverseProblemConfig,
    pub kde: GridSpec,
    pub trajectory: TrajectorySpec,
}

pub const DEFAULT_SAMPLES: usize = 5000;
pub const DEFAULT_TRAJECTORY_STEPS: usize = 20;

impl RunConfig {
    /// Defaults for `problem` with nothing overridden.
    pub fn defaults(problem: ProblemKind) -> Result<Self> {
        Self::resolve(
            ConfigFile::default(),
            Overrides {
                problem: Some(problem),
                ..Default::default()
            },
        )
    }

    pub fn resolve(file: ConfigFile, cli: Overrides) -> Result<Self> {
        let problem = cli.problem.or(file.problem).unwrap_or_default();
        let advdiff = file.advdiff.unwrap_or_default();
        let mut parameter_box = file.parameter_box.unwrap_or_default();
        let defaults = problem.default_box();
        if parameter_box.nominal.is_none() {
            parameter_box.nominal = defaults.nominal;
        }
        if parameter_box.relative.is_none() && parameter_box.half_widths.is_none() {
            parameter_box.relative = defaults.relative;
            parameter_box.half_widths = defaults.half_widths;
        }
        let mut trajectory = file.trajectory.unwrap_or_default();
        if cli.trajectory_steps.is_some() {
            trajectory.num_steps = cli.trajectory_steps;
        }
        if cli.trajectory_theta.is_some() {
            trajectory.theta = cli.trajectory_theta;
        }
        trajectory.num_steps.get_or_insert(DEFAULT_TRAJECTORY_STEPS);

        let config = Self {
            problem,
            num_samples: cli.num_samples.or(file.num_samples).unwrap_or(DEFAULT_SAMPLES),
            seed: cli.seed.or(file.seed).unwrap_or(0),
            step_counts: cli
                .step_counts
                .or(file.step_counts)
                .unwrap_or_else(|| problem.default_steps()),
            scheme: cli.scheme.or(file.scheme).unwrap_or_default(),
            with_oracle: cli.with_oracle.or(file.with_oracle).unwrap_or(true),
            record_trajectory: file.record_trajectory.unwrap_or(false),
            workers: cli.workers.or(file.workers).unwrap_or(0),
            output_dir: cli
                .output_dir
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            fd_step: file.fd_step.unwrap_or(DEFAULT_FD_STEP),
            initial_guess: file
                .initial_guess
                .unwrap_or_else(|| problem.default_initial_guess(&advdiff)),
            parameter_box,
            newton: file.newton.unwrap_or_default(),
            advdiff,
            kde: file.kde.unwrap_or_default(),
            trajectory,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked without evaluating the
    /// problem.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_samples >= 1, "num_samples must be at least 1");
        ensure!(!self.step_counts.is_empty(), "step_counts must not be empty");
        ensure!(
            self.step_counts.iter().all(|&n| n >= 1),
            "step_counts must be positive, got {:?}",
            self.step_counts
        );
        ensure!(
            self.fd_step > 0.0 && self.fd_step.is_finite(),
            "fd_step must be positive, got {}",
            self.fd_step
        );
        ensure!(
            self.trajectory.num_steps.unwrap_or(1) >= 1,
            "trajectory num_steps must be at least 1"
        );
        self.newton.validate()?;
        let (d, p) = self.dims();
        ensure!(
            self.initial_guess.len() == d,
            "initial_guess has {} entries, {} expects {d}",
            self.initial_guess.len(),
            self.problem
        );
        let nominal = self.parameter_box.nominal.as_deref().unwrap_or_default();
        ensure!(
            nominal.len() == p,
            "box nominal has {} entries, {} expects {p}",
            nominal.len(),
            self.problem
        );
        if let Some(theta) = &self.trajectory.theta {
            ensure!(
                theta.len() == p,
                "trajectory theta has {} entries, expected {p}",
                theta.len()
            );
        }
        ensure!(
            self.parameter_box.relative.is_none() || self.parameter_box.half_widths.is_none(),
            "give either box.relative or box.half_widths, not both"
        );
        self.parameter_box()?;
        if self.problem == ProblemKind::Cubic {
            CubicIllustration::for_box(&self.parameter_box()?)?;
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        match self.problem {
            ProblemKind::Quadratic => (1, 1),
            ProblemKind::Cubic => (1, 2),
            ProblemKind::Logistic1d => (1, 3),
            ProblemKind::Advdiff => (2, 3),
        }
    }

    pub fn parameter_box(&self) -> Result<ParameterBox> {
        let nominal = ParameterVector::from_slice(self.parameter_box.nominal.as_deref().unwrap_or_default())?;
        let b = match (&self.parameter_box.relative, &self.parameter_box.half_widths) {
            (Some(r), None) => ParameterBox::from_relative(nominal, r)?,
            (None, Some(w)) => ParameterBox::new(nominal, w.clone())?,
            (None, None) => ParameterBox::new(nominal.clone(), vec![0.0; nominal.len()])?,
            (Some(_), Some(_)) => bail!("give either box.relative or box.half_widths, not both"),
        };
        Ok(b)
    }

    pub fn initial_guess(&self) -> Result<DecisionVector> {
        Ok(DecisionVector::from_slice(&self.initial_guess)?)
    }

    pub fn build_problem(&self) -> Result<Box<dyn Problem>> {
        Ok(match self.problem {
            ProblemKind::Quadratic => Box::new(Quadratic),
            ProblemKind::Cubic => Box::new(CubicIllustration::for_box(&self.parameter_box()?)?),
            ProblemKind::Logistic1d => Box::new(Logistic1D),
            ProblemKind::Advdiff => Box::new(InverseProblem::from_config(&self.advdiff)?.with_fd_step(self.fd_step)),
        })
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .context("building the worker pool")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_problem_defaults() {
        let c = RunConfig::defaults(ProblemKind::Logistic1d).unwrap();
        assert_eq!(c.num_samples, 5000);
        assert_eq!(c.step_counts, vec![1, 2, 4, 8, 16]);
        assert_eq!(c.parameter_box.relative, Some(vec![0.4]));
        let c = RunConfig::defaults(ProblemKind::Advdiff).unwrap();
        assert_eq!(c.step_counts, vec![1, 6, 12, 20]);
        assert_eq!(c.parameter_box.relative, Some(vec![0.2]));
        assert_eq!(c.initial_guess, vec![0.06, 0.32]);
        let b = RunConfig::defaults(ProblemKind::Cubic)
            .unwrap()
            .parameter_box()
            .unwrap();
        assert_eq!(b.lower(), vec![0.19999999999999998, 0.65]);
    }

    #[test]
    fn file_and_flags_layer() {
        let file = ConfigFile::parse(
            r#"
            problem = "advdiff"
            num_samples = 10
            seed = 4
            [box]
            relative = [0.1]
            [advdiff]
            beta = 0.01
            "#,
        )
        .unwrap();
        let c = RunConfig::resolve(
            file,
            Overrides {
                seed: Some(9),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((c.num_samples, c.seed), (10, 9));
        assert_eq!(c.advdiff.beta, 0.01);
        assert_eq!(c.parameter_box.nominal, Some(vec![10.0, 0.05, 1.0]));
    }

    #[test]
    fn invalid_configs_are_rejected_before_numerics() {
        assert!(ConfigFile::parse("problem = \"rosenbrock\"").is_err());
        assert!(ConfigFile::parse("num_sample = 3").is_err());
        let zero = ConfigFile::parse("num_samples = 0").unwrap();
        assert!(RunConfig::resolve(zero, Overrides::default()).is_err());
        let bad_box = ConfigFile::parse("problem = \"cubic\"\n[box]\nhalf_widths = [0.3, 0.1]").unwrap();
        assert!(RunConfig::resolve(bad_box, Overrides::default()).is_err());
        let wrong_len = ConfigFile::parse("initial_guess = [0.1, 0.2]").unwrap();
        assert!(RunConfig::resolve(wrong_len, Overrides::default()).is_err());
        let both = ConfigFile::parse("[box]\nrelative = [0.1]\nhalf_widths = [0.1, 0.1, 0.1]").unwrap();
        assert!(RunConfig::resolve(both, Overrides::default()).is_err());
    }
}

use thiserror::Error;

/// Errors produced by the core numerics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("objective evaluation failed: {0}")]
    Evaluation(String),

    /// A linear system could not be solved. `pivot_ratio` is the smallest
    /// pivot magnitude relative to the largest matrix entry.
    #[error("singular linear system ({context}), pivot ratio {pivot_ratio:e}")]
    SingularSystem { context: String, pivot_ratio: f64 },

    #[error("Hessian not positive definite: min eigenvalue {min_eigenvalue:e}{}", at_time(.t))]
    IndefiniteHessian { min_eigenvalue: f64, t: Option<f64> },

    #[error("degenerate finite-difference step: {0}")]
    DegenerateStep(String),

    #[error("initial state is not stationary: |g| = {grad_norm:e} exceeds {tolerance:e}")]
    NotStationary { grad_norm: f64, tolerance: f64 },

    #[error("degenerate kernel bandwidth: sample variance is zero in coordinate {0}")]
    DegenerateBandwidth(usize),

    #[error("nominal solve failed: {0}")]
    NominalSolve(String),
}

fn at_time(t: &Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use num_complex::Complex64;
use thiserror::Error;

/// Errors produced by the synthesis, analysis and simulation routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries ({0})")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no stabilizing solution: {reason} (eigenvalues: {})", fmt_eigs(.eigenvalues))]
    NoStabilizingSolution {
        reason: String,
        eigenvalues: Vec<Complex64>,
    },

    #[error("solution is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("Riccati residual {residual:e} exceeds bound {bound:e}")]
    ResidualTooLarge { residual: f64, bound: f64 },

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },

    #[error("Schur iteration did not converge")]
    SchurFailed,

    #[error("Laplacian spectra do not match: {0}")]
    SpectrumMismatch(String),

    #[error("Rosenbrock pencil is rank deficient for every s (system not left invertible)")]
    RankDeficientEverywhere,

    #[error("precondition failed: condition ({condition}) {description}")]
    PreconditionFailed {
        condition: char,
        description: String,
    },

    #[error("rho must satisfy rho >= 1, got {0}")]
    RhoOutOfRange(f64),

    #[error("no delta in the halving sequence produced a positive definite filter solution ({} attempts)", .attempts.len())]
    DeltaSearchExhausted { attempts: Vec<(f64, String)> },

    #[error("simulation diverged at t = {t} (state norm {norm:e})")]
    Diverged { t: f64, norm: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

fn fmt_eigs(eigs: &[Complex64]) -> String {
    let parts: Vec<String> = eigs
        .iter()
        .map(|z| format!("{:.3e}{:+.3e}i", z.re, z.im))
        .collect();
    format!("[{}]", parts.join(", "))
}

//! Error types shared across the crate.
//!
//! Errors fall into three families that map onto the CLI exit codes:
//! configuration errors (exit 2), numerical failures (exit 3) and
//! verification failures (exit 1).

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SlabError {
    /// Invalid geometry, truncation or regime parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: estimated error {achieved:.3e} above tolerance {tolerance:.3e}")]
    QuadratureNonConvergence { achieved: f64, tolerance: f64 },

    /// The truncated higher-mode block is too ill-conditioned to eliminate.
    #[error("ill-conditioned truncation: a-block condition number {cond:.3e} >= {limit:.3e}; raise the mode count or move k")]
    IllConditionedTruncation { cond: f64, limit: f64 },

    /// A parity weight denominator nearly vanished during assembly.
    #[error("near-singular parity weight |e^(i s_m l) {sign} 1| = {magnitude:.3e} for mode {mode}")]
    NearSingularWeight {
        mode: usize,
        sign: char,
        magnitude: f64,
    },

    /// Newton iteration failed to converge to a resonance.
    #[error("root not found after {iterations} iterations; trajectory: {trajectory:?}")]
    RootNotFound {
        iterations: usize,
        trajectory: Vec<Complex64>,
    },

    /// A converged root violated the outgoing-decay requirement.
    #[error("spurious root rejected: k = {k} has Im(k) >= 0")]
    SpuriousRoot { k: Complex64 },

    /// The counting contour stayed too close to a root after retries.
    #[error("contour too close to a root: min |det| on contour is {min_ratio:.3e} of max after {retries} radius perturbations")]
    ContourNearRoot { min_ratio: f64, retries: usize },

    /// A point lies outside every hole (or outside the requested aperture).
    #[error("point {point:?} is outside the domain: {what}")]
    Domain { point: Vec<f64>, what: String },

    /// The requested regime violates the asymptotic validity guard.
    #[error("out of asymptotic regime: {0}")]
    OutOfRegime(String),

    /// Ambiguous eigenvalue branch selection in the multi-hole asymptotics.
    #[error("degenerate branch: eigenvalues {0} and {1} are equidistant from the target")]
    DegenerateBranch(Complex64, Complex64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SlabError {
    /// CLI exit code for this error (0 success, 1 verification, 2 config, 3 numerical).
    pub fn exit_code(&self) -> i32 {
        match self {
            SlabError::Config(_) | SlabError::Domain { .. } => 2,
            SlabError::Io(_) | SlabError::Json(_) => 2,
            SlabError::OutOfRegime(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, SlabError>;

use thiserror::Error;

use crate::quadratic::DegeneracyReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("degenerate direction: |Q(v)| = {norm:e} is below the zero threshold")]
    DegenerateDirection { norm: f64 },

    #[error("pole crossed: solution has a pole at t = {pole_time}")]
    PoleCrossed { pole_time: f64 },

    #[error("blowup surface: I + tA is singular at t = {t}")]
    BlowupSurface { t: f64 },

    #[error("eigenvalue iteration failed for {d}x{d} matrix (norm {norm:e})")]
    EigenFailure { d: usize, norm: f64 },

    #[error("no blowup signature: inverse norm is not decreasing (slope {slope:e})")]
    NoBlowupSignature { slope: f64 },

    #[error("integration failure at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("inconclusive integration: {status} at t = {t}")]
    Inconclusive { status: String, t: f64 },

    #[error("neutral line: lambda = 0, no scalar blowup reduction")]
    NeutralLine,

    #[error(
        "certificate search failed: no invariant line with positive lambda \
         (min |Q(v)| on sphere = {:e}, degenerate = {})",
        .report.min_norm, .report.is_degenerate
    )]
    CertificateSearchFailed { report: DegeneracyReport },

    #[error("resolution exceeded: angle unwrap failed with {samples} samples")]
    ResolutionExceeded { samples: usize },
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Format(_) => "format",
            Error::DegenerateDirection { .. } => "degenerate_direction",
            Error::PoleCrossed { .. } => "pole_crossed",
            Error::BlowupSurface { .. } => "blowup_surface",
            Error::EigenFailure { .. } => "eigen_failure",
            Error::NoBlowupSignature { .. } => "no_blowup_signature",
            Error::IntegrationFailure { .. } => "integration_failure",
            Error::Inconclusive { .. } => "inconclusive",
            Error::NeutralLine => "neutral_line",
            Error::CertificateSearchFailed { .. } => "certificate_search_failed",
            Error::ResolutionExceeded { .. } => "resolution_exceeded",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

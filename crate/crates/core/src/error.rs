use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad class of a failure, used by front ends to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input data.
    Data,
    /// A numerical procedure could not produce a trustworthy value.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("gradient table: {0}")]
    Gradient(String),

    #[error("length mismatch: bvals has {bvals} entries, bvecs has {bvecs}")]
    LengthMismatch { bvals: usize, bvecs: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid attenuation {0}: expected a finite value in (0, 1]")]
    InvalidAttenuation(f64),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("baseline signal: {0}")]
    Baseline(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("value out of representable range: {0}")]
    Range(String),

    #[error("quadrature did not converge: estimated relative error {estimate:.3e} exceeds {tol:.3e}")]
    Quadrature { estimate: f64, tol: f64 },

    #[error("NIfTI: {0}")]
    Nifti(String),

    #[error("fit container: {0}")]
    FitFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidAttenuation(_)
            | Error::Underdetermined(_)
            | Error::RankDeficient(_)
            | Error::Estimation(_)
            | Error::Range(_)
            | Error::Quadrature { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

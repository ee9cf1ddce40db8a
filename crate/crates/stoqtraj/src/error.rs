use thiserror::Error;

/// Errors shared by every engine and oracle in the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}x{0} vs {1}x{1}")]
    DimensionMismatch(usize, usize),

    #[error("operator is not Hermitian: max |A - A^dag| = {defect:.3e} exceeds {tol:.0e}")]
    NonHermitianInput { defect: f64, tol: f64 },

    #[error("matrix or vector contains a non-finite entry")]
    NonFiniteInput,

    #[error("invalid time step dt = {0}; dt must be positive and finite")]
    InvalidTimeStep(f64),

    #[error(
        "state norm {norm:.3e} exceeded the blow-up guard of {guard:.0e}; \
         the scheme is unstable at this step size, reduce dt below ~{dt_hint:.3e} \
         (~ 1/(sigma^2 ||B||^2))"
    )]
    NumericalBlowup { norm: f64, guard: f64, dt_hint: f64 },

    #[error("time grids do not match ({0} vs {1} points)")]
    GridMismatch(usize, usize),

    #[error("initial state must be normalized: ||psi0|| = {norm}")]
    InvalidInitialState { norm: f64 },

    #[error("gate sequence carries no metadata; cannot rebuild the reference step")]
    MetadataMissing,

    #[error("noise specification not accepted here: {0}")]
    InvalidNoise(String),

    #[error("ensemble aborted: {failed} of {total} trajectories hit NumericalBlowup (> 1%)")]
    EnsembleAbort { failed: usize, total: usize },

    #[error("gate file is malformed: {0}")]
    MalformedGateFile(String),

    #[error("wiener dump is malformed: {0}")]
    MalformedWienerDump(String),
}

impl Error {
    /// Stable machine-readable code, used by the CLI error line
    /// `ERROR <code> <message>`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(..) => "DimensionMismatch",
            Error::NonHermitianInput { .. } => "NonHermitianInput",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::InvalidTimeStep(..) => "InvalidTimeStep",
            Error::NumericalBlowup { .. } => "NumericalBlowup",
            Error::InvalidInitialState { .. } => "InvalidInitialState",
            Error::GridMismatch(..) => "GridMismatch",
            Error::MetadataMissing => "MetadataMissing",
            Error::InvalidNoise(..) => "InvalidNoise",
            Error::EnsembleAbort { .. } => "EnsembleAbort",
            Error::MalformedGateFile(..) => "MalformedGateFile",
            Error::MalformedWienerDump(..) => "MalformedWienerDump",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the spectral machinery, the solver and the diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FerroError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("expected a field with {expected} component(s), got {found}")]
    ComponentMismatch { expected: usize, found: usize },

    #[error("spectrum is not Hermitian: defect {defect:.3e} exceeds tolerance")]
    NotHermitian { defect: f64 },

    #[error("dyadic index {j} outside [{j_min}, {j_max}]")]
    BlockOutOfRange { j: i32, j_min: i32, j_max: i32 },

    #[error("dyadic block {j} is not resolved by the grid")]
    UnresolvedBlock { j: i32 },

    #[error("velocity field is not divergence-free (|div v| = {0:.3e})")]
    NotSolenoidal(f64),

    #[error("applied field has nonzero mean {0:.3e}; div(H + M) = F needs a mean-zero F on the torus")]
    Compatibility(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite values at t = {t} (step {step}); the discrete solution blew up")]
    BlowUp { t: f64, step: usize },

    #[error("time step {dt} exceeds the advective bound {bound:.4e} at t = {t}; reduce solver.dt")]
    Cfl { dt: f64, bound: f64, t: f64 },

    #[error("trajectory too short: {0}")]
    TooFewSnapshots(String),

    #[error("snapshot times are not uniformly spaced")]
    NonuniformSpacing,

    #[error("unknown probe kind `{0}`")]
    UnknownProbe(String),

    #[error("corrupted field: {0}")]
    Corrupted(String),
}

pub type Result<T> = std::result::Result<T, FerroError>;

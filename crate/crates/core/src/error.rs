use thiserror::Error;

/// Errors surfaced by the channel solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: estimated error {estimate:.3e} above tolerance {tolerance:.3e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("eigensolver did not converge (dimension {dim}, Frobenius norm {norm:.6e})")]
    Eigensolver { dim: usize, norm: f64 },

    #[error("grid with {sites} sites exceeds the dense limit of {limit}; reduce Mx or My")]
    GridTooLarge { sites: usize, limit: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-positive reference density at sample {index}")]
    NonPositiveDensity { index: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("steady state not reached after {iterations} iterations (residual {residual:.3e} > {threshold:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        threshold: f64,
    },

    #[error("steady-state residual {residual:.3e} exceeds threshold {threshold:.3e}; refusing to report a current")]
    ResidualTooLarge { residual: f64, threshold: f64 },

    #[error("quantum diffusion factor non-positive at {location}: expansion outside its validity region")]
    DiffusionFactor { location: String },

    #[error("time step control failed at dt = {dt:.3e}")]
    StepControl { dt: f64 },

    #[error("no interior extremum in sampled range")]
    NoInteriorExtremum,

    #[error("degenerate abscissae in fit")]
    DegenerateAbscissae,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("config error on line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

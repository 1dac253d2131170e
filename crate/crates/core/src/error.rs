use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("potential grid too coarse: {0}")]
    CoarsePotential(String),

    #[error("eigen-solver did not converge: {0}")]
    EigenNonConvergence(String),

    #[error("eigenvalue crossing between modes {0} and {1}")]
    EigenvalueCrossing(usize, usize),

    #[error("orthonormality residual {0:.3e} exceeds 1e-8")]
    Orthonormality(f64),

    #[error("point mass at {0:?} is not strictly interior")]
    BoundaryPointMass(Vec<f64>),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("grid does not belong to this basis")]
    GridMismatch,

    #[error(
        "series tail {tail:.3e} exceeds tolerance {tol:.3e} (about {required_modes} modes needed)"
    )]
    Truncation {
        tail: f64,
        tol: f64,
        required_modes: usize,
    },

    #[error("initial distribution is not admissible: {0}")]
    NotAdmissible(String),

    #[error("non-monotone cumulative distribution near x = {0}")]
    NonMonotoneCdf(f64),

    #[error("infeasible marginals: total masses differ by {0:.3e}")]
    InfeasibleMarginals(f64),

    #[error("solver did not converge within {iterations} iterations (last dual gap {gap:.3e})")]
    SolverNonConvergence { iterations: usize, gap: f64 },

    #[error("gradient check failed: relative mismatch {0:.3e}")]
    GradientCheck(f64),

    #[error("only {got} surviving paths, at least {need} required")]
    InsufficientSurvivors { got: usize, need: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("at t = {t}: {source}")]
    AtTime { t: f64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_time(self, t: f64) -> Self {
        Error::AtTime {
            t,
            source: Box::new(self),
        }
    }
}

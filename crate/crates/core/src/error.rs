use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("polytope is unbounded or empty")]
    UnboundedOrEmpty,

    #[error("too many row subsets to enumerate ({0} > 1e6)")]
    TooManySubsets(u128),

    #[error("vertex list is empty")]
    EmptyVertexList,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex method exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("point violates row {row} by {violation:e}")]
    InfeasiblePoint { row: usize, violation: f64 },

    #[error("unknown vertex id {0}")]
    UnknownVertexId(usize),

    #[error("every constraint is active at every vertex; geometry constants are undefined")]
    DegeneratePolytope,

    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("objective is not strongly convex: {0}")]
    NotStronglyConvex(String),

    #[error("tail radius s must be positive, got {0}")]
    NonpositiveS(f64),

    #[error("missing sample-plan parameter `{0}`")]
    MissingParam(String),

    #[error("nonpositive denominator in sample-size formula: {0}")]
    NonpositiveDenominator(String),

    #[error("sample size {0:e} does not fit in u64")]
    SampleSizeOverflow(f64),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("search direction has norm {0:e}")]
    DegenerateDirection(f64),

    #[error("eps_g = {eps_g} outside (0, {upper})")]
    EpsGOutOfRange { eps_g: f64, upper: f64 },

    #[error("epsilon must be positive, got {0}")]
    NonpositiveEpsilon(f64),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

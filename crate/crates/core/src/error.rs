use thiserror::Error;

/// Errors shared across the solver modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval system: {0}")]
    InvalidIntervals(String),

    #[error("invalid weight for this system: {0}")]
    InvalidWeight(String),

    #[error("series branch error: {0}")]
    Branch(String),

    #[error("linear program infeasible")]
    Infeasible,

    #[error("linear program unbounded")]
    Unbounded,

    #[error("simplex cycling guard exceeded after {0} iterations")]
    Cycling(usize),

    #[error("hankel matrix rank-deficient at degree {degree}")]
    RankDeficient { degree: usize },

    #[error("no feasible L found in [{lo}, {hi}]")]
    NoFeasibleBound { lo: f64, hi: f64 },

    #[error("query point too close to E (distance {dist:.3e})")]
    ProximityToSupport { dist: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("singular normalization: {0}")]
    SingularNormalization(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

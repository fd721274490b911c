use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point {y:?} is outside the inverse branch domain at {x:?}")]
    OutOfBranchDomain { x: [f64; 2], y: [f64; 2] },
    #[error("map is degenerate at {0:?}")]
    DegenerateAt([f64; 2]),
    #[error("no inverse branch at backward step {step}")]
    NoBranch { step: usize },
    #[error("orbit window exhausted: index {index} not available")]
    WindowExhausted { index: i64 },
    #[error("orbit windows have mismatched lengths ({0} vs {1})")]
    WindowMismatch(usize, usize),
    #[error("singular Jacobian at orbit index {index}")]
    DegenerateJacobian { index: i64 },
    #[error("singular-value gap {gap:e} below dominance threshold")]
    NoDominance { gap: f64 },
    #[error("series tail not certified (last-term ratio {ratio})")]
    TailNotCertified { ratio: f64 },
    #[error("argument outside domain: {0}")]
    DomainError(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("chart size {value:e} is below the deepest lattice element")]
    LatticeUnderflow { value: f64 },
    #[error("vector of norm {norm:e} is outside the chart")]
    OutOfChart { norm: f64 },
    #[error("infeasible input: {0}")]
    InfeasibleInput(String),
    #[error("graph is empty after pruning")]
    EmptyGraph,
    #[error("fixed-point iteration diverged after {iterations} iterations")]
    FixedPointDiverged { iterations: usize },
    #[error("admissibility lost: {0}")]
    AdmissibilityLost(String),
    #[error("limit manifold not converged (last step {step:e})")]
    NotConverged { step: f64 },
    #[error("stable and unstable graphs do not intersect: {0}")]
    NoIntersection(String),
    #[error("shadow escaped the chart at index {index} (residual {residual:e})")]
    ShadowEscaped { index: i64, residual: f64 },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("chains do not shadow the same point (distance {distance:e})")]
    NotSamePoint { distance: f64 },
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Variant name, used by the command-line tool when reporting failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::OutOfBranchDomain { .. } => "OutOfBranchDomain",
            Error::DegenerateAt(_) => "DegenerateAt",
            Error::NoBranch { .. } => "NoBranch",
            Error::WindowExhausted { .. } => "WindowExhausted",
            Error::WindowMismatch(..) => "WindowMismatch",
            Error::DegenerateJacobian { .. } => "DegenerateJacobian",
            Error::NoDominance { .. } => "NoDominance",
            Error::TailNotCertified { .. } => "TailNotCertified",
            Error::DomainError(_) => "DomainError",
            Error::NoConvergence(_) => "NoConvergence",
            Error::LatticeUnderflow { .. } => "LatticeUnderflow",
            Error::OutOfChart { .. } => "OutOfChart",
            Error::InfeasibleInput(_) => "InfeasibleInput",
            Error::EmptyGraph => "EmptyGraph",
            Error::FixedPointDiverged { .. } => "FixedPointDiverged",
            Error::AdmissibilityLost(_) => "AdmissibilityLost",
            Error::NotConverged { .. } => "NotConverged",
            Error::NoIntersection(_) => "NoIntersection",
            Error::ShadowEscaped { .. } => "ShadowEscaped",
            Error::InsufficientSamples(_) => "InsufficientSamples",
            Error::NotSamePoint { .. } => "NotSamePoint",
            Error::Config(_) => "Config",
        }
    }
}

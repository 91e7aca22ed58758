use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("nestling classification needs a finite-support law")]
    UnsupportedLaw,
    #[error("trap radius must be at least 1")]
    InvalidRadius,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("point is not on a layer divisible by N^2")]
    NotOnLayer,
    #[error("infeasible constants: {0}")]
    InfeasibleConstants(String),
    #[error("degenerate ladder: N_1^2 >= 2L")]
    DegenerateLadder,
    #[error("region has {sites} interior sites, limit is {limit}")]
    RegionTooLarge { sites: usize, limit: usize },
    #[error("singular matrix in exact solver")]
    SingularSystem,
    #[error("no mass on the front boundary")]
    EmptyFront,
    #[error("quadrature error estimate {0:e} exceeds tolerance")]
    QuadratureFailure(f64),
    #[error("no coupling candidate keeps the displacement within K={0}")]
    InfeasibleCoupling(u64),
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("conditioned exit not achieved after {0} retries")]
    ConditioningTooRare(u64),
    #[error("step budget exhausted")]
    BudgetExhausted,
    #[error("run does not reach the layers needed: {0}")]
    IncompleteRun(String),
    #[error("path of {0} steps is too long for the exact audit")]
    AuditTooLong(usize),
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error("law is not plain nestling")]
    NotNestling,
}

pub type Result<T> = std::result::Result<T, Error>;

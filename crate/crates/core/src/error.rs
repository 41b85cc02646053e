use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("period not found within budget (tau = {tau}, {steps} steps)")]
    PeriodNotFound { tau: f64, steps: usize },

    #[error("period undefined at tau=1")]
    CylinderPeriod,

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("focal distance violated: t*k{index} = {value} (k{index} = {curvature})")]
    FocalDistance { index: usize, value: f64, curvature: f64 },

    #[error("unexpected stability band: mode {mode} is elliptic (discriminant {discriminant})")]
    UnexpectedStabilityBand { mode: usize, discriminant: f64 },

    #[error("no near-±1 root: eps*ell = {0} is beyond the fold of u - u^3")]
    NoFarFieldRoot(f64),

    #[error("Newton did not converge after {iterations} iterations (last residual {residual:e})")]
    NewtonDiverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("interface under-resolved: {0}")]
    UnderResolved(String),

    #[error("linear solver failure: {0}")]
    Linear(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("missing input: {0}")]
    Missing(String),

    #[error("invalid solution container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

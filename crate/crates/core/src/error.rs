use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point is outside the domain (residual {residual:.3e})")]
    OutsideDomain { residual: f64 },
    #[error("points are on each other's cut locus (distance {distance:.6})")]
    CutLocus { distance: f64 },
    #[error("minimal geodesic leaves the domain")]
    GeodesicLeavesDomain,
    #[error("manifold has no boundary")]
    NoBoundary,
    #[error("vector is not tangent to the boundary (normal component {normal_component:.3e})")]
    NotTangent { normal_component: f64 },
    #[error("step of length {length:.4} exceeds the admissible bound {bound:.4}")]
    StepTooLarge { length: f64, bound: f64 },
    #[error("reflection failed to return the point to the domain")]
    ReflectionFailed,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("transport problem infeasible: {0}")]
    Infeasible(String),
    #[error("solver did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("not connected")]
    NotConnected,
    #[error("already a vertex")]
    AlreadyVertex,
    #[error("no core: genus 0")]
    NoCore,
    #[error("path not unique")]
    PathNotUnique,
    #[error("bad point: {0}")]
    BadPoint(String),
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("metric inconsistency: {0}")]
    MetricInconsistency(String),
    #[error("not liftable: {0}")]
    NotLiftable(String),
    #[error("degree bound exceeded: degree {degree} over bound {bound}")]
    DegreeBound { degree: u64, bound: u64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("incompatible certificates at {0}")]
    IncompatibleCertificates(String),
    #[error("decomposition invalid: {0}")]
    DecompositionInvalid(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

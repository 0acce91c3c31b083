use thiserror::Error;

/// Errors raised by the filter and its numerical building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmfError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (jitter escalated to {0:e})")]
    NotPositiveDefinite(f64),
    #[error("quadrature did not converge: relative change {0:e} between orders")]
    QuadratureDivergence(f64),
    #[error("system violates f(0) = 0 / h(0) = 0: residual {0:e}")]
    OriginNotFixed(f64),
    #[error("SDC matrix does not reproduce the dynamics: {0}")]
    SdcMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("noise bound violated: {0}")]
    NoiseBound(String),
    #[error("{step} step failed at k = {k} after exhausting fallbacks: {reason}")]
    FilterFailure {
        step: &'static str,
        k: usize,
        reason: String,
    },
}

pub type Result<T, E = SmfError> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(SmfError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

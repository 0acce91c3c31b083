//! Empirical upper bounds on matrix Taylor remainder norms by non-adaptive
//! random search over the boundary of an ellipsoid.

use nalgebra::DVector;

use crate::ellipsoid::{sample_unit_sphere, spectral_norm, CholFactor};
use crate::error::{check_dim, Result, SmfError};
use crate::scalar::Real;
use crate::sdc::{MatrixKind, SdcModel};

/// Remainder samples per step used when nothing else is configured.
pub const DEFAULT_REMAINDER_SAMPLES: usize = 1000;

/// `max_i ||R(xhat, xhat + E z_i)||_2` over `sample_count` unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainderBound<T: Real> {
    pub value: T,
    pub kind: MatrixKind,
    pub sample_count: usize,
    /// Sample achieving the maximum (lowest index on ties).
    pub argmax_z: DVector<T>,
}

pub fn bound_remainder<T: Real>(
    kind: MatrixKind,
    model: &SdcModel<T>,
    xhat: &DVector<T>,
    factor: &CholFactor<T>,
    sample_count: usize,
    seed: u64,
) -> Result<RemainderBound<T>> {
    if sample_count == 0 {
        return Err(SmfError::InvalidArgument(
            "remainder search needs at least one sample".into(),
        ));
    }
    let samples = sample_unit_sphere(xhat.len(), sample_count, seed);
    bound_remainder_over(kind, model, xhat, factor, &samples)
}

/// Same as [`bound_remainder`] over caller-supplied unit vectors.
pub fn bound_remainder_over<T: Real>(
    kind: MatrixKind,
    model: &SdcModel<T>,
    xhat: &DVector<T>,
    factor: &CholFactor<T>,
    samples: &[DVector<T>],
) -> Result<RemainderBound<T>> {
    check_dim("remainder expansion point", model.state_dim(), xhat.len())?;
    check_dim("remainder factor", model.state_dim(), factor.dim())?;
    if samples.is_empty() {
        return Err(SmfError::InvalidArgument(
            "remainder search needs at least one sample".into(),
        ));
    }
    let expansion = model.expansion(kind, xhat)?;
    let e = factor.matrix();
    let mut best = (T::zero(), 0usize);
    for (i, z) in samples.iter().enumerate() {
        let x = xhat + e * z;
        let norm = spectral_norm(&expansion.remainder(model, &x)?);
        if norm > best.0 {
            best = (norm, i);
        }
    }
    Ok(RemainderBound {
        value: best.0,
        kind,
        sample_count: samples.len(),
        argmax_z: samples[best.1].clone(),
    })
}

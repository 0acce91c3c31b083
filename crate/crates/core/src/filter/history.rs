use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::ellipsoid::{spectral_norm, Ellipsoid};
use crate::scalar::Real;
use crate::sdp::{SdpStatus, VerificationReport};

/// How one SDP of a filter step was resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    /// Status of the last attempt.
    pub status: SdpStatus,
    /// Iterations summed over attempts.
    pub iterations: usize,
    /// Wall-clock solver time summed over attempts.
    pub solve_time: Duration,
    pub verification: Option<VerificationReport>,
    /// Number of times the remainder bound was inflated before success.
    pub bound_inflations: usize,
    /// True when no attempt succeeded and the inflated fallback was used.
    pub fallback: bool,
}

impl SolveRecord {
    pub fn accepted(&self) -> bool {
        !self.fallback
    }
}

/// Everything computed in one correction + prediction cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T: Real> {
    pub k: usize,
    pub measurement: DVector<T>,
    pub input: Option<DVector<T>>,
    /// `E(xhat_{k|k-1}, P_{k|k-1})`.
    pub prior: Ellipsoid<T>,
    /// `E(xhat_{k|k}, P_{k|k})`.
    pub correction: Ellipsoid<T>,
    pub gain: DMatrix<T>,
    /// Remainder bound used in the accepted correction SDP.
    pub r_h: T,
    pub correction_solve: SolveRecord,
    /// `E(xhat_{k+1|k}, P_{k+1|k})`.
    pub prediction: Ellipsoid<T>,
    pub r_a: T,
    pub r_b: Option<T>,
    pub prediction_solve: SolveRecord,
}

impl<T: Real> StepRecord<T> {
    pub fn gain_norm(&self) -> T {
        spectral_norm(&self.gain)
    }
}

/// Ordered records of a filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterHistory<T: Real> {
    pub steps: Vec<StepRecord<T>>,
}

impl<T: Real> FilterHistory<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `max_k ||L_k||`, zero for an empty history.
    pub fn max_gain_norm(&self) -> T {
        self.steps.iter().map(StepRecord::gain_norm).fold(T::zero(), T::max)
    }

    /// Count of SDPs resolved by the inflated fallback.
    pub fn fallback_count(&self) -> usize {
        self.steps
            .iter()
            .map(|s| usize::from(s.correction_solve.fallback) + usize::from(s.prediction_solve.fallback))
            .sum()
    }

    /// Mean of `trace(P_{k|k})`.
    pub fn mean_correction_trace(&self) -> T {
        if self.steps.is_empty() {
            return T::zero();
        }
        let sum = self.steps.iter().fold(T::zero(), |acc, s| acc + s.correction.trace());
        sum / T::lit(self.steps.len() as f64)
    }
}

//! Solver-independent feasibility check. Every residual here comes from an
//! eigenvalue computation on matrices assembled from the structural problem.

use nalgebra::DMatrix;

use super::problem::SdpProblem;
use super::SdpSolution;
use crate::ellipsoid::{asymmetry, max_abs, SYM_TOL};
use crate::error::{check_dim, Result, SmfError};
use crate::scalar::Real;

/// Default tolerance for [`verify`].
pub const DEFAULT_VERIFY_TOL: f64 = 1e-7;

/// Residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationReport {
    /// Largest eigenvalue of the block LMI; feasible when `<= tol`.
    pub lmi_max_eig: f64,
    /// Smallest eigenvalue of `P - p_floor I`; feasible when `>= -tol`.
    pub p_floor_min_eig: f64,
    /// Smallest multiplier (`+inf` when there are none).
    pub tau_min: f64,
    /// Tolerance applied: the requested one, raised to the rounding level of `P` in its scalar type.
    pub tol: f64,
}

impl VerificationReport {
    pub fn lmi_ok(&self) -> bool {
        self.lmi_max_eig <= self.tol
    }

    pub fn p_ok(&self) -> bool {
        self.p_floor_min_eig >= -self.tol
    }

    pub fn tau_ok(&self) -> bool {
        self.tau_min >= -self.tol
    }

    pub fn passed(&self) -> bool {
        self.lmi_ok() && self.p_ok() && self.tau_ok()
    }
}

fn check_symmetric<T: Real>(m: &DMatrix<T>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(SmfError::DimensionMismatch {
            context: "square matrix",
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let asym = asymmetry(m).as_f64();
    let scale = max_abs(m).as_f64().max(1.0);
    if asym > SYM_TOL * scale {
        return Err(SmfError::NotSymmetric(asym));
    }
    Ok(())
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lmi_eigen_max<T: Real>(m: &DMatrix<T>) -> Result<T> {
    check_symmetric(m)?;
    if m.is_empty() {
        return Ok(T::zero());
    }
    let eig = m.clone().symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(T::min_value().unwrap(), T::max))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lmi_eigen_min<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(-lmi_eigen_max(&(-m))?)
}

/// Builds the LMI at `sol` and computes the three residuals.
pub fn verify<T: Real>(prob: &SdpProblem<T>, sol: &SdpSolution<T>, tol: f64) -> Result<VerificationReport> {
    let n = prob.state_dim();
    check_dim("solution P", n, sol.p.nrows())?;
    check_dim("multiplier count", prob.tau_count(), sol.tau.len())?;
    match (prob.gain_cols(), &sol.gain) {
        (Some(p), Some(l)) => {
            check_dim("gain rows", n, l.nrows())?;
            check_dim("gain cols", p, l.ncols())?;
        }
        (Some(p), None) => {
            return Err(SmfError::DimensionMismatch {
                context: "solution gain columns",
                expected: p,
                actual: 0,
            })
        }
        _ => {}
    }
    // The certificate is checked exactly as stored, but in double precision:
    // recovered multipliers can be large enough that an eigenvalue solve in a
    // narrow type would be dominated by its own rounding.
    let wide = prob.to_f64();
    let p = sol.p.map(|v| v.as_f64());
    let p_sym = (&p + p.transpose()) * 0.5;
    let gain = sol.gain.as_ref().map(|g| g.map(|v| v.as_f64()));
    let tau: Vec<f64> = sol.tau.iter().map(|t| t.as_f64()).collect();
    let lmi = wide.evaluate_lmi(&p_sym, gain.as_ref(), &tau)?;
    let lmi_max_eig = lmi_eigen_max(&lmi)?;
    let floor = &p_sym - DMatrix::identity(n, n) * wide.p_floor();
    let p_floor_min_eig = lmi_eigen_min(&floor)?;
    let tau_min = tau.iter().copied().fold(f64::INFINITY, f64::min);
    let rounding = 100.0 * T::default_epsilon().as_f64() * p_sym.norm().max(1.0);
    let tol = tol.max(rounding);
    Ok(VerificationReport {
        lmi_max_eig,
        p_floor_min_eig,
        tau_min,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigen_max_examples() {
        let d = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        assert_relative_eq!(lmi_eigen_max(&d).unwrap(), -1.0, epsilon = 1e-12);
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_relative_eq!(lmi_eigen_max(&s).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_max_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(lmi_eigen_max(&m), Err(SmfError::NotSymmetric(_))));
    }

    #[test]
    fn eigen_max_matches_closed_form_2x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a: f64 = rng.random_range(-5.0..5.0);
            let b: f64 = rng.random_range(-5.0..5.0);
            let c: f64 = rng.random_range(-5.0..5.0);
            let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
            let oracle = 0.5 * (a + c) + (0.25 * (a - c).powi(2) + b * b).sqrt();
            let got = lmi_eigen_max(&m).unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
        }
    }
}

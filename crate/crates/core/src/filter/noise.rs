use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::ellipsoid::{chol_factor, spectral_norm};
use crate::error::{Result, SmfError};
use crate::scalar::Real;

/// Time-indexed noise shape matrix.
pub type MatrixSchedule<T> = Arc<dyn Fn(usize) -> DMatrix<T> + Send + Sync>;

#[derive(Clone)]
enum Schedule<T: Real> {
    Constant(DMatrix<T>),
    Varying(MatrixSchedule<T>),
}

impl<T: Real> Schedule<T> {
    fn at(&self, k: usize) -> DMatrix<T> {
        match self {
            Schedule::Constant(m) => m.clone(),
            Schedule::Varying(f) => f(k),
        }
    }
}

impl<T: Real> fmt::Debug for Schedule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            Schedule::Varying(_) => f.write_str("Varying(..)"),
        }
    }
}

/// Process and measurement noise ellipsoids `w_k in E(0, Q_k)`,
/// `v_k in E(0, R_k)`, with caps `||Q_k|| <= q` and `||R_k|| <= r`.
#[derive(Debug, Clone)]
pub struct NoiseBounds<T: Real> {
    q: Schedule<T>,
    r: Schedule<T>,
    q_cap: T,
    r_cap: T,
}

fn check_pd<T: Real>(what: &str, m: &DMatrix<T>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(SmfError::NoiseBound(format!("{what} is not square")));
    }
    chol_factor(m, T::zero()).map_err(|_| SmfError::NoiseBound(format!("{what} is not positive definite")))?;
    Ok(())
}

impl<T: Real> NoiseBounds<T> {
    /// Constant `Q` and `R`; the caps are their spectral norms.
    pub fn constant(q: DMatrix<T>, r: DMatrix<T>) -> Result<Self> {
        check_pd("Q", &q)?;
        check_pd("R", &r)?;
        Ok(Self {
            q_cap: spectral_norm(&q),
            r_cap: spectral_norm(&r),
            q: Schedule::Constant(q),
            r: Schedule::Constant(r),
        })
    }

    pub fn time_varying(q: MatrixSchedule<T>, r: MatrixSchedule<T>, q_cap: T, r_cap: T) -> Self {
        Self {
            q: Schedule::Varying(q),
            r: Schedule::Varying(r),
            q_cap,
            r_cap,
        }
    }

    pub fn q_cap(&self) -> T {
        self.q_cap
    }

    pub fn r_cap(&self) -> T {
        self.r_cap
    }

    fn checked(&self, which: &str, m: DMatrix<T>, cap: T, k: usize) -> Result<DMatrix<T>> {
        check_pd(&format!("{which}_{k}"), &m)?;
        let norm = spectral_norm(&m);
        if norm > cap * (T::one() + T::tol(1e-12)) {
            return Err(SmfError::NoiseBound(format!(
                "||{which}_{k}|| = {:e} exceeds the cap {:e}",
                norm.as_f64(),
                cap.as_f64()
            )));
        }
        Ok(m)
    }

    /// `Q_k`, checked for definiteness and against the cap.
    pub fn q_at(&self, k: usize) -> Result<DMatrix<T>> {
        self.checked("Q", self.q.at(k), self.q_cap, k)
    }

    /// `R_k`, checked for definiteness and against the cap.
    pub fn r_at(&self, k: usize) -> Result<DMatrix<T>> {
        self.checked("R", self.r.at(k), self.r_cap, k)
    }
}

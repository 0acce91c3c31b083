//! Ellipsoids `E(c, P) = { x : (x - c)^T P^-1 (x - c) <= 1 }` and the dense
//! linear-algebra helpers the rest of the crate builds on.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Result, SmfError};
use crate::scalar::Real;

/// Relative symmetry tolerance for shape matrices.
pub const SYM_TOL: f64 = 1e-10;
/// First diagonal jitter tried when a shape matrix fails to factor.
pub const DEFAULT_JITTER: f64 = 1e-12;
/// Number of jitter doublings before giving up.
pub const MAX_JITTER_DOUBLINGS: u32 = 10;
/// Containment slack used by the acceptance checks.
pub const DEFAULT_CONTAINMENT_SLACK: f64 = 1e-7;

/// Lower-triangular factor `E` with `E E^T = P + delta I`, plus `gamma = ||E||_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor<T: Real> {
    matrix: DMatrix<T>,
    gamma: T,
    jitter: T,
}

impl<T: Real> CholFactor<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// Spectral norm of the factor.
    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Diagonal shift that was needed for the factorization to succeed.
    pub fn jitter_applied(&self) -> T {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves `E y = v` by forward substitution.
    pub fn solve_lower(&self, v: &DVector<T>) -> DVector<T> {
        self.matrix
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Largest absolute entry (0 for empty matrices).
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Relative asymmetry `max|M - M^T| / max(1, max|M|)`.
pub fn asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() != m.ncols() {
        return T::max_value().unwrap_or_else(T::one);
    }
    let scale = max_abs(m).max(T::one());
    max_abs(&(m - m.transpose())) / scale
}

/// `(M + M^T) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone().singular_values().iter().fold(T::zero(), |acc, s| acc.max(*s))
}

pub fn trace<T: Real>(m: &DMatrix<T>) -> T {
    assert_eq!(m.nrows(), m.ncols(), "trace of a non-square matrix");
    m.trace()
}

/// Cholesky factorization with the diagonal jitter escalation
/// `delta in {0, jitter, 2 jitter, 4 jitter, ...}` (at most
/// [`MAX_JITTER_DOUBLINGS`] doublings).
pub fn chol_factor<T: Real>(shape: &DMatrix<T>, jitter: T) -> Result<CholFactor<T>> {
    check_dim("chol_factor (square)", shape.nrows(), shape.ncols())?;
    let asym = asymmetry(shape);
    if asym > T::tol(SYM_TOL) {
        return Err(SmfError::NotSymmetric(asym.as_f64()));
    }
    let sym = symmetrize(shape);
    let n = sym.nrows();
    let mut delta = T::zero();
    let mut doublings = 0;
    loop {
        let shifted = &sym + DMatrix::<T>::identity(n, n) * delta;
        if let Some(ch) = Cholesky::new(shifted) {
            let matrix = ch.l();
            let gamma = spectral_norm(&matrix);
            return Ok(CholFactor {
                matrix,
                gamma,
                jitter: delta,
            });
        }
        if jitter <= T::zero() || doublings > MAX_JITTER_DOUBLINGS {
            return Err(SmfError::NotPositiveDefinite(delta.as_f64()));
        }
        delta = if delta == T::zero() {
            jitter
        } else {
            doublings += 1;
            delta * T::lit(2.0)
        };
    }
}

/// An ellipsoid with its cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid<T: Real> {
    center: DVector<T>,
    shape: DMatrix<T>,
    factor: CholFactor<T>,
}

impl<T: Real> Ellipsoid<T> {
    /// Builds `E(center, shape)` using the default jitter policy.
    pub fn new(center: DVector<T>, shape: DMatrix<T>) -> Result<Self> {
        Self::with_jitter(center, shape, T::lit(DEFAULT_JITTER))
    }

    pub fn with_jitter(center: DVector<T>, shape: DMatrix<T>, jitter: T) -> Result<Self> {
        check_dim("ellipsoid center", shape.nrows(), center.len())?;
        let factor = chol_factor(&shape, jitter)?;
        Ok(Self {
            center,
            shape: symmetrize(&shape),
            factor,
        })
    }

    /// Euclidean ball of the given radius.
    pub fn ball(center: DVector<T>, radius: T) -> Result<Self> {
        let n = center.len();
        Self::new(center, DMatrix::identity(n, n) * (radius * radius))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<T> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<T> {
        &self.shape
    }

    pub fn factor(&self) -> &CholFactor<T> {
        &self.factor
    }

    pub fn trace(&self) -> T {
        self.shape.trace()
    }

    /// `(x - c)^T P^-1 (x - c)`, evaluated through the triangular factor.
    pub fn mahalanobis_sq(&self, x: &DVector<T>) -> Result<T> {
        check_dim("ellipsoid point", self.dim(), x.len())?;
        let y = self.factor.solve_lower(&(x - &self.center));
        Ok(y.norm_squared())
    }

    pub fn contains(&self, x: &DVector<T>, slack: T) -> Result<bool> {
        Ok(self.mahalanobis_sq(x)? <= T::one() + slack)
    }

    /// `c + E z`; lies on the boundary when `||z|| = 1`.
    pub fn point(&self, z: &DVector<T>) -> DVector<T> {
        &self.center + self.factor.matrix() * z
    }

    /// Same center, shape scaled by `factor`.
    pub fn inflated(&self, factor: T) -> Result<Self> {
        Self::new(self.center.clone(), &self.shape * factor)
    }
}

/// `count` points drawn uniformly on the unit sphere in `R^n`, deterministic
/// per `seed`.
pub fn sample_unit_sphere<T: Real>(n: usize, count: usize, seed: u64) -> Vec<DVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_unit_sphere_with(&mut rng, n, count)
}

/// Same as [`sample_unit_sphere`] but draws from a caller-owned generator.
pub fn sample_unit_sphere_with<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize) -> Vec<DVector<T>> {
    assert!(n >= 1, "sphere dimension must be positive");
    (0..count)
        .map(|_| loop {
            let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-300 {
                break DVector::from_iterator(n, g.iter().map(|v| T::lit(v / norm)));
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn chol_identity_and_diagonal() {
        let f = chol_factor(&DMatrix::<f64>::identity(2, 2), 0.0).unwrap();
        assert_relative_eq!(f.matrix(), &DMatrix::identity(2, 2));
        assert_relative_eq!(f.gamma(), 1.0, epsilon = 1e-14);

        let f = chol_factor(&m(2, 2, &[4.0, 0.0, 0.0, 9.0]), 0.0).unwrap();
        assert_relative_eq!(f.matrix(), &m(2, 2, &[2.0, 0.0, 0.0, 3.0]), epsilon = 1e-14);
        assert_relative_eq!(f.gamma(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn chol_rejects_asymmetric_and_indefinite() {
        let err = chol_factor(&m(2, 2, &[1.0, 0.5, 0.0, 1.0]), 0.0).unwrap_err();
        assert!(matches!(err, SmfError::NotSymmetric(_)));
        let err = chol_factor(&m(2, 2, &[1.0, 0.0, 0.0, -1.0]), 1e-12).unwrap_err();
        assert!(matches!(err, SmfError::NotPositiveDefinite(_)));
    }

    #[test]
    fn chol_jitter_rescues_semidefinite() {
        // rank one, PD only after a shift
        let p = m(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(chol_factor(&p, 0.0).is_err());
        let f = chol_factor(&p, 1e-12).unwrap();
        assert!(f.jitter_applied() > 0.0);
        let back = f.matrix() * f.matrix().transpose();
        assert!(max_abs(&(back - &p)) < 1e-8);
    }

    #[test]
    fn containment_examples() {
        let e = Ellipsoid::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(e.contains(&DVector::zeros(2), 0.0).unwrap());
        assert!(e.contains(&DVector::from_vec(vec![1.0, 0.0]), 0.0).unwrap());

        let e = Ellipsoid::new(DVector::zeros(2), m(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        let x = DVector::from_vec(vec![2.0001, 0.0]);
        assert_relative_eq!(e.mahalanobis_sq(&x).unwrap(), 1.0001, epsilon = 1e-6);
        assert!(!e.contains(&x, 0.0).unwrap());
        assert!(matches!(
            e.contains(&DVector::zeros(3), 0.0),
            Err(SmfError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sphere_samples() {
        let pts: Vec<DVector<f64>> = sample_unit_sphere(1, 4, 7);
        assert!(pts
            .iter()
            .all(|p| (p[0] - 1.0).abs() < 1e-15 || (p[0] + 1.0).abs() < 1e-15));

        let pts: Vec<DVector<f64>> = sample_unit_sphere(2, 1000, 11);
        assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));

        let pts: Vec<DVector<f64>> = sample_unit_sphere(2, 100_000, 3);
        let mean = pts.iter().fold(DVector::zeros(2), |acc, p| acc + p) / 100_000.0;
        assert!(mean.amax() < 0.02, "mean {mean}");

        let again: Vec<DVector<f64>> = sample_unit_sphere(2, 100_000, 3);
        assert_eq!(pts, again);
    }

    #[test]
    fn spectral_norm_and_trace() {
        assert_relative_eq!(spectral_norm(&DMatrix::<f64>::identity(3, 3)), 1.0, epsilon = 1e-14);
        assert_relative_eq!(spectral_norm(&m(2, 2, &[2.0, 0.0, 0.0, -5.0])), 5.0, epsilon = 1e-13);
        // M^T M = [[1,1],[1,2]] has largest eigenvalue (3 + sqrt 5) / 2.
        let golden = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert_relative_eq!(
            spectral_norm(&m(2, 2, &[1.0, 1.0, 0.0, 1.0])),
            golden,
            max_relative = 1e-10
        );
        assert_relative_eq!(golden, 1.618034, epsilon = 1e-6);

        assert_eq!(trace(&DMatrix::<f64>::identity(5, 5)), 5.0);
        assert_relative_eq!(trace(&m(2, 2, &[3.2, 0.7, 0.7, 2.3007])), 5.5007, epsilon = 1e-12);
        assert_eq!(trace(&DMatrix::<f64>::zeros(3, 3)), 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let e = Ellipsoid::<f32>::new(DVector::zeros(2), DMatrix::from_diagonal_element(2, 2, 4.0)).unwrap();
        assert!(e.contains(&DVector::from_vec(vec![1.9, 0.0]), 0.0).unwrap());
        assert!(!e.contains(&DVector::from_vec(vec![2.1, 0.0]), 0.0).unwrap());
        assert!((e.factor().gamma() - 2.0).abs() < 1e-6);
    }
}

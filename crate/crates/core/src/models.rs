//! Built-in model catalog.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::scalar::Real;
use crate::sdc::{MatFn, NonlinearSystem, SdcModel, VecFn};

/// Forward-Euler discretized Van der Pol oscillator
/// `x1+ = x1 + dt x2`, `x2+ = x2 + dt (-9 x1 + mu (1 - x1^2) x2)`, `y = x1`,
/// with its closed-form integral SDC matrices and derivative matrices.
pub fn van_der_pol<T: Real>(mu: T, dt: T) -> Result<SdcModel<T>> {
    let nine = T::lit(9.0);
    let third = T::lit(1.0 / 3.0);
    let two_thirds = T::lit(2.0 / 3.0);

    let f: VecFn<T> = Arc::new(move |x: &DVector<T>| {
        DVector::from_vec(vec![
            x[0] + dt * x[1],
            x[1] + dt * (-nine * x[0] + mu * (T::one() - x[0] * x[0]) * x[1]),
        ])
    });
    let h: VecFn<T> = Arc::new(|x: &DVector<T>| DVector::from_vec(vec![x[0]]));
    let jac_f: MatFn<T> = Arc::new(move |x: &DVector<T>| {
        let two = T::lit(2.0);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                T::one(),
                dt,
                dt * (-nine - two * mu * x[0] * x[1]),
                T::one() + dt * mu * (T::one() - x[0] * x[0]),
            ],
        )
    });
    let jac_h: MatFn<T> = Arc::new(|_x: &DVector<T>| DMatrix::from_row_slice(1, 2, &[T::one(), T::zero()]));

    let a: MatFn<T> = Arc::new(move |x: &DVector<T>| {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                T::one(),
                dt,
                -nine * dt - two_thirds * mu * dt * x[0] * x[1],
                T::one() + mu * dt * (T::one() - third * x[0] * x[0]),
            ],
        )
    });
    let k2: MatFn<T> = Arc::new(move |x: &DVector<T>| {
        let c = -two_thirds * mu * dt;
        let z = T::zero();
        DMatrix::from_row_slice(2, 4, &[z, z, z, z, c * x[1], c * x[0], c * x[0], z])
    });
    let h_mat = jac_h.clone();
    let k1: MatFn<T> = Arc::new(|_x: &DVector<T>| DMatrix::zeros(1, 4));

    let system = NonlinearSystem::new(2, 1, f, h)?.with_jacobians(jac_f, jac_h);
    SdcModel::builder(system)
        .analytic_a(a)
        .analytic_h(h_mat)
        .analytic_k1(k1)
        .analytic_k2(k2)
        .build()
}

/// `x+ = A x`, `y = H x` with constant matrices.
pub fn linear_model<T: Real>(a: DMatrix<T>, h: DMatrix<T>) -> Result<SdcModel<T>> {
    let (system, a_fn, h_fn, n, p) = linear_parts(a, h)?;
    SdcModel::builder(system)
        .analytic_a(a_fn)
        .analytic_h(h_fn)
        .analytic_k1(Arc::new(move |_x: &DVector<T>| DMatrix::zeros(p, n * n)))
        .analytic_k2(Arc::new(move |_x: &DVector<T>| DMatrix::zeros(n, n * n)))
        .build()
}

/// `x+ = A x + B u`, `y = H x` with constant matrices.
pub fn linear_controlled_model<T: Real>(a: DMatrix<T>, b: DMatrix<T>, h: DMatrix<T>) -> Result<SdcModel<T>> {
    let (system, a_fn, h_fn, n, p) = linear_parts(a, h)?;
    check_dim("input matrix rows", n, b.nrows())?;
    let m = b.ncols();
    let system = system.with_input(m, Arc::new(move |_x: &DVector<T>| b.clone()));
    SdcModel::builder(system)
        .analytic_a(a_fn)
        .analytic_h(h_fn)
        .analytic_k1(Arc::new(move |_x: &DVector<T>| DMatrix::zeros(p, n * n)))
        .analytic_k2(Arc::new(move |_x: &DVector<T>| DMatrix::zeros(n, n * n)))
        .analytic_k3(Arc::new(move |_x: &DVector<T>| DMatrix::zeros(n, n * m)))
        .build()
}

type LinearParts<T> = (NonlinearSystem<T>, MatFn<T>, MatFn<T>, usize, usize);

fn linear_parts<T: Real>(a: DMatrix<T>, h: DMatrix<T>) -> Result<LinearParts<T>> {
    let n = a.nrows();
    check_dim("state matrix columns", n, a.ncols())?;
    check_dim("output matrix columns", n, h.ncols())?;
    let p = h.nrows();
    let (a1, h1) = (a.clone(), h.clone());
    let f: VecFn<T> = Arc::new(move |x: &DVector<T>| &a1 * x);
    let hf: VecFn<T> = Arc::new(move |x: &DVector<T>| &h1 * x);
    let (a2, h2) = (a.clone(), h.clone());
    let system = NonlinearSystem::new(n, p, f, hf)?.with_jacobians(
        Arc::new(move |_x: &DVector<T>| a2.clone()),
        Arc::new(move |_x: &DVector<T>| h2.clone()),
    );
    let a_fn: MatFn<T> = Arc::new(move |_x: &DVector<T>| a.clone());
    let h_fn: MatFn<T> = Arc::new(move |_x: &DVector<T>| h.clone());
    Ok((system, a_fn, h_fn, n, p))
}

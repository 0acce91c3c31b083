//! Assembly of the correction, prediction and controlled-prediction SDPs.
//!
//! Multipliers are local to each problem and indexed from zero in the order
//! they appear on the diagonal of the `Theta` (or `Psi`) block.

use nalgebra::{DMatrix, DVector};

use crate::ellipsoid::Ellipsoid;
use crate::error::{check_dim, Result, SmfError};
use crate::scalar::Real;
use crate::sdp::{PiBlock, SdpProblem, ThetaBlock};

fn scalar<T: Real>(v: T) -> DMatrix<T> {
    DMatrix::from_element(1, 1, v)
}

fn eye<T: Real>(n: usize) -> DMatrix<T> {
    DMatrix::identity(n, n)
}

fn inverse_pd<T: Real>(what: &str, m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let inv = m
        .clone()
        .cholesky()
        .ok_or_else(|| SmfError::NoiseBound(format!("{what} is not positive definite")))?
        .inverse();
    Ok((&inv + inv.transpose()) * T::lit(0.5))
}

/// Minimum-trace ellipsoid containing the corrected state, with gain `L`.
///
/// Variables: `P` (n x n), `L` (n x p), six multipliers. Column blocks of
/// `Pi` have widths `[1, n, p, n^2, p, n^2, p]`.
pub fn build_correction_sdp<T: Real>(
    prior: &Ellipsoid<T>,
    h: &DMatrix<T>,
    k1: &DMatrix<T>,
    r_h: T,
    r: &DMatrix<T>,
) -> Result<SdpProblem<T>> {
    let n = prior.dim();
    let p = h.nrows();
    check_dim("H cols", n, h.ncols())?;
    check_dim("K1 rows", p, k1.nrows())?;
    check_dim("K1 cols", n * n, k1.ncols())?;
    check_dim("R rows", p, r.nrows())?;
    check_dim("R cols", p, r.ncols())?;
    if r_h < T::zero() {
        return Err(SmfError::InvalidArgument("remainder bound must be nonnegative".into()));
    }
    let e = prior.factor().matrix();
    let gamma = prior.factor().gamma();
    let xhat = prior.center();
    let xx = xhat.norm_squared();
    let ete = e.transpose() * e;
    let g2 = gamma * gamma;
    let r2 = r_h * r_h;
    let neg_i = -eye::<T>(p);
    let neg_k1 = -k1;

    let pi = vec![
        PiBlock::constant("center", DMatrix::zeros(n, 1)),
        PiBlock::with_gain("shape", e.clone(), -(h * e)),
        PiBlock::with_gain("noise", DMatrix::zeros(n, p), neg_i.clone()),
        PiBlock::with_gain("slope_shape", DMatrix::zeros(n, n * n), neg_k1.clone()),
        PiBlock::with_gain("remainder_shape", DMatrix::zeros(n, p), neg_i.clone()),
        PiBlock::with_gain("slope_center", DMatrix::zeros(n, n * n), neg_k1),
        PiBlock::with_gain("remainder_center", DMatrix::zeros(n, p), neg_i),
    ];
    let theta = vec![
        ThetaBlock::new("center", scalar(T::one()))
            .term(0, scalar(-T::one()))
            .term(1, scalar(-T::one()))
            .term(4, scalar(-g2 * xx))
            .term(5, scalar(-r2 * xx)),
        ThetaBlock::new("shape", DMatrix::zeros(n, n))
            .term(0, eye(n))
            .term(2, &ete * -g2)
            .term(3, &ete * -r2),
        ThetaBlock::new("noise", DMatrix::zeros(p, p)).term(1, inverse_pd("R", r)?),
        ThetaBlock::new("slope_shape", DMatrix::zeros(n * n, n * n)).term(2, eye(n * n)),
        ThetaBlock::new("remainder_shape", DMatrix::zeros(p, p)).term(3, eye(p)),
        ThetaBlock::new("slope_center", DMatrix::zeros(n * n, n * n)).term(4, eye(n * n)),
        ThetaBlock::new("remainder_center", DMatrix::zeros(p, p)).term(5, eye(p)),
    ];
    SdpProblem::new("correction", n, Some(p), 6, pi, theta)
}

type Blocks<T> = (Vec<PiBlock<T>>, Vec<ThetaBlock<T>>);

fn prediction_blocks<T: Real>(
    posterior: &Ellipsoid<T>,
    a: &DMatrix<T>,
    k2: &DMatrix<T>,
    r_a: T,
    q: &DMatrix<T>,
) -> Result<Blocks<T>> {
    let n = posterior.dim();
    check_dim("A rows", n, a.nrows())?;
    check_dim("A cols", n, a.ncols())?;
    check_dim("K2 rows", n, k2.nrows())?;
    check_dim("K2 cols", n * n, k2.ncols())?;
    check_dim("Q rows", n, q.nrows())?;
    check_dim("Q cols", n, q.ncols())?;
    if r_a < T::zero() {
        return Err(SmfError::InvalidArgument("remainder bound must be nonnegative".into()));
    }
    let e = posterior.factor().matrix();
    let gamma = posterior.factor().gamma();
    let xx = posterior.center().norm_squared();
    let ete = e.transpose() * e;
    let g2 = gamma * gamma;
    let r2 = r_a * r_a;
    let pi = vec![
        PiBlock::constant("center", DMatrix::zeros(n, 1)),
        PiBlock::constant("shape", a * e),
        PiBlock::constant("noise", eye(n)),
        PiBlock::constant("slope_center", k2.clone()),
        PiBlock::constant("remainder_center", eye(n)),
        PiBlock::constant("slope_shape", k2.clone()),
        PiBlock::constant("remainder_shape", eye(n)),
    ];
    let theta = vec![
        ThetaBlock::new("center", scalar(T::one()))
            .term(0, scalar(-T::one()))
            .term(1, scalar(-T::one()))
            .term(2, scalar(-g2 * xx))
            .term(3, scalar(-r2 * xx)),
        ThetaBlock::new("shape", DMatrix::zeros(n, n))
            .term(0, eye(n))
            .term(4, &ete * -g2)
            .term(5, &ete * -r2),
        ThetaBlock::new("noise", DMatrix::zeros(n, n)).term(1, inverse_pd("Q", q)?),
        ThetaBlock::new("slope_center", DMatrix::zeros(n * n, n * n)).term(2, eye(n * n)),
        ThetaBlock::new("remainder_center", DMatrix::zeros(n, n)).term(3, eye(n)),
        ThetaBlock::new("slope_shape", DMatrix::zeros(n * n, n * n)).term(4, eye(n * n)),
        ThetaBlock::new("remainder_shape", DMatrix::zeros(n, n)).term(5, eye(n)),
    ];
    Ok((pi, theta))
}

/// Minimum-trace ellipsoid containing the successor state.
///
/// Variables: `P` (n x n), six multipliers. Column blocks of `Pi` have
/// widths `[1, n, n, n^2, n, n^2, n]`.
pub fn build_prediction_sdp<T: Real>(
    posterior: &Ellipsoid<T>,
    a: &DMatrix<T>,
    k2: &DMatrix<T>,
    r_a: T,
    q: &DMatrix<T>,
) -> Result<SdpProblem<T>> {
    let (pi, theta) = prediction_blocks(posterior, a, k2, r_a, q)?;
    SdpProblem::new("prediction", posterior.dim(), None, 6, pi, theta)
}

/// Inputs of the input-dependent terms of the controlled prediction.
#[derive(Debug, Clone, Copy)]
pub struct InputTerms<'a, T: Real> {
    /// `D B(xhat)`, n x (m n).
    pub k3: &'a DMatrix<T>,
    pub r_b: T,
    pub u: &'a DVector<T>,
}

/// Prediction SDP for systems with a known input `u`. Two extra column
/// blocks (widths `m n` and `n`) and eight multipliers.
pub fn build_controlled_prediction_sdp<T: Real>(
    posterior: &Ellipsoid<T>,
    a: &DMatrix<T>,
    k2: &DMatrix<T>,
    r_a: T,
    q: &DMatrix<T>,
    input: InputTerms<'_, T>,
) -> Result<SdpProblem<T>> {
    let n = posterior.dim();
    let m = input.u.len();
    check_dim("K3 rows", n, input.k3.nrows())?;
    check_dim("K3 cols", m * n, input.k3.ncols())?;
    if input.r_b < T::zero() {
        return Err(SmfError::InvalidArgument("remainder bound must be nonnegative".into()));
    }
    let (mut pi, mut theta) = prediction_blocks(posterior, a, k2, r_a, q)?;
    let gamma = posterior.factor().gamma();
    let uu = input.u.norm_squared();
    theta[0] = theta[0]
        .clone()
        .term(6, scalar(-gamma * gamma * uu))
        .term(7, scalar(-input.r_b * input.r_b * uu));
    pi.push(PiBlock::constant("input_slope", input.k3.clone()));
    pi.push(PiBlock::constant("input_remainder", eye(n)));
    theta.push(ThetaBlock::new("input_slope", DMatrix::zeros(m * n, m * n)).term(6, eye(m * n)));
    theta.push(ThetaBlock::new("input_remainder", DMatrix::zeros(n, n)).term(7, eye(n)));
    SdpProblem::new("controlled_prediction", n, None, 8, pi, theta)
}

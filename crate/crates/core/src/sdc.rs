//! Pseudo-linear (state dependent coefficient) form of a nonlinear system:
//! `f(x) = A(x) x`, `h(x) = H(x) x`, optional input matrix `B(x)`, and the
//! Vetter derivative matrices used for the matrix Taylor expansions.
//!
//! Derivative matrices use the horizontal block layout
//! `K(x) = [dM/dx_1 | dM/dx_2 | ... | dM/dx_n]`, so that
//! `K (xi ⊗ I_s) = sum_i xi_i dM/dx_i`. The Kronecker factor is never
//! materialized; see [`kron_apply`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ellipsoid::max_abs;
use crate::error::{check_dim, Result, SmfError};
use crate::quadrature::gauss_legendre_unit;
use crate::scalar::Real;

pub type VecFn<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;
pub type MatFn<T> = Arc<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;

/// Selects the dynamics map or the output map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Dynamics,
    Output,
}

/// Selects one of the state dependent matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    A,
    H,
    B,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixKind::A => "A",
            MatrixKind::H => "H",
            MatrixKind::B => "B",
        })
    }
}

/// `x_{k+1} = f(x_k) + g(x_k) u_k + w_k`, `y_k = h(x_k) + v_k` with
/// `f(0) = 0`, `h(0) = 0`.
#[derive(Clone)]
pub struct NonlinearSystem<T: Real> {
    n: usize,
    p: usize,
    m: usize,
    f: VecFn<T>,
    h: VecFn<T>,
    g: Option<MatFn<T>>,
    jac_f: Option<MatFn<T>>,
    jac_h: Option<MatFn<T>>,
}

impl<T: Real> fmt::Debug for NonlinearSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSystem")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("m", &self.m)
            .finish_non_exhaustive()
    }
}

impl<T: Real> NonlinearSystem<T> {
    pub fn new(n: usize, p: usize, f: VecFn<T>, h: VecFn<T>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(SmfError::InvalidArgument(
                "state and output dimensions must be positive".into(),
            ));
        }
        let zero = DVector::zeros(n);
        let f0 = f(&zero);
        let h0 = h(&zero);
        check_dim("f(0)", n, f0.len())?;
        check_dim("h(0)", p, h0.len())?;
        let residual = f0.amax().max(h0.amax());
        if residual > T::tol(1e-12) {
            return Err(SmfError::OriginNotFixed(residual.as_f64()));
        }
        Ok(Self {
            n,
            p,
            m: 0,
            f,
            h,
            g: None,
            jac_f: None,
            jac_h: None,
        })
    }

    /// Adds `m` known inputs entering through the `n x m` matrix `g(x)`.
    pub fn with_input(mut self, m: usize, g: MatFn<T>) -> Self {
        self.m = m;
        self.g = Some(g);
        self
    }

    /// Registers analytic Jacobians of `f` and `h`.
    pub fn with_jacobians(mut self, jac_f: MatFn<T>, jac_h: MatFn<T>) -> Self {
        self.jac_f = Some(jac_f);
        self.jac_h = Some(jac_h);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.p
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn has_input(&self) -> bool {
        self.g.is_some() && self.m > 0
    }

    pub fn f(&self, x: &DVector<T>) -> DVector<T> {
        (self.f)(x)
    }

    pub fn h(&self, x: &DVector<T>) -> DVector<T> {
        (self.h)(x)
    }

    pub fn g(&self, x: &DVector<T>) -> Option<DMatrix<T>> {
        self.g.as_ref().map(|g| g(x))
    }

    /// One noise-free step `f(x) + g(x) u`.
    pub fn step(&self, x: &DVector<T>, u: Option<&DVector<T>>) -> DVector<T> {
        let mut next = self.f(x);
        if let (Some(g), Some(u)) = (self.g(x), u) {
            next += g * u;
        }
        next
    }

    /// Jacobian of the selected map, analytic when registered, otherwise by
    /// central differences with per-coordinate step `fd_step * max(1, |x_i|)`.
    pub fn jacobian(&self, which: MapKind, x: &DVector<T>, fd_step: T) -> DMatrix<T> {
        let (map, analytic) = match which {
            MapKind::Dynamics => (&self.f, &self.jac_f),
            MapKind::Output => (&self.h, &self.jac_h),
        };
        if let Some(jac) = analytic {
            return jac(x);
        }
        let n = x.len();
        let rows = map(x).len();
        let mut jac = DMatrix::zeros(rows, n);
        let mut xp = x.clone();
        for i in 0..n {
            let step = fd_step * x[i].abs().max(T::one());
            let xi = x[i];
            xp[i] = xi + step;
            let fp = map(&xp);
            xp[i] = xi - step;
            let fm = map(&xp);
            xp[i] = xi;
            jac.set_column(i, &((fp - fm) / (step + step)));
        }
        jac
    }
}

/// `int_0^1 J(lambda x) d lambda` by Gauss-Legendre quadrature of `quad_order`
/// points, cross-checked against the rule of twice the order.
pub fn sdc_from_integral<T: Real>(
    sys: &NonlinearSystem<T>,
    which: MapKind,
    x: &DVector<T>,
    quad_order: usize,
    opts: &SdcOptions<T>,
) -> Result<DMatrix<T>> {
    check_dim("sdc_from_integral state", sys.state_dim(), x.len())?;
    if quad_order < 2 {
        return Err(SmfError::InvalidArgument("quadrature order must be at least 2".into()));
    }
    let integrate = |order: usize| {
        let (nodes, weights) = gauss_legendre_unit::<T>(order);
        let mut acc: Option<DMatrix<T>> = None;
        for (lambda, w) in nodes.iter().zip(&weights) {
            let term = sys.jacobian(which, &(x * *lambda), opts.fd_step) * *w;
            acc = Some(match acc {
                Some(a) => a + term,
                None => term,
            });
        }
        acc.expect("at least one node")
    };
    let coarse = integrate(quad_order);
    let fine = integrate(2 * quad_order);
    let change = max_abs(&(&fine - &coarse)) / max_abs(&fine).max(T::one());
    if change > opts.quad_tol {
        return Err(SmfError::QuadratureDivergence(change.as_f64()));
    }
    Ok(coarse)
}

/// Vetter derivative matrix `[dM/dx_1 | ... | dM/dx_n]` (each block `r x s`) by
/// central differences with per-coordinate step `step * max(1, |x_i|)`.
pub fn vetter_derivative<T: Real, F>(mut matfun: F, x: &DVector<T>, step: T) -> DMatrix<T>
where
    F: FnMut(&DVector<T>) -> DMatrix<T>,
{
    try_vetter_derivative(|z| Ok(matfun(z)), x, step).expect("infallible matrix function")
}

/// Fallible variant of [`vetter_derivative`].
pub fn try_vetter_derivative<T: Real, F>(mut matfun: F, x: &DVector<T>, step: T) -> Result<DMatrix<T>>
where
    F: FnMut(&DVector<T>) -> Result<DMatrix<T>>,
{
    let n = x.len();
    let base = matfun(x)?;
    let (r, s) = base.shape();
    let mut out = DMatrix::zeros(r, s * n);
    let mut xp = x.clone();
    for i in 0..n {
        let h = step * x[i].abs().max(T::one());
        let xi = x[i];
        xp[i] = xi + h;
        let mp = matfun(&xp)?;
        xp[i] = xi - h;
        let mm = matfun(&xp)?;
        xp[i] = xi;
        out.view_mut((0, i * s), (r, s)).copy_from(&((mp - mm) / (h + h)));
    }
    Ok(out)
}

/// `K (xi ⊗ I_s)` evaluated as `sum_i xi_i K_i`, where `K_i` is the i-th
/// `r x s` block of `K`.
pub fn kron_apply<T: Real>(k: &DMatrix<T>, xi: &DVector<T>, s: usize) -> DMatrix<T> {
    let r = k.nrows();
    assert_eq!(k.ncols(), s * xi.len(), "derivative matrix width must be s * n");
    let mut out = DMatrix::zeros(r, s);
    for (i, w) in xi.iter().enumerate() {
        if *w != T::zero() {
            out += k.view((0, i * s), (r, s)) * *w;
        }
    }
    out
}

/// Numerical settings for the SDC construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SdcOptions<T: Real> {
    pub quad_order: usize,
    pub quad_tol: T,
    pub fd_step: T,
    /// Relative tolerance for `A(x) x = f(x)` and analytic-vs-quadrature checks.
    pub sdc_tol: T,
    pub validation_points: usize,
    /// Half-width of the box `[-b, b]^n` used for validation samples.
    pub validation_box: T,
    pub validation_seed: u64,
}

impl<T: Real> Default for SdcOptions<T> {
    fn default() -> Self {
        Self {
            quad_order: 8,
            quad_tol: T::tol(1e-6),
            fd_step: T::tol(1e-5),
            sdc_tol: T::tol(1e-8),
            validation_points: 32,
            validation_box: T::lit(2.0),
            validation_seed: 0x5dc,
        }
    }
}

/// Where a state dependent matrix comes from.
#[derive(Clone)]
enum Source<T: Real> {
    Analytic(MatFn<T>),
    Integral,
}

/// The SDC parameterization of a [`NonlinearSystem`]: `A`, `H`, optional `B`
/// and their derivative matrices `K1 = D H`, `K2 = D A`, `K3 = D B`.
#[derive(Clone)]
pub struct SdcModel<T: Real> {
    system: NonlinearSystem<T>,
    a: Source<T>,
    h: Source<T>,
    k1: Option<MatFn<T>>,
    k2: Option<MatFn<T>>,
    k3: Option<MatFn<T>>,
    opts: SdcOptions<T>,
}

impl<T: Real> fmt::Debug for SdcModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdcModel")
            .field("system", &self.system)
            .field("analytic_a", &matches!(self.a, Source::Analytic(_)))
            .field("analytic_h", &matches!(self.h, Source::Analytic(_)))
            .finish_non_exhaustive()
    }
}

/// Builder for [`SdcModel`]; analytic matrices are cross-validated on build.
pub struct SdcModelBuilder<T: Real> {
    model: SdcModel<T>,
}

impl<T: Real> SdcModelBuilder<T> {
    pub fn analytic_a(mut self, a: MatFn<T>) -> Self {
        self.model.a = Source::Analytic(a);
        self
    }

    pub fn analytic_h(mut self, h: MatFn<T>) -> Self {
        self.model.h = Source::Analytic(h);
        self
    }

    pub fn analytic_k1(mut self, k1: MatFn<T>) -> Self {
        self.model.k1 = Some(k1);
        self
    }

    pub fn analytic_k2(mut self, k2: MatFn<T>) -> Self {
        self.model.k2 = Some(k2);
        self
    }

    pub fn analytic_k3(mut self, k3: MatFn<T>) -> Self {
        self.model.k3 = Some(k3);
        self
    }

    pub fn options(mut self, opts: SdcOptions<T>) -> Self {
        self.model.opts = opts;
        self
    }

    pub fn build(self) -> Result<SdcModel<T>> {
        self.model.validate()?;
        Ok(self.model)
    }
}

impl<T: Real> SdcModel<T> {
    pub fn builder(system: NonlinearSystem<T>) -> SdcModelBuilder<T> {
        SdcModelBuilder {
            model: SdcModel {
                system,
                a: Source::Integral,
                h: Source::Integral,
                k1: None,
                k2: None,
                k3: None,
                opts: SdcOptions::default(),
            },
        }
    }

    /// Quadrature-only parameterization.
    pub fn from_system(system: NonlinearSystem<T>) -> Result<Self> {
        Self::builder(system).build()
    }

    pub fn system(&self) -> &NonlinearSystem<T> {
        &self.system
    }

    pub fn options(&self) -> &SdcOptions<T> {
        &self.opts
    }

    pub fn state_dim(&self) -> usize {
        self.system.n
    }

    pub fn output_dim(&self) -> usize {
        self.system.p
    }

    pub fn input_dim(&self) -> usize {
        self.system.m
    }

    pub fn has_input(&self) -> bool {
        self.system.has_input()
    }

    pub fn a(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        match &self.a {
            Source::Analytic(a) => Ok(a(x)),
            Source::Integral => sdc_from_integral(&self.system, MapKind::Dynamics, x, self.opts.quad_order, &self.opts),
        }
    }

    pub fn h(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        match &self.h {
            Source::Analytic(h) => Ok(h(x)),
            Source::Integral => sdc_from_integral(&self.system, MapKind::Output, x, self.opts.quad_order, &self.opts),
        }
    }

    pub fn b(&self, x: &DVector<T>) -> Option<DMatrix<T>> {
        self.system.g(x)
    }

    /// Evaluates the selected matrix at `x`.
    pub fn matrix(&self, kind: MatrixKind, x: &DVector<T>) -> Result<DMatrix<T>> {
        match kind {
            MatrixKind::A => self.a(x),
            MatrixKind::H => self.h(x),
            MatrixKind::B => self
                .b(x)
                .ok_or_else(|| SmfError::InvalidArgument("model has no input matrix".into())),
        }
    }

    /// Derivative matrix of the selected matrix at `x` (`K1` for H, `K2`
    /// for A, `K3` for B).
    pub fn derivative(&self, kind: MatrixKind, x: &DVector<T>) -> Result<DMatrix<T>> {
        let analytic = match kind {
            MatrixKind::A => &self.k2,
            MatrixKind::H => &self.k1,
            MatrixKind::B => &self.k3,
        };
        if let Some(k) = analytic {
            return Ok(k(x));
        }
        try_vetter_derivative(|z| self.matrix(kind, z), x, self.opts.fd_step)
    }

    pub fn k1(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        self.derivative(MatrixKind::H, x)
    }

    pub fn k2(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        self.derivative(MatrixKind::A, x)
    }

    pub fn k3(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        self.derivative(MatrixKind::B, x)
    }

    /// Column-block width `s` of the Kronecker factor `xi ⊗ I_s` for `kind`.
    pub fn kron_width(&self, kind: MatrixKind) -> usize {
        match kind {
            MatrixKind::A | MatrixKind::H => self.system.n,
            MatrixKind::B => self.system.m,
        }
    }

    /// Second-order remainder `M(x) - M(xhat) - K(xhat) ((x - xhat) ⊗ I)`.
    pub fn remainder(&self, kind: MatrixKind, xhat: &DVector<T>, x: &DVector<T>) -> Result<DMatrix<T>> {
        let expansion = self.expansion(kind, xhat)?;
        expansion.remainder(self, x)
    }

    /// Precomputes `M(xhat)` and `K(xhat)` so that many remainders about the
    /// same point can be evaluated cheaply.
    pub fn expansion(&self, kind: MatrixKind, xhat: &DVector<T>) -> Result<TaylorExpansion<T>> {
        check_dim("expansion point", self.state_dim(), xhat.len())?;
        Ok(TaylorExpansion {
            kind,
            xhat: xhat.clone(),
            value: self.matrix(kind, xhat)?,
            derivative: self.derivative(kind, xhat)?,
            width: self.kron_width(kind),
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let opts = &self.opts;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.validation_seed);
        let b = opts.validation_box.as_f64();
        for _ in 0..opts.validation_points {
            let x = DVector::from_iterator(n, (0..n).map(|_| T::lit(rng.random_range(-b..=b))));
            let a = self.a(&x)?;
            let h = self.h(&x)?;
            if a.shape() != (n, n) {
                return Err(SmfError::SdcMismatch(format!(
                    "A(x) has shape {:?}, expected ({n}, {n})",
                    a.shape()
                )));
            }
            if h.shape() != (self.output_dim(), n) {
                return Err(SmfError::SdcMismatch(format!("H(x) has shape {:?}", h.shape())));
            }
            let fx = self.system.f(&x);
            let hx = self.system.h(&x);
            let ra = (&a * &x - &fx).norm();
            if ra > opts.sdc_tol * (T::one() + fx.norm()) {
                return Err(SmfError::SdcMismatch(format!("|A(x)x - f(x)| = {:e}", ra.as_f64())));
            }
            let rh = (&h * &x - &hx).norm();
            if rh > opts.sdc_tol * (T::one() + hx.norm()) {
                return Err(SmfError::SdcMismatch(format!("|H(x)x - h(x)| = {:e}", rh.as_f64())));
            }
            // Analytic forms must agree with the integral parameterization.
            // Finite-difference Jacobians limit the attainable agreement, so a
            // looser tolerance applies unless analytic Jacobians are present.
            for (kind, source, map, has_jac) in [
                (MatrixKind::A, &self.a, MapKind::Dynamics, self.system.jac_f.is_some()),
                (MatrixKind::H, &self.h, MapKind::Output, self.system.jac_h.is_some()),
            ] {
                if let Source::Analytic(m) = source {
                    let quad = sdc_from_integral(&self.system, map, &x, opts.quad_order, opts)?;
                    let tol = if has_jac { opts.sdc_tol } else { T::tol(1e-6) };
                    let diff = max_abs(&(m(&x) - &quad));
                    if diff > tol * (T::one() + max_abs(&quad)) {
                        return Err(SmfError::SdcMismatch(format!(
                            "analytic {kind} differs from the integral form by {:e}",
                            diff.as_f64()
                        )));
                    }
                }
            }
            for (kind, k) in [
                (MatrixKind::H, &self.k1),
                (MatrixKind::A, &self.k2),
                (MatrixKind::B, &self.k3),
            ] {
                if let Some(k) = k {
                    if kind == MatrixKind::B && !self.has_input() {
                        continue;
                    }
                    let fd = try_vetter_derivative(|z| self.matrix(kind, z), &x, opts.fd_step)?;
                    let an = k(&x);
                    if an.shape() != fd.shape() {
                        return Err(SmfError::SdcMismatch(format!(
                            "derivative of {kind} has shape {:?}, expected {:?}",
                            an.shape(),
                            fd.shape()
                        )));
                    }
                    let diff = max_abs(&(&an - &fd));
                    if diff > T::tol(1e-5) * (T::one() + max_abs(&fd)) {
                        return Err(SmfError::SdcMismatch(format!(
                            "analytic derivative of {kind} differs from finite differences by {:e}",
                            diff.as_f64()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// First-order matrix Taylor expansion of `A`, `H` or `B` about `xhat`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorExpansion<T: Real> {
    pub kind: MatrixKind,
    pub xhat: DVector<T>,
    /// `M(xhat)`.
    pub value: DMatrix<T>,
    /// `K(xhat)`.
    pub derivative: DMatrix<T>,
    width: usize,
}

impl<T: Real> TaylorExpansion<T> {
    /// First-order prediction `M(xhat) + K (xi ⊗ I)` at `x = xhat + xi`.
    pub fn linear_part(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        check_dim("expansion argument", self.xhat.len(), x.len())?;
        let xi = x - &self.xhat;
        Ok(&self.value + kron_apply(&self.derivative, &xi, self.width))
    }

    /// `M(x) - M(xhat) - K(xhat) ((x - xhat) ⊗ I)`.
    pub fn remainder(&self, model: &SdcModel<T>, x: &DVector<T>) -> Result<DMatrix<T>> {
        let lin = self.linear_part(x)?;
        Ok(model.matrix(self.kind, x)? - lin)
    }
}

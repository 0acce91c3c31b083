//! Dense primal-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector) for block-diagonal SDPs in inequality form
//!
//! ```text
//! minimize c^T y   subject to   S = F0 + sum_i y_i F_i >= 0
//! ```
//!
//! with dual `maximize -<F0, X>` subject to `<F_i, X> = c_i`, `X >= 0`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{SdpStatus, SolverOptions};

/// Block-diagonal LMI program in inequality form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    sizes: Vec<usize>,
    c: DVector<f64>,
    f0: Vec<DMatrix<f64>>,
    coeffs: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl ConicProgram {
    /// Empty program with zero data on blocks of the given sizes.
    pub fn new(block_sizes: Vec<usize>, objective: DVector<f64>) -> Self {
        let f0 = block_sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        let coeffs = vec![Vec::new(); objective.len()];
        Self {
            sizes: block_sizes,
            c: objective,
            f0,
            coeffs,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn objective(&self) -> &DVector<f64> {
        &self.c
    }

    /// Adds the symmetric part of `m` to the constant of `block`.
    pub fn add_constant(&mut self, block: usize, m: &DMatrix<f64>) {
        self.f0[block] += (m + m.transpose()) * 0.5;
    }

    /// Adds the symmetric part of `m` to the coefficient of `var` in `block`.
    pub fn add_coeff(&mut self, var: usize, block: usize, m: &DMatrix<f64>) {
        let sym = (m + m.transpose()) * 0.5;
        if sym.iter().all(|v| *v == 0.0) {
            return;
        }
        match self.coeffs[var].iter_mut().find(|(b, _)| *b == block) {
            Some((_, existing)) => *existing += sym,
            None => self.coeffs[var].push((block, sym)),
        }
    }

    /// `F0 + sum_i y_i F_i`.
    pub fn slack(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut s = self.f0.clone();
        self.accumulate(y, &mut s);
        s
    }

    fn accumulate(&self, y: &DVector<f64>, out: &mut [DMatrix<f64>]) {
        for (i, terms) in self.coeffs.iter().enumerate() {
            if y[i] == 0.0 {
                continue;
            }
            for (b, m) in terms {
                out[*b] += m * y[i];
            }
        }
    }

    fn linear_part(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut s: Vec<DMatrix<f64>> = self.sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        self.accumulate(y, &mut s);
        s
    }

    fn adjoint(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.num_vars(),
            self.coeffs
                .iter()
                .map(|terms| terms.iter().map(|(b, m)| m.dot(&x[*b])).sum::<f64>()),
        )
    }
}

/// Outcome of [`solve_conic`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConicResult {
    pub status: SdpStatus,
    /// The returned point met only the reduced-accuracy tolerance.
    pub reduced_accuracy: bool,
    pub y: DVector<f64>,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub elapsed: std::time::Duration,
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    inner(a, a).sqrt()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| sym(c.inverse()))
}

/// Largest `alpha` with `m + alpha * dm` PSD (capped at `f64::INFINITY`).
fn max_step(m: &DMatrix<f64>, dm: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let w = sym(&linv * dm * linv.transpose());
    let lmin = w.symmetric_eigen().eigenvalues.min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn block_max_step(m: &[DMatrix<f64>], dm: &[DMatrix<f64>]) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (a, b) in m.iter().zip(dm) {
        alpha = alpha.min(max_step(a, b)?);
    }
    Some(alpha)
}

struct Point {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
}

fn initial_point(prog: &ConicProgram) -> Point {
    let m = prog.num_vars();
    let mut x = Vec::with_capacity(prog.sizes.len());
    let mut s = Vec::with_capacity(prog.sizes.len());
    for (b, &size) in prog.sizes.iter().enumerate() {
        let nb = size as f64;
        let mut xi: f64 = 10.0f64.max(nb.sqrt());
        let mut eta: f64 = 10.0f64.max(nb.sqrt()).max(prog.f0[b].norm());
        for (i, terms) in prog.coeffs.iter().enumerate() {
            for (bb, f) in terms {
                if *bb == b {
                    let fnorm = f.norm();
                    xi = xi.max(nb * (1.0 + prog.c[i].abs()) / (1.0 + fnorm));
                    eta = eta.max(fnorm);
                }
            }
        }
        x.push(DMatrix::identity(size, size) * xi);
        s.push(DMatrix::identity(size, size) * eta);
    }
    Point {
        x,
        s,
        y: DVector::zeros(m),
    }
}

fn solve_schur(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        let mut sol = ch.solve(rhs);
        let resid = rhs - m * &sol;
        sol += ch.solve(&resid);
        if sol.iter().all(|v| v.is_finite()) {
            return Some(sol);
        }
    }
    let sol = m.clone().lu().solve(rhs)?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// Runs the interior-point method.
pub fn solve_conic(prog: &ConicProgram, opts: &SolverOptions) -> ConicResult {
    let start = Instant::now();
    let m = prog.num_vars();
    let total_dim: usize = prog.sizes.iter().sum();
    let norm_c = prog.c.norm();
    let norm_f0 = frob(&prog.f0);
    let mut pt = initial_point(prog);
    let mut result = ConicResult {
        status: SdpStatus::MaxIter,
        reduced_accuracy: false,
        y: pt.y.clone(),
        iterations: 0,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        relative_gap: f64::INFINITY,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        elapsed: Default::default(),
    };
    if total_dim == 0 {
        result.status = SdpStatus::Optimal;
        result.primal_objective = 0.0;
        result.dual_objective = 0.0;
        result.relative_gap = 0.0;
        result.elapsed = start.elapsed();
        return result;
    }

    let mut best: Option<ConicResult> = None;
    let mut since_best = 0usize;
    for iter in 0..=opts.max_iterations {
        let fy = prog.slack(&pt.y);
        let rd: Vec<DMatrix<f64>> = fy.iter().zip(&pt.s).map(|(a, b)| a - b).collect();
        let rp = &prog.c - prog.adjoint(&pt.x);
        let pobj = prog.c.dot(&pt.y);
        let f0x = inner(&prog.f0, &pt.x);
        let dobj = -f0x;
        let gap = inner(&pt.x, &pt.s);
        let mu = gap / total_dim as f64;
        let relgap = gap.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + norm_c);
        let dinf = frob(&rd) / (1.0 + norm_f0);

        result.iterations = iter;
        result.y = pt.y.clone();
        result.primal_objective = pobj;
        result.dual_objective = dobj;
        result.relative_gap = relgap;
        result.primal_infeasibility = pinf;
        result.dual_infeasibility = dinf;

        if !(pobj.is_finite() && dobj.is_finite() && gap.is_finite()) {
            result.status = SdpStatus::NumericalFailure;
            break;
        }
        if relgap <= opts.gap_tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            result.status = SdpStatus::Optimal;
            best = None;
            break;
        }
        let merit = relgap.max(pinf).max(dinf);
        let best_merit = best.as_ref().map_or(f64::INFINITY, |b| {
            b.relative_gap.max(b.primal_infeasibility).max(b.dual_infeasibility)
        });
        if merit < best_merit {
            best = Some(result.clone());
            since_best = 0;
        } else if best_merit <= opts.reduced_accuracy_tol.sqrt() {
            // Only stop on stagnation near the end game.
            since_best += 1;
            if since_best >= opts.stall_iterations {
                result.status = SdpStatus::NumericalFailure;
                break;
            }
        }
        // A normalized dual ray proves the LMI itself has no solution.
        if f0x < 0.0 {
            let ray_res = prog.adjoint(&pt.x).norm() / -f0x;
            if ray_res <= opts.infeasibility_tol {
                result.status = SdpStatus::Infeasible;
                break;
            }
        }
        if pobj < -opts.divergence_limit.sqrt() {
            let dir = prog.linear_part(&(&pt.y / pobj.abs()));
            let lmin = dir
                .iter()
                .filter(|b| !b.is_empty())
                .map(|b| sym(b.clone()).symmetric_eigen().eigenvalues.min())
                .fold(f64::INFINITY, f64::min);
            if lmin >= -opts.infeasibility_tol {
                result.status = SdpStatus::Unbounded;
                break;
            }
        }
        if iter == opts.max_iterations {
            break;
        }
        let x_norm = frob(&pt.x);
        if x_norm > opts.divergence_limit || pt.y.norm() > opts.divergence_limit {
            result.status = if f0x < 0.0 {
                SdpStatus::Infeasible
            } else {
                SdpStatus::NumericalFailure
            };
            break;
        }

        let Some(sinv) = pt.s.iter().map(inverse_spd).collect::<Option<Vec<_>>>() else {
            result.status = SdpStatus::NumericalFailure;
            break;
        };

        // Schur complement M_ij = <F_i, X F_j S^-1>.
        let mut g: Vec<Vec<(usize, DMatrix<f64>)>> = Vec::with_capacity(m);
        for terms in &prog.coeffs {
            g.push(terms.iter().map(|(b, f)| (*b, &pt.x[*b] * f * &sinv[*b])).collect());
        }
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut v = 0.0;
                for (bi, fi) in &prog.coeffs[i] {
                    for (bj, gj) in &g[j] {
                        if bi == bj {
                            v += fi.dot(gj);
                        }
                    }
                }
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }

        let x_rd_sinv: Vec<DMatrix<f64>> = (0..pt.x.len()).map(|b| &pt.x[b] * &rd[b] * &sinv[b]).collect();
        let direction = |sigma_mu: f64, corr: Option<&[DMatrix<f64>]>| -> Option<Point> {
            let t: Vec<DMatrix<f64>> = (0..pt.x.len())
                .map(|b| {
                    let mut t = &sinv[b] * sigma_mu - &pt.x[b];
                    if let Some(c) = corr {
                        t -= &c[b] * &sinv[b];
                    }
                    t
                })
                .collect();
            let h: Vec<DMatrix<f64>> = t.iter().zip(&x_rd_sinv).map(|(a, b)| a - b).collect();
            let rhs = prog.adjoint(&h) - &rp;
            let dy = solve_schur(&schur, &rhs)?;
            let lin = prog.linear_part(&dy);
            let ds: Vec<DMatrix<f64>> = rd.iter().zip(&lin).map(|(a, b)| a + b).collect();
            let dx: Vec<DMatrix<f64>> = (0..pt.x.len())
                .map(|b| sym(&t[b] - &pt.x[b] * &ds[b] * &sinv[b]))
                .collect();
            Some(Point { x: dx, s: ds, y: dy })
        };

        let Some(pred) = direction(0.0, None) else {
            result.status = SdpStatus::NumericalFailure;
            break;
        };
        let (Some(ap), Some(ad)) = (block_max_step(&pt.x, &pred.x), block_max_step(&pt.s, &pred.s)) else {
            result.status = SdpStatus::NumericalFailure;
            break;
        };
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let x_aff: Vec<DMatrix<f64>> = pt.x.iter().zip(&pred.x).map(|(a, b)| a + b * ap).collect();
        let s_aff: Vec<DMatrix<f64>> = pt.s.iter().zip(&pred.s).map(|(a, b)| a + b * ad).collect();
        let mu_aff = inner(&x_aff, &s_aff) / total_dim as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let corr: Vec<DMatrix<f64>> = pred.x.iter().zip(&pred.s).map(|(a, b)| a * b).collect();

        let Some(step) = direction(sigma * mu, Some(&corr)) else {
            result.status = SdpStatus::NumericalFailure;
            break;
        };
        let (Some(ap), Some(ad)) = (block_max_step(&pt.x, &step.x), block_max_step(&pt.s, &step.s)) else {
            result.status = SdpStatus::NumericalFailure;
            break;
        };
        let ap = (opts.step_fraction * ap).min(1.0);
        let ad = (opts.step_fraction * ad).min(1.0);
        for b in 0..pt.x.len() {
            pt.x[b] = sym(&pt.x[b] + &step.x[b] * ap);
            pt.s[b] = sym(&pt.s[b] + &step.s[b] * ad);
        }
        pt.y += &step.y * ad;
        log::trace!(
            "ipm iter {iter}: pobj {pobj:.6e} dobj {dobj:.6e} gap {relgap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} step ({ap:.3}, {ad:.3})"
        );
    }
    if let Some(b) = best {
        let merit = b.relative_gap.max(b.primal_infeasibility).max(b.dual_infeasibility);
        if !matches!(result.status, SdpStatus::Infeasible | SdpStatus::Unbounded) {
            let iterations = result.iterations;
            result = b;
            result.iterations = iterations;
            if merit <= opts.reduced_accuracy_tol && result.dual_infeasibility <= opts.feas_tol {
                result.status = SdpStatus::Optimal;
                result.reduced_accuracy = true;
            } else {
                result.status = SdpStatus::NumericalFailure;
            }
        }
        if result.iterations >= opts.max_iterations && !result.status.is_optimal() {
            result.status = SdpStatus::MaxIter;
        }
    }
    result.elapsed = start.elapsed();
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_schur(a: f64, theta: f64) -> ConicProgram {
        // -[[-p, a], [a, -theta]] >= 0  <=>  [[p, -a], [-a, theta]] >= 0
        let mut prog = ConicProgram::new(vec![2], DVector::from_element(1, 1.0));
        prog.add_constant(0, &DMatrix::from_row_slice(2, 2, &[0.0, -a, -a, theta]));
        prog.add_coeff(0, 0, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        prog
    }

    #[test]
    fn schur_scalar_family() {
        for &a in &[0.25, 1.0, 2.0, 4.5] {
            for &theta in &[0.3, 1.0, 3.0, 5.0] {
                let r = solve_conic(&scalar_schur(a, theta), &SolverOptions::default());
                assert_eq!(r.status, SdpStatus::Optimal);
                assert!((r.y[0] - a * a / theta).abs() < 1e-6, "{a} {theta} {}", r.y[0]);
            }
        }
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // p >= 0 and -1 - p >= 0
        let mut prog = ConicProgram::new(vec![1, 1], DVector::from_element(1, 1.0));
        prog.add_coeff(0, 0, &DMatrix::from_element(1, 1, 1.0));
        prog.add_constant(1, &DMatrix::from_element(1, 1, -1.0));
        prog.add_coeff(0, 1, &DMatrix::from_element(1, 1, -1.0));
        let r = solve_conic(&prog, &SolverOptions::default());
        assert_eq!(r.status, SdpStatus::Infeasible);
    }

    #[test]
    fn unbounded_below() {
        let mut prog = ConicProgram::new(vec![1], DVector::from_element(1, -1.0));
        prog.add_coeff(0, 0, &DMatrix::from_element(1, 1, 1.0));
        let r = solve_conic(&prog, &SolverOptions::default());
        assert_eq!(r.status, SdpStatus::Unbounded);
    }

    #[test]
    fn iteration_cap() {
        let opts = SolverOptions {
            max_iterations: 1,
            ..SolverOptions::default()
        };
        let r = solve_conic(&scalar_schur(2.0, 1.0), &opts);
        assert_eq!(r.status, SdpStatus::MaxIter);
    }
}

//! Flattening of a structural [`SdpProblem`] into a [`ConicProgram`].
//!
//! Two reductions happen before the solve:
//!
//! * a block with `Pi_j` identically zero and `Theta_j = tau_i M`, `M >= 0`,
//!   only restates `tau_i >= 0` and is dropped;
//! * a multiplier whose only appearance is `Theta_j = tau_i M` with `M > 0`
//!   can be sent to infinity, which removes column `j` from the Schur
//!   complement. The reduced problem is solved and `tau_i` is then set so
//!   that `Pi_j M^-1 Pi_j^T / tau_i` adds a small, fixed share of trace to `P`.

use nalgebra::{DMatrix, DVector};

use super::ipm::ConicProgram;
use super::problem::SdpProblem;
use crate::scalar::Real;

type Terms = Vec<(usize, DMatrix<f64>)>;

pub(crate) fn to_f64<T: Real>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|v| v.as_f64())
}

pub(crate) fn from_f64<T: Real>(m: &DMatrix<f64>) -> DMatrix<T> {
    m.map(T::lit)
}

/// What the presolve removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresolveSummary {
    pub dropped_blocks: Vec<&'static str>,
    pub inert_multipliers: Vec<usize>,
    pub zero_multipliers: Vec<usize>,
}

#[derive(Debug, Clone)]
struct InertBlock {
    tau: usize,
    block: usize,
    coeff_inv: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Flattened {
    pub program: ConicProgram,
    n: usize,
    gain_cols: Option<usize>,
    tau_var: Vec<Option<usize>>,
    inert: Vec<InertBlock>,
    pub summary: PresolveSummary,
}

fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| *v == 0.0)
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    m.clone().symmetric_eigen().eigenvalues.min() >= -1e-12 * scale
}

/// Upper-triangular index pairs for `svec(P)`.
fn svec_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            out.push((i, j));
        }
    }
    out
}

fn basis(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, n);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

pub(crate) fn flatten<T: Real>(prob: &SdpProblem<T>) -> Flattened {
    let n = prob.state_dim();
    let pcols = prob.gain_cols();
    let pi: Vec<(DMatrix<f64>, Option<DMatrix<f64>>)> = prob
        .pi_blocks()
        .iter()
        .map(|b| (to_f64(&b.constant), b.gain_factor.as_ref().map(to_f64)))
        .collect();
    let theta: Vec<(DMatrix<f64>, Terms)> = prob
        .theta_blocks()
        .iter()
        .map(|b| {
            (
                to_f64(&b.constant),
                b.terms.iter().map(|(i, m)| (*i, to_f64(m))).collect(),
            )
        })
        .collect();
    let nb = pi.len();
    let pi_zero: Vec<bool> = pi
        .iter()
        .map(|(c, g)| is_zero(c) && g.as_ref().is_none_or(is_zero))
        .collect();

    let mut summary = PresolveSummary::default();
    let mut kept = vec![true; nb];
    for j in 0..nb {
        let (d, terms) = &theta[j];
        if pi_zero[j] && is_zero(d) && terms.len() == 1 && is_psd(&terms[0].1) {
            kept[j] = false;
            summary.dropped_blocks.push(prob.pi_blocks()[j].name);
        }
    }

    let tau_count = prob.tau_count();
    let mut appearances: Vec<Vec<usize>> = vec![Vec::new(); tau_count];
    for j in (0..nb).filter(|&j| kept[j]) {
        for (i, _) in &theta[j].1 {
            if !appearances[*i].contains(&j) {
                appearances[*i].push(j);
            }
        }
    }

    let mut eliminated = vec![false; nb];
    let mut inert = Vec::new();
    for (i, blocks) in appearances.iter().enumerate() {
        if blocks.len() != 1 {
            continue;
        }
        let j = blocks[0];
        let (d, terms) = &theta[j];
        if !is_zero(d) || terms.len() != 1 {
            continue;
        }
        if let Some(ch) = terms[0].1.clone().cholesky() {
            eliminated[j] = true;
            inert.push(InertBlock {
                tau: i,
                block: j,
                coeff_inv: ch.inverse(),
            });
            summary.inert_multipliers.push(i);
        }
    }

    let svec = svec_pairs(n);
    let n_p = svec.len();
    let n_l = pcols.map_or(0, |p| n * p);
    let mut tau_var = vec![None; tau_count];
    let mut next = n_p + n_l;
    for i in 0..tau_count {
        if summary.inert_multipliers.contains(&i) {
            continue;
        }
        if appearances[i].is_empty() {
            summary.zero_multipliers.push(i);
            continue;
        }
        tau_var[i] = Some(next);
        next += 1;
    }

    let coupled: Vec<usize> = (0..nb).filter(|&j| kept[j] && !eliminated[j] && !pi_zero[j]).collect();
    let decoupled: Vec<usize> = (0..nb).filter(|&j| kept[j] && !eliminated[j] && pi_zero[j]).collect();
    let main_dim = n + coupled.iter().map(|&j| pi[j].0.ncols()).sum::<usize>();

    let mut sizes = Vec::new();
    if !coupled.is_empty() {
        sizes.push(main_dim);
    }
    let decoupled_base = sizes.len();
    sizes.extend(decoupled.iter().map(|&j| theta[j].0.nrows()));
    let floor_block = sizes.len();
    sizes.push(n);
    let tau_base = sizes.len();
    let tau_vars: Vec<usize> = (0..tau_count).filter(|&i| tau_var[i].is_some()).collect();
    sizes.extend(std::iter::repeat_n(1, tau_vars.len()));

    let mut c = DVector::zeros(next);
    for (k, (i, j)) in svec.iter().enumerate() {
        if i == j {
            c[k] = 1.0;
        }
    }
    let mut prog = ConicProgram::new(sizes, c);

    if !coupled.is_empty() {
        let mut f0 = DMatrix::zeros(main_dim, main_dim);
        let mut off = n;
        let mut offsets = Vec::with_capacity(coupled.len());
        for &j in &coupled {
            let (cj, _) = &pi[j];
            let w = cj.ncols();
            f0.view_mut((0, off), (n, w)).copy_from(&(-cj));
            f0.view_mut((off, 0), (w, n)).copy_from(&(-cj.transpose()));
            f0.view_mut((off, off), (w, w)).copy_from(&theta[j].0);
            offsets.push(off);
            off += w;
        }
        prog.add_constant(0, &f0);
        for (k, &(a, b)) in svec.iter().enumerate() {
            let mut f = DMatrix::zeros(main_dim, main_dim);
            f.view_mut((0, 0), (n, n)).copy_from(&basis(n, a, b));
            prog.add_coeff(k, 0, &f);
        }
        if let Some(p) = pcols {
            for col in 0..p {
                for row in 0..n {
                    let var = n_p + col * n + row;
                    let mut f = DMatrix::zeros(main_dim, main_dim);
                    for (slot, &j) in coupled.iter().enumerate() {
                        if let Some(g) = &pi[j].1 {
                            let w = g.ncols();
                            let off = offsets[slot];
                            for q in 0..w {
                                f[(row, off + q)] -= g[(col, q)];
                                f[(off + q, row)] -= g[(col, q)];
                            }
                        }
                    }
                    prog.add_coeff(var, 0, &f);
                }
            }
        }
        for (slot, &j) in coupled.iter().enumerate() {
            let off = offsets[slot];
            for (i, m) in &theta[j].1 {
                let var = tau_var[*i].expect("multiplier in a kept block has a variable");
                let w = m.nrows();
                let mut f = DMatrix::zeros(main_dim, main_dim);
                f.view_mut((off, off), (w, w)).copy_from(m);
                prog.add_coeff(var, 0, &f);
            }
        }
    }

    for (slot, &j) in decoupled.iter().enumerate() {
        let b = decoupled_base + slot;
        prog.add_constant(b, &theta[j].0);
        for (i, m) in &theta[j].1 {
            let var = tau_var[*i].expect("multiplier in a kept block has a variable");
            prog.add_coeff(var, b, m);
        }
    }

    prog.add_constant(floor_block, &(DMatrix::identity(n, n) * -prob.p_floor().as_f64()));
    for (k, &(a, b)) in svec.iter().enumerate() {
        prog.add_coeff(k, floor_block, &basis(n, a, b));
    }
    for (slot, &i) in tau_vars.iter().enumerate() {
        prog.add_coeff(tau_var[i].unwrap(), tau_base + slot, &DMatrix::from_element(1, 1, 1.0));
    }

    Flattened {
        program: prog,
        n,
        gain_cols: pcols,
        tau_var,
        inert,
        summary,
    }
}

/// Point recovered from a conic solution.
pub(crate) struct Recovered {
    pub p: DMatrix<f64>,
    pub gain: Option<DMatrix<f64>>,
    pub tau: Vec<f64>,
}

pub(crate) fn recover<T: Real>(prob: &SdpProblem<T>, flat: &Flattened, y: &DVector<f64>, budget_rel: f64) -> Recovered {
    let n = flat.n;
    let svec = svec_pairs(n);
    let mut p = DMatrix::zeros(n, n);
    for (k, &(a, b)) in svec.iter().enumerate() {
        p[(a, b)] = y[k];
        p[(b, a)] = y[k];
    }
    let gain = flat.gain_cols.map(|cols| {
        let base = svec.len();
        DMatrix::from_fn(n, cols, |r, c| y[base + c * n + r])
    });
    let mut tau: Vec<f64> = flat.tau_var.iter().map(|v| v.map_or(0.0, |k| y[k].max(0.0))).collect();

    let contributions: Vec<(usize, DMatrix<f64>)> = flat
        .inert
        .iter()
        .filter_map(|ib| {
            let block = &prob.pi_blocks()[ib.block];
            let g = block.gain_factor.as_ref().map(to_f64);
            let mut pij = to_f64(&block.constant);
            if let (Some(g), Some(l)) = (g, gain.as_ref()) {
                pij += l * g;
            }
            let w = &pij * &ib.coeff_inv * pij.transpose();
            let w = (&w + w.transpose()) * 0.5;
            (w.trace() > 0.0).then_some((ib.tau, w))
        })
        .collect();
    if !contributions.is_empty() {
        let budget = budget_rel * (1.0 + p.trace()) / contributions.len() as f64;
        for (i, w) in contributions {
            let t = w.trace() / budget;
            tau[i] = t;
            p += w / t;
        }
    }
    Recovered { p, gain, tau }
}

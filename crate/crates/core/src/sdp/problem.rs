//! Structural description of the trace-minimization SDPs solved by the filter:
//!
//! ```text
//! minimize   trace(P)
//! subject to [ -P      Pi(L)     ]
//!            [ Pi(L)^T -Theta(tau) ]  <= 0,   P >= p_floor I,   tau >= 0
//! ```
//!
//! `Pi` is a row of column blocks `Pi_j = C_j + L G_j` (affine in the gain
//! `L`), `Theta` a block diagonal of `Theta_j = D_j + sum_i tau_i M_ij`.

use nalgebra::DMatrix;

use crate::error::{check_dim, Result, SmfError};
use crate::scalar::Real;

/// One column block `C + L G` of `Pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiBlock<T: Real> {
    pub name: &'static str,
    /// `n x w` constant part.
    pub constant: DMatrix<T>,
    /// `p x w` factor multiplied on the left by the gain; `None` when the
    /// block does not depend on the gain.
    pub gain_factor: Option<DMatrix<T>>,
}

impl<T: Real> PiBlock<T> {
    pub fn constant(name: &'static str, constant: DMatrix<T>) -> Self {
        Self {
            name,
            constant,
            gain_factor: None,
        }
    }

    pub fn with_gain(name: &'static str, constant: DMatrix<T>, gain_factor: DMatrix<T>) -> Self {
        Self {
            name,
            constant,
            gain_factor: Some(gain_factor),
        }
    }

    pub fn width(&self) -> usize {
        self.constant.ncols()
    }

    /// True when the block vanishes for every gain.
    pub fn is_identically_zero(&self) -> bool {
        self.constant.iter().all(|v| *v == T::zero())
            && self
                .gain_factor
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| *v == T::zero()))
    }

    pub fn evaluate(&self, gain: Option<&DMatrix<T>>) -> DMatrix<T> {
        match (&self.gain_factor, gain) {
            (Some(g), Some(l)) => &self.constant + l * g,
            _ => self.constant.clone(),
        }
    }
}

/// One diagonal block `D + sum_i tau_i M_i` of `Theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBlock<T: Real> {
    pub name: &'static str,
    pub constant: DMatrix<T>,
    /// `(multiplier index, symmetric coefficient)`.
    pub terms: Vec<(usize, DMatrix<T>)>,
}

impl<T: Real> ThetaBlock<T> {
    pub fn new(name: &'static str, constant: DMatrix<T>) -> Self {
        Self {
            name,
            constant,
            terms: Vec::new(),
        }
    }

    /// Adds `tau_index * coeff`; exactly-zero coefficients are dropped.
    pub fn term(mut self, tau_index: usize, coeff: DMatrix<T>) -> Self {
        if coeff.iter().any(|v| *v != T::zero()) {
            self.terms.push((tau_index, coeff));
        }
        self
    }

    pub fn width(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, tau: &[T]) -> DMatrix<T> {
        let mut out = self.constant.clone();
        for (i, c) in &self.terms {
            out += c * tau[*i];
        }
        out
    }
}

/// Structured SDP with one block LMI; see the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem<T: Real> {
    label: &'static str,
    n: usize,
    gain_cols: Option<usize>,
    tau_count: usize,
    pi: Vec<PiBlock<T>>,
    theta: Vec<ThetaBlock<T>>,
    p_floor: T,
}

/// Default lower bound on `P` standing in for `P > 0`.
pub const DEFAULT_P_FLOOR: f64 = 1e-9;

impl<T: Real> SdpProblem<T> {
    /// Validates block shapes. `gain_cols` is `Some(p)` when the problem has
    /// an `n x p` gain variable.
    pub fn new(
        label: &'static str,
        n: usize,
        gain_cols: Option<usize>,
        tau_count: usize,
        pi: Vec<PiBlock<T>>,
        theta: Vec<ThetaBlock<T>>,
    ) -> Result<Self> {
        if pi.len() != theta.len() {
            return Err(SmfError::InvalidArgument(format!(
                "{label}: {} Pi blocks but {} Theta blocks",
                pi.len(),
                theta.len()
            )));
        }
        for (pb, tb) in pi.iter().zip(&theta) {
            check_dim("Pi block rows", n, pb.constant.nrows())?;
            check_dim("Theta block (square)", tb.constant.nrows(), tb.constant.ncols())?;
            check_dim("Pi/Theta block width", tb.width(), pb.width())?;
            if let Some(g) = &pb.gain_factor {
                let p = gain_cols.ok_or_else(|| {
                    SmfError::InvalidArgument(format!("{label}: block {} uses a gain but none is declared", pb.name))
                })?;
                check_dim("gain factor rows", p, g.nrows())?;
                check_dim("gain factor cols", pb.width(), g.ncols())?;
            }
            for (i, c) in &tb.terms {
                if *i >= tau_count {
                    return Err(SmfError::InvalidArgument(format!(
                        "{label}: multiplier index {i} out of range ({tau_count})"
                    )));
                }
                check_dim("Theta term rows", tb.width(), c.nrows())?;
                check_dim("Theta term cols", tb.width(), c.ncols())?;
            }
        }
        Ok(Self {
            label,
            n,
            gain_cols,
            tau_count,
            pi,
            theta,
            p_floor: T::lit(DEFAULT_P_FLOOR),
        })
    }

    pub fn with_p_floor(mut self, p_floor: T) -> Self {
        self.p_floor = p_floor;
        self
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn gain_cols(&self) -> Option<usize> {
        self.gain_cols
    }

    pub fn tau_count(&self) -> usize {
        self.tau_count
    }

    pub fn p_floor(&self) -> T {
        self.p_floor
    }

    pub fn pi_blocks(&self) -> &[PiBlock<T>] {
        &self.pi
    }

    pub fn theta_blocks(&self) -> &[ThetaBlock<T>] {
        &self.theta
    }

    /// Widths of the `Pi`/`Theta` column blocks.
    pub fn block_widths(&self) -> Vec<usize> {
        self.pi.iter().map(PiBlock::width).collect()
    }

    /// Side length of the block LMI: `n + sum of block widths`.
    pub fn lmi_dim(&self) -> usize {
        self.n + self.block_widths().iter().sum::<usize>()
    }

    /// The same problem with every coefficient widened to `f64`.
    pub fn to_f64(&self) -> SdpProblem<f64> {
        let widen = |m: &DMatrix<T>| m.map(|v| v.as_f64());
        SdpProblem {
            label: self.label,
            n: self.n,
            gain_cols: self.gain_cols,
            tau_count: self.tau_count,
            pi: self
                .pi
                .iter()
                .map(|b| PiBlock {
                    name: b.name,
                    constant: widen(&b.constant),
                    gain_factor: b.gain_factor.as_ref().map(widen),
                })
                .collect(),
            theta: self
                .theta
                .iter()
                .map(|b| ThetaBlock {
                    name: b.name,
                    constant: widen(&b.constant),
                    terms: b.terms.iter().map(|(i, c)| (*i, widen(c))).collect(),
                })
                .collect(),
            p_floor: self.p_floor.as_f64(),
        }
    }

    /// Assembles `[[-P, Pi], [Pi^T, -Theta]]` at the given point.
    pub fn evaluate_lmi(&self, p: &DMatrix<T>, gain: Option<&DMatrix<T>>, tau: &[T]) -> Result<DMatrix<T>> {
        check_dim("P rows", self.n, p.nrows())?;
        check_dim("P cols", self.n, p.ncols())?;
        check_dim("multiplier count", self.tau_count, tau.len())?;
        if let (Some(cols), Some(l)) = (self.gain_cols, gain) {
            check_dim("gain rows", self.n, l.nrows())?;
            check_dim("gain cols", cols, l.ncols())?;
        } else if self.gain_cols.is_some() {
            return Err(SmfError::InvalidArgument(format!("{}: gain required", self.label)));
        }
        let d = self.lmi_dim();
        let n = self.n;
        let mut m = DMatrix::zeros(d, d);
        m.view_mut((0, 0), (n, n)).copy_from(&(-p));
        let mut off = n;
        for (pb, tb) in self.pi.iter().zip(&self.theta) {
            let w = pb.width();
            let pij = pb.evaluate(gain);
            m.view_mut((0, off), (n, w)).copy_from(&pij);
            m.view_mut((off, 0), (w, n)).copy_from(&pij.transpose());
            m.view_mut((off, off), (w, w)).copy_from(&(-tb.evaluate(tau)));
            off += w;
        }
        Ok(m)
    }
}

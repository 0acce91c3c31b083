//! Observability of SDC models: stacked observability matrices over a time
//! window, their numerical rank and Gramian eigenvalue bounds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Result, SmfError};
use crate::scalar::Real;
use crate::sdc::SdcModel;

/// Relative singular-value threshold used for the numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservabilityReport {
    /// Number of stacked output blocks.
    pub window: usize,
    pub rank: usize,
    /// Smallest eigenvalue of `O^T O`.
    pub mu1: f64,
    /// Largest eigenvalue of `O^T O`.
    pub mu2: f64,
    pub full_rank: bool,
}

/// `[H_0; H_1 A_0; H_2 A_1 A_0; ...]` for `h_seq.len() == a_seq.len() + 1`.
pub fn observability_matrix<T: Real>(a_seq: &[DMatrix<T>], h_seq: &[DMatrix<T>]) -> Result<DMatrix<T>> {
    check_dim("output matrices (transitions + 1)", a_seq.len() + 1, h_seq.len())?;
    let n = h_seq[0].ncols();
    let p = h_seq[0].nrows();
    let mut out = DMatrix::zeros(h_seq.len() * p, n);
    let mut phi = DMatrix::<T>::identity(n, n);
    for (i, h) in h_seq.iter().enumerate() {
        check_dim("output matrix rows", p, h.nrows())?;
        check_dim("output matrix cols", n, h.ncols())?;
        if i > 0 {
            let a = &a_seq[i - 1];
            check_dim("transition rows", n, a.nrows())?;
            check_dim("transition cols", n, a.ncols())?;
            phi = a * phi;
        }
        out.view_mut((i * p, 0), (p, n)).copy_from(&(h * &phi));
    }
    Ok(out)
}

/// Numerical rank of `o` and the extreme eigenvalues of `o^T o`.
pub fn rank_condition<T: Real>(o: &DMatrix<T>, rank_tol: f64) -> ObservabilityReport {
    let n = o.ncols();
    let of: DMatrix<f64> = o.map(|v| v.as_f64());
    let sv = of.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > rank_tol * smax).count();
    let gram = of.transpose() * &of;
    let eig = gram.symmetric_eigen().eigenvalues;
    let (mu1, mu2) = if n == 0 {
        (0.0, 0.0)
    } else {
        (eig.min().max(0.0), eig.max())
    };
    ObservabilityReport {
        window: if n == 0 { 0 } else { o.nrows() },
        rank,
        mu1,
        mu2,
        full_rank: rank == n && n > 0,
    }
}

/// Rank condition over `window` output blocks starting at `states[0]`.
fn window_report<T: Real>(model: &SdcModel<T>, states: &[DVector<T>], rank_tol: f64) -> Result<ObservabilityReport> {
    let a_seq = states[..states.len() - 1]
        .iter()
        .map(|x| model.a(x))
        .collect::<Result<Vec<_>>>()?;
    let h_seq = states.iter().map(|x| model.h(x)).collect::<Result<Vec<_>>>()?;
    let o = observability_matrix(&a_seq, &h_seq)?;
    let mut rep = rank_condition(&o, rank_tol);
    rep.window = states.len();
    Ok(rep)
}

/// Where [`scan_trajectory`] evaluates the rank condition.
#[derive(Debug, Clone, PartialEq)]
pub enum ScanDomain<'a, T: Real> {
    /// Sliding windows along a recorded trajectory.
    Trajectory(&'a [DVector<T>]),
    /// Windows started at uniform samples of a box and propagated by the
    /// unforced dynamics.
    Box {
        lower: DVector<T>,
        upper: DVector<T>,
        samples: usize,
        seed: u64,
    },
}

/// Worst (smallest `mu1`) report over all windows of `domain`.
pub fn scan_trajectory<T: Real>(
    model: &SdcModel<T>,
    domain: &ScanDomain<'_, T>,
    window: usize,
    rank_tol: f64,
) -> Result<ObservabilityReport> {
    if window == 0 {
        return Err(SmfError::InvalidArgument(
            "observability window must be positive".into(),
        ));
    }
    let mut worst: Option<ObservabilityReport> = None;
    let mut keep = |rep: ObservabilityReport| {
        if worst.is_none_or(|w| rep.mu1 < w.mu1) {
            worst = Some(rep);
        }
    };
    match domain {
        ScanDomain::Trajectory(states) => {
            if states.len() < window {
                return Err(SmfError::InvalidArgument(format!(
                    "trajectory of length {} is shorter than the window {window}",
                    states.len()
                )));
            }
            for w in states.windows(window) {
                keep(window_report(model, w, rank_tol)?);
            }
        }
        ScanDomain::Box {
            lower,
            upper,
            samples,
            seed,
        } => {
            let n = model.state_dim();
            check_dim("box lower corner", n, lower.len())?;
            check_dim("box upper corner", n, upper.len())?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for _ in 0..*samples {
                let x0 = DVector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        let (lo, hi) = (lower[i].as_f64(), upper[i].as_f64());
                        T::lit(if hi > lo { rng.random_range(lo..=hi) } else { lo })
                    }),
                );
                let mut states = vec![x0];
                while states.len() < window {
                    let next = model.system().f(states.last().unwrap());
                    states.push(next);
                }
                keep(window_report(model, &states, rank_tol)?);
            }
        }
    }
    worst.ok_or_else(|| SmfError::InvalidArgument("observability scan evaluated no windows".into()))
}

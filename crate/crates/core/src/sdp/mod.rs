//! Trace-minimization SDPs with one block LMI, a dense interior-point
//! backend and an eigenvalue-based verifier.

mod ipm;
mod presolve;
mod problem;
mod verify;

use std::fmt;
use std::time::Duration;

use nalgebra::DMatrix;

pub use ipm::{solve_conic, ConicProgram, ConicResult};
pub use presolve::PresolveSummary;
pub use problem::{PiBlock, SdpProblem, ThetaBlock, DEFAULT_P_FLOOR};
pub use verify::{lmi_eigen_max, lmi_eigen_min, verify, VerificationReport, DEFAULT_VERIFY_TOL};

use crate::error::Result;
use crate::scalar::Real;

/// Solver outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalFailure,
}

impl SdpStatus {
    pub fn is_optimal(self) -> bool {
        self == SdpStatus::Optimal
    }
}

impl fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::MaxIter => "max_iter",
            SdpStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

/// Tolerances and limits for the interior-point backend.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative duality gap at termination.
    pub gap_tol: f64,
    /// Relative primal and dual residuals at termination.
    pub feas_tol: f64,
    /// Residual of a normalized infeasibility or unboundedness ray.
    pub infeasibility_tol: f64,
    pub max_iterations: usize,
    /// Iterations without improvement of the worst residual before stopping.
    pub stall_iterations: usize,
    /// Worst residual accepted as optimal once progress stalls, provided the
    /// LMI residual itself meets `feas_tol`.
    pub reduced_accuracy_tol: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Iterate norm treated as divergence.
    pub divergence_limit: f64,
    /// Tolerance handed to [`verify`] for optimal solutions.
    pub verify_tol: f64,
    /// Trace added to `P`, relative to `1 + trace(P)`, when restoring
    /// multipliers removed by the presolve.
    pub inert_trace_budget: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            infeasibility_tol: 1e-8,
            max_iterations: 100,
            stall_iterations: 8,
            reduced_accuracy_tol: 1e-6,
            step_fraction: 0.98,
            divergence_limit: 1e12,
            verify_tol: DEFAULT_VERIFY_TOL,
            inert_trace_budget: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub reduced_accuracy: bool,
    pub elapsed: Duration,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub presolve: PresolveSummary,
}

/// Solution of an [`SdpProblem`]. On non-optimal statuses the fields hold
/// the last iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution<T: Real> {
    pub status: SdpStatus,
    pub p: DMatrix<T>,
    pub gain: Option<DMatrix<T>>,
    pub tau: Vec<T>,
    pub objective: T,
    pub stats: SolverStats,
    pub verification: Option<VerificationReport>,
}

/// Pluggable SDP solver: problems are prepared once and may be solved with
/// different options.
pub trait SdpBackend<T: Real> {
    type Handle;

    fn name(&self) -> &'static str;

    fn build(&self, problem: &SdpProblem<T>) -> Result<Self::Handle>;

    fn solve(&self, handle: &Self::Handle, opts: &SolverOptions) -> Result<SdpSolution<T>>;

    fn solve_problem(&self, problem: &SdpProblem<T>, opts: &SolverOptions) -> Result<SdpSolution<T>> {
        let handle = self.build(problem)?;
        self.solve(&handle, opts)
    }
}

/// Dense primal-dual interior-point backend. Computation is carried out in
/// `f64` regardless of the problem scalar.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseIpm;

/// A problem flattened for [`DenseIpm`].
#[derive(Debug, Clone)]
pub struct PreparedSdp<T: Real> {
    problem: SdpProblem<T>,
    flat: presolve::Flattened,
}

impl<T: Real> PreparedSdp<T> {
    pub fn problem(&self) -> &SdpProblem<T> {
        &self.problem
    }

    pub fn program(&self) -> &ConicProgram {
        &self.flat.program
    }

    pub fn presolve_summary(&self) -> &PresolveSummary {
        &self.flat.summary
    }
}

impl<T: Real> SdpBackend<T> for DenseIpm {
    type Handle = PreparedSdp<T>;

    fn name(&self) -> &'static str {
        "dense-ipm"
    }

    fn build(&self, problem: &SdpProblem<T>) -> Result<PreparedSdp<T>> {
        Ok(PreparedSdp {
            problem: problem.clone(),
            flat: presolve::flatten(problem),
        })
    }

    fn solve(&self, handle: &PreparedSdp<T>, opts: &SolverOptions) -> Result<SdpSolution<T>> {
        let conic = solve_conic(&handle.flat.program, opts);
        let rec = presolve::recover(&handle.problem, &handle.flat, &conic.y, opts.inert_trace_budget);
        let mut sol = SdpSolution {
            status: conic.status,
            objective: T::lit(rec.p.trace()),
            p: presolve::from_f64(&rec.p),
            gain: rec.gain.as_ref().map(presolve::from_f64),
            tau: rec.tau.iter().map(|v| T::lit(*v)).collect(),
            stats: SolverStats {
                iterations: conic.iterations,
                reduced_accuracy: conic.reduced_accuracy,
                elapsed: conic.elapsed,
                relative_gap: conic.relative_gap,
                primal_infeasibility: conic.primal_infeasibility,
                dual_infeasibility: conic.dual_infeasibility,
                presolve: handle.flat.summary.clone(),
            },
            verification: None,
        };
        if sol.status.is_optimal() {
            let report = verify(&handle.problem, &sol, opts.verify_tol)?;
            if !report.passed() {
                log::warn!(
                    "{}: solver reported optimal but verification failed ({report:?})",
                    handle.problem.label()
                );
                sol.status = SdpStatus::NumericalFailure;
            }
            sol.verification = Some(report);
        }
        Ok(sol)
    }
}

/// Solves with the default backend.
pub fn solve<T: Real>(problem: &SdpProblem<T>, opts: &SolverOptions) -> Result<SdpSolution<T>> {
    DenseIpm.solve_problem(problem, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schur(a: f64, theta: f64) -> SdpProblem<f64> {
        SdpProblem::new(
            "schur",
            1,
            None,
            0,
            vec![PiBlock::constant("a", DMatrix::from_element(1, 1, a))],
            vec![ThetaBlock::new("theta", DMatrix::from_element(1, 1, theta))],
        )
        .unwrap()
    }

    #[test]
    fn schur_examples() {
        let s = solve(&schur(1.0, 1.0), &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-7);
        let rep = s.verification.unwrap();
        assert!(rep.lmi_max_eig <= 1e-8 && rep.p_floor_min_eig >= -1e-8);
        let s = solve(&schur(2.0, 1.0), &SolverOptions::default()).unwrap();
        assert!((s.objective - 4.0).abs() < 1e-6);
    }

    #[test]
    fn impossible_theta_is_infeasible() {
        let s = solve(&schur(1.0, -1.0), &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Infeasible);
    }

    #[test]
    fn perturbed_and_negative_multiplier() {
        let prob = SdpProblem::<f64>::new(
            "mult",
            1,
            None,
            1,
            vec![
                PiBlock::constant("a", DMatrix::from_element(1, 1, 1.0)),
                PiBlock::constant("z", DMatrix::zeros(1, 1)),
            ],
            vec![
                ThetaBlock::new("t", DMatrix::zeros(1, 1)).term(0, DMatrix::from_element(1, 1, 1.0)),
                ThetaBlock::new("cap", DMatrix::from_element(1, 1, 1.0)).term(0, DMatrix::from_element(1, 1, -1.0)),
            ],
        )
        .unwrap();
        let mut s = solve(&prob, &SolverOptions::default()).unwrap();
        assert!(s.status.is_optimal());
        assert!((s.objective - 1.0).abs() < 1e-6, "{}", s.objective);
        s.p += DMatrix::from_element(1, 1, 0.1);
        assert!(verify(&prob, &s, 1e-8).unwrap().passed());
        s.tau[0] = -1.0;
        let rep = verify(&prob, &s, 1e-8).unwrap();
        assert!(!rep.tau_ok());
    }

    #[test]
    fn inert_multiplier_is_restored() {
        // Theta = tau I with nothing else bounding tau: the infimum trace(P) = 0
        // is approached only as tau grows.
        let prob = SdpProblem::<f64>::new(
            "inert",
            2,
            None,
            1,
            vec![PiBlock::constant("w", DMatrix::identity(2, 2))],
            vec![ThetaBlock::new("t", DMatrix::zeros(2, 2)).term(0, DMatrix::identity(2, 2))],
        )
        .unwrap();
        let s = solve(&prob, &SolverOptions::default()).unwrap();
        assert!(s.status.is_optimal());
        assert_eq!(s.stats.presolve.inert_multipliers, vec![0]);
        assert!(s.objective < 1e-6);
        assert!(s.verification.unwrap().passed());
    }
}

//! Set-membership filtering for nonlinear discrete-time systems written in
//! state-dependent coefficient form.
//!
//! The building blocks are usable on their own: [`ellipsoid`] for ellipsoid
//! algebra, [`sdc`] for SDC parameterizations and their first-order
//! expansions, [`remainder`] for sampled remainder bounds, [`sdp`] for the
//! small trace-minimization SDPs and their verification, [`filter`] for the
//! recursion itself and [`observability`] for rank checks.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `f64`
//! instantiations most callers want are re-exported under short names.

pub mod ellipsoid;
pub mod error;
pub mod filter;
pub mod models;
pub mod observability;
pub mod quadrature;
pub mod remainder;
pub mod scalar;
pub mod sdc;
pub mod sdp;

pub use ellipsoid::{chol_factor, sample_unit_sphere, CholFactor, Ellipsoid};
pub use error::{Result, SmfError};
pub use filter::{
    run, FilterConfig, FilterHistory, FilterState, MeasurementSource, NoiseBounds, RecordedMeasurements, SmfFilter,
    StepRecord,
};
pub use models::{linear_controlled_model, linear_model, van_der_pol};
pub use observability::{observability_matrix, rank_condition, scan_trajectory, ObservabilityReport};
pub use remainder::{bound_remainder, RemainderBound};
pub use scalar::Real;
pub use sdc::{MatrixKind, NonlinearSystem, SdcModel};
pub use sdp::{solve, verify, DenseIpm, SdpBackend, SdpProblem, SdpSolution, SdpStatus, SolverOptions};

pub type Ellipsoid64 = Ellipsoid<f64>;
pub type Ellipsoid32 = Ellipsoid<f32>;
pub type SdcModel64 = SdcModel<f64>;
pub type SdcModel32 = SdcModel<f32>;
pub type SmfFilter64 = SmfFilter<f64>;
pub type SmfFilter32 = SmfFilter<f32>;
pub type NoiseBounds64 = NoiseBounds<f64>;
pub type FilterHistory64 = FilterHistory<f64>;

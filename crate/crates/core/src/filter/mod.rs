//! Set-membership filter built on SDC models: every step solves a
//! minimum-trace correction SDP and a minimum-trace prediction SDP.

mod history;
mod lmi;
mod noise;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use history::{FilterHistory, SolveRecord, StepRecord};
pub use lmi::{build_controlled_prediction_sdp, build_correction_sdp, build_prediction_sdp, InputTerms};
pub use noise::{MatrixSchedule, NoiseBounds};

use crate::ellipsoid::{spectral_norm, Ellipsoid, DEFAULT_JITTER};
use crate::error::{check_dim, Result, SmfError};
use crate::remainder::{bound_remainder, DEFAULT_REMAINDER_SAMPLES};
use crate::scalar::Real;
use crate::sdc::{MatrixKind, SdcModel};
use crate::sdp::{DenseIpm, SdpBackend, SdpProblem, SdpSolution, SolverOptions};

/// What to do when an SDP has no verified optimal solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackPolicy {
    /// Retries with the remainder bound multiplied by `bound_growth`.
    pub bound_inflations: usize,
    pub bound_growth: f64,
    /// Shape scaling of the conservative ellipsoid used when all retries fail.
    pub ellipsoid_inflation: f64,
    /// When false, exhausting the retries is a terminal error.
    pub allow_conservative: bool,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        Self {
            bound_inflations: 3,
            bound_growth: 2.0,
            ellipsoid_inflation: 1.1,
            allow_conservative: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Boundary samples per remainder bound.
    pub remainder_samples: usize,
    /// Base seed; each bound uses a stream derived from it, `k` and the matrix.
    pub seed: u64,
    pub solver: SolverOptions,
    pub fallback: FallbackPolicy,
    /// Initial jitter when factorizing solved shape matrices.
    pub jitter: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            remainder_samples: DEFAULT_REMAINDER_SAMPLES,
            seed: 0,
            solver: SolverOptions::default(),
            fallback: FallbackPolicy::default(),
            jitter: DEFAULT_JITTER,
        }
    }
}

/// Seed for the remainder search of matrix `kind` at step `k`.
pub fn step_seed(base: u64, k: usize, kind: MatrixKind) -> u64 {
    let tag = match kind {
        MatrixKind::A => 0,
        MatrixKind::H => 1,
        MatrixKind::B => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((k as u64) << 2) | tag);
    rng.next_u64()
}

/// Remainder bounds most recently used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBounds<T: Real> {
    pub r_h: Option<T>,
    pub r_a: Option<T>,
    pub r_b: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<T: Real> {
    pub k: usize,
    /// `E(xhat_{k|k-1}, P_{k|k-1})`.
    pub prediction: Ellipsoid<T>,
    /// `E(xhat_{k|k}, P_{k|k})` once step `k` has been corrected.
    pub correction: Option<Ellipsoid<T>>,
    pub last_gain: Option<DMatrix<T>>,
    pub last_bounds: StepBounds<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOutcome<T: Real> {
    pub correction: Ellipsoid<T>,
    pub gain: DMatrix<T>,
    pub r_h: T,
    pub solve: SolveRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutcome<T: Real> {
    pub prediction: Ellipsoid<T>,
    pub r_a: T,
    pub r_b: Option<T>,
    pub solve: SolveRecord,
}

/// Supplies `y_k` and, for controlled systems, `u_k`.
pub trait MeasurementSource<T: Real> {
    fn measurement(&mut self, k: usize) -> Result<DVector<T>>;

    fn input(&mut self, _k: usize) -> Option<DVector<T>> {
        None
    }
}

/// Pre-recorded measurement (and optional input) sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedMeasurements<T: Real> {
    pub measurements: Vec<DVector<T>>,
    pub inputs: Option<Vec<DVector<T>>>,
}

impl<T: Real> RecordedMeasurements<T> {
    pub fn new(measurements: Vec<DVector<T>>) -> Self {
        Self {
            measurements,
            inputs: None,
        }
    }

    pub fn with_inputs(mut self, inputs: Vec<DVector<T>>) -> Self {
        self.inputs = Some(inputs);
        self
    }
}

impl<T: Real> MeasurementSource<T> for RecordedMeasurements<T> {
    fn measurement(&mut self, k: usize) -> Result<DVector<T>> {
        self.measurements
            .get(k)
            .cloned()
            .ok_or_else(|| SmfError::InvalidArgument(format!("no measurement recorded for k = {k}")))
    }

    fn input(&mut self, k: usize) -> Option<DVector<T>> {
        self.inputs.as_ref().and_then(|u| u.get(k).cloned())
    }
}

/// Runs the recursion step by step; see [`run`] for a whole horizon.
#[derive(Debug, Clone)]
pub struct SmfFilter<T: Real> {
    model: SdcModel<T>,
    bounds: NoiseBounds<T>,
    cfg: FilterConfig,
    state: FilterState<T>,
    backend: DenseIpm,
}

struct Resolved<T: Real> {
    solution: Option<SdpSolution<T>>,
    bound: T,
    record: SolveRecord,
}

impl<T: Real> SmfFilter<T> {
    /// Starts from `x0 in E(initial.center, initial.shape)` at `k = 0`.
    pub fn new(model: SdcModel<T>, bounds: NoiseBounds<T>, initial: Ellipsoid<T>, cfg: FilterConfig) -> Result<Self> {
        check_dim("initial ellipsoid", model.state_dim(), initial.dim())?;
        if cfg.remainder_samples == 0 {
            return Err(SmfError::InvalidArgument("remainder_samples must be positive".into()));
        }
        Ok(Self {
            model,
            bounds,
            cfg,
            state: FilterState {
                k: 0,
                prediction: initial,
                correction: None,
                last_gain: None,
                last_bounds: StepBounds {
                    r_h: None,
                    r_a: None,
                    r_b: None,
                },
            },
            backend: DenseIpm,
        })
    }

    pub fn state(&self) -> &FilterState<T> {
        &self.state
    }

    pub fn model(&self) -> &SdcModel<T> {
        &self.model
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    fn resolve(&self, r0: T, build: impl Fn(T) -> Result<SdpProblem<T>>) -> Result<Resolved<T>> {
        let policy = &self.cfg.fallback;
        let attempts = if r0 > T::zero() { policy.bound_inflations + 1 } else { 1 };
        let mut record = SolveRecord {
            status: crate::sdp::SdpStatus::NumericalFailure,
            iterations: 0,
            solve_time: Default::default(),
            verification: None,
            bound_inflations: 0,
            fallback: false,
        };
        let mut bound = r0;
        for attempt in 0..attempts {
            let prob = build(bound)?;
            let sol = self.backend.solve_problem(&prob, &self.cfg.solver)?;
            record.status = sol.status;
            record.iterations += sol.stats.iterations;
            record.solve_time += sol.stats.elapsed;
            record.verification = sol.verification;
            record.bound_inflations = attempt;
            if sol.status.is_optimal() {
                return Ok(Resolved {
                    solution: Some(sol),
                    bound,
                    record,
                });
            }
            log::debug!(
                "{} SDP at k = {}: {} with bound {:e}",
                prob.label(),
                self.state.k,
                sol.status,
                bound.as_f64()
            );
            bound *= T::lit(policy.bound_growth);
        }
        record.fallback = true;
        Ok(Resolved {
            solution: None,
            bound: r0 * T::lit(policy.bound_growth.powi(attempts as i32 - 1)),
            record,
        })
    }

    fn factorized(&self, center: DVector<T>, p: DMatrix<T>) -> Result<Ellipsoid<T>> {
        Ellipsoid::with_jitter(center, p, T::lit(self.cfg.jitter))
    }

    fn exhausted(&self, step: &'static str, record: &SolveRecord) -> SmfError {
        SmfError::FilterFailure {
            step,
            k: self.state.k,
            reason: format!("last status {}", record.status),
        }
    }

    fn fallback_error(&self, step: &'static str, err: SmfError) -> SmfError {
        SmfError::FilterFailure {
            step,
            k: self.state.k,
            reason: format!("conservative fallback ellipsoid is unusable: {err}"),
        }
    }

    /// Measurement update with `y_k`.
    pub fn correct(&mut self, y: &DVector<T>) -> Result<CorrectionOutcome<T>> {
        let k = self.state.k;
        check_dim("measurement", self.model.output_dim(), y.len())?;
        let prior = self.state.prediction.clone();
        let xhat = prior.center();
        let r_h = bound_remainder(
            MatrixKind::H,
            &self.model,
            xhat,
            prior.factor(),
            self.cfg.remainder_samples,
            step_seed(self.cfg.seed, k, MatrixKind::H),
        )?
        .value;
        let h = self.model.h(xhat)?;
        let k1 = self.model.k1(xhat)?;
        let r = self.bounds.r_at(k)?;
        let resolved = self.resolve(r_h, |bound| build_correction_sdp(&prior, &h, &k1, bound, &r))?;

        let (correction, gain) = match resolved.solution {
            Some(sol) => {
                let gain = sol.gain.expect("correction problems carry a gain");
                let innovation = y - &h * xhat;
                let center = xhat + &gain * innovation;
                (self.factorized(center, sol.p)?, gain)
            }
            None => {
                if !self.cfg.fallback.allow_conservative {
                    return Err(self.exhausted("correction", &resolved.record));
                }
                log::warn!("correction SDP failed at k = {k}; keeping the inflated prior");
                let gain = DMatrix::zeros(self.model.state_dim(), self.model.output_dim());
                let inflated = prior
                    .inflated(T::lit(self.cfg.fallback.ellipsoid_inflation))
                    .map_err(|e| self.fallback_error("correction", e))?;
                (inflated, gain)
            }
        };
        self.state.correction = Some(correction.clone());
        self.state.last_gain = Some(gain.clone());
        self.state.last_bounds.r_h = Some(resolved.bound);
        Ok(CorrectionOutcome {
            correction,
            gain,
            r_h: resolved.bound,
            solve: resolved.record,
        })
    }

    /// Time update; `u` is required exactly when the model has an input.
    pub fn predict(&mut self, u: Option<&DVector<T>>) -> Result<PredictionOutcome<T>> {
        let k = self.state.k;
        let post = self
            .state
            .correction
            .clone()
            .ok_or_else(|| SmfError::InvalidArgument(format!("predict called before correct at k = {k}")))?;
        match (self.model.has_input(), u) {
            (true, None) => {
                return Err(SmfError::InvalidArgument(
                    "model has an input but no u_k was given".into(),
                ))
            }
            (false, Some(_)) => return Err(SmfError::InvalidArgument("u_k given for a model without input".into())),
            (true, Some(u)) => check_dim("input", self.model.input_dim(), u.len())?,
            _ => {}
        }
        let xhat = post.center();
        let n = self.model.state_dim();
        let samples = self.cfg.remainder_samples;
        let r_a = bound_remainder(
            MatrixKind::A,
            &self.model,
            xhat,
            post.factor(),
            samples,
            step_seed(self.cfg.seed, k, MatrixKind::A),
        )?
        .value;
        let a = self.model.a(xhat)?;
        let k2 = self.model.k2(xhat)?;
        let q = self.bounds.q_at(k)?;
        let mut center = &a * xhat;

        let (resolved, r_b, input_radius) = if let Some(u) = u {
            let b = self.model.b(xhat).expect("checked above");
            let k3 = self.model.k3(xhat)?;
            let r_b = bound_remainder(
                MatrixKind::B,
                &self.model,
                xhat,
                post.factor(),
                samples,
                step_seed(self.cfg.seed, k, MatrixKind::B),
            )?
            .value;
            center += &b * u;
            let resolved = self.resolve(r_a, |bound| {
                build_controlled_prediction_sdp(&post, &a, &k2, bound, &q, InputTerms { k3: &k3, r_b, u })
            })?;
            let radius = (spectral_norm(&k3) * post.factor().gamma() + r_b) * u.norm();
            (resolved, Some(r_b), radius)
        } else {
            let resolved = self.resolve(r_a, |bound| build_prediction_sdp(&post, &a, &k2, bound, &q))?;
            (resolved, None, T::zero())
        };

        let prediction = match resolved.solution {
            Some(sol) => self.factorized(center, sol.p)?,
            None => {
                if !self.cfg.fallback.allow_conservative {
                    return Err(self.exhausted("prediction", &resolved.record));
                }
                log::warn!("prediction SDP failed at k = {k}; using a norm-ball bound");
                let gamma = post.factor().gamma();
                let xn = xhat.norm();
                let k2n = spectral_norm(&k2);
                let r = resolved.bound;
                let rho = spectral_norm(&(&a * post.factor().matrix()))
                    + k2n * gamma * xn
                    + k2n * gamma * gamma
                    + r * xn
                    + r * gamma
                    + spectral_norm(&q).sqrt()
                    + input_radius;
                let shape = DMatrix::identity(n, n) * (rho * rho * T::lit(self.cfg.fallback.ellipsoid_inflation));
                self.factorized(center, shape)
                    .map_err(|e| self.fallback_error("prediction", e))?
            }
        };
        self.state.k += 1;
        self.state.prediction = prediction.clone();
        self.state.correction = None;
        self.state.last_bounds.r_a = Some(resolved.bound);
        self.state.last_bounds.r_b = r_b;
        Ok(PredictionOutcome {
            prediction,
            r_a: resolved.bound,
            r_b,
            solve: resolved.record,
        })
    }

    /// One correction followed by one prediction.
    pub fn step(&mut self, y: &DVector<T>, u: Option<&DVector<T>>) -> Result<StepRecord<T>> {
        let k = self.state.k;
        let prior = self.state.prediction.clone();
        let corr = self.correct(y)?;
        let pred = self.predict(u)?;
        Ok(StepRecord {
            k,
            measurement: y.clone(),
            input: u.cloned(),
            prior,
            correction: corr.correction,
            gain: corr.gain,
            r_h: corr.r_h,
            correction_solve: corr.solve,
            prediction: pred.prediction,
            r_a: pred.r_a,
            r_b: pred.r_b,
            prediction_solve: pred.solve,
        })
    }
}

/// A run that stopped early, with the steps completed before the failure.
#[derive(Debug, Clone)]
pub struct RunFailure<T: Real> {
    pub history: FilterHistory<T>,
    pub error: SmfError,
}

impl<T: Real> std::fmt::Display for RunFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed steps)", self.error, self.history.len())
    }
}

impl<T: Real> std::error::Error for RunFailure<T> {}

/// Runs steps `k = 0..=horizon`.
pub fn run<T: Real, S: MeasurementSource<T> + ?Sized>(
    model: SdcModel<T>,
    bounds: NoiseBounds<T>,
    initial: Ellipsoid<T>,
    source: &mut S,
    horizon: usize,
    cfg: FilterConfig,
) -> std::result::Result<FilterHistory<T>, RunFailure<T>> {
    let mut history = FilterHistory { steps: Vec::new() };
    let mut filter = match SmfFilter::new(model, bounds, initial, cfg) {
        Ok(f) => f,
        Err(error) => return Err(RunFailure { history, error }),
    };
    for k in 0..=horizon {
        let step = source
            .measurement(k)
            .and_then(|y| filter.step(&y, source.input(k).as_ref()));
        match step {
            Ok(rec) => history.steps.push(rec),
            Err(error) => return Err(RunFailure { history, error }),
        }
    }
    Ok(history)
}

//! Error and tightness statistics of filter runs.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use smf_core::{FilterHistory, SmfError};

/// Slack used when testing whether the true state lies in an ellipsoid.
pub const CONTAINMENT_SLACK: f64 = 1e-7;

/// Statistics of one run. Means are over the recorded steps; they are NaN
/// (serialized as `null`) for an empty history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    /// Mean Euclidean norm of `x_k - xhat_{k|k}`.
    pub mae: f64,
    /// Mean squared Euclidean norm of `x_k - xhat_{k|k}`.
    pub mse: f64,
    pub mean_trace: f64,
    /// Fraction of steps with `x_k` in the correction ellipsoid.
    pub containment_rate: f64,
    /// Fraction of steps with `x_{k+1}` in the prediction ellipsoid.
    pub prediction_containment_rate: f64,
    pub max_gain_norm: f64,
    pub mean_solve_ms_correction: f64,
    pub mean_solve_ms_prediction: f64,
    pub final_error: f64,
    /// Steps where either SDP fell back to a conservative ellipsoid.
    pub fallbacks: usize,
    /// SDP solutions accepted after verification.
    pub accepted_solves: usize,
    /// Worst verifier residuals over accepted solutions.
    pub max_lmi_eig: f64,
    pub min_tau: f64,
    pub min_p_floor_eig: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// `||x_k - xhat_{k|k}||` per recorded step.
pub fn error_norms(history: &FilterHistory<f64>, truth: &[DVector<f64>]) -> Result<Vec<f64>, SmfError> {
    if truth.len() < history.len() {
        return Err(SmfError::DimensionMismatch {
            context: "true states per recorded step",
            expected: history.len(),
            actual: truth.len(),
        });
    }
    history
        .steps
        .iter()
        .map(|s| {
            let x = &truth[s.k];
            if x.len() != s.correction.dim() {
                return Err(SmfError::DimensionMismatch {
                    context: "true state",
                    expected: s.correction.dim(),
                    actual: x.len(),
                });
            }
            Ok((x - s.correction.center()).norm())
        })
        .collect()
}

/// `truth[k]` is `x_k`; `truth[k + 1]`, when present, is checked against the
/// prediction made at step `k`.
pub fn compute_metrics(history: &FilterHistory<f64>, truth: &[DVector<f64>]) -> Result<RunMetrics, SmfError> {
    let errors = error_norms(history, truth)?;
    let mut contained = 0usize;
    let mut predicted = (0usize, 0usize);
    for s in &history.steps {
        if s.correction.contains(&truth[s.k], CONTAINMENT_SLACK)? {
            contained += 1;
        }
        if let Some(next) = truth.get(s.k + 1) {
            predicted.1 += 1;
            if s.prediction.contains(next, CONTAINMENT_SLACK)? {
                predicted.0 += 1;
            }
        }
    }
    let solves = history
        .steps
        .iter()
        .flat_map(|s| [&s.correction_solve, &s.prediction_solve])
        .filter(|r| r.accepted())
        .filter_map(|r| r.verification.as_ref());
    let (mut accepted, mut max_lmi, mut min_tau, mut min_floor) = (0, f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
    for v in solves {
        accepted += 1;
        max_lmi = max_lmi.max(v.lmi_max_eig);
        min_tau = min_tau.min(v.tau_min);
        min_floor = min_floor.min(v.p_floor_min_eig);
    }
    let rate = |hit: usize, total: usize| {
        if total == 0 {
            f64::NAN
        } else {
            hit as f64 / total as f64
        }
    };
    Ok(RunMetrics {
        steps: history.len(),
        mae: mean(errors.iter().copied()),
        mse: mean(errors.iter().map(|e| e * e)),
        mean_trace: mean(history.steps.iter().map(|s| s.correction.trace())),
        containment_rate: rate(contained, history.len()),
        prediction_containment_rate: rate(predicted.0, predicted.1),
        max_gain_norm: history.max_gain_norm(),
        mean_solve_ms_correction: mean(
            history
                .steps
                .iter()
                .map(|s| s.correction_solve.solve_time.as_secs_f64() * 1e3),
        ),
        mean_solve_ms_prediction: mean(
            history
                .steps
                .iter()
                .map(|s| s.prediction_solve.solve_time.as_secs_f64() * 1e3),
        ),
        final_error: errors.last().copied().unwrap_or(f64::NAN),
        fallbacks: history.fallback_count(),
        accepted_solves: accepted,
        max_lmi_eig: max_lmi,
        min_tau,
        min_p_floor_eig: min_floor,
    })
}

/// Means of consecutive non-overlapping windows; a trailing partial window is dropped.
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    values.chunks_exact(window).map(|c| mean(c.iter().copied())).collect()
}

/// Metrics pooled over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub runs: usize,
    pub completed_runs: usize,
    /// Means of the per-run values.
    pub mae: f64,
    pub mse: f64,
    pub mean_trace: f64,
    pub mean_final_error: f64,
    /// Pooled over every recorded step of every run.
    pub containment_rate: f64,
    pub prediction_containment_rate: f64,
    pub max_gain_norm: f64,
    pub mean_solve_ms_correction: f64,
    pub mean_solve_ms_prediction: f64,
    pub fallbacks: usize,
    pub accepted_solves: usize,
    pub max_lmi_eig: f64,
    pub min_tau: f64,
    pub min_p_floor_eig: f64,
}

impl AggregateMetrics {
    pub fn from_runs(runs: &[(RunMetrics, bool)]) -> Self {
        let steps: usize = runs.iter().map(|(m, _)| m.steps).sum();
        let pooled = |f: fn(&RunMetrics) -> f64| {
            if steps == 0 {
                f64::NAN
            } else {
                runs.iter()
                    .map(|(m, _)| if m.steps == 0 { 0.0 } else { f(m) * m.steps as f64 })
                    .sum::<f64>()
                    / steps as f64
            }
        };
        let over = |f: fn(&RunMetrics) -> f64| mean(runs.iter().map(|(m, _)| f(m)));
        Self {
            runs: runs.len(),
            completed_runs: runs.iter().filter(|(_, done)| *done).count(),
            mae: over(|m| m.mae),
            mse: over(|m| m.mse),
            mean_trace: over(|m| m.mean_trace),
            mean_final_error: over(|m| m.final_error),
            containment_rate: pooled(|m| m.containment_rate),
            prediction_containment_rate: pooled(|m| m.prediction_containment_rate),
            max_gain_norm: runs.iter().map(|(m, _)| m.max_gain_norm).fold(0.0, f64::max),
            mean_solve_ms_correction: pooled(|m| m.mean_solve_ms_correction),
            mean_solve_ms_prediction: pooled(|m| m.mean_solve_ms_prediction),
            fallbacks: runs.iter().map(|(m, _)| m.fallbacks).sum(),
            accepted_solves: runs.iter().map(|(m, _)| m.accepted_solves).sum(),
            max_lmi_eig: runs
                .iter()
                .map(|(m, _)| m.max_lmi_eig)
                .fold(f64::NEG_INFINITY, f64::max),
            min_tau: runs.iter().map(|(m, _)| m.min_tau).fold(f64::INFINITY, f64::min),
            min_p_floor_eig: runs
                .iter()
                .map(|(m, _)| m.min_p_floor_eig)
                .fold(f64::INFINITY, f64::min),
        }
    }
}

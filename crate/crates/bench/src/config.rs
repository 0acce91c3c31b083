//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use smf_core::{linear_model, van_der_pol, Ellipsoid, NoiseBounds, SdcModel, SolverOptions};

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// `x1' = x1 + dt x2`, `x2' = x2 + dt (-9 x1 + mu (1 - x1^2) x2)`, `y = x1`.
    VanDerPol { mu: f64, dt: f64 },
    /// `x' = A x`, `y = H x`, matrices given row by row.
    Linear { a: Vec<Vec<f64>>, h: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// True initial state; ignored when `on_boundary` is set.
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    pub p0: Vec<Vec<f64>>,
    /// Draw `x0` uniformly from the boundary of `E(xhat0, p0)` per seed.
    #[serde(default)]
    pub on_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Each process channel is uniform on `[-a, a]`.
    pub process_amplitude: f64,
    /// Each measurement component is uniform on `[-a, a]`.
    pub measurement_amplitude: f64,
    /// State components receiving process noise; all when absent.
    #[serde(default)]
    pub process_channels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_samples")]
    pub remainder_samples: usize,
    #[serde(default = "default_inflations")]
    pub bound_inflations: usize,
    #[serde(default = "yes")]
    pub allow_conservative: bool,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            remainder_samples: default_samples(),
            bound_inflations: default_inflations(),
            allow_conservative: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iterations: usize,
    pub verify_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            gap_tol: d.gap_tol,
            feas_tol: d.feas_tol,
            max_iterations: d.max_iterations,
            verify_tol: d.verify_tol,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            gap_tol: self.gap_tol,
            feas_tol: self.feas_tol,
            max_iterations: self.max_iterations,
            verify_tol: self.verify_tol,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Write measured solver times; when off the timing columns hold 0 so
    /// that reruns are byte-identical.
    #[serde(default = "yes")]
    pub record_timings: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            record_timings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Number of filter steps `k = 0..steps-1`.
    pub steps: usize,
    pub init: InitConfig,
    pub bounds: BoundsConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputSection,
}

fn yes() -> bool {
    true
}

fn default_samples() -> usize {
    smf_core::remainder::DEFAULT_REMAINDER_SAMPLES
}

fn default_inflations() -> usize {
    smf_core::filter::FallbackPolicy::default().bound_inflations
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, BenchError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(BenchError::Config(format!(
            "{what} must be a non-empty rectangular matrix"
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, BenchError> {
    let m = matrix(rows, what)?;
    if m.nrows() != n || m.ncols() != n {
        return Err(BenchError::Config(format!(
            "{what} must be {n} x {n}, got {} x {}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

/// Largest `w^T M^{-1} w` over the vertices of the box `|w_i| <= a` restricted to `channels`.
pub fn box_excess(m: &DMatrix<f64>, channels: &[usize], amplitude: f64) -> Option<f64> {
    let inv = m.clone().cholesky()?.inverse();
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for mask in 0..(1usize << channels.len()) {
        let mut w = DVector::zeros(n);
        for (bit, &c) in channels.iter().enumerate() {
            w[c] = if mask >> bit & 1 == 1 { amplitude } else { -amplitude };
        }
        worst = worst.max((w.transpose() * &inv * &w)[0]);
    }
    Some(worst)
}

impl ExperimentConfig {
    /// The Van der Pol setup: mu = 2, dt = 0.05, P0 = I, x0 = (1.5, 1.25),
    /// xhat0 = (1, 2), Q = 0.01 I, R = 0.01, uniform noise of amplitude 0.05
    /// on x2 and on the measurement, N = 1000, 200 steps, 20 seeds.
    pub fn van_der_pol_reference() -> Self {
        Self {
            model: ModelConfig::VanDerPol { mu: 2.0, dt: 0.05 },
            steps: 200,
            init: InitConfig {
                x0: vec![1.5, 1.25],
                xhat0: vec![1.0, 2.0],
                p0: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                on_boundary: false,
            },
            bounds: BoundsConfig {
                q: vec![vec![0.01, 0.0], vec![0.0, 0.01]],
                r: vec![vec![0.01]],
            },
            noise: NoiseConfig {
                enabled: true,
                process_amplitude: 0.05,
                measurement_amplitude: 0.05,
                process_channels: Some(vec![1]),
            },
            filter: FilterSection::default(),
            solver: SolverSection::default(),
            seeds: (0..20).collect(),
            output: OutputSection::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<SdcModel<f64>, BenchError> {
        let model = match &self.model {
            ModelConfig::VanDerPol { mu, dt } => van_der_pol(*mu, *dt),
            ModelConfig::Linear { a, h } => linear_model(matrix(a, "model.a")?, matrix(h, "model.h")?),
        };
        model.map_err(|e| BenchError::Config(format!("model: {e}")))
    }

    pub fn state_dim(&self) -> usize {
        self.init.xhat0.len()
    }

    pub fn initial_ellipsoid(&self) -> Result<Ellipsoid<f64>, BenchError> {
        let n = self.state_dim();
        Ellipsoid::new(
            DVector::from_vec(self.init.xhat0.clone()),
            square(&self.init.p0, n, "init.p0")?,
        )
        .map_err(|e| BenchError::Config(format!("init.p0: {e}")))
    }

    pub fn q(&self) -> Result<DMatrix<f64>, BenchError> {
        square(&self.bounds.q, self.state_dim(), "bounds.q")
    }

    pub fn r(&self) -> Result<DMatrix<f64>, BenchError> {
        let p = self.bounds.r.len();
        square(&self.bounds.r, p, "bounds.r")
    }

    pub fn noise_bounds(&self) -> Result<NoiseBounds<f64>, BenchError> {
        NoiseBounds::constant(self.q()?, self.r()?).map_err(|e| BenchError::Config(format!("bounds: {e}")))
    }

    pub fn process_channels(&self) -> Vec<usize> {
        self.noise
            .process_channels
            .clone()
            .unwrap_or_else(|| (0..self.state_dim()).collect())
    }

    /// Checks shapes, positive definiteness and that the noise law stays
    /// inside the declared ellipsoids.
    pub fn validate(&self) -> Result<(), BenchError> {
        let model = self.model()?;
        let n = model.state_dim();
        if self.init.xhat0.len() != n || (!self.init.on_boundary && self.init.x0.len() != n) {
            return Err(BenchError::Config(format!("init vectors must have length {n}")));
        }
        let initial = self.initial_ellipsoid()?;
        if !self.init.on_boundary {
            let x0 = DVector::from_vec(self.init.x0.clone());
            if !initial
                .contains(&x0, 1e-9)
                .map_err(|e| BenchError::Config(e.to_string()))?
            {
                return Err(BenchError::Config("init.x0 lies outside E(xhat0, p0)".into()));
            }
        }
        let bounds = self.noise_bounds()?;
        let r = self.r()?;
        if r.nrows() != model.output_dim() {
            return Err(BenchError::Config(format!(
                "bounds.r must be {0} x {0}",
                model.output_dim()
            )));
        }
        if self.steps == 0 {
            return Err(BenchError::Config("steps must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("at least one seed is required".into()));
        }
        if self.filter.remainder_samples == 0 {
            return Err(BenchError::Config("filter.remainder_samples must be positive".into()));
        }
        let channels = self.process_channels();
        if channels.iter().any(|&c| c >= n) {
            return Err(BenchError::Config(format!("noise.process_channels must be below {n}")));
        }
        if self.noise.process_amplitude < 0.0 || self.noise.measurement_amplitude < 0.0 {
            return Err(BenchError::Config("noise amplitudes must be non-negative".into()));
        }
        if self.noise.enabled {
            let q = bounds.q_at(0).map_err(|e| BenchError::Config(e.to_string()))?;
            let all_outputs: Vec<usize> = (0..r.nrows()).collect();
            let wq = box_excess(&q, &channels, self.noise.process_amplitude);
            let vr = box_excess(&r, &all_outputs, self.noise.measurement_amplitude);
            if wq.is_none_or(|v| v > 1.0) || vr.is_none_or(|v| v > 1.0) {
                return Err(BenchError::Config(
                    "noise amplitudes leave the ellipsoids defined by bounds.q / bounds.r".into(),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration as serialized JSON.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

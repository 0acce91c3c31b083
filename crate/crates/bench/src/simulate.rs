//! Plant simulation under bounded uniform noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smf_core::{Ellipsoid, SdcModel};

use crate::BenchError;

/// Per-component uniform noise on selected channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub enabled: bool,
    pub process_amplitude: f64,
    pub measurement_amplitude: f64,
    pub process_channels: Vec<usize>,
}

impl NoiseSpec {
    pub fn off() -> Self {
        Self {
            enabled: false,
            process_amplitude: 0.0,
            measurement_amplitude: 0.0,
            process_channels: Vec::new(),
        }
    }
}

/// `states[k] = x_k` for `k = 0..=steps`, `measurements[k] = y_k` for `k < steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

fn inside(v: &DVector<f64>, inv: &DMatrix<f64>) -> bool {
    (v.transpose() * inv * v)[0] <= 1.0 + 1e-12
}

fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, BenchError> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| BenchError::Config(format!("{what} is not positive definite")))
}

/// Iterates `x_{k+1} = f(x_k) + w_k`, `y_k = h(x_k) + v_k`. Deterministic in
/// `seed`; every draw is checked against `w^T Q^-1 w <= 1`, `v^T R^-1 v <= 1`.
pub fn simulate_plant(
    model: &SdcModel<f64>,
    x0: &DVector<f64>,
    noise: &NoiseSpec,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    steps: usize,
    seed: u64,
) -> Result<Trajectory, BenchError> {
    let n = model.state_dim();
    let p = model.output_dim();
    let (q_inv, r_inv) = (inverse(q, "Q")?, inverse(r, "R")?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
    let mut states = vec![x0.clone()];
    let mut measurements = Vec::with_capacity(steps);
    for k in 0..steps {
        let x = &states[k];
        let mut v = DVector::zeros(p);
        let mut w = DVector::zeros(n);
        if noise.enabled {
            v.iter_mut().for_each(|c| *c = uniform(noise.measurement_amplitude));
            for &c in &noise.process_channels {
                w[c] = uniform(noise.process_amplitude);
            }
        }
        if !inside(&w, &q_inv) {
            return Err(BenchError::NoiseExceedsBound(format!(
                "w_{k} = {:?} leaves E(0, Q)",
                w.as_slice()
            )));
        }
        if !inside(&v, &r_inv) {
            return Err(BenchError::NoiseExceedsBound(format!(
                "v_{k} = {:?} leaves E(0, R)",
                v.as_slice()
            )));
        }
        measurements.push(model.system().h(x) + v);
        let next = model.system().f(x) + w;
        states.push(next);
    }
    Ok(Trajectory { states, measurements })
}

/// Uniform point on the boundary of `initial`.
pub fn boundary_point(initial: &Ellipsoid<f64>, seed: u64) -> DVector<f64> {
    let z = &smf_core::sample_unit_sphere::<f64>(initial.dim(), 1, seed)[0];
    initial.point(z)
}

//! Multi-seed experiments and their on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smf_core::filter::FallbackPolicy;
use smf_core::{run, FilterConfig, FilterHistory, RecordedMeasurements};

use crate::config::ExperimentConfig;
use crate::metrics::{compute_metrics, AggregateMetrics, RunMetrics, CONTAINMENT_SLACK};
use crate::simulate::{boundary_point, simulate_plant, NoiseSpec, Trajectory};
use crate::BenchError;

/// One seed: simulated plant, filter history and, if the filter stopped early, why.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub history: FilterHistory<f64>,
    pub failure: Option<String>,
}

impl SeedRun {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn metrics(&self) -> RunMetrics {
        compute_metrics(&self.history, &self.trajectory.states).expect("trajectory covers the history")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub history_file: PathBuf,
    pub failure: Option<String>,
    pub metrics: RunMetrics,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub aggregate: AggregateMetrics,
    pub seeds: Vec<SeedSummary>,
}

impl ExperimentSummary {
    /// Every run finished and every true state was contained.
    pub fn succeeded(&self) -> bool {
        self.aggregate.completed_runs == self.aggregate.runs && self.aggregate.containment_rate == 1.0
    }
}

/// Initial true state of `seed`: fixed, or on the initial boundary.
pub fn initial_state(cfg: &ExperimentConfig, seed: u64) -> Result<DVector<f64>, BenchError> {
    if cfg.init.on_boundary {
        Ok(boundary_point(&cfg.initial_ellipsoid()?, seed ^ 0x9e37_79b9_7f4a_7c15))
    } else {
        Ok(DVector::from_vec(cfg.init.x0.clone()))
    }
}

pub fn filter_config(cfg: &ExperimentConfig, seed: u64) -> FilterConfig {
    FilterConfig {
        remainder_samples: cfg.filter.remainder_samples,
        seed,
        solver: cfg.solver.options(),
        fallback: FallbackPolicy {
            bound_inflations: cfg.filter.bound_inflations,
            allow_conservative: cfg.filter.allow_conservative,
            ..FallbackPolicy::default()
        },
        ..FilterConfig::default()
    }
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, BenchError> {
    let model = cfg.model()?;
    let noise = NoiseSpec {
        enabled: cfg.noise.enabled,
        process_amplitude: cfg.noise.process_amplitude,
        measurement_amplitude: cfg.noise.measurement_amplitude,
        process_channels: cfg.process_channels(),
    };
    let x0 = initial_state(cfg, seed)?;
    let trajectory = simulate_plant(&model, &x0, &noise, &cfg.q()?, &cfg.r()?, cfg.steps, seed)?;
    let mut source = RecordedMeasurements::new(trajectory.measurements.clone());
    let outcome = run(
        model,
        cfg.noise_bounds()?,
        cfg.initial_ellipsoid()?,
        &mut source,
        cfg.steps - 1,
        filter_config(cfg, seed),
    );
    let (history, failure) = match outcome {
        Ok(h) => (h, None),
        Err(f) => {
            log::warn!("seed {seed}: {f}");
            (f.history, Some(f.error.to_string()))
        }
    };
    Ok(SeedRun {
        seed,
        trajectory,
        history,
        failure,
    })
}

pub fn history_file_name(seed: u64) -> String {
    format!("history_seed{seed}.csv")
}

/// Writes one row per recorded step. Columns: `k`, `x_true[i]`,
/// `xhat_corr[i]`, `xhat_pred[i]`, `trace_corr`, `trace_pred`, `r_H`, `r_A`,
/// `contained` (0/1), `gain_norm`, `solve_ms_corr`, `solve_ms_pred`.
pub fn write_history_csv<W: std::io::Write>(out: W, run: &SeedRun, record_timings: bool) -> Result<(), BenchError> {
    let n = run.trajectory.states[0].len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    for name in ["x_true", "xhat_corr", "xhat_pred"] {
        header.extend((0..n).map(|i| format!("{name}[{i}]")));
    }
    header.extend(
        [
            "trace_corr",
            "trace_pred",
            "r_H",
            "r_A",
            "contained",
            "gain_norm",
            "solve_ms_corr",
            "solve_ms_pred",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    let ms = |d: std::time::Duration| if record_timings { d.as_secs_f64() * 1e3 } else { 0.0 };
    for s in &run.history.steps {
        let x = &run.trajectory.states[s.k];
        let mut row = vec![s.k.to_string()];
        row.extend(x.iter().map(f64::to_string));
        row.extend(s.correction.center().iter().map(f64::to_string));
        row.extend(s.prediction.center().iter().map(f64::to_string));
        let contained = s.correction.contains(x, CONTAINMENT_SLACK).unwrap_or(false);
        row.extend([
            s.correction.trace().to_string(),
            s.prediction.trace().to_string(),
            s.r_h.to_string(),
            s.r_a.to_string(),
            u8::from(contained).to_string(),
            s.gain_norm().to_string(),
            ms(s.correction_solve.solve_time).to_string(),
            ms(s.prediction_solve.solve_time).to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every seed in parallel, writes `history_seed<k>.csv` per seed and
/// `metrics.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary, BenchError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| BenchError::Config(format!("{}: {e}", out_dir.display())))?;
    let runs: Vec<SeedSummary> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = run_seed(cfg, seed)?;
            let path = out_dir.join(history_file_name(seed));
            let file = fs::File::create(&path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
            write_history_csv(std::io::BufWriter::new(file), &run, cfg.output.record_timings)?;
            Ok(SeedSummary {
                seed,
                history_file: path,
                metrics: run.metrics(),
                failure: run.failure,
            })
        })
        .collect::<Result<_, BenchError>>()?;
    let pairs: Vec<_> = runs.iter().map(|s| (s.metrics.clone(), s.failure.is_none())).collect();
    let summary = ExperimentSummary {
        config_sha256: cfg.digest(),
        config: cfg.clone(),
        aggregate: AggregateMetrics::from_runs(&pairs),
        seeds: runs,
    };
    let path = out_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, json).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    Ok(summary)
}

/// Statistics recomputed from a history CSV alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMetrics {
    pub file: PathBuf,
    pub steps: usize,
    pub mae: f64,
    pub mse: f64,
    pub mean_trace: f64,
    pub containment_rate: f64,
}

pub fn metrics_from_csv(path: &Path) -> Result<CsvMetrics, BenchError> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.clone();
    let cols = |prefix: &str| -> Vec<usize> {
        header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix))
            .map(|(i, _)| i)
            .collect()
    };
    let (truth, est) = (cols("x_true["), cols("xhat_corr["));
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::Config(format!("{}: missing column {name}", path.display())))
    };
    let (trace, contained) = (find("trace_corr")?, find("contained")?);
    if truth.is_empty() || truth.len() != est.len() {
        return Err(BenchError::Config(format!(
            "{}: state columns are inconsistent",
            path.display()
        )));
    }
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    };
    let (mut steps, mut sum_e, mut sum_e2, mut sum_tr, mut inside) = (0usize, 0.0, 0.0, 0.0, 0usize);
    for rec in rd.records() {
        let rec = rec?;
        let mut e2 = 0.0;
        for (&t, &h) in truth.iter().zip(&est) {
            let d = parse(&rec[t])? - parse(&rec[h])?;
            e2 += d * d;
        }
        steps += 1;
        sum_e += e2.sqrt();
        sum_e2 += e2;
        sum_tr += parse(&rec[trace])?;
        inside += usize::from(&rec[contained] == "1");
    }
    let avg = |s: f64| if steps == 0 { f64::NAN } else { s / steps as f64 };
    Ok(CsvMetrics {
        file: path.to_path_buf(),
        steps,
        mae: avg(sum_e),
        mse: avg(sum_e2),
        mean_trace: avg(sum_tr),
        containment_rate: avg(inside as f64),
    })
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use smf_core::observability::{ScanDomain, DEFAULT_RANK_TOL};
use smf_core::scan_trajectory;
use smfbench::experiment::metrics_from_csv;
use smfbench::simulate::{simulate_plant, NoiseSpec};
use smfbench::{run_experiment, BenchError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "smfbench", version, about = "Set-membership filter benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, filter and write per-seed histories plus metrics.json.
    Run(Overrides),
    /// Recompute metrics from the history CSVs of an output directory.
    Metrics {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Rank condition of the observability matrix along a nominal trajectory.
    Observability {
        #[command(flatten)]
        overrides: Overrides,
        /// Number of stacked output blocks.
        #[arg(long, default_value_t = 2)]
        window: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct Overrides {
    /// JSON experiment file; the reference Van der Pol setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use seeds 0..K.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    noise: Option<Switch>,
    /// Draw each x0 from the boundary of the initial ellipsoid.
    #[arg(long)]
    init_on_boundary: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Duality-gap and feasibility tolerance of the SDP solver.
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long)]
    remainder_samples: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, BenchError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::van_der_pol_reference(),
        };
        if let Some(k) = self.seeds {
            cfg.seeds = (0..k).collect();
        }
        if let Some(n) = self.steps {
            cfg.steps = n;
        }
        if let Some(sw) = self.noise {
            cfg.noise.enabled = matches!(sw, Switch::On);
        }
        if self.init_on_boundary {
            cfg.init.on_boundary = true;
        }
        if let Some(dir) = &self.out {
            cfg.output.dir = Some(dir.clone());
        }
        if let Some(tol) = self.solver_tol {
            cfg.solver.gap_tol = tol;
            cfg.solver.feas_tol = tol;
        }
        if let Some(n) = self.remainder_samples {
            cfg.filter.remainder_samples = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const CONFIG_ERROR: u8 = 2;
const FILTER_FAILURE: u8 = 3;

fn exit_code(err: &BenchError) -> ExitCode {
    match err {
        BenchError::Filter(_) => ExitCode::from(FILTER_FAILURE),
        _ => ExitCode::from(CONFIG_ERROR),
    }
}

fn print_json<S: serde::Serialize>(value: &S) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cmd: Command) -> Result<ExitCode, BenchError> {
    match cmd {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let out = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("results"));
            let summary = run_experiment(&cfg, &out)?;
            print_json(&summary.aggregate);
            for s in summary.seeds.iter().filter(|s| s.failure.is_some()) {
                eprintln!("seed {}: {}", s.seed, s.failure.as_deref().unwrap_or_default());
            }
            if summary.succeeded() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "{} of {} runs completed, containment rate {}",
                    summary.aggregate.completed_runs, summary.aggregate.runs, summary.aggregate.containment_rate
                );
                Ok(ExitCode::from(FILTER_FAILURE))
            }
        }
        Command::Metrics { out } => {
            let mut files: Vec<_> = std::fs::read_dir(&out)
                .map_err(|e| BenchError::Config(format!("{}: {e}", out.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("history_") && n.ends_with(".csv"))
                })
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(BenchError::Config(format!("no history files in {}", out.display())));
            }
            let all = files
                .iter()
                .map(|f| metrics_from_csv(f))
                .collect::<Result<Vec<_>, _>>()?;
            print_json(&all);
            Ok(ExitCode::SUCCESS)
        }
        Command::Observability { overrides, window } => {
            let cfg = overrides.resolve()?;
            let model = cfg.model()?;
            let x0 = DVector::from_vec(cfg.init.x0.clone());
            let traj = simulate_plant(&model, &x0, &NoiseSpec::off(), &cfg.q()?, &cfg.r()?, cfg.steps, 0)?;
            let report = scan_trajectory(&model, &ScanDomain::Trajectory(&traj.states), window, DEFAULT_RANK_TOL)?;
            print_json(&serde_json::json!({
                "window": report.window,
                "rank": report.rank,
                "mu1": report.mu1,
                "mu2": report.mu2,
                "full_rank": report.full_rank,
            }));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("smfbench: {err}");
            exit_code(&err)
        }
    }
}

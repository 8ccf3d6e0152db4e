//! `drawcal`: synthesize cable-length data, calibrate, compare methods and
//! self-check the identification Jacobian.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 no convergence
//! (the report is still written), 4 singular least-squares system, 5 Jacobian
//! self-check failure.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use drawcal::data::{self, MeasurementSet, ScenarioConfig, RNG_ALGORITHM};
use drawcal::diagnostics::{jacobian_check, JACOBIAN_TOLERANCE};
use drawcal::error_model::{Extensions, ParamDeviation, Problem};
use drawcal::kinematics::RobotModel;
use drawcal::metrics::{self, MetricTriple};
use drawcal::solvers::{solve_from, Method, SolveReport, SolverConfig, StepSchedule};
use drawcal::ukf::{ukf_run, ukf_slm_run};
use nalgebra::DVector;

use report::{sha256_hex, CalibrationReport, Manifest, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "drawcal", version, about = "Kinematic calibration from draw-wire cable lengths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a measurement CSV and its ground-truth deviation from a scenario file.
    Synth(SynthArgs),
    /// Identify DH deviations from a measurement CSV.
    Calibrate(CalibrateArgs),
    /// Rank calibration reports and export convergence histories.
    Compare(CompareArgs),
    /// Check the identification Jacobian against entry-by-entry differences.
    JacobianCheck(JacobianArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Replaces the seed in the scenario file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// One of ls, lm, slm, ukf, ukf-slm.
    #[arg(long)]
    method: Method,
    #[arg(long)]
    out: PathBuf,
    /// JSON with optional `solver`, `ukf` and `extensions` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Also identify a shift of the cable anchor.
    #[arg(long)]
    estimate_anchor: bool,
    /// Also identify a constant cable-length offset.
    #[arg(long)]
    estimate_cable_offset: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out_text: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Directory for one `<method>.csv` convergence history per report.
    #[arg(long)]
    history_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct JacobianArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Deviation JSON to linearize at (default: nominal).
    #[arg(long)]
    at: Option<PathBuf>,
    /// Adds 1.0 to one column before checking (fault injection).
    #[arg(long)]
    corrupt_column: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    NotConverged(String),
    Singular(String),
    SelfCheck(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::Singular(_) => 4,
            Failure::SelfCheck(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::NotConverged(m) | Failure::Singular(m) | Failure::SelfCheck(m) => m,
        }
    }
}

impl From<drawcal::Error> for Failure {
    fn from(e: drawcal::Error) -> Self {
        match e {
            drawcal::Error::Singular { .. } => Failure::Singular(e.to_string()),
            drawcal::Error::Numeric(_) => Failure::NotConverged(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_dataset(path: &Path) -> Result<(MeasurementSet, String), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::Usage(format!("{}: not UTF-8", path.display())))?;
    let set = MeasurementSet::from_csv_str(&text, path.display().to_string())
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok((set, sha256_hex(&bytes)))
}

fn load_model(path: &Path) -> Result<RobotModel, Failure> {
    RobotModel::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let config = ScenarioConfig::load(&args.scenario)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.scenario.display())))?;
    let scenario = config.resolve(args.seed)?;
    let (set, x_true) = data::synthesize(&scenario)?;
    data::save(&set, &args.out)?;
    write_file(&args.truth, &(serde_json::to_string_pretty(&x_true).expect("serializes") + "\n"))?;
    println!(
        "wrote {} measurements (seed {}) to {}",
        set.len(),
        scenario.seed,
        args.out.display()
    );
    Ok(())
}

fn run_config(args: &CalibrateArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    let s = &mut cfg.solver;
    s.lambda = args.lambda.unwrap_or(s.lambda);
    s.delta0 = args.delta0.unwrap_or(s.delta0);
    s.mu = args.mu.unwrap_or(s.mu);
    s.max_iter = args.max_iter.unwrap_or(s.max_iter);
    s.tol = args.tol.unwrap_or(s.tol);
    cfg.extensions.anchor |= args.estimate_anchor;
    cfg.extensions.cable_offset |= args.estimate_cable_offset;
    cfg.solver.validate()?;
    cfg.ukf.validate()?;
    Ok(cfg)
}

fn run_method(problem: &Problem<'_>, method: Method, cfg: &RunConfig) -> drawcal::Result<SolveReport> {
    let x0 = DVector::zeros(problem.dim());
    let schedule = StepSchedule {
        delta0: cfg.solver.delta0,
        mu: cfg.solver.mu,
    };
    match method {
        Method::Ls => {
            let undamped = SolverConfig {
                lambda: 0.0,
                ..cfg.solver
            };
            solve_from(problem, x0, &undamped, StepSchedule::CONSTANT, method)
        }
        Method::Lm => solve_from(problem, x0, &cfg.solver, StepSchedule::CONSTANT, method),
        Method::Slm => solve_from(problem, x0, &cfg.solver, schedule, method),
        Method::Ukf => ukf_run(problem, &cfg.ukf).map(|(_, r)| r),
        Method::UkfSlm => ukf_slm_run(problem, &cfg.ukf, &cfg.solver),
    }
}

fn calibrate(args: &CalibrateArgs, argv: &[String]) -> Result<(), Failure> {
    let started = now();
    let cfg = run_config(args)?;
    let model = load_model(&args.model)?;
    let (set, digest) = read_dataset(&args.data)?;
    let problem = Problem::new(&model, &set, cfg.extensions)?;

    let before = metrics::evaluate(&problem.residuals(&DVector::zeros(problem.dim()))?)?;
    let run = run_method(&problem, args.method, &cfg)?;
    let after = metrics::evaluate(&problem.residuals(&run.estimate)?)?;
    let parts = run.estimate_parts();

    let report = CalibrationReport {
        method: args.method,
        x_hat: parts.deviation,
        anchor_shift_mm: parts.anchor_shift.map(|v| [v.x, v.y, v.z]),
        cable_offset_mm: parts.cable_offset,
        before,
        after,
        rmse_history_mm: run.rmse_history.clone(),
        step_sizes: run.step_sizes.clone(),
        iterations: run.iterations,
        converged: run.converged,
        stop_reason: run.stop_reason,
        stage_boundary: run.stage_boundary,
        wall_time_s: run.wall_time,
        manifest: Manifest {
            command_line: argv.to_vec(),
            config: cfg,
            seed: None,
            method: args.method,
            model: model.clone(),
            dataset_path: args.data.display().to_string(),
            dataset_sha256: digest,
            dataset_points: set.len(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            rng_algorithm: RNG_ALGORITHM.into(),
            started_utc: started,
            finished_utc: now(),
        },
    };
    write_file(&args.out, &(serde_json::to_string_pretty(&report).expect("serializes") + "\n"))?;
    println!(
        "{}: rmse {:.6} -> {:.3e} mm after {} iterations ({:?})",
        args.method, before.rmse, after.rmse, run.iterations, run.stop_reason
    );
    if !run.converged {
        return Err(Failure::NotConverged(format!(
            "{} did not converge ({:?}); report written to {}",
            args.method,
            run.stop_reason,
            args.out.display()
        )));
    }
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<(), Failure> {
    let reports = args
        .reports
        .iter()
        .map(|p| CalibrationReport::load(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::Usage)?;
    let rows: Vec<(String, MetricTriple)> = reports
        .iter()
        .map(|r| (r.method.to_string(), r.after))
        .collect();
    let digest = &reports[0].manifest.dataset_sha256;
    let before = if reports.iter().all(|r| &r.manifest.dataset_sha256 == digest) {
        Some(reports[0].before)
    } else {
        eprintln!("reports use different datasets; omitting the Before row");
        None
    };
    let table = metrics::compare(&rows, before)?;

    print!("{table}");
    if let Some(path) = &args.out_text {
        write_file(path, &table.to_string())?;
    }
    if let Some(path) = &args.out_json {
        write_file(path, &(table.to_json_string() + "\n"))?;
    }
    if let Some(dir) = &args.history_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
        for r in &reports {
            let mut csv = String::from("iteration,rmse_mm\n");
            for (i, v) in r.rmse_history_mm.iter().enumerate() {
                csv.push_str(&format!("{i},{v}\n"));
            }
            write_file(&dir.join(format!("{}.csv", r.method)), &csv)?;
        }
    }
    Ok(())
}

fn check_jacobian(args: &JacobianArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let (set, _) = read_dataset(&args.data)?;
    let x = match &args.at {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ParamDeviation>(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => ParamDeviation::zero(),
    };
    let check = jacobian_check(&model, &x, &set, args.corrupt_column)?;
    let (row, col) = check.worst;
    println!(
        "max discrepancy {:.3e} at row {} column {} ({}x{}), tolerance {:.0e}",
        check.max_discrepancy,
        row + 1,
        Extensions::default().labels()[col],
        check.rows,
        check.cols,
        JACOBIAN_TOLERANCE
    );
    if !check.passed() {
        return Err(Failure::SelfCheck(format!(
            "Jacobian self-check failed: {:.3e} > {:.0e}",
            check.max_discrepancy, JACOBIAN_TOLERANCE
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => synth(args),
        Command::Calibrate(args) => calibrate(args, &argv),
        Command::Compare(args) => compare(args),
        Command::JacobianCheck(args) => check_jacobian(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

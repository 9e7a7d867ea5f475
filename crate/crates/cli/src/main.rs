//! Command-line front end: solve, certify, grid, sweep and bench.

mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use reach_sos::certify::{certify, run_order_sweep, CertReport, CertifyConfig, DEFAULT_SEED};
use reach_sos::io::{
    fixtures, grid, load_problem, report_to_json, save_program, save_report, CertificateFile,
    GridAxis, LoadedProblem,
};
use reach_sos::relax::{assemble_dual, solve_dual};
use reach_sos::sdp::{ConicSolver, InteriorPoint};
use reach_sos::semialg::Horizon;
use reach_sos::ReachProblem;

use error::CliError;

const THREADS_VAR: &str = "REACH_SOS_THREADS";

#[derive(Parser)]
#[command(
    name = "reach-sos",
    version,
    about = "Outer approximations of reachable sets of polynomial maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one relaxation, write the certificate and its report.
    Solve(SolveArgs),
    /// Re-validate a certificate against simulated trajectories.
    Certify(CertifyArgs),
    /// Sample a certificate on a regular grid.
    Grid(GridArgs),
    /// Solve and certify several orders.
    Sweep(SweepArgs),
    /// Solve and certify the five bundled benchmarks.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct HorizonArgs {
    /// Horizon T of the volume assumption.
    #[arg(long = "T", value_name = "N", conflicts_with = "u_zero")]
    horizon: Option<u32>,
    /// Fix u = 0 (bound on the infinite-horizon set).
    #[arg(long)]
    u_zero: bool,
}

#[derive(Args, Clone)]
struct SamplingArgs {
    /// Initial points sampled from X⁰.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Simulation steps.
    #[arg(long, value_name = "K")]
    steps: Option<u32>,
    /// Overrides the problem file seed.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Monte Carlo samples for the volume estimate (0 skips it).
    #[arg(long, value_name = "N")]
    volume_samples: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file, or the name of a bundled fixture.
    problem: String,
    /// Relaxation degree 2r.
    #[arg(long, value_name = "2R")]
    order: Option<u32>,
    #[command(flatten)]
    horizon: HorizonArgs,
    #[arg(long, default_value = "builtin-ipm")]
    backend: String,
    /// Also write the assembled dual program as a sparse text dump.
    #[arg(long, value_name = "FILE")]
    dump: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Args)]
struct CertifyArgs {
    problem: String,
    certificate: PathBuf,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Write the report here instead of only printing it.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    certificate: PathBuf,
    /// Points per axis.
    #[arg(long)]
    res: usize,
    #[arg(long)]
    out: PathBuf,
    /// 1-based coordinates to vary (default: the first two).
    #[arg(long, value_delimiter = ',')]
    axes: Option<Vec<usize>>,
    /// Values of the other coordinates (default: the domain midpoint).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    at: Option<Vec<f64>>,
}

#[derive(Args)]
struct SweepArgs {
    problem: String,
    /// Relaxation degrees 2r, ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    orders: Vec<u32>,
    #[command(flatten)]
    horizon: HorizonArgs,
    #[arg(long, default_value = "builtin-ipm")]
    backend: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Points per axis of the per-order grid files.
    #[arg(long, default_value_t = 200)]
    grid_res: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Relaxation degree 2r (default: each fixture's own).
    #[arg(long, value_name = "2R")]
    order: Option<u32>,
    #[command(flatten)]
    horizon: HorizonArgs,
    #[arg(long, default_value = "builtin-ipm")]
    backend: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    sampling: SamplingArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return CliError::usage(e.to_string()).report(),
    };
    if let Err(e) = configure_threads() {
        return e.report();
    }
    let result = match cli.command {
        Command::Solve(a) => solve_cmd(a),
        Command::Certify(a) => certify_cmd(a),
        Command::Grid(a) => grid_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::usage(format!(
                "{THREADS_VAR} must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::internal(e.to_string()))
}

fn load(arg: &str) -> Result<LoadedProblem<f64>, CliError> {
    if !Path::new(arg).exists() {
        if let Some(loaded) = fixtures::load(arg) {
            return Ok(loaded?);
        }
    }
    Ok(load_problem(arg)?)
}

fn solver(name: &str) -> Result<InteriorPoint, CliError> {
    let ipm = InteriorPoint;
    if name == ConicSolver::<f64>::name(&ipm) {
        Ok(ipm)
    } else {
        Err(CliError::usage(format!(
            "unknown backend {name:?}; available: {}",
            ConicSolver::<f64>::name(&ipm)
        )))
    }
}

fn half_order(order: u32) -> Result<u32, CliError> {
    if order == 0 || !order.is_multiple_of(2) {
        return Err(CliError::usage(format!(
            "order must be an even positive degree 2r, got {order}"
        )));
    }
    Ok(order / 2)
}

fn with_horizon(problem: &ReachProblem, h: &HorizonArgs) -> Result<ReachProblem, CliError> {
    if h.u_zero {
        return Ok(problem.with_horizon(Horizon::UZero));
    }
    match h.horizon {
        Some(t) => Ok(
            problem.with_horizon(Horizon::steps(t).map_err(|e| CliError::usage(e.to_string()))?)
        ),
        None => Ok(problem.clone()),
    }
}

fn config(s: &SamplingArgs, loaded: &LoadedProblem<f64>) -> CertifyConfig {
    let d = CertifyConfig::default();
    CertifyConfig {
        seed: s.seed.or(loaded.options.seed).unwrap_or(DEFAULT_SEED),
        steps: s.steps.unwrap_or(d.steps),
        samples: s.samples.unwrap_or(d.samples),
        volume_samples: match s.volume_samples {
            Some(0) => None,
            Some(n) => Some(n),
            None => d.volume_samples,
        },
        record_runtime: false,
    }
}

fn stem(problem: &ReachProblem, order: u32) -> String {
    format!("{}-2r{order}", problem.name)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Solves and certifies one order, writing `<stem>.cert.json` and
/// `<stem>.report.json` into `out_dir`.
fn solve_one(
    loaded: &LoadedProblem<f64>,
    problem: &ReachProblem,
    r: u32,
    ipm: &InteriorPoint,
    config: &CertifyConfig,
    out_dir: &Path,
) -> Result<CertReport, CliError> {
    let cert = solve_dual(problem, r, ipm, &loaded.options.solver)?;
    let report = certify(problem, &cert, config)?;
    let stem = stem(problem, 2 * r);
    CertificateFile::new(&cert, problem, &loaded.hash)
        .save(out_dir.join(format!("{stem}.cert.json")))?;
    save_report(out_dir.join(format!("{stem}.report.json")), &report)?;
    Ok(report)
}

fn solve_cmd(a: SolveArgs) -> Result<(), CliError> {
    let loaded = load(&a.problem)?;
    let ipm = solver(&a.backend)?;
    let problem = with_horizon(&loaded.problem, &a.horizon)?;
    let order = a.order.or(loaded.options.order).ok_or_else(|| {
        CliError::usage("no order given on the command line or in the problem file".into())
    })?;
    let r = half_order(order)?;
    if let Some(path) = &a.dump {
        let (program, _) = assemble_dual(&problem, r)?;
        save_program(path, &program)?;
    }
    create_dir(&a.out_dir)?;
    let report = solve_one(
        &loaded,
        &problem,
        r,
        &ipm,
        &config(&a.sampling, &loaded),
        &a.out_dir,
    )?;
    print!("{}", report_to_json(&report));
    Ok(())
}

fn certify_cmd(a: CertifyArgs) -> Result<(), CliError> {
    let loaded = load(&a.problem)?;
    let file = CertificateFile::load(&a.certificate)?;
    if file.variables != loaded.problem.variables {
        return Err(CliError::mismatch(format!(
            "certificate variables {:?} differ from problem variables {:?}",
            file.variables, loaded.problem.variables
        )));
    }
    if file.problem_hash != loaded.hash {
        log::warn!(
            "certificate was computed for a different version of {}",
            a.problem
        );
    }
    let cert = file.certificate()?;
    let problem = loaded.problem.with_horizon(cert.horizon);
    let mut report = certify(&problem, &cert, &config(&a.sampling, &loaded))?;
    report.status = file.solver.map(|s| s.status);
    if let Some(path) = &a.report {
        save_report(path, &report)?;
    }
    print!("{}", report_to_json(&report));
    Ok(())
}

fn grid_cmd(a: GridArgs) -> Result<(), CliError> {
    let file = CertificateFile::load(&a.certificate)?;
    let cert = file.certificate()?;
    let n = file.variables.len();
    let axes = a.axes.unwrap_or_else(|| (1..=n.min(2)).collect());
    if axes.iter().any(|&i| i == 0 || i > n) {
        return Err(CliError::usage(format!(
            "axes are 1-based coordinates in 1..={n}"
        )));
    }
    let (lo, hi) = (&file.domain.lower, &file.domain.upper);
    let base = match a.at {
        Some(at) if at.len() == n => at,
        Some(at) => {
            return Err(CliError::usage(format!(
                "--at needs {n} values, got {}",
                at.len()
            )))
        }
        None => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
    };
    let axes: Vec<GridAxis> = axes
        .iter()
        .map(|&i| GridAxis {
            index: i - 1,
            min: lo[i - 1],
            max: hi[i - 1],
            res: a.res,
        })
        .collect();
    let g = grid(&cert, &axes, &base)?;
    std::fs::write(&a.out, g.to_text()).map_err(|e| CliError::io(&a.out, e))?;
    println!(
        "{}",
        json!({ "grid": a.out.display().to_string(), "rows": g.rows.len() })
    );
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), CliError> {
    let loaded = load(&a.problem)?;
    let ipm = solver(&a.backend)?;
    let problem = with_horizon(&loaded.problem, &a.horizon)?;
    let rs = a
        .orders
        .iter()
        .map(|&o| half_order(o))
        .collect::<Result<Vec<_>, _>>()?;
    let config = config(&a.sampling, &loaded);
    let sweep = run_order_sweep(&problem, &rs, &ipm, &loaded.options.solver, &config)?;
    create_dir(&a.out_dir)?;
    let n = problem.n_vars();
    let (lo, hi) = problem.geometry.bounding_box();
    let base: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let axes: Vec<GridAxis> = (0..n.min(2))
        .map(|i| GridAxis {
            index: i,
            min: lo[i],
            max: hi[i],
            res: a.grid_res,
        })
        .collect();
    let mut rows = Vec::new();
    let mut failed = 0;
    for row in &sweep.rows {
        let stem = stem(&problem, 2 * row.r);
        match &row.outcome {
            Ok((cert, report)) => {
                CertificateFile::new(cert, &problem, &loaded.hash)
                    .save(a.out_dir.join(format!("{stem}.cert.json")))?;
                save_report(a.out_dir.join(format!("{stem}.report.json")), report)?;
                let path = a.out_dir.join(format!("{stem}.grid.csv"));
                let g = grid(cert, &axes, &base)?;
                std::fs::write(&path, g.to_text()).map_err(|e| CliError::io(&path, e))?;
                rows.push(json!({ "order": 2 * row.r, "report": report }));
            }
            Err(message) => {
                failed += 1;
                CliError::solve(format!("order {}: {message}", 2 * row.r)).emit();
                rows.push(json!({ "order": 2 * row.r, "error": message }));
            }
        }
    }
    let summary = json!({ "problem": problem.name, "monotone": sweep.monotone, "rows": rows });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    let path = a.out_dir.join(format!("{}-sweep.json", problem.name));
    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    print!("{text}");
    if !sweep.monotone {
        log::warn!("objective increased with the order; check solver status in the reports");
    }
    if failed > 0 {
        return Err(CliError::solve(format!(
            "{failed} of {} orders failed",
            sweep.rows.len()
        )));
    }
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<(), CliError> {
    let ipm = solver(&a.backend)?;
    create_dir(&a.out_dir)?;
    let mut reports = Vec::new();
    let mut failed = 0;
    for name in fixtures::BENCHMARKS {
        let loaded = fixtures::load::<f64>(name).expect("bundled fixture")?;
        let problem = with_horizon(&loaded.problem, &a.horizon)?;
        let order = a.order.or(loaded.options.order).unwrap_or(6);
        let r = half_order(order)?;
        match solve_one(
            &loaded,
            &problem,
            r,
            &ipm,
            &config(&a.sampling, &loaded),
            &a.out_dir,
        ) {
            Ok(report) => {
                eprintln!(
                    "{name:16} 2r={order:<3} u={:<10.3e} d={:<12.6} containment={} u<1e-5={}",
                    report.u,
                    report.objective,
                    if report.passed() { "pass" } else { "FAIL" },
                    report.u_validated
                );
                reports.push(json!(report));
            }
            Err(e) => {
                failed += 1;
                e.emit();
                reports.push(json!({ "problem": name, "order": order, "error": e.message }));
            }
        }
    }
    let text = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    let path = a.out_dir.join("bench.json");
    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    print!("{text}");
    if failed > 0 {
        return Err(CliError::solve(format!(
            "{failed} of {} benchmarks failed",
            fixtures::BENCHMARKS.len()
        )));
    }
    Ok(())
}

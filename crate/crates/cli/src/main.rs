//! `gelbrich`: robust risk, worst-case moments, calibration, optimization, backtests and SDP export.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when a solver stops without converging.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use gelbrich_core::backtest::{load_returns_csv, rolling_backtest, write_error_curve, write_weekly_errors, BacktestConfig};
use gelbrich_core::calibration::{empirical_moments, subgaussian_radius, CalibrationParams};
use gelbrich_core::coefficients::{standard_risk_coefficient, RiskMeasure, StructuralClass};
use gelbrich_core::error::Error as CoreError;
use gelbrich_core::linalg::SymMatrix;
use gelbrich_core::linear_risk::{gelbrich_risk_linear, worst_case_moments_linear};
use gelbrich_core::metric::GelbrichBall;
use gelbrich_core::portfolio::{minimize_linear_gelbrich, minimize_tracking, FeasibleSet, OptimizeOptions, OptimizeReport, Termination};
use gelbrich_core::sdp::{admm_solve, export_sdpa, parse_sdpa, AdmmSettings, ProblemDescription, SdpProblem, SdpStatus};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gelbrich", version, about = "Mean-covariance robust risk over Gelbrich balls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Standard risk coefficient of a risk measure under a structural class.
    Alpha {
        /// `var:β`, `cvar:β`, `mean-std:β`, or a JSON risk measure.
        #[arg(long)]
        risk: String,
        /// `all-l2`, `symmetric`, `symmetric-linear-unimodal` (`slu`) or `gaussian`.
        #[arg(long, default_value = "all-l2")]
        class: String,
    },
    /// Worst-case risk of a linear loss `−wᵀξ`, as JSON.
    Risk {
        #[command(flatten)]
        linear: LinearArgs,
        /// JSON matrix `H` switching to the Mahalanobis distance.
        #[arg(long)]
        mahalanobis: Option<String>,
    },
    /// Moments attaining the worst-case risk of a linear loss, as JSON.
    WorstCase {
        #[command(flatten)]
        linear: LinearArgs,
    },
    /// Sample moments of a return panel and a calibrated radius, printed as a ball.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        /// Significance level: the ball covers the true moments with probability at least `1 − η`.
        #[arg(long)]
        eta: f64,
        /// JSON concentration constants.
        #[arg(long)]
        constants: Option<String>,
    },
    /// Minimize the worst-case risk (or, with `--tracking`, the tracking error) over a feasible set.
    Optimize {
        #[arg(long)]
        ball: String,
        #[arg(long, required_unless_present = "tracking")]
        alpha: Option<f64>,
        /// `long-only`, `tracking`, or a JSON feasible set.
        #[arg(long, default_value = "long-only")]
        feasible: String,
        /// Minimize the worst-case `E|wᵀξ|^p` instead; the last coordinate is the index.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        tracking: Option<u32>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Rolling-window tracking backtest; writes the `rho,avg_error` curve.
    Backtest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        p: u32,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',', required = true)]
        rho_grid: Vec<f64>,
        /// Error-curve CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-period `date,rho,error` CSV.
        #[arg(long)]
        weekly_out: Option<PathBuf>,
        #[arg(long, default_value_t = 52)]
        window: usize,
        #[arg(long, default_value_t = 12)]
        block: usize,
        /// Index column; the last column when absent.
        #[arg(long)]
        index: Option<String>,
    },
    /// Conic programs of the robust reformulations.
    Sdp {
        #[command(subcommand)]
        action: SdpAction,
    },
}

#[derive(clap::Args)]
struct LinearArgs {
    /// JSON ball `{"center": {"mean": [...], "cov": [[...]]}, "radius": ρ}`, inline or a file.
    #[arg(long)]
    ball: String,
    /// Comma-separated portfolio weights.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    w: Vec<f64>,
    #[arg(long)]
    alpha: f64,
}

#[derive(Subcommand)]
enum SdpAction {
    /// Write the program of a JSON problem description in SDPA sparse format.
    Export {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a JSON problem description, or an SDPA file (`.dat-s`), with the ADMM solver.
    Solve {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
}

/// A solver stopped early; maps to exit code 3.
#[derive(Debug)]
struct NotConverged(String);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NotConverged {}

/// Inline JSON when the argument looks like JSON, otherwise a file path.
fn read_json<T: DeserializeOwned>(arg: &str, what: &str) -> anyhow::Result<T> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return serde_json::from_str(arg).with_context(|| format!("parsing {what} JSON"));
    }
    let file = File::open(arg).with_context(|| format!("opening {what} file {arg}"))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {what} file {arg}"))
}

fn read_ball(arg: &str) -> anyhow::Result<GelbrichBall> {
    let ball: GelbrichBall = read_json(arg, "ball")?;
    ball.validate()?;
    Ok(ball)
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn parse_feasible(spec: &str, dim: usize) -> anyhow::Result<FeasibleSet> {
    let set = match spec.trim() {
        "long-only" => FeasibleSet::long_only(dim),
        "tracking" => FeasibleSet::FixedIndexSimplex { dim },
        other => read_json(other, "feasible set")?,
    };
    set.validate()?;
    Ok(set)
}

fn report_optimization(report: &OptimizeReport) -> anyhow::Result<()> {
    print_json(report)?;
    if report.termination == Termination::IterationCap {
        return Err(NotConverged(format!("optimizer hit the iteration cap of {}", report.iterations)).into());
    }
    Ok(())
}

fn load_problem(arg: &str) -> anyhow::Result<SdpProblem> {
    if Path::new(arg).extension().is_some_and(|e| e == "dat-s") {
        let file = File::open(arg).with_context(|| format!("opening {arg}"))?;
        return Ok(parse_sdpa(BufReader::new(file))?);
    }
    let description: ProblemDescription = read_json(arg, "problem")?;
    Ok(description.build()?)
}

#[derive(Serialize)]
struct SolveSummary {
    status: SdpStatus,
    primal_value: f64,
    dual_value: f64,
    primal_residual: f64,
    dual_residual: f64,
    iterations: usize,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Alpha { risk, class } => {
            let risk: RiskMeasure = risk.parse()?;
            let class: StructuralClass = class.parse()?;
            println!("{}", standard_risk_coefficient(&risk, class)?);
        }
        Command::Risk { linear, mahalanobis } => {
            let mut ball = read_ball(&linear.ball)?;
            if let Some(h) = mahalanobis {
                let h: SymMatrix = read_json(&h, "Mahalanobis weight")?;
                ball = ball.with_weight(h)?;
            }
            print_json(&gelbrich_risk_linear(&ball, &DVector::from_vec(linear.w), linear.alpha)?)?;
        }
        Command::WorstCase { linear } => {
            let ball = read_ball(&linear.ball)?;
            print_json(&worst_case_moments_linear(&ball, &DVector::from_vec(linear.w), linear.alpha)?)?;
        }
        Command::Calibrate { data, eta, constants } => {
            let panel = load_returns_csv(&data)?;
            let params: CalibrationParams = match constants {
                Some(c) => read_json(&c, "constants")?,
                None => CalibrationParams::default(),
            };
            let center = empirical_moments(&panel.returns)?;
            let radius = subgaussian_radius(eta, panel.periods(), &center.mean, &center.cov, &params)?;
            print_json(&GelbrichBall::new(center, radius)?)?;
        }
        Command::Optimize { ball, alpha, feasible, tracking, max_iter } => {
            let ball = read_ball(&ball)?;
            let mut opts = OptimizeOptions::default();
            if let Some(m) = max_iter {
                opts.max_iter = m;
            }
            let report = match tracking {
                Some(p) => {
                    let spec = if feasible == "long-only" { "tracking" } else { feasible.as_str() };
                    minimize_tracking(&ball, p, &parse_feasible(spec, ball.dim())?, &opts)?
                }
                None => {
                    let alpha = alpha.ok_or_else(|| anyhow!("--alpha is required"))?;
                    minimize_linear_gelbrich(&ball, alpha, &parse_feasible(&feasible, ball.dim())?, &opts)?
                }
            };
            report_optimization(&report)?;
        }
        Command::Backtest { data, p, rho_grid, out, weekly_out, window, block, index } => {
            let panel = load_returns_csv(&data)?;
            let cfg = BacktestConfig { window, block, rho_grid, p, index, ..Default::default() };
            let result = rolling_backtest(&panel, &cfg)?;
            match out {
                Some(path) => write_error_curve(&result, BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))?,
                None => write_error_curve(&result, io::stdout().lock())?,
            }
            if let Some(path) = weekly_out {
                write_weekly_errors(&result, BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))?;
            }
        }
        Command::Sdp { action: SdpAction::Export { problem, out } } => {
            let description: ProblemDescription = read_json(&problem, "problem")?;
            export_sdpa(&description.build()?, &out)?;
        }
        Command::Sdp { action: SdpAction::Solve { problem, tol, max_iter } } => {
            let program = load_problem(&problem)?;
            let mut settings = AdmmSettings::default();
            if let Some(t) = tol {
                if !(t > 0.0) {
                    bail!("--tol must be positive");
                }
                settings.tol = t;
            }
            if let Some(m) = max_iter {
                settings.max_iter = m;
            }
            let sol = admm_solve(&program, &settings)?;
            print_json(&SolveSummary {
                status: sol.status,
                primal_value: sol.primal_value,
                dual_value: sol.dual_value,
                primal_residual: sol.primal_residual,
                dual_residual: sol.dual_residual,
                iterations: sol.iterations,
            })?;
            if sol.status != SdpStatus::Optimal {
                return Err(NotConverged(format!("solver stopped with status {:?}", sol.status)).into());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NotConverged>().is_some() {
        return 3;
    }
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::SolverDidNotConverge { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scopf_core::bounds::run_bounds;
use scopf_core::caseio::{self, Sidecar};
use scopf_core::config::{BigMMode, Method, RunConfig};
use scopf_core::error::{BoundsError, CaseError, MethodError, ScreenError};
use scopf_core::methods::{respond_all, Outcome, RunReport, RunStatus};
use scopf_core::ptdf::{compute_ptdf, screen, write_ptdf_csv, PtdfBundle};
use scopf_core::PowerSystem;

const EXIT_FEASIBLE: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_LIMIT: u8 = 3;

/// Security-constrained DC optimal power flow with primary response.
#[derive(Debug, Parser)]
#[command(name = "scopf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a case with one method and write solution.json and convergence.csv.
    Solve(SolveArgs),
    /// Run the upper/lower bound monitor and write bounds.csv.
    Bounds(BoundsArgs),
    /// Screen a dispatch against every contingency and line limit.
    Screen(ScreenArgs),
    /// Write the PTDF matrix of a case as CSV.
    PtdfDump(PtdfArgs),
}

#[derive(Debug, Args)]
struct CaseArgs {
    /// MATPOWER case file.
    #[arg(long)]
    case: PathBuf,
    /// JSON with per-generator `capacity`/`gamma` overrides and an optional
    /// `contingencies` list.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Tuning {
    /// Response coefficient for units without an override.
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    #[arg(long, default_value_t = 5.0)]
    beta1: f64,
    #[arg(long, default_value_t = 1.2)]
    beta2: f64,
    /// Line violation tolerance, MW.
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Bisection tolerance, MW.
    #[arg(long, default_value_t = 1e-10)]
    eps_binary: f64,
    /// Relative MIP gap.
    #[arg(long, default_value_t = 0.005)]
    gap: f64,
    /// Relative MIP gap of the CCGA masters.
    #[arg(long, default_value_t = 1e-6)]
    master_gap: f64,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value_t = 0)]
    threads: u32,
    /// Single thread, fixed seed, logical clock in the logs.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// `per-generator` or `global`.
    #[arg(long, default_value = "per-generator")]
    big_m: BigMMode,
    /// Backend option as `name=value`; repeatable.
    #[arg(long = "solver-option", value_parser = parse_option)]
    solver_options: Vec<(String, String)>,
}

impl Tuning {
    fn config(&self, method: Method, p_schedule: Vec<f64>) -> RunConfig {
        RunConfig {
            gamma_default: self.gamma,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_violation_mw: self.eps,
            eps_binary_mw: self.eps_binary,
            mip_gap: self.gap,
            master_mip_gap: self.master_gap,
            method,
            p_schedule,
            time_limit_s: self.time_limit,
            big_m_mode: self.big_m,
            threads: self.threads,
            deterministic: self.deterministic,
            max_iterations: self.max_iterations,
            solver_options: self
                .solver_options
                .iter()
                .cloned()
                .collect::<BTreeMap<_, _>>(),
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, default_value = "ccga")]
    method: Method,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Percentages for the restricted runs.
    #[arg(long, value_delimiter = ',', default_value = "0,10,50")]
    p_schedule: Vec<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// JSON with `g` and optionally explicit `contingencies: [{contingency, g_s}]`.
    #[arg(long)]
    dispatch: PathBuf,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct PtdfArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, default_value = "ptdf.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
}

fn parse_option(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected name=value, got `{s}`"))
}

fn load_case(args: &CaseArgs, config: &RunConfig) -> Result<PowerSystem> {
    config.validate()?;
    let sidecar = match &args.sidecar {
        Some(path) => Sidecar::load(path)?,
        None => Sidecar::default(),
    };
    Ok(caseio::parse_case_with(&args.case, config, &sidecar)?)
}

fn exit_code(outcome: &Outcome) -> u8 {
    match outcome.report.status {
        RunStatus::Optimal if outcome.dispatch.as_ref().is_some_and(|d| d.feasible) => {
            EXIT_FEASIBLE
        }
        RunStatus::Optimal | RunStatus::Infeasible => EXIT_INFEASIBLE,
        RunStatus::TimeLimit | RunStatus::IterationLimit => EXIT_LIMIT,
    }
}

fn summary(report: &RunReport) -> String {
    format!(
        "{} {}: objective {:.4}, bound {:.4}, {} iterations, {} cuts, {} imported, {:.2} s",
        report.method,
        report.status.name(),
        report.objective,
        report.best_bound,
        report.iterations.len(),
        report.total_cuts,
        report.imported.len(),
        report.wall_s
    )
}

fn cmd_solve(args: &SolveArgs) -> Result<u8> {
    let config = args
        .tuning
        .config(args.method, RunConfig::default().p_schedule);
    let system = load_case(&args.case, &config)?;
    let outcome = scopf_core::solve(&system, &config)?;
    caseio::write_solution(&outcome.report, outcome.dispatch.as_ref(), &args.out)?;
    println!("{}", summary(&outcome.report));
    Ok(exit_code(&outcome))
}

fn cmd_bounds(args: &BoundsArgs) -> Result<u8> {
    let config = args.tuning.config(Method::Ccga, args.p_schedule.clone());
    let system = load_case(&args.case, &config)?;
    let trace = run_bounds(&system, &config)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let report = RunReport {
        iterations: trace.records(),
        ..RunReport::new("bounds")
    };
    write_text(
        &args.out.join("bounds.csv"),
        &caseio::convergence_csv(&report)?,
    )?;
    write_text(
        &args.out.join("bounds.json"),
        &serde_json::to_string_pretty(&trace)?,
    )?;
    for run in &trace.restricted {
        println!("p = {:>5}: {} {:.4}", run.p, run.status, run.objective);
    }
    println!(
        "p =   100: {} {:.4}",
        trace.full_status, trace.full_objective
    );
    println!(
        "lb {:.4} ub {:.4} final gap {:.6}",
        trace.lb, trace.ub, trace.final_gap
    );
    Ok(if trace.ub.is_finite() {
        EXIT_FEASIBLE
    } else {
        EXIT_INFEASIBLE
    })
}

fn cmd_screen(args: &ScreenArgs) -> Result<u8> {
    let config = args
        .tuning
        .config(Method::Ccga, RunConfig::default().p_schedule);
    let system = load_case(&args.case, &config)?;
    let dispatch = caseio::read_dispatch(&args.dispatch)?;
    if dispatch.g.len() != system.n_generators() {
        bail!(
            "dispatch has {} entries, the case has {} in-service generators",
            dispatch.g.len(),
            system.n_generators()
        );
    }
    let states: Vec<(usize, Vec<f64>)> = if dispatch.contingencies.is_empty() {
        let responses = respond_all(&system, &dispatch.g, config.eps_binary_mw);
        if let Some(r) = responses.iter().find(|r| !r.converged) {
            return Err(MethodError::ResponseInfeasible {
                contingency: r.contingency,
                residual_mw: r.imbalance_mw,
            }
            .into());
        }
        responses
            .into_iter()
            .map(|r| (r.contingency, r.g_s))
            .collect()
    } else {
        dispatch
            .contingencies
            .into_iter()
            .map(|e| (e.contingency, e.g_s))
            .collect()
    };
    let bundle = PtdfBundle::build(&system)?;
    let table = screen(&bundle, &states, config.eps_violation_mw)?;
    match &args.out {
        Some(path) => write_text(path, &table.to_tsv())?,
        None if table.is_empty() => println!("no violations"),
        None => print!("{}", table.to_tsv()),
    }
    Ok(EXIT_FEASIBLE)
}

fn cmd_ptdf(args: &PtdfArgs) -> Result<u8> {
    let config = RunConfig {
        gamma_default: args.gamma,
        ..RunConfig::default()
    };
    let system = load_case(&args.case, &config)?;
    write_ptdf_csv(&compute_ptdf(&system)?, &args.out)?;
    Ok(EXIT_FEASIBLE)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<CaseError>() {
        return match e {
            CaseError::InvalidConfig(_) => "invalid_config",
            CaseError::Io { .. } => "io",
            _ => "case",
        };
    }
    if err.downcast_ref::<BoundsError>().is_some() {
        return "invalid_config";
    }
    if err.downcast_ref::<ScreenError>().is_some() {
        return "screen";
    }
    if err.downcast_ref::<MethodError>().is_some() {
        return "method";
    }
    "error"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return ExitCode::from(EXIT_FEASIBLE);
        }
        Err(err) => {
            let body = serde_json::json!({
                "error": "usage",
                "message": err.to_string().trim_end(),
            });
            eprintln!("{body}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Screen(a) => cmd_screen(a),
        Command::PtdfDump(a) => cmd_ptdf(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let body = serde_json::json!({
                "error": error_kind(&err),
                "message": format!("{err:#}"),
            });
            eprintln!("{body}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

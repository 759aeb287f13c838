//! `convex-np`: solve testing problems, shortfall hedges and the built-in audit.

mod jobs;
mod text;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convex_np::{SolverOptions, Strategy};

use crate::jobs::Kind;

#[derive(Parser)]
#[command(name = "convex-np", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one or more testing problems.
    Solve(JobArgs),
    /// Solve one or more shortfall hedging problems.
    Hedge(JobArgs),
    /// Re-solve the built-in examples and compare with their stated values.
    Audit(AuditArgs),
}

#[derive(Args)]
struct Common {
    /// Certificate tolerance; the exit code is 0 only if every residual is within it.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value = "auto")]
    strategy: StrategyArg,
    /// Echoed into reports; the solver is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct JobArgs {
    /// JSON config file; repeat for several jobs.
    #[arg(long = "config", value_name = "PATH")]
    configs: Vec<PathBuf>,
    /// Built-in example; repeat for several jobs.
    #[arg(long = "example", value_name = "NAME")]
    examples: Vec<String>,
    /// Report file for a single job, directory for several.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Jobs run in parallel (default: available cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AuditArgs {
    /// JSON report of the audit table.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StrategyArg {
    Auto,
    Lp,
    Subgradient,
}

impl Common {
    fn options(&self) -> SolverOptions {
        let strategy = match self.strategy {
            StrategyArg::Auto => Strategy::Auto,
            StrategyArg::Lp => Strategy::Lp,
            StrategyArg::Subgradient => Strategy::Subgradient,
        };
        SolverOptions {
            strategy,
            tol: Some(self.tol),
            seed: self.seed,
            ..SolverOptions::default()
        }
    }

    fn check(&self) -> Result<(), String> {
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(format!("--tol must be positive, got {}", self.tol));
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve(args) => run_jobs(Kind::Solve, args),
        Command::Hedge(args) => run_jobs(Kind::Hedge, args),
        Command::Audit(args) => run_audit(args),
    };
    ExitCode::from(code)
}

fn run_jobs(kind: Kind, args: JobArgs) -> u8 {
    if let Err(e) = args.common.check() {
        eprintln!("error: {e}");
        return jobs::CONFIG_ERROR;
    }
    if args.configs.is_empty() && args.examples.is_empty() {
        eprintln!("error: give at least one --config or --example");
        return jobs::CONFIG_ERROR;
    }
    if args.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return jobs::CONFIG_ERROR;
    }
    let list = jobs::collect(&args.configs, &args.examples);
    let opts = args.common.options();
    let outcomes = jobs::run_all(kind, &list, &opts, args.common.tol, args.jobs);

    let mut codes = Vec::new();
    for (job, outcome) in list.iter().zip(&outcomes) {
        print!("{}", text::render(&job.label, outcome));
        codes.push(outcome.exit_code());
    }
    if let Some(out) = &args.out {
        if let Err(e) = jobs::write_all(out, &list, &outcomes) {
            eprintln!("error: writing {}: {e}", out.display());
            codes.push(jobs::CONFIG_ERROR);
        }
    }
    jobs::combine(&codes)
}

fn run_audit(args: AuditArgs) -> u8 {
    if let Err(e) = args.common.check() {
        eprintln!("error: {e}");
        return jobs::CONFIG_ERROR;
    }
    let opts = args.common.options();
    let table = convex_np::fixtures::audit(&opts, args.common.tol);
    print!("{}", text::audit(&table));
    if let Some(out) = &args.out {
        if let Err(e) = jobs::write_audit(out, &table, args.common.seed) {
            eprintln!("error: writing {}: {e}", out.display());
            return jobs::CONFIG_ERROR;
        }
    }
    if table.passed() {
        0
    } else {
        jobs::CERTIFICATE_FAILURE
    }
}

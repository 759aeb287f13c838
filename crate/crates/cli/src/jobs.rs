use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use convex_np::config::{parse_market, parse_problem};
use convex_np::fixtures::{fixture, AuditTable, Fixture};
use convex_np::report::{atom_rows, AtomRow, HedgeReport, SolveReport};
use convex_np::{solve, solve_shortfall, Error, MarketSpec, ProblemSpec, SolverOptions};
use rayon::prelude::*;
use serde::Serialize;

pub const CONFIG_ERROR: u8 = 2;
pub const SOLVER_FAILURE: u8 = 3;
pub const CERTIFICATE_FAILURE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Solve,
    Hedge,
}

#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Example(String),
}

#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub source: Source,
}

#[derive(Debug)]
pub enum Outcome {
    Solved {
        report: Box<SolveReport>,
        atoms: Vec<AtomRow>,
    },
    Hedged(Box<HedgeReport>),
    ConfigError(String),
    SolverFailure(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Solved { report, .. } if report.passed => 0,
            Outcome::Hedged(r) if r.passed => 0,
            Outcome::Solved { .. } | Outcome::Hedged(_) => CERTIFICATE_FAILURE,
            Outcome::ConfigError(_) => CONFIG_ERROR,
            Outcome::SolverFailure(_) => SOLVER_FAILURE,
        }
    }
}

/// Input problems map to exit code 2, numerical breakdowns to 3.
fn classify(e: Error) -> Outcome {
    match e {
        Error::NoConvergence { .. }
        | Error::SaddleViolation { .. }
        | Error::TrivialCase(_)
        | Error::StructureViolation(_)
        | Error::DegenerateBounds(_)
        | Error::LpInfeasible
        | Error::LpUnbounded
        | Error::DualityGap { .. } => Outcome::SolverFailure(e.to_string()),
        _ => Outcome::ConfigError(e.to_string()),
    }
}

/// Jobs in command-line order, configs first, with unique labels.
pub fn collect(configs: &[PathBuf], examples: &[String]) -> Vec<Job> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut unique = |base: String| {
        let n = seen.entry(base.clone()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base
        } else {
            format!("{base}-{n}")
        }
    };
    let mut jobs = Vec::new();
    for path in configs {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "config".into());
        jobs.push(Job {
            label: unique(stem),
            source: Source::File(path.clone()),
        });
    }
    for name in examples {
        jobs.push(Job {
            label: unique(name.clone()),
            source: Source::Example(name.clone()),
        });
    }
    jobs
}

fn load_problem(source: &Source) -> Result<ProblemSpec, Outcome> {
    match source {
        Source::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Outcome::ConfigError(format!("cannot read {}: {e}", path.display()))
            })?;
            parse_problem(&text).map_err(classify)
        }
        Source::Example(name) => match fixture(name).map_err(classify)? {
            Fixture::Problem(spec) => Ok(spec),
            Fixture::Market(_) => Err(Outcome::ConfigError(format!(
                "example `{name}` is a market; run it with `hedge`"
            ))),
        },
    }
}

fn load_market(source: &Source) -> Result<MarketSpec, Outcome> {
    match source {
        Source::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Outcome::ConfigError(format!("cannot read {}: {e}", path.display()))
            })?;
            parse_market(&text).map_err(classify)
        }
        Source::Example(name) => match fixture(name).map_err(classify)? {
            Fixture::Market(market) => Ok(market),
            Fixture::Problem(_) => Err(Outcome::ConfigError(format!(
                "example `{name}` is a testing problem; run it with `solve`"
            ))),
        },
    }
}

fn run_one(kind: Kind, job: &Job, opts: &SolverOptions, tol: f64) -> Outcome {
    let run = || -> Result<Outcome, Outcome> {
        match kind {
            Kind::Solve => {
                let spec = load_problem(&job.source)?;
                let sol = solve(&spec, opts).map_err(classify)?;
                let atoms = atom_rows(&spec, &sol);
                let report = SolveReport::new(&spec, sol, tol, opts.seed);
                Ok(Outcome::Solved {
                    report: Box::new(report),
                    atoms,
                })
            }
            Kind::Hedge => {
                let market = load_market(&job.source)?;
                let result = solve_shortfall(&market, opts).map_err(classify)?;
                let report = HedgeReport::new(&market, result, tol, opts.seed);
                Ok(Outcome::Hedged(Box::new(report)))
            }
        }
    };
    run().unwrap_or_else(|e| e)
}

/// Runs every job, in parallel on `threads` workers; results keep job order.
pub fn run_all(
    kind: Kind,
    jobs: &[Job],
    opts: &SolverOptions,
    tol: f64,
    threads: Option<usize>,
) -> Vec<Outcome> {
    let work = || {
        jobs.par_iter()
            .map(|job| run_one(kind, job, opts, tol))
            .collect()
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(work),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running serially");
            jobs.iter()
                .map(|job| run_one(kind, job, opts, tol))
                .collect()
        }
    }
}

/// Configuration errors first, then solver failures, then certificate failures.
pub fn combine(codes: &[u8]) -> u8 {
    [CONFIG_ERROR, SOLVER_FAILURE, CERTIFICATE_FAILURE]
        .into_iter()
        .find(|c| codes.contains(c))
        .unwrap_or(0)
}

#[derive(Serialize)]
struct FailedJob<'a> {
    label: &'a str,
    status: &'a str,
    error: &'a str,
}

#[derive(Serialize)]
struct HedgeAtom {
    atom_index: usize,
    st: f64,
    claim: f64,
    xt_star: f64,
}

fn to_io(e: impl std::error::Error + Send + Sync + 'static) -> io::Error {
    io::Error::other(e)
}

fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(to_io)?;
    text.push('\n');
    fs::write(path, text)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    for row in rows {
        w.serialize(row).map_err(to_io)?;
    }
    w.flush()
}

/// CSV companion of a JSON report path.
fn csv_path(json: &Path) -> PathBuf {
    let csv = json.with_extension("csv");
    if csv == json {
        json.with_extension("atoms.csv")
    } else {
        csv
    }
}

fn write_one(json: &Path, job: &Job, outcome: &Outcome) -> io::Result<()> {
    match outcome {
        Outcome::Solved { report, atoms } => {
            write_json(json, report)?;
            write_csv(&csv_path(json), atoms)
        }
        Outcome::Hedged(report) => {
            write_json(json, report)?;
            let m = &report.market;
            let rows: Vec<HedgeAtom> = (0..m.st.len())
                .map(|i| HedgeAtom {
                    atom_index: i,
                    st: m.st[i],
                    claim: m.claim[i],
                    xt_star: report.result.xt_star.values()[i],
                })
                .collect();
            write_csv(&csv_path(json), &rows)
        }
        Outcome::ConfigError(e) | Outcome::SolverFailure(e) => {
            let status = if matches!(outcome, Outcome::ConfigError(_)) {
                "config_error"
            } else {
                "solver_failure"
            };
            write_json(
                json,
                &FailedJob {
                    label: &job.label,
                    status,
                    error: e,
                },
            )
        }
    }
}

/// A single job writes `out` (JSON) next to its CSV; several jobs write
/// `<label>.json` and `<label>.csv` inside the directory `out`.
pub fn write_all(out: &Path, jobs: &[Job], outcomes: &[Outcome]) -> io::Result<()> {
    if let [job] = jobs {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        return write_one(out, job, &outcomes[0]);
    }
    fs::create_dir_all(out)?;
    for (job, outcome) in jobs.iter().zip(outcomes) {
        write_one(&out.join(format!("{}.json", job.label)), job, outcome)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AuditFile<'a> {
    seed: u64,
    passed: bool,
    #[serde(flatten)]
    table: &'a AuditTable,
}

pub fn write_audit(out: &Path, table: &AuditTable, seed: u64) -> io::Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_json(
        out,
        &AuditFile {
            seed,
            passed: table.passed(),
            table,
        },
    )?;
    write_csv(&csv_path(out), &table.rows)
}

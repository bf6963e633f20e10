//! Command-line front end: workload generation, trace ingestion, single
//! runs, the exact and LP oracles, experiment sweeps, and schedule audits.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use parasched::baselines::{run_baseline, BaselineKind, BaselineSpec};
use parasched::harness::{run_experiment, write_decision_log, ExperimentSpec};
use parasched::model::{InstanceCatalog, Job, Outcome, Schedule, SimConfig, TypeSpec};
use parasched::online::{self, CostBase};
use parasched::oracle::{
    audit_schedule, lp_upper_bound, solve_exact, AuditMode, OracleLimits, Pruning,
};
use parasched::workload::{
    gen_synthetic, ingest_trace, read_workload_file, write_workload, GenSpec, TraceMapping,
};
use parasched::{Error, Result};

#[derive(Parser)]
#[command(
    name = "parasched",
    about = "Market-oriented scheduling of parallel jobs on purchased cloud instances",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic workload from a TOML generator spec.
    Gen {
        /// Generator spec (TOML, GenSpec fields).
        spec: PathBuf,
        /// Workload file to write; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Convert a delimited trace into a workload file.
    Ingest {
        /// Trace file.
        trace: PathBuf,
        /// Column mapping (TOML, TraceMapping fields).
        mapping: PathBuf,
        /// Workload file to write; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run one scheduler over a workload and report its outcome.
    Run {
        /// Workload file.
        workload: PathBuf,
        /// Simulator config (TOML: a [config] table, optional [[catalog]]).
        #[arg(long)]
        config: PathBuf,
        /// online, pd_small, pd_large, edf, equal_opp, ontapra, or dynalloc.
        #[arg(long, default_value = "online")]
        algo: String,
        /// Cost accounting for the online estimate: committed or all_arrived.
        #[arg(long, default_value = "committed")]
        cost_base: String,
        /// Write the per-job decision log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the resulting schedule here.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Solve a small instance exactly and bound it from above with the LP.
    Oracle {
        /// Workload file.
        workload: PathBuf,
        /// Simulator config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Skip the exact solver and report only the LP bound.
        #[arg(long)]
        lp_only: bool,
        /// Disable the optimistic pruning bound (same answer, slower).
        #[arg(long)]
        no_prune: bool,
        /// Refuse LPs with more variables than this.
        #[arg(long, default_value_t = 2_000)]
        lp_var_cap: usize,
        /// Write the optimal schedule here.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Run a full sweep from a spec file or a built-in preset.
    Experiment {
        /// Spec file (TOML, ExperimentSpec fields).
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// Built-in preset: exp1, exp2, exp3, exp4, or exp5.
        #[arg(long)]
        preset: Option<String>,
        /// Directory for results.csv and the plot-data files.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Print the spec as TOML instead of running it.
        #[arg(long)]
        dump: bool,
    },
    /// Check a schedule file against every scheduling constraint.
    Audit {
        /// Schedule file.
        schedule: PathBuf,
        /// Workload file the schedule refers to.
        workload: PathBuf,
        /// Simulator config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Audit against a fixed fleet, e.g. "4,2,1,1" per type, instead of
        /// lifetime-limited purchases.
        #[arg(long)]
        fixed_caps: Option<String>,
    },
}

/// Simulator config file: a `[config]` table and an optional `[[catalog]]`
/// array; the four-type default catalog applies when omitted.
#[derive(Deserialize)]
struct RunConfigFile {
    config: SimConfig,
    #[serde(default)]
    catalog: Option<Vec<TypeSpec>>,
}

fn read_run_config(path: &Path) -> Result<(SimConfig, InstanceCatalog)> {
    let text = fs::read_to_string(path)?;
    let file: RunConfigFile =
        toml::from_str(&text).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    let catalog = match file.catalog {
        Some(specs) => InstanceCatalog::new(&specs)?,
        None => InstanceCatalog::default_four(),
    };
    file.config.validate()?;
    Ok((file.config, catalog))
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn print_outcome(algo: &str, outcome: &Outcome) {
    println!("algo {algo}");
    println!("accepted {}", outcome.accepted);
    println!("rejected {}", outcome.rejected);
    println!("revenue {:.6}", outcome.revenue);
    println!("satisfaction {:.6}", outcome.satisfaction);
    println!("objective {:.6}", outcome.objective);
    println!("payment {:.6}", outcome.total_payment);
    println!("cost {:.6}", outcome.total_cost);
    println!("wall_s {:.6}", outcome.wall_time_s);
}

fn baseline_kind(name: &str) -> Option<BaselineKind> {
    BaselineKind::all().into_iter().find(|k| k.name() == name)
}

fn run_one(
    algo: &str,
    cost_base: &str,
    jobs: &[Job],
    config: &SimConfig,
    catalog: &InstanceCatalog,
) -> Result<(Schedule, Outcome)> {
    if algo == "online" {
        let base = match cost_base {
            "committed" => CostBase::Committed,
            "all_arrived" => CostBase::AllArrived,
            other => {
                return Err(Error::Validation(format!(
                    "unknown cost base {other}; use committed or all_arrived"
                )))
            }
        };
        return online::run_with(config, catalog, jobs, base);
    }
    let Some(kind) = baseline_kind(algo) else {
        return Err(Error::Validation(format!("unknown algorithm {algo}")));
    };
    let mut spec = BaselineSpec::with_demand_capacity(kind, jobs, catalog, config.t_slots);
    spec.seed = config.seed;
    run_baseline(&spec, jobs, config, catalog)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Gen { spec, out } => {
            let gen: GenSpec = read_toml(&spec)?;
            let jobs = gen_synthetic(&gen)?;
            eprintln!("generated {} jobs over {} arrival slots", jobs.len(), gen.t_slots);
            write_or_print(&out, &write_workload(&jobs))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Ingest { trace, mapping, out } => {
            let mapping: TraceMapping = read_toml(&mapping)?;
            let result = ingest_trace(&trace, &mapping)?;
            eprintln!(
                "ingested {} jobs, dropped {} rows past slot {}",
                result.jobs.len(),
                result.dropped,
                mapping.t_slots
            );
            write_or_print(&out, &write_workload(&result.jobs))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run { workload, config, algo, cost_base, log, schedule } => {
            let jobs = read_workload_file(&workload)?;
            let (cfg, catalog) = read_run_config(&config)?;
            let (sched, outcome) = run_one(&algo, &cost_base, &jobs, &cfg, &catalog)?;
            if let Some(path) = log {
                write_decision_log(&path, &algo, &outcome.records)?;
            }
            if let Some(path) = schedule {
                fs::write(&path, sched.to_text())?;
            }
            print_outcome(&algo, &outcome);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Oracle { workload, config, lp_only, no_prune, lp_var_cap, schedule } => {
            let jobs = read_workload_file(&workload)?;
            let (cfg, catalog) = read_run_config(&config)?;
            let lp = match lp_upper_bound(&jobs, &cfg, &catalog, lp_var_cap) {
                Ok(v) => {
                    println!("lp_bound {v:.6}");
                    Some(v)
                }
                Err(Error::LimitsExceeded(msg)) => {
                    println!("lp_bound NA ({msg})");
                    None
                }
                Err(e) => return Err(e),
            };
            if lp_only {
                return Ok(if lp.is_some() { ExitCode::SUCCESS } else { ExitCode::from(3) });
            }
            let pruning = if no_prune { Pruning::Off } else { Pruning::On };
            let sol = solve_exact(&jobs, &cfg, &catalog, &OracleLimits::default(), pruning)?;
            println!("exact_objective {:.6}", sol.outcome.objective);
            println!("exact_revenue {:.6}", sol.outcome.revenue);
            println!("exact_satisfaction {:.6}", sol.outcome.satisfaction);
            println!("proved_optimal {}", sol.proved_optimal);
            if let Some(path) = schedule {
                fs::write(&path, sol.schedule.to_text())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Experiment { spec, preset, out, dump } => {
            let spec = match (spec, preset) {
                (Some(path), _) => ExperimentSpec::read_file(&path)?,
                (None, Some(id)) => ExperimentSpec::preset(&id).ok_or_else(|| {
                    Error::Validation(format!("no preset named {id}; use exp1..exp5"))
                })?,
                (None, None) => {
                    return Err(Error::Validation("pass --spec FILE or --preset ID".into()))
                }
            };
            if dump {
                print!("{}", spec.to_toml()?);
                return Ok(ExitCode::SUCCESS);
            }
            let result = run_experiment(&spec, &out)?;
            eprintln!("wrote {} rows across {} files in {}", result.rows.len(), result.files.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Audit { schedule, workload, config, fixed_caps } => {
            let text = fs::read_to_string(&schedule)?;
            let sched = Schedule::from_text(&text)?;
            let jobs = read_workload_file(&workload)?;
            let (cfg, _) = read_run_config(&config)?;
            let mode = match fixed_caps {
                Some(caps) => {
                    let caps: Vec<u64> = caps
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<u64>().map_err(|e| Error::Parse {
                                line: 0,
                                msg: format!("bad capacity {s}: {e}"),
                            })
                        })
                        .collect::<Result<_>>()?;
                    AuditMode::FixedCapacity(caps)
                }
                None => AuditMode::Dynamic,
            };
            let report = audit_schedule(&sched, &jobs, &cfg, &mode)?;
            print!("{report}");
            if report.pass() {
                println!();
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }
    }
}

fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::Validation(_)
        | Error::Range(_)
        | Error::Ordering(_)
        | Error::Parse { .. }
        | Error::Io(_) => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes, like any other filter.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

//! `pcar`: run simulated studies, rebuild reports from saved logs, check the
//! learner against the exhaustive planner, and sweep config parameters.
//!
//! Failures print one line to stderr,
//! `error kind=<kind> message=<json string>`, and exit nonzero.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcar_core::study::{
    oracle_check, parse_values, run_study, sweep, sweep_csv, write_report, InstanceReward, OracleCheck, StudyConfig,
    StudyLog,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pcar", version, about = "Simulated personalized micro-intervention studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a study and write its log and report files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild report files from a saved log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare PCAR with the brute-force optimum on a synthetic instance.
    Oracle {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        tau_max: u32,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 5000)]
        episodes: usize,
    },
    /// Run one study per value of a config parameter and write a comparison CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path into the config, e.g. `agent.lambda` or `seed`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, each parsed as JSON when possible.
        #[arg(long)]
        values: String,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<pcar_core::Error> for Failure {
    fn from(e: pcar_core::Error) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn run(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = StudyConfig::load(config)?;
    let log = run_study(&cfg)?;
    let violations = log.violations(&cfg.budget);
    if let Some(first) = violations.first() {
        return Err(Failure {
            kind: "budget-violation",
            message: format!("{} violations, first: {first}", violations.len()),
        });
    }
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    write_file(&out.join("config.json"), &(cfg.to_json()? + "\n"))?;
    log.save(out.join("log.json"))?;
    write_report(&log, out)?;
    let f = log.funnel();
    println!(
        "{}",
        json!({
            "log": out.join("log.json"),
            "log_hash": log.hash()?,
            "config_hash": log.metadata.config_hash,
            "initiated": f.initiated,
            "accepted": f.accepted,
            "completed": f.completed,
        })
    );
    Ok(())
}

fn report(log: &Path, out: &Path) -> Result<(), Failure> {
    let log = StudyLog::load(log)?;
    let files = write_report(&log, out)?;
    println!("{}", serde_json::to_string(&files).map_err(pcar_core::Error::from)?);
    Ok(())
}

fn oracle(check: OracleCheck) -> Result<(), Failure> {
    let r = oracle_check(&check)?;
    let fractions: Vec<f64> = r.outcomes.iter().map(|o| o.fraction).collect();
    println!(
        "{}",
        json!({
            "optimal_total": r.optimal_total,
            "optimal_sequence": r.optimal_sequence,
            "fractions": fractions,
            "passing_seeds": r.passing_seeds,
            "needed_seeds": r.needed_seeds,
            "pass": r.pass,
        })
    );
    if r.pass {
        Ok(())
    } else {
        Err(Failure {
            kind: "oracle-check-failed",
            message: format!(
                "{}/{} seeds reached {:.0}% of optimal, {} needed",
                r.passing_seeds,
                check.seeds,
                100.0 * check.target,
                r.needed_seeds
            ),
        })
    }
}

fn run_sweep(config: &Path, param: &str, values: &str, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = StudyConfig::load(config)?;
    let rows = sweep(&cfg, param, &parse_values(values))?;
    let csv = sweep_csv(&rows)?;
    match out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("error kind=usage message={}", json!(first));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run { config, out } => run(&config, &out),
        Command::Report { log, out } => report(&log, &out),
        Command::Oracle {
            k,
            tau_max,
            horizon,
            seeds,
            episodes,
        } => oracle(OracleCheck {
            arms: k,
            tau_max,
            horizon,
            seeds,
            episodes,
            reward: InstanceReward::default(),
            ..OracleCheck::default()
        }),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => run_sweep(&config, &param, &values, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error kind={} message={}", f.kind, json!(f.message));
            ExitCode::FAILURE
        }
    }
}

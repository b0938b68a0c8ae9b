//! Command-line front end: run scenarios, verify oracles, study rates,
//! and re-derive the energy inequality from recorded artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::evolution::{check_energy_inequality, run_evolution};
use crate::io::{self, RunManifest};
use crate::scenario::Scenario;
use crate::verify;
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fracture-field",
    version,
    about = "Quasi-static phase-field fracture on the unit square"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace, snapshots, and manifest.
    Run(RunArgs),
    /// Run the oracle suites and print one pass/fail line per check.
    Verify {
        /// One of: mesh, fem, energy, solvers, evolution, all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Print the interpolation-error decay table and fitted slopes.
    RateStudy {
        /// Comma-separated mesh resolutions.
        #[arg(long = "h-list", value_delimiter = ',', default_value = "8,16,32")]
        h_list: Vec<usize>,
    },
    /// Recompute the per-step energy inequality from a recorded run.
    CheckInequality {
        /// Output directory of a run recorded with --snapshots 1.
        run_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario description file (JSON).
    #[arg(conflicts_with = "builtin")]
    scenario: Option<PathBuf>,
    /// Use a built-in experiment: example1, example2, or example3.
    #[arg(long)]
    builtin: Option<String>,
    /// Override the mesh resolution.
    #[arg(long)]
    h: Option<usize>,
    /// Override the load step.
    #[arg(long)]
    tau: Option<f64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write a field snapshot every k-th step (0 disables).
    #[arg(long)]
    snapshots: Option<usize>,
}

/// Entry point used by the binary; parses the process arguments.
pub fn main() -> ExitCode {
    run_cli(Cli::parse())
}

fn run_cli(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify { suite } => cmd_verify(&suite),
        Command::RateStudy { h_list } => cmd_rate_study(&h_list),
        Command::CheckInequality { run_dir } => cmd_check_inequality(&run_dir),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut scenario = match (&args.scenario, &args.builtin) {
        (Some(path), None) => Scenario::from_json_file(path)?,
        (None, Some(name)) => Scenario::builtin(name)?,
        (None, None) => {
            return Err(Error::InvalidScenario(
                "provide a scenario file or --builtin NAME".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("rejected during argument parsing"),
    };
    if let Some(h) = args.h {
        scenario.mesh_h = h;
    }
    if let Some(tau) = args.tau {
        scenario.tau = tau;
    }
    if let Some(k) = args.snapshots {
        scenario.output.snapshot_every = k;
    }
    scenario.validate()?;
    println!(
        "running {}: h={}, tau={}, {} steps",
        if scenario.name.is_empty() { "scenario" } else { &scenario.name },
        scenario.mesh_h,
        scenario.tau,
        scenario.n_steps()
    );
    let result = run_evolution(&scenario)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_run(&args.out, &scenario, &result)?;
    let trace = &result.trace;
    println!("wrote {} steps to {}", trace.records.len(), args.out.display());
    if let Some(t) = trace.break_time() {
        println!("elastic energy collapsed near t = {t:.3}");
    }
    if trace.stopped_early {
        println!("stopped early after the collapse persisted");
    }
    if let Some(reason) = &trace.aborted {
        eprintln!("run aborted: {reason}");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: &str) -> Result<ExitCode> {
    let reports = verify::run_suite(suite)?;
    let mut failed = 0usize;
    for report in &reports {
        println!("{report}");
        if !report.pass {
            failed += 1;
        }
    }
    println!("{} of {} checks passed", reports.len() - failed, reports.len());
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_rate_study(h_list: &[usize]) -> Result<ExitCode> {
    let rows = verify::rate_rows(h_list)?;
    println!(
        "{:>6} {:>14} {:>14} {:>14}",
        "h", "ramp-square", "sine-square", "bump-compl"
    );
    for row in &rows {
        println!(
            "{:>6} {:>14.6e} {:>14.6e} {:>14.6e}",
            row.h, row.ramp_square, row.sine_square, row.bump_complement
        );
    }
    let reports = verify::rate_reports(&rows)?;
    let mut failed = 0usize;
    for report in &reports {
        println!("{report}");
        if !report.pass {
            failed += 1;
        }
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_check_inequality(run_dir: &Path) -> Result<ExitCode> {
    let manifest = RunManifest::load(run_dir)?;
    if manifest.scenario.output.snapshot_every != 1 {
        return Err(Error::MissingArtifact(
            "per-step snapshots are required; record the run with --snapshots 1".into(),
        ));
    }
    let trace_digest = io::file_sha256(&run_dir.join("trace.csv"))?;
    if trace_digest != manifest.trace_sha256 {
        return Err(Error::MalformedArtifact(format!(
            "trace.csv checksum {trace_digest} does not match the manifest"
        )));
    }
    let mesh = manifest.scenario.build_mesh()?;
    let mut states = Vec::with_capacity(manifest.snapshots.len());
    for name in &manifest.snapshots {
        let snapshot = io::read_snapshot(&run_dir.join(name))?;
        states.push(snapshot.to_fields(&mesh)?);
    }
    let slacks = check_energy_inequality(&manifest.scenario, &mesh, &states)?;
    let min = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "energy inequality holds across {} steps (min slack {:.3e})",
        slacks.len(),
        min
    );
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_run_with_builtin() {
        let cli = Cli::try_parse_from([
            "fracture-field",
            "run",
            "--builtin",
            "example1",
            "--h",
            "16",
            "--out",
            "somewhere",
        ])
        .unwrap();
        match cli.command {
            Command::Run(args) => {
                assert_eq!(args.builtin.as_deref(), Some("example1"));
                assert_eq!(args.h, Some(16));
                assert_eq!(args.out, PathBuf::from("somewhere"));
                assert!(args.scenario.is_none());
            }
            _ => panic!("expected run"),
        }
    }

    #[test]
    fn rejects_scenario_file_combined_with_builtin() {
        let res = Cli::try_parse_from([
            "fracture-field",
            "run",
            "custom.json",
            "--builtin",
            "example1",
        ]);
        assert!(res.is_err());
    }

    #[test]
    fn parses_rate_study_list() {
        let cli =
            Cli::try_parse_from(["fracture-field", "rate-study", "--h-list", "4,8,16"]).unwrap();
        match cli.command {
            Command::RateStudy { h_list } => assert_eq!(h_list, vec![4, 8, 16]),
            _ => panic!("expected rate-study"),
        }
    }

    #[test]
    fn run_without_source_is_an_error() {
        let cli = Cli::try_parse_from(["fracture-field", "run"]).unwrap();
        match dispatch(cli) {
            Err(Error::InvalidScenario(msg)) => assert!(msg.contains("--builtin")),
            other => panic!("expected scenario error, got {other:?}"),
        }
    }
}

//! `ior`: run scenarios, re-verify journals, and produce propagation,
//! trust and authorization reports.
//!
//! Exit codes: 0 ok, 1 a check or expectation failed, 2 bad input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use ior_core::propagation::{compare, ComparisonReport, GossipConfig, GossipMode};
use ior_core::rights::demo::abc_walkthrough;
use ior_core::scenario::{run_scenario, verify_journal_detailed, write_outputs, ReportFormat, ScenarioError};
use ior_core::trust::TrustFixture;

#[derive(Parser)]
#[command(name = "ior", version, about = "Multi-chain rights ledger toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Relay,
    Synchronous,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and check its expectations.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Replaces the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write journal.jsonl, report.json and the reports.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Replay a journal and re-check every signature and rollup commitment.
    Verify {
        #[arg(long)]
        journal: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Compare simulated gossip rounds with the closed-form model.
    Propagation {
        /// Network size; repeat for several rows.
        #[arg(long, required = true, num_args = 1..)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        lambda: u32,
        /// Initial informed fraction. Defaults to ceil(N/100)/N.
        #[arg(long)]
        i0: Option<f64>,
        /// Per-call delay factor.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Mode::Relay)]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Evaluate a trust fixture into a trust matrix.
    Trust {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Walk through A -> B (grant), B -> F (derive), F -> C (grant) and
    /// print C's provenance.
    AuthzDemo {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| input(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(scenario: &Path, seed: Option<u64>, out_dir: Option<&Path>, format: Format) -> Result<(), CliError> {
    let report = run_scenario(scenario, seed).map_err(|e| match e {
        ScenarioError::StepFailed { .. } => CliError::Failed(e.to_string()),
        other => input(other),
    })?;
    println!(
        "scenario {} (seed {}): {} steps, {} expectations, total value {}",
        report.name,
        report.seed,
        report.steps.len(),
        report.expectations.len(),
        report.total_value
    );
    if let Some(dir) = out_dir {
        for path in write_outputs(&report, dir, format.into()).map_err(input)? {
            println!("wrote {}", path.display());
        }
    }
    let failures = report.failures();
    for f in &failures {
        println!("FAIL {f}");
    }
    if failures.is_empty() && report.passed {
        println!("PASS");
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} failure(s)", failures.len())))
    }
}

fn verify(journal: &Path, format: Option<Format>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(journal).map_err(|e| input(format!("reading {}: {e}", journal.display())))?;
    let verdict = verify_journal_detailed(&text).map_err(input)?;
    match format {
        Some(Format::Json) => println!("{}", serde_json::to_string_pretty(&verdict).expect("verdict serializes")),
        _ => {
            println!(
                "{} chains, {} blocks, {} transactions, {} rollups",
                verdict.chains, verdict.blocks, verdict.transactions, verdict.rollups
            );
            for p in &verdict.problems {
                println!("problem: {p}");
            }
            println!("{}", if verdict.ok() { "valid" } else { "INVALID" });
        }
    }
    if verdict.ok() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} problem(s) in journal", verdict.problems.len())))
    }
}

#[allow(clippy::too_many_arguments)]
fn propagation(
    ns: &[usize],
    lambda: u32,
    i0: Option<f64>,
    p: f64,
    trials: usize,
    seed: u64,
    mode: Mode,
    out: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    let mut rows: Vec<ComparisonReport> = Vec::new();
    for &n in ns {
        let mut cfg = GossipConfig::new(n, lambda, i0.unwrap_or(n.div_ceil(100) as f64 / n.max(1) as f64), p, seed);
        cfg.mode = match mode {
            Mode::Relay => GossipMode::Relay,
            Mode::Synchronous => GossipMode::Synchronous,
        };
        cfg.validate().map_err(input)?;
        rows.push(compare(&cfg, trials).map_err(input)?);
    }
    let text = match format {
        Format::Csv => ComparisonReport::to_csv(&rows),
        Format::Json => serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
    };
    emit(&text, out)
}

fn trust(fixture: &Path, out: Option<&Path>, format: Format) -> Result<(), CliError> {
    let eval = TrustFixture::load(fixture).map_err(input)?.evaluate().map_err(input)?;
    let text = match format {
        Format::Csv => eval.matrix.to_csv(),
        Format::Json => serde_json::to_string_pretty(&eval).expect("evaluation serializes") + "\n",
    };
    emit(&text, out)
}

fn authz_demo(seed: u64, format: Option<Format>) -> Result<(), CliError> {
    let w = abc_walkthrough(seed).map_err(|e| CliError::Failed(e.to_string()))?;
    let text = match format {
        None => w.to_text(),
        Some(Format::Json) => w.to_json() + "\n",
        Some(Format::Csv) => {
            let mut s = String::from("from,to,kind,authorizers\n");
            for e in &w.path {
                s.push_str(&format!("{},{},{:?},{}\n", e.from, e.to, e.kind, e.authorizers.join("+")));
            }
            s
        }
    };
    emit(&text, None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, seed, out_dir, format } => run(scenario, *seed, out_dir.as_deref(), *format),
        Command::Verify { journal, format } => verify(journal, *format),
        Command::Propagation { n, lambda, i0, p, trials, seed, mode, out, format } => {
            propagation(n, *lambda, *i0, *p, *trials, *seed, *mode, out.as_deref(), *format)
        }
        Command::Trust { fixture, out, format } => trust(fixture, out.as_deref(), *format),
        Command::AuthzDemo { seed, format } => authz_demo(*seed, *format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ior: {e}");
            ExitCode::from(e.code())
        }
    }
}

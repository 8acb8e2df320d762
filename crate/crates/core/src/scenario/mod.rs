//! Scenario runner: builds a fresh multi-chain network from a scenario
//! file, executes its steps in order, checks its expectations and emits a
//! journal plus reports.

mod report;
mod run;
mod schema;
mod verify;

pub use report::{emit_report, render_report, write_outputs, ChainSummary, ReportError, ReportFormat, ReportKind, RunReport};
pub use run::{run, run_scenario, ExpectationResult, StepRecord};
pub use schema::{
    Action, AuthExpect, AuthMode, ChainSpec, Expectation, IssueSpec, KeySpec, Outcome, OutputSpec, RightsSpec,
    Scenario, Step, SCENARIO_VERSION,
};
pub use verify::{verify_journal, verify_journal_detailed, JournalVerdict};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("unsupported scenario version {0}")]
    Version(u32),
    #[error("{} refers to undeclared `{name}`", step.map(|s| format!("step {s}")).unwrap_or("scenario".into()))]
    Reference { step: Option<usize>, name: String },
    #[error("name `{0}` bound twice")]
    Duplicate(String),
    #[error("key `{0}`: {1}")]
    Key(String, &'static str),
    #[error("network setup failed: {0}")]
    Setup(String),
    #[error("step {step} failed: {reason}")]
    StepFailed { step: usize, reason: String },
    #[error("journal is corrupt: {0}")]
    CorruptJournal(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

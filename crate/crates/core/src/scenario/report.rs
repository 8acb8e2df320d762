//! Run reports and the files emitted from them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::run::{ExpectationResult, StepRecord};
use crate::ledger::{ChainState, Journal, Supply};
use crate::model::ChainId;
use crate::propagation::ComparisonReport;
use crate::rights::{audit_csv, AuditRow};
use crate::trust::{ReputationRecord, TrustEvaluation};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainSummary {
    pub chain_id: ChainId,
    pub height: u64,
    pub tip: String,
    pub blocks: usize,
    pub supply: Supply,
    pub utxo_digest: String,
}

impl ChainSummary {
    pub fn of(c: &ChainState) -> Self {
        ChainSummary {
            chain_id: c.chain_id(),
            height: c.height(),
            tip: c.tip().to_hex(),
            blocks: c.tree().blocks().count(),
            supply: c.supply(),
            utxo_digest: c.utxo_digest().to_hex(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub passed: bool,
    pub total_value: u64,
    pub steps: Vec<StepRecord>,
    pub expectations: Vec<ExpectationResult>,
    pub chains: Vec<ChainSummary>,
    /// Bound UTXO names as `chain:id`.
    pub utxos: BTreeMap<String, String>,
    pub propagation: Vec<ComparisonReport>,
    pub trust: Option<TrustEvaluation>,
    pub audit: Vec<AuditRow>,
    pub reputation: Vec<ReputationRecord>,
    #[serde(skip)]
    pub journal: Journal,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn failures(&self) -> Vec<String> {
        let steps = self.steps.iter().filter(|s| !s.passed).map(|s| {
            format!("step {} ({}): expected {:?}, got {:?}: {}", s.index, s.op, s.expected, s.outcome, s.detail)
        });
        let checks = self
            .expectations
            .iter()
            .filter(|e| !e.passed)
            .map(|e| format!("expectation {}: {}", e.index, e.detail));
        steps.chain(checks).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Trust,
    Propagation,
    Audit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("the run produced nothing for a {0:?} report")]
    NothingToReport(ReportKind),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn write(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Renders one report kind.
pub fn render_report(report: &RunReport, kind: ReportKind, format: ReportFormat) -> Result<String, ReportError> {
    let text = match kind {
        ReportKind::Trust => {
            let ev = report.trust.as_ref().ok_or(ReportError::NothingToReport(kind))?;
            match format {
                ReportFormat::Csv => ev.matrix.to_csv(),
                ReportFormat::Json => pretty(ev),
            }
        }
        ReportKind::Propagation => {
            if report.propagation.is_empty() {
                return Err(ReportError::NothingToReport(kind));
            }
            match format {
                ReportFormat::Csv => ComparisonReport::to_csv(&report.propagation),
                ReportFormat::Json => pretty(&report.propagation),
            }
        }
        ReportKind::Audit => {
            if report.audit.is_empty() {
                return Err(ReportError::NothingToReport(kind));
            }
            match format {
                ReportFormat::Csv => audit_csv(&report.audit),
                ReportFormat::Json => pretty(&report.audit),
            }
        }
    };
    Ok(text)
}

pub fn emit_report(report: &RunReport, kind: ReportKind, format: ReportFormat, out: &Path) -> Result<(), ReportError> {
    write(out, &render_report(report, kind, format)?)
}

/// Writes `journal.jsonl`, `report.json` and whichever of `trust`,
/// `propagation` and `audit` the run produced. Returns the written paths.
pub fn write_outputs(report: &RunReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.display().to_string(), source })?;
    let mut written = Vec::new();
    let journal = dir.join("journal.jsonl");
    write(&journal, &report.journal.to_jsonl())?;
    written.push(journal);
    let summary = dir.join("report.json");
    write(&summary, &report.to_json())?;
    written.push(summary);
    for (kind, stem) in [(ReportKind::Trust, "trust"), (ReportKind::Propagation, "propagation"), (ReportKind::Audit, "audit")] {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        match emit_report(report, kind, format, &path) {
            Ok(()) => written.push(path),
            Err(ReportError::NothingToReport(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(written)
}

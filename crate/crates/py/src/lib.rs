//! Python bindings for the multi-chain rights ledger.
//!
//! Structured results (reports, walkthroughs, evaluations) are handed to
//! Python as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

use ior_core::codec::{decode_signature, encode_signature};
use ior_core::crypto::{keygen, keygen_with, seed_from_label, KeyPair as CoreKeyPair, Scheme};
use ior_core::propagation::{self, GossipConfig, GossipMode};
use ior_core::rights::demo::abc_walkthrough;
use ior_core::scenario::{self, render_report, ReportFormat, ReportKind, RunReport, ScenarioError};
use ior_core::trust::{NetEdge, ReliabilityNetwork, TrustFixture};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts through JSON so that Python gets ordinary dicts and lists.
fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn gossip(n: usize, lambda: u32, i0: f64, p: f64, seed: u64, mode: &str) -> PyResult<GossipConfig> {
    let mut cfg = GossipConfig::new(n, lambda, i0, p, seed);
    cfg.mode = match mode {
        "relay" => GossipMode::Relay,
        "synchronous" => GossipMode::Synchronous,
        other => return Err(value_err(format!("unknown gossip mode `{other}`"))),
    };
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

fn format_of(name: &str) -> PyResult<ReportFormat> {
    match name {
        "csv" => Ok(ReportFormat::Csv),
        "json" => Ok(ReportFormat::Json),
        other => Err(value_err(format!("unknown format `{other}`"))),
    }
}

/// An Ed25519 signing key.
#[pyclass(frozen, name = "KeyPair")]
pub struct KeyPair {
    inner: CoreKeyPair,
}

#[pymethods]
impl KeyPair {
    /// Key from a 32-byte seed.
    #[new]
    fn new(seed: &[u8]) -> PyResult<Self> {
        let seed: [u8; 32] = seed.try_into().map_err(|_| value_err("seed must be 32 bytes"))?;
        Ok(KeyPair { inner: keygen(&seed) })
    }

    /// Key derived from a master seed and a label, as scenarios do.
    #[staticmethod]
    fn from_label(master: u64, label: &str) -> Self {
        KeyPair { inner: keygen_with(Scheme::Ed25519Vrf, &seed_from_label(master, label)) }
    }

    #[getter]
    fn public_key(&self) -> String {
        self.inner.pk.to_hex()
    }

    /// Encoded signature record (scheme, signer and signature bytes).
    fn sign<'py>(&self, py: Python<'py>, msg: &[u8]) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &encode_signature(&self.inner.sign(msg)))
    }

    fn __repr__(&self) -> String {
        format!("KeyPair({})", &self.inner.pk.to_hex()[..16])
    }
}

/// Checks an encoded signature record against `msg`. Returns the signer's
/// public key in hex when valid, None otherwise.
#[pyfunction]
fn verify(signature: &[u8], msg: &[u8]) -> PyResult<Option<String>> {
    let sig = decode_signature(signature).map_err(value_err)?;
    Ok(sig.verify(msg).then(|| sig.signer.to_hex()))
}

#[pyfunction]
#[pyo3(signature = (t, n, lambda_, i0, p=1.0))]
fn analytic_fraction(t: f64, n: usize, lambda_: u32, i0: f64, p: f64) -> PyResult<f64> {
    Ok(propagation::analytic_fraction(t, &gossip(n, lambda_, i0, p, 0, "relay")?))
}

#[pyfunction]
#[pyo3(signature = (n, lambda_, i0, p=1.0))]
fn analytic_total_time(n: usize, lambda_: u32, i0: f64, p: f64) -> PyResult<f64> {
    propagation::analytic_total_time(&gossip(n, lambda_, i0, p, 0, "relay")?).map_err(value_err)
}

/// One simulated trial: informed counts per round plus totals.
#[pyfunction]
#[pyo3(signature = (n, lambda_, i0, p=1.0, seed=0, trial=0, mode="relay"))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    n: usize,
    lambda_: u32,
    i0: f64,
    p: f64,
    seed: u64,
    trial: u64,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let curve = propagation::simulate_trial(&gossip(n, lambda_, i0, p, seed, mode)?, trial).map_err(value_err)?;
    to_py(py, &curve)
}

/// Closed form against `trials` simulated runs.
#[pyfunction]
#[pyo3(signature = (n, lambda_, i0, p=1.0, trials=50, seed=0, mode="relay"))]
#[allow(clippy::too_many_arguments)]
fn compare<'py>(
    py: Python<'py>,
    n: usize,
    lambda_: u32,
    i0: f64,
    p: f64,
    trials: usize,
    seed: u64,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let report = propagation::compare(&gossip(n, lambda_, i0, p, seed, mode)?, trials).map_err(value_err)?;
    to_py(py, &report)
}

/// Source-to-terminal reliability. `edges` holds `(from, to, p)` triples;
/// `method` is "factoring" or "bruteforce".
#[pyfunction]
#[pyo3(signature = (nodes, edges, source, terminal, method="factoring"))]
fn reliability(
    nodes: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
    source: usize,
    terminal: usize,
    method: &str,
) -> PyResult<f64> {
    let net = ReliabilityNetwork {
        nodes,
        edges: edges.into_iter().map(|(from, to, p)| NetEdge { from, to, p }).collect(),
        source,
        terminal,
    };
    match method {
        "factoring" => net.dpr_factoring(),
        "bruteforce" => net.dpr_bruteforce(),
        other => return Err(value_err(format!("unknown method `{other}`"))),
    }
    .map_err(value_err)
}

/// Evaluates a trust fixture file: credibility, reliability and matrix.
#[pyfunction]
fn trust<'py>(py: Python<'py>, fixture: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let eval = TrustFixture::load(&fixture).map_err(value_err)?.evaluate().map_err(value_err)?;
    to_py(py, &eval)
}

/// The A/B/C authorization walkthrough with C's provenance path.
#[pyfunction]
#[pyo3(signature = (seed=1))]
fn authz_demo<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &abc_walkthrough(seed).map_err(value_err)?)
}

/// Outcome of a scenario run.
#[pyclass(frozen, name = "ScenarioRun")]
pub struct ScenarioRun {
    report: RunReport,
}

#[pymethods]
impl ScenarioRun {
    #[getter]
    fn name(&self) -> &str {
        &self.report.name
    }

    #[getter]
    fn passed(&self) -> bool {
        self.report.passed
    }

    #[getter]
    fn total_value(&self) -> u64 {
        self.report.total_value
    }

    fn failures(&self) -> Vec<String> {
        self.report.failures()
    }

    /// Journal as JSON lines, suitable for `verify_journal`.
    fn journal(&self) -> String {
        self.report.journal.to_jsonl()
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.report)
    }

    /// Renders "trust", "propagation" or "audit" as "csv" or "json".
    #[pyo3(signature = (kind, format="csv"))]
    fn render(&self, kind: &str, format: &str) -> PyResult<String> {
        let kind = match kind {
            "trust" => ReportKind::Trust,
            "propagation" => ReportKind::Propagation,
            "audit" => ReportKind::Audit,
            other => return Err(value_err(format!("unknown report kind `{other}`"))),
        };
        render_report(&self.report, kind, format_of(format)?).map_err(value_err)
    }

    /// Writes journal, report and per-kind files into `out_dir`.
    #[pyo3(signature = (out_dir, format="csv"))]
    fn write(&self, out_dir: PathBuf, format: &str) -> PyResult<Vec<PathBuf>> {
        scenario::write_outputs(&self.report, &out_dir, format_of(format)?).map_err(|e| PyOSError::new_err(e.to_string()))
    }
}

#[pyfunction]
#[pyo3(signature = (path, seed=None))]
fn run_scenario(path: PathBuf, seed: Option<u64>) -> PyResult<ScenarioRun> {
    let report = scenario::run_scenario(&path, seed).map_err(|e| match e {
        ScenarioError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    })?;
    Ok(ScenarioRun { report })
}

/// True iff every block, signature and rollup commitment in the journal
/// checks out. Raises ValueError when the journal cannot be replayed.
#[pyfunction]
fn verify_journal(text: &str) -> PyResult<bool> {
    scenario::verify_journal(text).map_err(value_err)
}

#[pymodule]
pub mod ior {
    #[pymodule_export]
    use super::{
        analytic_fraction, analytic_total_time, authz_demo, compare, reliability, run_scenario, simulate, trust,
        verify, verify_journal, KeyPair, ScenarioRun,
    };
}

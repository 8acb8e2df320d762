use std::path::PathBuf;

use ior_core::scenario::{
    render_report, run_scenario, verify_journal, verify_journal_detailed, write_outputs, ReportError, ReportFormat,
    ReportKind, Scenario, ScenarioError,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/scenarios").join(name)
}

fn assert_passes(name: &str) -> ior_core::scenario::RunReport {
    let report = run_scenario(&fixture(name), None).unwrap();
    assert!(report.passed, "{name}: {:#?}", report.failures());
    report
}

#[test]
fn shipped_scenarios_pass() {
    for name in ["abc_walkthrough.json", "double_spend.json", "forced_reorg.json", "flagship.json"] {
        let report = assert_passes(name);
        assert!(verify_journal(&report.journal.to_jsonl()).unwrap(), "{name}");
    }
}

#[test]
fn empty_scenario_is_an_empty_pass() {
    let report = assert_passes("empty.json");
    assert!(report.steps.is_empty() && report.chains.is_empty());
    assert!(matches!(
        render_report(&report, ReportKind::Trust, ReportFormat::Csv),
        Err(ReportError::NothingToReport(ReportKind::Trust))
    ));
}

#[test]
fn flagship_reports() {
    let report = assert_passes("flagship.json");
    let trust = render_report(&report, ReportKind::Trust, ReportFormat::Csv).unwrap();
    let lines: Vec<&str> = trust.lines().collect();
    assert_eq!(lines[0], "chain,1,2,3,4,5");
    assert_eq!(lines.len(), 6);
    for (i, line) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[i + 1], "1.000000");
    }
    let prop = render_report(&report, ReportKind::Propagation, ReportFormat::Csv).unwrap();
    assert!(prop.starts_with("N,lambda,i0,p,T_analytic,T_emp_mean,T_emp_std,rel_err\n"));
    assert_eq!(prop.lines().count(), 3);
    let audit = render_report(&report, ReportKind::Audit, ReportFormat::Csv).unwrap();
    assert_eq!(audit.lines().count(), 3);
    assert!(audit.lines().skip(1).all(|l| l.ends_with(",true")));

    let dir = tempfile::tempdir().unwrap();
    let written = write_outputs(&report, dir.path(), ReportFormat::Json).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["journal.jsonl", "report.json", "trust.json", "propagation.json", "audit.json"]);
}

#[test]
fn tampered_journal_fails_and_garbage_is_corrupt() {
    let report = assert_passes("abc_walkthrough.json");
    let text = report.journal.to_jsonl();
    let verdict = verify_journal_detailed(&text).unwrap();
    assert!(verdict.ok() && verdict.blocks > 3);

    // flip one byte inside the first committed transaction of block 1
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let target = lines.iter().position(|l| l.contains("\"number\":1")).unwrap();
    let start = lines[target].find("\"txs\":[\"").unwrap() + 8 + 40;
    let mut bytes = lines[target].clone().into_bytes();
    bytes[start] = if bytes[start] == b'0' { b'1' } else { b'0' };
    lines[target] = String::from_utf8(bytes).unwrap();
    assert!(!verify_journal(&lines.join("\n")).unwrap());

    assert!(matches!(verify_journal("{not json"), Err(ScenarioError::CorruptJournal(_))));
}

#[test]
fn schema_rejects_unknown_fields_and_dangling_names() {
    let unknown = r#"{"version": 1, "colour": "blue"}"#;
    assert!(matches!(Scenario::from_json(unknown), Err(ScenarioError::Parse(_))));
    let bad_step = r#"{"version": 1, "keys": [{"name": "k"}], "steps": [{"op": "rollup", "child": 1, "from": 0, "to": 0, "extra": 1}]}"#;
    assert!(matches!(Scenario::from_json(bad_step), Err(ScenarioError::Parse(_))));
    let bad_issue = r#"{"version": 1, "keys": [{"name": "system"}, {"name": "l"}], "chains": [{"chain_id": 1, "kind": "service", "leaders": ["l"], "issuance": [{"name": "x", "owner": "l", "value": 1, "entity": "E", "typo": 2}]}]}"#;
    assert!(matches!(Scenario::from_json(bad_issue), Err(ScenarioError::Parse(_))));
    let dangling = r#"{"version": 1, "keys": [{"name": "system"}, {"name": "l"}],
        "chains": [{"chain_id": 1, "kind": "service", "leaders": ["l"]}],
        "steps": [{"op": "grant_usage", "chain": 1, "from": "nope", "grantee": "l", "n": 1, "owner": "l"}]}"#;
    assert!(matches!(Scenario::from_json(dangling), Err(ScenarioError::Reference { step: Some(0), .. })));
    assert!(matches!(Scenario::from_json(r#"{"version": 2}"#), Err(ScenarioError::Version(2))));
}

#[test]
fn failed_expectation_marks_the_run() {
    let text = std::fs::read_to_string(fixture("double_spend.json")).unwrap();
    let mut s = Scenario::from_json(&text).unwrap();
    s.steps[1].expect = ior_core::scenario::Outcome::Ok;
    let report = ior_core::scenario::run(&s, &fixture("")).unwrap();
    assert!(!report.passed);
    assert_eq!(report.failures().len(), 1);
}

#[test]
fn seed_override_changes_keys_not_outcomes() {
    let a = run_scenario(&fixture("abc_walkthrough.json"), None).unwrap();
    let b = run_scenario(&fixture("abc_walkthrough.json"), Some(99)).unwrap();
    assert!(a.passed && b.passed);
    assert_ne!(a.journal.to_jsonl(), b.journal.to_jsonl());
}

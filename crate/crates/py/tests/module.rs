use pyo3::ffi::c_str;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(code: &std::ffi::CStr) {
    Python::initialize();
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(ior::ior)(py);
        let globals = PyDict::new(py);
        globals.set_item("ior", module).unwrap();
        globals.set_item("FIXTURES", concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures")).unwrap();
        py.run(code, Some(&globals), None).unwrap_or_else(|e| panic!("{e}"));
    });
}

#[test]
fn keys_and_math() {
    with_module(c_str!(
        r#"
k = ior.KeyPair.from_label(1, "alice")
assert ior.verify(k.sign(b"m"), b"m") == k.public_key
assert ior.verify(k.sign(b"m"), b"n") is None
assert abs(ior.analytic_fraction(0.0, 100, 2, 0.01) - 0.01) < 1e-15
assert abs(ior.reliability([1.0, 1.0], [(0, 1, 0.9)], 0, 1) - 0.9) < 1e-12
try:
    ior.reliability([1.0], [], 0, 0, method="magic")
    raise AssertionError("unknown method accepted")
except ValueError:
    pass
try:
    ior.KeyPair(b"short")
    raise AssertionError("short seed accepted")
except ValueError:
    pass
"#
    ));
}

#[test]
fn scenario_round_trip() {
    with_module(c_str!(
        r#"
run = ior.run_scenario(FIXTURES + "/scenarios/abc_walkthrough.json")
assert run.passed, run.failures()
assert ior.verify_journal(run.journal())
assert run.report()["name"] == run.name
demo = ior.authz_demo(3)
assert demo["path"][0]["authorizers"] == ["A"]
"#
    ));
}

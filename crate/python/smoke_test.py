"""Smoke test for the `ior` extension module.

Build and install first:

    pip install -e crates/py --no-build-isolation
    python python/smoke_test.py
"""

import json
import math
import pathlib
import sys
import tempfile

import ior

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def check(cond, what):
    print(f"{'ok  ' if cond else 'FAIL'} {what}")
    if not cond:
        sys.exit(1)


def main():
    key = ior.KeyPair.from_label(1, "alice")
    sig = key.sign(b"hello")
    check(ior.verify(sig, b"hello") == key.public_key, "signature verifies and names its signer")
    check(ior.verify(sig, b"hellO") is None, "signature over other bytes is refused")
    check(ior.KeyPair(bytes(32)).public_key == ior.KeyPair(bytes(32)).public_key, "seeded keys are deterministic")

    expected = 2 * math.log(99 * 0.99 / 0.01) + 4
    check(abs(ior.analytic_total_time(100, 2, 0.01, 1.0) - expected) < 1e-9, "closed-form total time")
    run = ior.simulate(200, 2, 0.01, seed=3)
    check(run["informed"][-1] == 200 and run["rounds_to_full"] > 0, "simulated gossip reaches everyone")
    report = ior.compare(100, 2, 0.01, trials=20, seed=1)
    check(abs(report["rel_err"]) < 0.3, f"simulation within 30% of theory (rel_err {report['rel_err']:+.3f})")

    edges = [(0, 1, 0.9), (1, 2, 0.9)]
    a = ior.reliability([0.9] * 3, edges, 0, 2)
    b = ior.reliability([0.9] * 3, edges, 0, 2, method="bruteforce")
    check(abs(a - 0.59049) < 1e-12 and abs(a - b) < 1e-12, "reliability by factoring and enumeration")

    ev = ior.trust(str(FIXTURES / "trust" / "trust_5chain.json"))
    m = ev["matrix"]["values"]
    check(all(m[i][i] == 1.0 for i in range(5)), "trust matrix diagonal is 1")
    check(any(m[i][j] != m[j][i] for i in range(5) for j in range(i + 1, 5)), "trust matrix is asymmetric")

    demo = ior.authz_demo()
    check([(e["from"], e["to"]) for e in demo["path"]] == [("U1", "U2"), ("U2", "F"), ("F", "C_usage")],
          "authorization walkthrough provenance")

    flagship = ior.run_scenario(str(FIXTURES / "scenarios" / "flagship.json"))
    check(flagship.passed, f"flagship scenario passes ({flagship.failures()})")
    check(ior.verify_journal(flagship.journal()), "flagship journal re-verifies")
    check(flagship.render("trust").startswith("chain,1,2,3,4,5\n"), "trust report header")
    again = ior.run_scenario(str(FIXTURES / "scenarios" / "flagship.json"))
    check(again.journal() == flagship.journal(), "flagship run is deterministic")
    with tempfile.TemporaryDirectory() as d:
        written = flagship.write(d, "json")
        check(len(written) == 5, "outputs written")
        json.loads(pathlib.Path(written[1]).read_text())

    try:
        ior.verify_journal("{not json")
        check(False, "corrupt journal raises")
    except ValueError:
        check(True, "corrupt journal raises ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()

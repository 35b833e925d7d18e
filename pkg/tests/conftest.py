"""Shared pytest wiring.

The acceptance tests each guard one shipping criterion; this hook prints a
one-line PASS/FAIL verdict per criterion at the end of the run so the gate
is readable without scrolling through node ids.
"""

_ACCEPTANCE_FILE = "test_acceptance.py"

# test function -> printed label, in report order
_CRITERIA = {
    "test_latency_contract": "latency contract",
    "test_pii_fixture_suite": "pii fixture suite",
    "test_pii_linear_scaling": "pii linear scaling",
    "test_masking_correctness": "masking correctness",
    "test_cross_detector_policy": "cross-detector policy",
    "test_policy_determinism_and_dominance": "policy determinism and dominance",
    "test_attribution_oracle": "attribution oracle",
    "test_tfidf_oracle_equivalence": "tf-idf oracle equivalence",
    "test_fail_closed": "fail-closed",
    "test_end_to_end_vet": "end-to-end vet",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcome = {}
    for key, word in (("passed", "PASS"), ("skipped", "SKIP"),
                      ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(key, ()):
            nodeid = getattr(report, "nodeid", "")
            if _ACCEPTANCE_FILE not in nodeid:
                continue
            name = nodeid.rsplit("::", 1)[-1].split("[", 1)[0]
            # a FAIL from any phase (setup/call/teardown) is sticky
            if name in _CRITERIA and outcome.get(name) != "FAIL":
                outcome[name] = word
    if not outcome:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, label in _CRITERIA.items():
        if name in outcome:
            terminalreporter.write_line(f"{label:<36} {outcome[name]}")

"""Shared test configuration.

Prints one PASS/FAIL line per acceptance criterion at the end of the
run, regardless of output capturing.
"""

_CRITERIA = {
    "test_snr_fidelity": "snr-fidelity",
    "test_reverberation": "reverberation",
    "test_image_source_rir": "image-source-rir",
    "test_table1_recipe": "mix-recipe-table",
    "test_lexicon_filter": "lexicon-filter",
    "test_ssl_mining": "ssl-mining",
    "test_model_loss_gradients": "model-and-loss",
    "test_decoder": "decoder",
    "test_e2e_directional": "e2e-directional",
    "test_e2e_determinism": "e2e-determinism",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(report, "nodeid", ""):
                continue
            name = report.nodeid.split("::")[-1].split("[")[0]
            label = _CRITERIA.get(name)
            if label is None:
                continue
            if outcome != "passed" or verdicts.get(label) is None:
                verdicts[label] = "PASS" if outcome == "passed" else "FAIL"
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for label in _CRITERIA.values():
            if label in verdicts:
                terminalreporter.write_line(f"[{verdicts[label]}] {label}")

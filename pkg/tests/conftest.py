"""Shared pytest hooks: print one verdict line per acceptance check.

The acceptance suite in test_acceptance.py is the contract gate; each of its
tests maps to one line in the terminal summary so a red run is readable at a
glance without scrolling through tracebacks.
"""

import pytest

# nodeid function name -> human label, in report order
ACCEPTANCE_LABELS = {
    "test_gradients_match_finite_differences":
        "gradient correctness (finite differences, 100 seeded points)",
    "test_quantize_matches_exhaustive_search":
        "quantization oracle (1,000 calls vs exhaustive NN, tie-break)",
    "test_loss_algebra_identities":
        "loss algebra (value symmetry, gradient separation, total)",
    "test_ema_reaches_kmeans_fixed_point":
        "EMA codebook converges to k-means fixed point",
    "test_straight_through_gradient_copy":
        "straight-through estimator copies gradients bitwise",
    "test_bottleneck_privacy_utility_trend":
        "privacy/utility trend over {no-VQ, 256, 128, 64} x 3 seeds",
    "test_depth_keeps_utility_at_tight_bottleneck":
        "encoder depth keeps utility at V=64 without losing privacy",
    "test_f0_transform_properties":
        "F0 transforms (affine exactness, SNR, probe to chance)",
    "test_metric_oracles":
        "metric oracles (EER triple, identical/disjoint, analytic LR)",
    "test_rerun_is_byte_identical":
        "determinism (every command rerun is byte-identical)",
}

_results: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    name = item.name.split("[")[0]
    if item.fspath.basename == "test_acceptance.py" and name in ACCEPTANCE_LABELS:
        if report.when == "call":
            _results[name] = report.outcome
        elif report.when == "setup" and report.outcome != "passed":
            _results[name] = report.outcome  # fixture error or skip


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    tw = terminalreporter
    tw.section("acceptance checks")
    for name, label in ACCEPTANCE_LABELS.items():
        outcome = _results.get(name)
        if outcome is None:
            continue
        verdict = "PASS" if outcome == "passed" else "FAIL"
        tw.write_line(f"[{verdict}] {label}")

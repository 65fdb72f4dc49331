"""Shared fixtures and the acceptance summary printed at the end of a run."""
from __future__ import annotations

import re

import numpy as np
import pytest

from ccbody.glue_smooth import glue, quasicone_field
from ccbody.pipeline import PipelineConfig, run_pipeline
from ccbody.strip import build_strip, default_g, degenerate_strip, strip_field

Z_MAX = 12.0


@pytest.fixture(scope="session")
def strip_model():
    strip, info = build_strip(default_g(Z_MAX))
    return strip, info


@pytest.fixture(scope="session")
def strip_fld(strip_model):
    return strip_field(strip_model[0], Z_MAX)


@pytest.fixture(scope="session")
def glued_fld(strip_fld):
    return glue(strip_fld, quasicone_field(strip_fld.z, strip_fld.theta))


@pytest.fixture(scope="session")
def degenerate_fld():
    return strip_field(degenerate_strip(Z_MAX), Z_MAX)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """The default pipeline run; shared by several acceptance criteria."""
    import time

    out = tmp_path_factory.mktemp("run")
    t0 = time.perf_counter()
    report = run_pipeline(PipelineConfig(output_dir=str(out)))
    return report, out, time.perf_counter() - t0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = {}
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            m = _CRITERION.search(nodeid)
            if not m or "test_acceptance" not in nodeid:
                continue
            if rep.when != "call" and outcome == "passed":
                continue
            num = int(m.group(1))
            verdict = "PASS" if outcome == "passed" else "FAIL"
            if rows.get(num, ("PASS",))[0] != "FAIL":
                rows[num] = (verdict, m.group(2).replace("_", " "))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(rows):
        verdict, label = rows[num]
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {label}")

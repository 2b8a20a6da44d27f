from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dualband.dataset_io import SynthConfig, generate_synthetic, stratified_split
from dualband.search import SearchData

settings.register_profile(
    "dualband", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("dualband")


@pytest.fixture(scope="session")
def small_synth():
    """A quick 4-class planted set: 20 instances per class."""
    cfg = SynthConfig(n_per_class=20, classes=4, seed=3)
    return cfg, generate_synthetic(cfg)


@pytest.fixture(scope="session")
def small_split(small_synth):
    _, data = small_synth
    tr, te = stratified_split(data.labels, 1 / 3, 0)
    return SearchData(data.subset(tr), data.subset(te))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record (and print) one pass/fail line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str, skipped: bool = False) -> bool:
        status = "SKIP" if skipped else ("PASS" if ok else "FAIL")
        line = f"criterion {number}: {status} ({detail})"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

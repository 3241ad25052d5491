import time
from collections import defaultdict
from typing import Dict, List, Tuple

import numpy as np
import pytest

from src.common.config import load_config
from src.dataset.panel import PanelDataset
from src.nuisance.oracle import oracle_nuisances_dataset1
from src.simgen.synthetic import sample_dataset1
from .test_config import MC_SEED, SLOW_TEST_SECONDS

# suite file -> [(test name, seconds)]
suite_timings: Dict[str, List[Tuple[str, float]]] = defaultdict(list)


@pytest.fixture(autouse=True)
def measure_test_time(request):
    """Record wall time per test, grouped by suite file"""
    start = time.perf_counter()
    yield
    suite_timings[request.node.path.name].append((request.node.name, time.perf_counter() - start))


def pytest_terminal_summary(terminalreporter):
    if not suite_timings:
        return

    terminalreporter.section("suite durations")
    for suite, entries in sorted(suite_timings.items(), key=lambda kv: -sum(t for _, t in kv[1])):
        total = sum(t for _, t in entries)
        terminalreporter.write_line(f"{suite:<28} {len(entries):>4} tests {total:>9.2f}s")

    slow = sorted(
        ((f"{suite}::{name}", t) for suite, entries in suite_timings.items() for name, t in entries if t > SLOW_TEST_SECONDS),
        key=lambda item: -item[1],
    )
    if slow:
        terminalreporter.write_line(f"slower than {SLOW_TEST_SECONDS:g}s:")
        for name, t in slow:
            terminalreporter.write_line(f"  {name:<60} {t:>8.2f}s")


@pytest.fixture(scope="session")
def settings():
    return load_config()


@pytest.fixture(scope="session")
def small_draw():
    """Dataset-1 draw small enough for every backend"""
    return sample_dataset1(400, 600, seed=MC_SEED)


@pytest.fixture(scope="session")
def medium_draw():
    return sample_dataset1(4000, 6000, seed=MC_SEED + 1)


@pytest.fixture(scope="session")
def oracle_set():
    return oracle_nuisances_dataset1(p_O=0.6)


@pytest.fixture
def tiny_panel():
    """Two rows per (g, a) stratum"""
    return PanelDataset.from_arrays(
        g=["E", "E", "E", "E", "O", "O", "O", "O"],
        a=[0, 1, 0, 1, 0, 1, 0, 1],
        x=np.array([[-1.0], [0.5], [1.0], [-0.5], [0.0], [2.0], [-2.0], [1.5]]),
        s=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        y=[np.nan, np.nan, np.nan, np.nan, 1.0, 2.0, 3.0, 4.0],
    )


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path

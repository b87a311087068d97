import numpy as np
import pytest

from dode.dta import SueConfig
from dode.scenario import ScenarioParams, build_scenario


def tiny_params(seed=0, **kw):
    """2x2 lattice, origins (0, 1), destinations (2, 3), two 900 s intervals, demand U(1, 10)."""
    base = dict(rows=2, cols=2, t_end=1800.0, n_intervals=2, demand_low=1.0, demand_high=10.0,
                origins=(0, 1), destinations=(2, 3), rng_seed=seed)
    base.update(kw)
    return ScenarioParams(**base)


@pytest.fixture(scope="session")
def tiny_scenario():
    return build_scenario(tiny_params(), SueConfig(iterations=5, rng_seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> list of (check, ok, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, list] = {}


def record(criterion, check, ok, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        details = "; ".join(f"{c}: {'ok' if ok else 'FAILED'} ({d})" if d else f"{c}: {'ok' if ok else 'FAILED'}"
                            for c, ok, d in checks)
        tr.write_line(f"criterion {n:>2}: {verdict}  {details}")

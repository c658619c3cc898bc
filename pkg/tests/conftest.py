import numpy as np
import pytest

from mvlme.data import from_arrays
from mvlme.model import AssociationStructure, McmcConfig, ModelSpec, OutcomeSpec

# acceptance results, printed once at the end of the session
CRITERIA = {}


def record_criterion(number, passed, detail):
    CRITERIA[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


def small_dataset(n_subjects=5, seed=3, missing=True):
    """Two outcomes at shared encounters, a binary covariate, a few missing cells."""
    rng = np.random.default_rng(seed)
    ids, times, y, cov = [], [], [], []
    for i in range(n_subjects):
        n_i = rng.integers(3, 7)
        t = np.sort(rng.uniform(6, 20, n_i))
        x = float(i % 2)
        b = rng.normal(0, [3.0, 0.3, 0.1, 0.01])
        m2 = 0.5 + b[2] + (0.1 + b[3]) * t
        m1 = 80 + b[0] + (-1 + b[1]) * t + 2 * x - 5 * m2
        y1 = m1 + rng.normal(0, 2, n_i)
        y2 = m2 + rng.normal(0, 0.05, n_i)
        if missing and i == 1:
            y1[0] = np.nan
        if missing and i == 2:
            y2[-1] = np.nan
        ids += [f"s{i}"] * n_i
        times += list(t)
        y += list(np.column_stack([y1, y2]))
        cov += [x] * n_i
    return from_arrays(ids, times, np.array(y), np.array(cov)[:, None], ("y1", "y2"), ("x1",))


def small_spec(kind="auc", window_d=None, corr=False, normalize_by="one_over_t", mcmc=None,
               spline=True):
    y1_fixed = ("intercept", "ns", "x1") if spline else ("intercept", "time", "x1")
    y1_random = ("intercept", "ns") if spline else ("intercept", "time")
    outcomes = (OutcomeSpec("y1", y1_fixed, y1_random, 2),
                OutcomeSpec("y2", ("intercept", "time"), ("intercept", "time")))
    if kind == "none_shared_re_only":
        assoc = AssociationStructure()
    else:
        assoc = AssociationStructure(kind, "y2", "y1", window_d, normalize_by)
    return ModelSpec(outcomes, assoc, corr, mcmc=mcmc or McmcConfig(
        n_chains=2, n_iter=400, burn_in=100, thin=2, adapt=0, seed=5))


@pytest.fixture
def dataset():
    return small_dataset()

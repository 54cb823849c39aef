import numpy as np
import pytest

from matchprior.model import Dataset, ParamPoint, exp_ratio_model, logistic_model


def exp_data(xbar, ybar, n=10):
    """Exp-ratio dataset with the requested sample means."""
    x = np.linspace(0.5, 1.5, n)
    y = np.linspace(0.2, 1.8, n)
    return Dataset(x * xbar / x.mean(), y * ybar / y.mean())


@pytest.fixture
def exp10():
    return exp_ratio_model(10)


@pytest.fixture
def logistic30():
    """A logistic model and response drawn at the simulation truth."""
    rng = np.random.default_rng(11)
    m = logistic_model(rng.random(30))
    return m, m.sampler(ParamPoint(0.5, -1.0), 30, rng)


# acceptance criteria report ------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``record(number, title, ok, detail)``: one summary line per criterion.

    ``ok=None`` marks a criterion that could not run (reported as SKIP).
    """

    def record(number, title, ok, detail=""):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {number} {status}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])

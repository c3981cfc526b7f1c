import math

import numpy as np
import pytest

from translators.fields import AnalyticGraph
from translators.geometry import TranslatorSpec

SOLITON = ("ln(1 + exp(2*x1)) - x1", "0.5*x2")
PLANE = ("0.5*x1", "0.3*x2")


def soliton_exprs(mu=0.5):
    return (SOLITON[0], f"{mu!r}*x2")


@pytest.fixture
def plane():
    return AnalyticGraph(list(PLANE), 2)


@pytest.fixture
def soliton():
    return AnalyticGraph(list(SOLITON), 2)


@pytest.fixture
def T_soliton():
    return TranslatorSpec((0.0, 1.0), (1.0, 0.5))


@pytest.fixture
def T_plane():
    return TranslatorSpec((1.0, 0.0), (0.5, 0.0))


def random_cubic(rng, m=2, n=2, bound=0.5, radius=1.0):
    """Cubic polynomial graph scaled so that |Du| <= bound on [-radius, radius]^m.

    Each component gets gradient at most bound / sqrt(n), so the Frobenius
    norm of Du (an upper bound for its operator norm) stays below ``bound``.
    """
    monomials = [(i, j) for i in range(4) for j in range(4) if 1 <= i + j <= 3]
    exprs = []
    for _ in range(n):
        c = rng.uniform(-1.0, 1.0, len(monomials))
        # |d monomial| <= degree * radius^(degree-1) on the box, per axis and hence in norm up to sqrt(m)
        total = math.sqrt(m) * sum(abs(ci) * (i + j) * radius ** (i + j - 1) for ci, (i, j) in zip(c, monomials))
        s = bound / math.sqrt(n) / total
        exprs.append(" + ".join(f"{float(s * ci)!r}*x1^{i}*x2^{j}" for ci, (i, j) in zip(c, monomials)))
    return exprs


# ------------------------------------------------------- acceptance summary

ACCEPTANCE = []


def record_criterion(number, title, ok, detail):
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE, key=lambda t: str(t[0])):
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import settings

from essential_mfg.fixtures import FIXTURES, load_fixture
from essential_mfg.model import GameModel, Polynomial

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def const(v, S=2):
    return Polynomial.constant(v, S)


def constant_game(Qs, R, beta=0.5):
    """Game with m-independent rates ``Qs[a]`` (S x S) and rewards ``R`` (S x A)."""
    Qs = [np.asarray(q, dtype=float) for q in Qs]
    R = np.asarray(R, dtype=float)
    S = R.shape[0]
    rates = {(i, j, a): const(q[i, j], S) for a, q in enumerate(Qs) for i in range(S) for j in range(S) if i != j}
    rewards = {(i, a): const(R[i, a], S) for i in range(S) for a in range(R.shape[1])}
    return GameModel(S, len(Qs), beta, rates, rewards)


def random_affine(rng, S=2, A=2, beta=None, rate=(0.2, 2.0), reward=(0.0, 1.0)):
    """Rates and rewards linear in m with uniform vertex values."""
    beta = rng.uniform(0.2, 0.9) if beta is None else beta
    rates = {
        (i, j, a): Polynomial.linear(rng.uniform(*rate, size=S))
        for i in range(S) for j in range(S) if i != j for a in range(A)
    }
    rewards = {(i, a): Polynomial.linear(rng.uniform(*reward, size=S)) for i in range(S) for a in range(A)}
    return GameModel(S, A, beta, rates, rewards)


def random_polynomial_game(rng, S, A, degree=2, terms=3):
    """Polynomial game whose off-diagonal rates stay positive (positive coefficients)."""
    def poly(positive):
        exps = [tuple(rng.multinomial(d, np.ones(S) / S)) for d in rng.integers(0, degree + 1, size=terms)]
        coefs = rng.uniform(0.1, 1.5, size=terms) if positive else rng.uniform(-1, 1, size=terms)
        return Polynomial.from_terms(zip(exps, coefs), S).shift(0.2 if positive else 0.0)

    beta = float(rng.uniform(0.2, 0.9))
    rates = {(i, j, a): poly(True) for i in range(S) for j in range(S) if i != j for a in range(A)}
    rewards = {(i, a): poly(False) for i in range(S) for a in range(A)}
    return GameModel(S, A, beta, rates, rewards)


def random_simplex_point(rng, S):
    return rng.dirichlet(np.ones(S))


@pytest.fixture(params=list(FIXTURES))
def fixture_model(request):
    return request.param, load_fixture(request.param)


@pytest.fixture
def ref_1a():
    return load_fixture("REF-1A")


@pytest.fixture
def ref_dom():
    return load_fixture("REF-DOM")


@pytest.fixture
def ref_ind():
    return load_fixture("REF-IND")


@pytest.fixture
def ref_knife():
    return load_fixture("REF-KNIFE")


@pytest.fixture
def ref_2x2():
    return load_fixture("REF-2x2")


# acceptance criteria report: one line per criterion at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")

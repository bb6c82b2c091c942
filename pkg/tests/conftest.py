import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trackctl.model import LtiSystem, Sinusoid

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

BENCH_A = [[0.0, 1.0], [-2.0, -3.0]]
BENCH_B = [[0.0], [1.0]]


@pytest.fixture
def bench():
    """The 2x2 benchmark plant; call with an output row and optional x0."""
    def make(E=(1.0, 0.0), x0=(1.0, 1.0)):
        return LtiSystem(BENCH_A, BENCH_B, [list(E)], list(x0))
    return make


@pytest.fixture
def cosine_half():
    return Sinusoid(1.0, 0.5, np.pi / 2)


def random_controllable(rng, n, lo=-1.0, hi=1.0):
    from trackctl.linalg import kalman_rank
    while True:
        A = rng.uniform(lo, hi, (n, n))
        b = rng.uniform(lo, hi, (n, 1))
        if kalman_rank(A, b).rank_estimate == n:
            return A, b


def random_uncontrollable(rng, n):
    """A pair whose Kalman matrix is rank deficient by construction."""
    k = int(rng.integers(1, n))
    A11 = rng.uniform(-1, 1, (k, k))
    A12 = rng.uniform(-1, 1, (k, n - k))
    A22 = rng.uniform(-1, 1, (n - k, n - k))
    A = np.block([[A11, A12], [np.zeros((n - k, k)), A22]])
    b = np.concatenate([rng.uniform(-1, 1, k), np.zeros(n - k)])[:, None]
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return Q @ A @ Q.T, Q @ b


def random_tracking_case(rng):
    """Random controllable SISO plant, random output row and a target vanishing to order n at 0."""
    from trackctl.model import LtiSystem, Polynomial, Product, Sinusoid
    n = int(rng.integers(1, 6))
    A, b = random_controllable(rng, n)
    E = rng.uniform(-1, 1, (1, n))
    c = rng.uniform(-1, 1)
    f = Product([Polynomial([0.0] * n + [1.0, c]),
                 Sinusoid(1.0, rng.uniform(40, 80), rng.uniform(0, 2 * np.pi))])
    return LtiSystem(A, b, E), f


ACCEPTANCE = []


def record(label, ok, detail):
    ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from udqkd import cvmath


def random_symplectic(rng, n=2, max_r=1.5):
    """Product of random phase rotations, single-mode squeezers and beamsplitters."""
    s = np.eye(2 * n)
    for _ in range(3):
        for k in range(n):
            th = rng.uniform(0, 2 * np.pi)
            r = rng.uniform(-max_r, max_r)
            rot = np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
            sq = np.diag([np.exp(-r), np.exp(r)])
            m = np.eye(2 * n)
            m[2 * k:2 * k + 2, 2 * k:2 * k + 2] = sq @ rot
            s = m @ s
        for a in range(n):
            for b in range(a + 1, n):
                s = cvmath.beamsplitter(rng.uniform(0, 1), a, b, n) @ s
    return s


def random_physical(rng, n=2, max_nu=20.0, max_r=1.5):
    """Random physical covariance with a known symplectic spectrum (Williamson form)."""
    nu = 1.0 + rng.exponential(max_nu / 4, n)
    s = random_symplectic(rng, n, max_r)
    g = s @ np.diag(np.repeat(nu, 2)) @ s.T
    return 0.5 * (g + g.T), np.sort(nu)[::-1]


def random_xp_decoupled(rng, max_nu=20.0, max_r=1.5):
    """Physical two-mode state with no x-p cross terms (real beamsplitters and squeezers only)."""
    nu = 1.0 + rng.exponential(max_nu / 4, 2)
    s = np.eye(4)
    for _ in range(3):
        r1, r2 = rng.uniform(-max_r, max_r, 2)
        sq = np.diag(np.exp([-r1, r1, -r2, r2]))
        s = cvmath.beamsplitter(rng.uniform(0, 1), 0, 1, 2) @ sq @ s
    g = s @ np.diag(np.repeat(nu, 2)) @ s.T
    return 0.5 * (g + g.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""
    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

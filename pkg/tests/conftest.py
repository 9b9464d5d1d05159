import math

import numpy as np
import pytest

from dhym3.phase_algebra import PhaseParameter
from dhym3.torus import BackgroundData, TrigMode, make_grid, trig_field

THETA_BASE = 3 * math.pi / 4


@pytest.fixture
def base_phase():
    return PhaseParameter(THETA_BASE)


def constant_background(resolution=16, dims=2, modes=(), omega=None, Omega0=None, theta=THETA_BASE):
    grid = make_grid(dims, resolution)
    omega = np.eye(3, dtype=complex) if omega is None else np.asarray(omega, dtype=complex)
    Omega0 = 2 * np.eye(3, dtype=complex) if Omega0 is None else np.asarray(Omega0, dtype=complex)
    psi0 = trig_field(grid, list(modes))
    return BackgroundData(grid, omega, Omega0, psi0, PhaseParameter(theta))


def mode(coeff, *k, kind="cos"):
    wv = list(k) + [0] * (6 - len(k))
    return TrigMode(coeff, tuple(wv), kind)


# fields varying in x1 and x2 exercise off-diagonal Hessian entries, so the
# path equation is genuinely nonlinear on them
NONLINEAR_MODES = (
    mode(0.3, 1, 0),
    mode(0.3, 0, 1),
    mode(0.2, 1, 1, kind="sin"),
    mode(0.1, 2, -1),
)


@pytest.fixture
def baseline_bg():
    return constant_background()


@pytest.fixture
def perturbed_bg():
    return constant_background(resolution=32, modes=(mode(0.05, 1),))


@pytest.fixture
def nonlinear_bg():
    return constant_background(resolution=16, modes=NONLINEAR_MODES)


def compatible_Omega0(omega, theta, l1, l2):
    """Constant form in a class compatible with theta: relative spectrum on the t=1 level set."""
    from dhym3.phase_algebra import solve_lambda3

    ph = PhaseParameter(theta)
    l3 = solve_lambda3(l1, l2, 1.0, 1.0, ph)
    L = np.linalg.cholesky(np.asarray(omega, dtype=complex))
    return L @ np.diag([l1, l2, l3]).astype(complex) @ np.conj(L.T)


OMEGA_SKEW = np.array(
    [[1.3, 0.2 + 0.1j, 0.0], [0.2 - 0.1j, 0.9, 0.05j], [0.0, -0.05j, 1.1]]
)


# acceptance criteria register a one-line verdict here; printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

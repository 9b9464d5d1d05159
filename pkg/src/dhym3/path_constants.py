"""Class integrals, the continuity-path constant c_t, and the phase angle."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleClassError, UnsupportedPhaseError
from .phase_algebra import PhaseParameter, metric_factor, relative_spectrum

CONSTANT_RTOL = 1e-8
CT_TOL = 1e-12


@dataclass(frozen=True)
class ClassIntegrals:
    """The three wedge integrals entering the path constant.

    ``int_3omega2Omega`` is the integral of ``3 omega^2 ^ Omega`` so that for
    constant forms it equals ``sigma_1 * int_omega3``.
    """

    int_Omega3: float
    int_3omega2Omega: float
    int_omega3: float

    def __post_init__(self):
        if not np.all(np.asarray(self.int_omega3) > 0):
            raise InadmissibleClassError("int omega^3 must be positive")

    def compatibility_defect(self, ph: PhaseParameter) -> tuple[float, float]:
        """Return (defect, scale) of the class identity tying the integrals to theta."""
        s2, tan = ph.sec2_theta, ph.tan_theta
        rhs = s2 * self.int_3omega2Omega + 2.0 * tan * s2 * self.int_omega3
        scale = (
            abs(self.int_Omega3)
            + s2 * abs(self.int_3omega2Omega)
            + 2.0 * abs(tan) * s2 * self.int_omega3
        )
        return self.int_Omega3 - rhs, scale

    def check_admissible(self, ph: PhaseParameter, rtol: float = CONSTANT_RTOL) -> None:
        defect, scale = self.compatibility_defect(ph)
        if np.any(np.abs(defect) > rtol * scale):
            rel = float(np.max(np.abs(defect) / scale))
            raise InadmissibleClassError(
                f"class integrals incompatible with theta_hat={ph.theta_hat:.15g}: "
                f"relative defect {rel:.3e} > {rtol:.1e}"
            )


@dataclass(frozen=True)
class PathPoint:
    t: float
    c_t: float
    phase: PhaseParameter


def path_constant(int_Omega3, int_3omega2Omega, int_omega3, t, ph: PhaseParameter):
    """c_t from the three class integrals; broadcasts over array inputs."""
    s2, tan = ph.sec2_theta, ph.tan_theta
    return (int_Omega3 - 2.0 * t * tan * s2 * int_omega3) / (s2 * int_3omega2Omega)


def compute_ct(
    integrals: ClassIntegrals,
    t: float,
    ph: PhaseParameter,
    rtol: float = CONSTANT_RTOL,
    tol: float = CT_TOL,
) -> PathPoint:
    """Path constant at ``t`` with the admissibility and c_t bounds enforced.

    The upper bound ``c_t <= 1`` is only meaningful for ``tan(theta) < 0``;
    for ``tan(theta) >= 0`` the path is run unchanged and only the lower
    bound and the cubic bound are enforced.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t!r} outside [0, 1]")
    integrals.check_admissible(ph, rtol)
    c = float(
        path_constant(
            integrals.int_Omega3, integrals.int_3omega2Omega, integrals.int_omega3, t, ph
        )
    )
    if not c > 1.0 / 3.0:
        raise InadmissibleClassError(f"c_t={c:.15g} <= 1/3 at t={t}")
    if ph.tan_theta < 0 and c > 1.0 + tol:
        raise InadmissibleClassError(f"c_t={c:.15g} > 1 at t={t}")
    if not c**3 > t * t * ph.sin2_theta:
        raise InadmissibleClassError(f"c_t^3={c**3:.15g} <= t^2 sin^2(theta) at t={t}")
    return PathPoint(float(t), c, ph)


def compute_theta_hat(z: complex, margin: float = 1e-6) -> PhaseParameter:
    """Phase angle from the class integral ``Z = int (omega - Theta)^3``.

    The principal argument is lifted into (pi/2, 3pi/2); arguments in
    (-pi/2, pi/2] are subcritical and rejected.
    """
    z = complex(z)
    if z == 0:
        raise UnsupportedPhaseError("class integral Z vanishes; phase undefined")
    arg = cmath.phase(z)
    if math.pi / 2 < arg <= math.pi:
        theta = arg
    elif -math.pi < arg < -math.pi / 2:
        theta = arg + 2.0 * math.pi
    else:
        raise UnsupportedPhaseError(
            f"Arg(Z)={arg:.6f} lies in the subcritical range (-pi/2, pi/2]"
        )
    return PhaseParameter(theta, margin=margin)


def constant_class_integrals(omega, Omega, volume: float) -> ClassIntegrals:
    """Exact integrals for constant forms over a region with ``int omega^3 = volume``."""
    if not np.all(np.asarray(volume) > 0):
        raise ValueError("volume must be positive")
    lam = relative_spectrum(omega, Omega)
    s1 = np.sum(lam, axis=-1)
    s3 = np.prod(lam, axis=-1)
    if np.ndim(s1) == 0:
        return ClassIntegrals(float(s3) * volume, float(s1) * volume, float(volume))
    return ClassIntegrals(s3 * volume, s1 * volume, np.broadcast_to(volume, s1.shape))


def class_integral_z(omega, i_theta, volume: float) -> complex:
    """``Z`` for constant forms: ``volume * prod_j (1 + i a_j)``."""
    linv = metric_factor(omega)
    a = linv @ np.asarray(i_theta, dtype=complex) @ np.conj(linv.T)
    return complex(volume * np.linalg.det(np.eye(3) + 1j * a))

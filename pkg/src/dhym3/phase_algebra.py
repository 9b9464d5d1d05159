"""Pointwise algebra of the three-fold dHYM / generalised Monge-Ampère problem.

Every routine here acts on a single point (or on a batch of points stacked
along leading axes).  Forms are 3x3 Hermitian coefficient matrices in the
frame ``sqrt(-1) dz^i ^ dz̄^j``; relative spectra are arrays whose last axis
holds three eigenvalues sorted in descending order, so ``lam[..., 0]`` is the
largest and ``lam[..., 2]`` the smallest.

Throughout, ``c`` is the continuity-path constant and ``t`` the path
parameter, so that at a point the path equation reads

    lam1 lam2 lam3 = c sec^2(theta) (lam1 + lam2 + lam3) + 2 t tan(theta) sec^2(theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateMetricError,
    OutsideConeError,
    SingularDeterminantError,
    UnsupportedPhaseError,
)

METRIC_FLOOR = 1e-10
HERMITIAN_TOL = 1e-12

_PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class PhaseParameter:
    """Phase angle in the supercritical range with cached trigonometry."""

    theta_hat: float
    margin: float = 1e-6
    tan_theta: float = field(init=False)
    sec2_theta: float = field(init=False)
    cos2_theta: float = field(init=False)
    sin2_theta: float = field(init=False)

    def __post_init__(self):
        theta = float(self.theta_hat)
        if not (math.pi / 2 + self.margin < theta < 3 * math.pi / 2 - self.margin):
            raise UnsupportedPhaseError(
                f"theta_hat={theta!r} is outside (pi/2, 3pi/2) with margin {self.margin}"
            )
        tan = math.tan(theta)
        sec2 = 1.0 + tan * tan
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "tan_theta", tan)
        object.__setattr__(self, "sec2_theta", sec2)
        object.__setattr__(self, "cos2_theta", 1.0 / sec2)
        object.__setattr__(self, "sin2_theta", tan * tan / sec2)

    @property
    def abs_sec_theta(self) -> float:
        return math.sqrt(self.sec2_theta)


class PhaseBatch:
    """Array-valued stand-in for PhaseParameter, one angle per stacked point.

    Exposes the same cached attributes, so every routine in this module
    accepts it wherever a PhaseParameter is expected.
    """

    def __init__(self, theta_hat):
        theta = np.asarray(theta_hat, dtype=float)
        if np.any((theta <= math.pi / 2) | (theta >= 3 * math.pi / 2)):
            raise UnsupportedPhaseError("theta_hat outside (pi/2, 3pi/2)")
        self.theta_hat = theta
        self.tan_theta = np.tan(theta)
        self.sec2_theta = 1.0 + self.tan_theta**2
        self.cos2_theta = 1.0 / self.sec2_theta
        self.sin2_theta = self.tan_theta**2 / self.sec2_theta

    @property
    def abs_sec_theta(self):
        return np.sqrt(self.sec2_theta)

    def __getitem__(self, i) -> PhaseParameter:
        return PhaseParameter(float(self.theta_hat[i]), margin=0.0)


def _col(x):
    return np.asarray(x, dtype=float)[..., None]


class ConeMargins(NamedTuple):
    """Margins of the three cone conditions; admissible iff all are > 0."""

    min_lambda: np.ndarray
    min_pair_product_margin: np.ndarray
    min_pair_sum_margin: np.ndarray

    @property
    def admissible(self):
        return (
            (np.asarray(self.min_lambda) > 0)
            & (np.asarray(self.min_pair_product_margin) > 0)
            & (np.asarray(self.min_pair_sum_margin) > 0)
        )

    def minimum(self) -> "ConeMargins":
        """Reduce each margin to its minimum over all stacked points."""
        return ConeMargins(*(float(np.min(m)) for m in self))


class ConvexityQuantities(NamedTuple):
    E: np.ndarray
    D: np.ndarray
    B: np.ndarray
    g: np.ndarray


class SubsolutionMargins(NamedTuple):
    positivity: float
    pair_product: float


def hermitian_part(m):
    m = np.asarray(m, dtype=complex)
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def check_hermitian(m, tol: float = HERMITIAN_TOL):
    """Return ``m`` as a complex array, raising if it is not Hermitian."""
    m = np.asarray(m, dtype=complex)
    if m.shape[-2:] != (3, 3):
        raise ValueError(f"expected trailing shape (3, 3), got {m.shape}")
    dev = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    if dev > tol * scale:
        raise ValueError(f"matrix is not Hermitian (deviation {dev:.3e})")
    return m


def metric_factor(omega, floor: float = METRIC_FLOOR):
    """Inverse Cholesky factor ``L^{-1}`` of a positive-definite metric.

    Raises DegenerateMetricError when the smallest eigenvalue of ``omega``
    does not exceed ``floor``; no regularisation is attempted.
    """
    omega = check_hermitian(omega)
    w_min = np.linalg.eigvalsh(omega)[..., 0]
    if np.any(w_min <= floor):
        raise DegenerateMetricError(
            f"metric smallest eigenvalue {float(np.min(w_min)):.3e} <= floor {floor:.1e}"
        )
    return np.linalg.inv(np.linalg.cholesky(omega))


def normalize_form(omega, alpha, floor: float = METRIC_FLOOR):
    """Express ``alpha`` in an ``omega``-orthonormal frame: ``L^{-1} alpha L^{-*}``."""
    linv = metric_factor(omega, floor)
    alpha = np.asarray(alpha, dtype=complex)
    return hermitian_part(linv @ alpha @ np.conj(np.swapaxes(linv, -1, -2)))


def relative_spectrum(omega, alpha, floor: float = METRIC_FLOOR) -> np.ndarray:
    """Eigenvalues of the pencil ``det(alpha - lam omega) = 0``, descending."""
    return np.linalg.eigvalsh(normalize_form(omega, alpha, floor))[..., ::-1]


def phase(omega, alpha) -> np.ndarray:
    """Lagrangian phase: the sum of arctangents of the relative spectrum."""
    return np.sum(np.arctan(relative_spectrum(omega, alpha)), axis=-1)


def dhym_residual(omega, i_theta, ph: PhaseParameter) -> np.ndarray:
    """``Im Z - tan(theta) Re Z`` with ``Z = prod_j (1 + i a_j)``.

    ``a_j`` is the relative spectrum of the real curvature form ``i_theta``.
    """
    a = relative_spectrum(omega, i_theta)
    z = np.prod(1.0 + 1j * a, axis=-1)
    return z.imag - ph.tan_theta * z.real


def gma_residual(lam, c, t, ph: PhaseParameter) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    # factored as sigma_3 - sec^2 (c sigma_1 + 2 t tan): one rounding fewer
    return np.prod(lam, axis=-1) - ph.sec2_theta * (c * np.sum(lam, axis=-1) + 2.0 * t * ph.tan_theta)


def _numerator(lam, c, t, ph):
    return c * np.sum(lam, axis=-1) + 2.0 * t * ph.tan_theta


def _determinant(lam):
    det = np.prod(lam, axis=-1)
    if np.any(det == 0):
        raise SingularDeterminantError("relative spectrum contains a zero eigenvalue")
    return det


def F_value(lam, c, t, ph: PhaseParameter) -> np.ndarray:
    """``F = (c tr A + 2 t tan(theta)) / det A`` evaluated on the spectrum."""
    lam = np.asarray(lam, dtype=float)
    return _numerator(lam, c, t, ph) / _determinant(lam)


def F_tilde(lam, c, t, ph: PhaseParameter) -> np.ndarray:
    return ph.sec2_theta * F_value(lam, c, t, ph)


def cone_check(lam, c, t, ph: PhaseParameter) -> ConeMargins:
    lam = np.asarray(lam, dtype=float)
    prods = np.stack([lam[..., i] * lam[..., j] for i, j in _PAIRS], axis=-1)
    sums = np.stack([lam[..., i] + lam[..., j] for i, j in _PAIRS], axis=-1)
    return ConeMargins(
        np.min(lam, axis=-1),
        np.min(prods, axis=-1) - c * ph.sec2_theta,
        np.min(_col(c) * sums, axis=-1) + 2.0 * t * ph.tan_theta,
    )


def solve_lambda3(lambda1, lambda2, c, t, ph: PhaseParameter):
    """The unique third eigenvalue putting (lambda1, lambda2, .) on the level set."""
    den = np.asarray(lambda1 * lambda2 - c * ph.sec2_theta, dtype=float)
    if np.any(den <= 0):
        raise OutsideConeError("lambda1*lambda2 <= c sec^2(theta): no admissible lambda3")
    return ph.sec2_theta * (c * (lambda1 + lambda2) + 2.0 * t * ph.tan_theta) / den


def gradient_F(lam, c, t, ph: PhaseParameter) -> np.ndarray:
    """Partial derivatives of F with respect to each eigenvalue."""
    lam = np.asarray(lam, dtype=float)
    det = _determinant(lam)
    num = _numerator(lam, c, t, ph)
    return (_col(c) - num[..., None] / lam) / det[..., None]


def euler_bound_check(lam, c, t, ph: PhaseParameter) -> np.ndarray:
    """Slack of ``min_mu lam_mu dF/dlam_mu >= -cos^2(theta)``.

    Only meaningful on the level set ``F_tilde = 1`` inside the cone; the
    caller is responsible for that precondition.
    """
    lam = np.asarray(lam, dtype=float)
    return np.min(gradient_F(lam, c, t, ph) * lam, axis=-1) + ph.cos2_theta


def convexity_quantities(lam, c, t, ph: PhaseParameter) -> ConvexityQuantities:
    lam = np.asarray(lam, dtype=float)
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    tt = t * ph.tan_theta
    num = c * (l1 + l2 + l3) + 2.0 * tt
    E = 2.0 * (c * (l2 + l3) + 2.0 * tt) * num
    D = 2.0 * (c * (l1 + l3) + 2.0 * tt) * num
    B = 2.0 * (c * l3 + tt) * num
    sigma2 = l1 * l2 + l1 * l3 + l2 * l3
    g = c * c * sigma2 + 2.0 * c * tt * (l1 + l2 + l3) + 3.0 * tt * tt
    return ConvexityQuantities(E, D, B, g)


def hessian_quadratic_form(lam, c, t, ph: PhaseParameter, B_test) -> np.ndarray:
    """Second derivative of F at ``A = diag(lam)`` contracted twice with ``B_test``.

    Uses the closed form

        (1/det A) * sum_{mu,alpha} [ -c v_alpha (lam_mu + lam_alpha) v_mu
                                     + N (|B_{mu alpha}|^2 / (lam_mu lam_alpha) + v_mu v_alpha) ]

    with ``v_mu = B_{mu mu} / lam_mu`` and ``N = c tr A + 2 t tan(theta)``.
    """
    lam = np.asarray(lam, dtype=float)
    B_test = np.asarray(B_test, dtype=complex)
    det = _determinant(lam)
    num = _numerator(lam, c, t, ph)
    v = np.real(np.diagonal(B_test, axis1=-2, axis2=-1)) / lam
    lam_pair = lam[..., :, None] + lam[..., None, :]
    vv = v[..., :, None] * v[..., None, :]
    off = np.abs(B_test) ** 2 / (lam[..., :, None] * lam[..., None, :])
    c2 = np.asarray(c, dtype=float)[..., None, None]
    total = np.sum(-c2 * lam_pair * vv + num[..., None, None] * (off + vv), axis=(-2, -1))
    return total / det


def constraint_weights(lam, c, t, ph: PhaseParameter) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return _col(c) - _numerator(lam, c, t, ph)[..., None] / lam


def constraint_project(lam, c, t, ph: PhaseParameter, B_raw) -> np.ndarray:
    """Project the diagonal of ``B_raw`` onto ``sum_mu w_mu B_{mu mu} = 0``.

    ``w_mu = c - (c tr A + 2 t tan(theta)) / lam_mu``; off-diagonal entries
    are left untouched.
    """
    w = constraint_weights(lam, c, t, ph)
    B = np.array(B_raw, dtype=complex, copy=True)
    d = np.real(np.diagonal(B, axis1=-2, axis2=-1))
    d = d - (np.sum(w * d, axis=-1) / np.sum(w * w, axis=-1))[..., None] * w
    idx = np.arange(3)
    B[..., idx, idx] = d
    return B


def subsolution_check_n3(omega, Omega, ph: PhaseParameter):
    """Three-fold subsolution test: ``Omega > 0`` and ``Omega^2 > sec^2 omega^2``.

    The (2,2)-form condition is evaluated through pairwise products of the
    relative eigenvalues.  For stacked inputs the margins are minimised over
    all points and the flag is true only if every point passes.
    """
    lam = relative_spectrum(omega, Omega)
    prods = np.stack([lam[..., i] * lam[..., j] for i, j in _PAIRS], axis=-1)
    pos = float(np.min(lam[..., 2]))
    pair = float(np.min(prods)) - ph.sec2_theta
    return (pos > 0 and pair > 0), SubsolutionMargins(pos, pair)


def subsolution_coefficients(n: int, ph: PhaseParameter, include_top: bool = False) -> list[float]:
    """Coefficients b_k of the general-n subsolution condition.

    Returned for k = 0..n-1; with ``include_top`` the k = n term of the same
    formula is appended as well.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    th = ph.theta_hat
    ks = range(n + 1) if include_top else range(n)
    out = []
    for k in ks:
        if n % 2 == 0:
            b = (
                (1.0 / math.sin(th)) ** (n - k)
                * (-1) ** (n - k + 1)
                * math.comb(n, k)
                * math.sin((n - k - 1) * th)
            )
        elif k % 2 == 0:
            j = k // 2
            b = (
                (1.0 / math.cos(th)) ** (n + 1 - 2 * j)
                * (-1) ** ((n + 2 * j + 1) // 2)
                * math.comb(n, k)
                * math.sin((n - 2 * j - 1) * th)
            )
        else:
            j = (k - 1) // 2
            b = (
                (1.0 / math.cos(th)) ** (n - 2 * j)
                * (-1) ** ((n + 2 * j + 1) // 2)
                * math.comb(n, k)
                * math.cos((n - 2 * j - 2) * th)
            )
        out.append(b)
    return out

"""Randomised verification of the pointwise lemmas and inequalities.

Each ``check_*`` function draws a deterministic sample stream from a
:class:`SampleSpec`, evaluates one inequality or identity on every sample and
returns a :class:`LemmaReport` holding the worst slack together with the
exact inputs that produced it.  Slacks are compared against tolerances scaled
by a per-sample magnitude (the sum of absolute values of the terms entering
the inequality), since the inequalities are homogeneous of different degrees.

Analytic derivatives are audited against finite-difference oracles that only
evaluate ``F(M) = (c tr M + 2 t tan) / det M`` on full matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SamplerStarvedError
from .path_constants import constant_class_integrals, path_constant
from .phase_algebra import (
    PhaseBatch,
    PhaseParameter,
    cone_check,
    constraint_project,
    convexity_quantities,
    euler_bound_check,
    gradient_F,
    hessian_quadratic_form,
)
from .torus import TORUS_VOLUME

DEFAULT_THETA_RANGE = (math.pi / 2 + 0.05, math.pi - 0.01)
BOUNDARY_STAGES = 40
BOUNDARY_FACTOR = 0.5
FD_STEP = 1e-5

_LEMMA_IDS = {
    "ct_lemma": 1,
    "convexity_lemma": 2,
    "discriminant": 3,
    "euler_bound": 4,
    "boundary_exclusion": 5,
}


@dataclass(frozen=True)
class SampleSpec:
    count: int = 10_000
    seed: int = 42
    theta_range: tuple = DEFAULT_THETA_RANGE
    lambda_scale: float = 10.0
    on_level_set: bool = True

    def __post_init__(self):
        if int(self.count) <= 0:
            raise ValueError("count must be positive")
        lo, hi = (float(x) for x in self.theta_range)
        if not (math.pi / 2 < lo < hi < 3 * math.pi / 2):
            raise ValueError("theta_range must be a subinterval of (pi/2, 3pi/2)")
        if not self.lambda_scale > 1:
            raise ValueError("lambda_scale must exceed 1")
        object.__setattr__(self, "theta_range", (lo, hi))
        object.__setattr__(self, "count", int(self.count))

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([int(self.seed) & (2**64 - 1), stream])


@dataclass
class ConeSamples:
    """A batch of cone points ``(lam, c, t, theta)`` with lam sorted descending."""

    lam: np.ndarray
    c: np.ndarray
    t: np.ndarray
    theta: np.ndarray

    @property
    def phase(self) -> PhaseBatch:
        return PhaseBatch(self.theta)

    def __len__(self):
        return len(self.c)

    def point(self, i: int) -> dict:
        return {
            "lambda": [float(x) for x in self.lam[i]],
            "c": float(self.c[i]),
            "t": float(self.t[i]),
            "theta_hat": float(self.theta[i]),
        }


@dataclass
class LemmaReport:
    lemma: str
    count: int
    n_valid: int
    worst_slack: float
    worst_sample: dict
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "lemma": self.lemma,
            "count": self.count,
            "n_valid": self.n_valid,
            "worst_slack": self.worst_slack,
            "worst_sample": self.worst_sample,
            "pass": self.passed,
            "details": self.details,
        }


def _path_constant_sample(rng, t, tan):
    # c_t = (1 - t) alpha + t with alpha = c_0; alpha < 1 exactly when tan < 0.
    alpha = np.where(tan < 0, rng.uniform(1.0 / 3.0, 1.0, t.shape), rng.uniform(1.0, 3.0, t.shape))
    alpha = np.maximum(alpha, np.nextafter(1.0 / 3.0, 1.0))
    return (1.0 - t) * alpha + t


def _draw(spec: SampleSpec, rng, m: int, fixed_ct: Optional[tuple] = None) -> ConeSamples:
    lo, hi = spec.theta_range
    theta = rng.uniform(lo, hi, m)
    ph = PhaseBatch(theta)
    if fixed_ct is None:
        t = rng.uniform(0.0, 1.0, m)
        c = _path_constant_sample(rng, t, ph.tan_theta)
    else:
        c = np.full(m, float(fixed_ct[0]))
        t = np.full(m, float(fixed_ct[1]))
    base = np.sqrt(c * ph.sec2_theta)
    log_hi = math.log(spec.lambda_scale)
    if spec.on_level_set:
        l12 = base[:, None] * np.exp(rng.uniform(-0.5, log_hi, (m, 2)))
        den = l12[:, 0] * l12[:, 1] - c * ph.sec2_theta
        with np.errstate(divide="ignore", invalid="ignore"):
            l3 = ph.sec2_theta * (c * (l12[:, 0] + l12[:, 1]) + 2.0 * t * ph.tan_theta) / den
        l3 = np.where(den > 0, l3, -1.0)
        lam = np.concatenate([l12, l3[:, None]], axis=1)
    else:
        lam = base[:, None] * np.exp(rng.uniform(-0.5, log_hi, (m, 3)))
    lam = -np.sort(-lam, axis=1)
    return ConeSamples(lam, c, t, theta)


def sample_cone_points(
    spec: SampleSpec,
    rng: Optional[np.random.Generator] = None,
    count: Optional[int] = None,
    fixed_ct: Optional[tuple] = None,
    budget_factor: int = 1000,
) -> ConeSamples:
    """Draw ``count`` points strictly inside the cone (optionally on the level set).

    Points whose spectrum is nearly repeated (relative gap below 1e-6) are
    rejected along with cone violations.  Exhausting the rejection budget
    raises SamplerStarvedError.
    """
    rng = rng if rng is not None else spec.rng()
    need = spec.count if count is None else int(count)
    parts, have, tried = [], 0, 0
    budget = budget_factor * need + 10_000
    while have < need:
        m = max(2 * (need - have), 64)
        tried += m
        if tried > budget:
            raise SamplerStarvedError(
                f"only {have} of {need} cone samples after {tried} draws"
            )
        s = _draw(spec, rng, m, fixed_ct)
        ok = cone_check(s.lam, s.c, s.t, s.phase).admissible
        gaps = np.min(np.abs(np.diff(s.lam, axis=1)), axis=1) / s.lam[:, 0]
        ok &= np.isfinite(s.lam).all(axis=1) & (gaps > 1e-6)
        idx = np.flatnonzero(ok)[: need - have]
        parts.append(ConeSamples(s.lam[idx], s.c[idx], s.t[idx], s.theta[idx]))
        have += len(idx)
    return ConeSamples(
        np.concatenate([p.lam for p in parts]),
        np.concatenate([p.c for p in parts]),
        np.concatenate([p.t for p in parts]),
        np.concatenate([p.theta for p in parts]),
    )


def sample_cone_point(spec: SampleSpec, rng: np.random.Generator):
    """Single cone point ``(lam, c, t, phase)`` from the stream ``rng``."""
    s = sample_cone_points(spec, rng, count=1)
    return s.lam[0], float(s.c[0]), float(s.t[0]), PhaseParameter(float(s.theta[0]), margin=0.0)


def random_hermitian(rng, n: int) -> np.ndarray:
    x = rng.standard_normal((n, 3, 3)) + 1j * rng.standard_normal((n, 3, 3))
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


def random_unitary(rng, n: int) -> np.ndarray:
    x = rng.standard_normal((n, 3, 3)) + 1j * rng.standard_normal((n, 3, 3))
    q, r = np.linalg.qr(x)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


# -- finite-difference oracles ------------------------------------------------


def _realify(m):
    """Real 6x6 block form ``[[Re, -Im], [Im, Re]]`` of a complex 3x3 matrix."""
    re, im = m.real, m.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def _F_hermitian(m6, c, t, tan):
    """F on the real form of a Hermitian matrix: trace halves, det is squared."""
    tr = 0.5 * np.trace(m6, axis1=-2, axis2=-1)
    return (c * tr + 2.0 * t * tan) / np.sqrt(np.linalg.det(m6))


def fd_gradient(lam, c, t, tan, h: float = FD_STEP) -> np.ndarray:
    """Central differences of F along each eigenvalue (step relative to |lam|)."""
    lam = np.asarray(lam, dtype=float)
    out = np.empty_like(lam)
    for mu in range(3):
        step = h * np.maximum(1.0, np.abs(lam[..., mu]))
        e = np.zeros(3)
        e[mu] = 1.0
        plus = lam + step[..., None] * e
        minus = lam - step[..., None] * e
        fp = (c * plus.sum(-1) + 2 * t * tan) / plus.prod(-1)
        fm = (c * minus.sum(-1) + 2 * t * tan) / minus.prod(-1)
        out[..., mu] = (fp - fm) / (2.0 * step)
    return out


def fd_hessian_directional(lam, c, t, tan, B, h: float = FD_STEP, eps: float = 1e-30):
    """``d^2/ds^2 F(diag(lam) + s B)`` at s = 0.

    The first derivative at ``s = +-h`` comes from a complex step of size
    ``eps`` applied to the real 6x6 form of the pencil (no cancellation); the
    second from their central difference.
    """
    lam = np.asarray(lam, dtype=float)
    A = np.zeros(lam.shape + (3,), dtype=complex)
    idx = np.arange(3)
    A[..., idx, idx] = lam
    A6 = _realify(A)
    B6 = _realify(np.asarray(B, dtype=complex))

    def d1(s):
        # the realified pencil is real, so the imaginary step carries no round-off
        m = (A6 + s * B6) + 1j * eps * B6
        return _F_hermitian(m, c, t, tan).imag / eps

    return (d1(h) - d1(-h)) / (2.0 * h)


# -- checks ---------------------------------------------------------------------


def _report(name, spec, n_valid, slack, scale, sample_fn, tol, details, extra_pass=True):
    rel = slack / scale
    i = int(np.argmin(rel))
    passed = bool(np.all(slack >= -tol * scale)) and n_valid == spec.count and extra_pass
    return LemmaReport(
        lemma=name,
        count=spec.count,
        n_valid=int(n_valid),
        worst_slack=float(slack[i]),
        worst_sample=sample_fn(i),
        passed=passed,
        details={"worst_relative_slack": float(rel[i]), "tolerance": tol, **details},
    )


def ct_lemma_slacks(int_Omega3, int_3omega2Omega, int_omega3, ph, ts) -> dict:
    """Slacks of ``1/3 < c_t``, ``c_t <= 1`` and ``c_t^3 > t^2 sin^2`` on a t grid.

    Integral arrays of shape (n,) are paired with phase arrays of shape (n,)
    and broadcast against ``ts`` of shape (m,), giving (n, m) slack arrays.
    """
    ts = np.asarray(ts, dtype=float)
    i3 = np.asarray(int_Omega3, dtype=float)[..., None]
    i2 = np.asarray(int_3omega2Omega, dtype=float)[..., None]
    i1 = np.asarray(int_omega3, dtype=float)[..., None]
    tan = np.asarray(ph.tan_theta, dtype=float)[..., None]
    s2 = np.asarray(ph.sec2_theta, dtype=float)[..., None]
    sin2 = np.asarray(ph.sin2_theta, dtype=float)[..., None]
    c = (i3 - 2.0 * ts * tan * s2 * i1) / (s2 * i2)
    # magnitude of the terms whose cancellation produces c_t
    scale = (np.abs(i3) + 2.0 * ts * np.abs(tan) * s2 * i1) / (s2 * np.abs(i2))
    return {
        "c": c,
        "scale": scale,
        "lower": c - 1.0 / 3.0,
        "upper": 1.0 - c,
        "cubic": c**3 - ts**2 * sin2,
    }


def _constant_backgrounds(spec: SampleSpec, rng):
    """Random constant (omega, Omega, theta) satisfying the subsolution and class identity."""
    pts = sample_cone_points(spec, rng, fixed_ct=(1.0, 1.0))
    n = len(pts)
    g = rng.standard_normal((n, 3, 3)) + 1j * rng.standard_normal((n, 3, 3))
    omega = g @ np.conj(np.swapaxes(g, -1, -2)) / 3.0 + 0.5 * np.eye(3)
    L = np.linalg.cholesky(omega)
    U = random_unitary(rng, n)
    D = np.zeros((n, 3, 3))
    D[:, [0, 1, 2], [0, 1, 2]] = pts.lam
    Omega = L @ U @ D @ np.conj(np.swapaxes(U, -1, -2)) @ np.conj(np.swapaxes(L, -1, -2))
    Omega = 0.5 * (Omega + np.conj(np.swapaxes(Omega, -1, -2)))
    vol = np.linalg.det(omega).real * TORUS_VOLUME
    return pts, omega, Omega, vol


def check_ct_lemma(spec: SampleSpec, n_t: int = 101, tol: float = 1e-12) -> LemmaReport:
    """Bounds on the path constant over random admissible constant backgrounds."""
    rng = spec.rng(_LEMMA_IDS["ct_lemma"])
    pts, omega, Omega, vol = _constant_backgrounds(spec, rng)
    ph = pts.phase
    ints = constant_class_integrals(omega, Omega, vol)
    defect, scale = ints.compatibility_defect(ph)
    ts = np.linspace(0.0, 1.0, n_t)
    sl = ct_lemma_slacks(ints.int_Omega3, ints.int_3omega2Omega, ints.int_omega3, ph, ts)
    # the integrals come from an eigensolve with absolute error ~ eps * lam_1,
    # so the attainable accuracy of c_t degrades with the spread lam_1 / lam_3
    sl["scale"] = sl["scale"] * (pts.lam[:, 0] / pts.lam[:, 2])[:, None]

    # c_t^{3/2}/t is minimised over (0, 1] at t = 1 when tan < 0.
    f = sl["c"][:, 1:] ** 1.5 / ts[1:]
    neg = ph.tan_theta < 0
    argmin_ok = np.all(np.argmin(f[neg], axis=1) == n_t - 2)
    with np.errstate(divide="ignore"):
        alpha = sl["c"][:, 0]
        t_crit = np.where(alpha < 1, 2 * alpha / (1 - alpha), np.inf)

    upper = np.where(neg[:, None], sl["upper"], np.inf)
    worst = np.minimum(np.minimum(sl["lower"], sl["cubic"]), upper)
    flat = (worst / sl["scale"]).min(axis=1)
    ok = (
        np.all(sl["lower"] > 0)
        and np.all(sl["cubic"] > 0)
        and np.all(upper >= -tol * sl["scale"])
        and np.all(np.abs(defect) <= 1e-8 * scale)
        and argmin_ok
    )
    i = int(np.argmin(flat))
    j = int(np.argmin(worst[i] / sl["scale"][i]))
    sample = pts.point(i)
    sample.update(t=float(ts[j]), c=float(sl["c"][i, j]), alpha=float(alpha[i]))
    return LemmaReport(
        lemma="ct_lemma",
        count=spec.count,
        n_valid=len(pts),
        worst_slack=float(worst[i, j]),
        worst_sample=sample,
        passed=bool(ok) and len(pts) == spec.count,
        details={
            "t_values": n_t,
            "min_lower_slack": float(sl["lower"].min()),
            "min_upper_slack": float(np.min(upper)),
            "worst_relative_slack": float(flat[i]),
            "min_cubic_slack": float(sl["cubic"].min()),
            "min_c": float(sl["c"].min()),
            "max_class_defect": float(np.max(np.abs(defect) / scale)),
            "argmin_at_t1": bool(argmin_ok),
            "min_critical_t": float(np.min(t_crit[neg])) if np.any(neg) else None,
            "tolerance": tol,
        },
    )


def check_convexity_lemma(spec: SampleSpec, tol: float = 1e-9, audit_every: int = 100) -> LemmaReport:
    """Restricted convexity: Hessian form >= off-diagonal bound on projected B."""
    rng = spec.rng(_LEMMA_IDS["convexity_lemma"])
    s = sample_cone_points(spec, rng)
    ph = s.phase
    B = constraint_project(s.lam, s.c, s.t, ph, random_hermitian(rng, len(s)))
    q = hessian_quadratic_form(s.lam, s.c, s.t, ph, B)
    num = s.c * s.lam.sum(1) + 2.0 * s.t * ph.tan_theta
    det = s.lam.prod(1)
    ll = s.lam[:, :, None] * s.lam[:, None, :]
    off = np.abs(B) ** 2 / ll
    off[:, [0, 1, 2], [0, 1, 2]] = 0.0
    rhs = num / det * off.sum((1, 2))
    slack = q - rhs
    v = np.real(np.diagonal(B, axis1=1, axis2=2)) / s.lam
    vv = np.abs(v[:, :, None] * v[:, None, :])
    pair = s.lam[:, :, None] + s.lam[:, None, :]
    scale = (
        (s.c[:, None, None] * pair * vv).sum((1, 2)) + num * (np.abs(B) ** 2 / ll + vv).sum((1, 2))
    ) / det
    scale = np.maximum(scale, np.finfo(float).tiny)

    audit = np.arange(0, len(s), audit_every)
    q_fd = fd_hessian_directional(s.lam[audit], s.c[audit], s.t[audit], ph.tan_theta[audit], B[audit])
    hess_err = np.abs(q_fd - q[audit]) / scale[audit]
    grad = gradient_F(s.lam[audit], s.c[audit], s.t[audit], PhaseBatch(s.theta[audit]))
    grad_fd = fd_gradient(s.lam[audit], s.c[audit], s.t[audit], ph.tan_theta[audit])
    grad_err = np.max(np.abs(grad_fd - grad) / np.maximum(np.abs(grad), 1e-300), axis=1)
    audit_ok = bool(np.all(hess_err < 1e-6) and np.all(grad_err < 1e-6))

    def sample(i):
        out = s.point(i)
        out["B"] = [[[float(z.real), float(z.imag)] for z in row] for row in B[i]]
        return out

    return _report(
        "convexity_lemma", spec, len(s), slack, scale, sample, tol,
        {
            "audited": int(len(audit)),
            "max_hessian_fd_rel_error": float(hess_err.max()),
            "max_gradient_fd_rel_error": float(grad_err.max()),
            "audit_pass": audit_ok,
        },
        extra_pass=audit_ok,
    )


def boundary_stages(s: ConeSamples, stages: int = BOUNDARY_STAGES, factor: float = BOUNDARY_FACTOR):
    """Level-set points driven geometrically toward the edge of the cone.

    For each base sample the two smallest eigenvalues are set to
    ``sqrt(c) |sec| (1 + factor^k)`` (split by a relative 1e-6 to avoid a
    repeated root) and the largest is recovered from the level set.  As k
    grows the pair-product margin shrinks to 0 and the pair-sum margin
    decreases to its infimum ``2 c^{3/2} |sec| + 2 t tan``.
    """
    ph = s.phase
    root = np.sqrt(s.c * ph.sec2_theta)
    out = []
    for k in range(stages):
        lo = root * (1.0 + factor**k)
        l2 = lo * (1.0 + 1e-6)
        l1 = ph.sec2_theta * (s.c * (l2 + lo) + 2.0 * s.t * ph.tan_theta) / (l2 * lo - s.c * ph.sec2_theta)
        lam = -np.sort(-np.stack([l1, l2, lo], axis=1), axis=1)
        out.append(ConeSamples(lam, s.c.copy(), s.t.copy(), s.theta.copy()))
    return out


def check_discriminant(spec: SampleSpec, tol: float = 1e-9, identity_tol: float = 1e-10,
                       n_driven: int = 200) -> LemmaReport:
    """Discriminant identity ED - B^2 = 4 N^2 g and nonnegativity of g."""
    rng = spec.rng(_LEMMA_IDS["discriminant"])
    s = sample_cone_points(spec, rng)
    driven = boundary_stages(ConeSamples(*(x[:n_driven] for x in (s.lam, s.c, s.t, s.theta))))
    allpts = ConeSamples(
        np.concatenate([s.lam] + [d.lam for d in driven]),
        np.concatenate([s.c] + [d.c for d in driven]),
        np.concatenate([s.t] + [d.t for d in driven]),
        np.concatenate([s.theta] + [d.theta for d in driven]),
    )
    ph = allpts.phase
    q = convexity_quantities(allpts.lam, allpts.c, allpts.t, ph)
    lam, c, tt = allpts.lam, allpts.c, allpts.t * ph.tan_theta
    num = c * lam.sum(1) + 2.0 * tt
    lhs = q.E * q.D - q.B**2
    rhs = 4.0 * num**2 * q.g
    id_scale = np.maximum.reduce([np.abs(q.E * q.D), q.B**2, np.abs(rhs)])
    id_err = np.abs(lhs - rhs) / id_scale
    sigma2 = lam[:, 0] * lam[:, 1] + lam[:, 0] * lam[:, 2] + lam[:, 1] * lam[:, 2]
    g_scale = c * c * sigma2 + 2.0 * c * np.abs(tt) * lam.sum(1) + 3.0 * tt * tt
    in_cone = cone_check(lam, c, allpts.t, ph).admissible
    n = len(s)
    return _report(
        "discriminant", spec, n, q.g, g_scale, allpts.point, tol,
        {
            "max_identity_rel_error": float(id_err.max()),
            "worst_identity_sample": allpts.point(int(np.argmax(id_err))),
            "identity_tolerance": identity_tol,
            "driven_points": int(len(allpts) - n),
            "driven_all_in_cone": bool(in_cone[n:].all()),
            "driven_min_g_relative": float((q.g[n:] / g_scale[n:]).min()) if len(allpts) > n else None,
        },
        extra_pass=bool(id_err.max() <= identity_tol and in_cone.all()),
    )


def check_euler_bound(spec: SampleSpec, tol: float = 1e-10, n_driven: int = 200) -> LemmaReport:
    """Lower bound ``lam_mu dF/dlam_mu >= -cos^2`` on the level set."""
    rng = spec.rng(_LEMMA_IDS["euler_bound"])
    s = sample_cone_points(spec, rng)
    slack = euler_bound_check(s.lam, s.c, s.t, s.phase)
    driven = boundary_stages(ConeSamples(*(x[:n_driven] for x in (s.lam, s.c, s.t, s.theta))))
    driven_slack = [float(euler_bound_check(d.lam, d.c, d.t, d.phase).min()) for d in driven]
    return _report(
        "euler_bound", spec, len(s), slack, np.ones_like(slack), s.point, tol,
        {"driven_min_slack_by_stage": driven_slack[:: max(1, len(driven_slack) // 10)],
         "driven_final_min_slack": driven_slack[-1]},
        extra_pass=min(driven_slack) >= -tol,
    )


def pair_sum_bound(c, t, ph) -> np.ndarray:
    """``2 c^{3/2} |sec| + 2 t tan``: the least pair sum inside the cone."""
    return 2.0 * np.asarray(c) ** 1.5 * np.sqrt(ph.sec2_theta) + 2.0 * t * ph.tan_theta


def check_boundary_exclusion(spec: SampleSpec, tol: float = 1e-12) -> LemmaReport:
    """Pair sum stays above its positive lower bound wherever lam2 lam3 >= c sec^2."""
    rng = spec.rng(_LEMMA_IDS["boundary_exclusion"])
    s = sample_cone_points(spec, rng)
    ph = s.phase
    bound = pair_sum_bound(s.c, s.t, ph)
    pair_sum = s.c * (s.lam[:, 1] + s.lam[:, 2]) + 2.0 * s.t * ph.tan_theta
    slack = pair_sum - bound
    scale = s.c * (s.lam[:, 1] + s.lam[:, 2]) + 2.0 * s.t * np.abs(ph.tan_theta) + np.abs(bound)
    # AM-GM equality case lam2 = lam3 = sqrt(c) |sec|
    eq = 2.0 * s.c * np.sqrt(s.c * ph.sec2_theta) + 2.0 * s.t * ph.tan_theta
    eq_err = float(np.max(np.abs(eq - bound) / scale))
    return _report(
        "boundary_exclusion", spec, len(s), slack, scale, s.point, tol,
        {"min_bound": float(bound.min()), "equality_case_max_rel_error": eq_err},
        extra_pass=bool(bound.min() > 0 and eq_err <= 1e-12),
    )


CHECKS = {
    "ct_lemma": check_ct_lemma,
    "convexity_lemma": check_convexity_lemma,
    "discriminant": check_discriminant,
    "euler_bound": check_euler_bound,
    "boundary_exclusion": check_boundary_exclusion,
}


def run_all(spec: SampleSpec) -> list[LemmaReport]:
    return [fn(spec) for fn in CHECKS.values()]

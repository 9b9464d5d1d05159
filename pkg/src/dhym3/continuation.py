"""Newton-Krylov solver for the continuity path and adaptive continuation in t.

At a grid point write ``A`` for ``Omega_phi = Omega0 + sqrt(-1) d dbar phi``
in an omega-orthonormal frame.  The path equation is

    G(phi) = det A - c_t sec^2 tr A - 2 t tan sec^2 = 0,

whose linearisation is ``L u = tr((adj A - c_t sec^2 I) u_{j kbar})``; in an
eigenframe of A the coefficient on ``u_{mu mubar}`` is
``lam_nu lam_rho - c_t sec^2``.  Convergence is measured by the sup norm of
``F_tilde(A) - 1``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (
    ContinuationStalledError,
    EllipticityLostError,
    HypothesisViolatedError,
    NoConvergenceError,
)
from .path_constants import ClassIntegrals, PathPoint, compute_ct
from .phase_algebra import (
    ConeMargins,
    PhaseParameter,
    cone_check,
    dhym_residual,
    metric_factor,
    relative_spectrum,
)
from .torus import (
    BackgroundData,
    class_integrals_grid,
    complex_hessian,
    contract_hessian,
    grid_admissibility_rtol,
    project_resolved,
    zero_mean,
)

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "t",
    "c_t",
    "newton_iters",
    "residual_sup",
    "margin_pos",
    "margin_pair_prod",
    "margin_pair_sum",
    "sup_phi",
    "sup_lambda1",
)


@dataclass
class SolverConfig:
    newton_tol: float = 1e-11
    max_newton_iters: int = 30
    t_step_init: float = 0.125
    t_step_min: float = 1.0 / 4096
    t_step_max: float = 0.5
    linear_tol: float = 1e-12
    max_linear_iters: int = 300
    cone_margin_floor: float = 1e-8
    easy_step_iters: int = 3

    def __post_init__(self):
        for name in ("newton_tol", "linear_tol", "cone_margin_floor", "t_step_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.t_step_min <= self.t_step_init <= self.t_step_max <= 1.0:
            raise ValueError("need t_step_min <= t_step_init <= t_step_max <= 1")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")


@dataclass
class TraceRecord:
    t: float
    c_t: float
    newton_iters: int
    residual_sup: float
    margin_pos: float
    margin_pair_prod: float
    margin_pair_sum: float
    sup_phi: float
    sup_lambda1: float
    linear_iters: int = 0


@dataclass
class ContinuationTrace:
    records: list = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        if self.records and not rec.t > self.records[-1].t:
            raise ValueError("trace t values must increase strictly")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([repr(float(getattr(r, c))) if c != "newton_iters" else r.newton_iters
                            for c in TRACE_COLUMNS])

    def to_json(self) -> list:
        return [asdict(r) for r in self.records]


@dataclass
class NewtonResult:
    phi: np.ndarray
    iterations: int
    residual_sup: float
    linear_iterations: int
    history: list


class PointwiseState:
    """Everything the solver needs at one iterate, computed once."""

    def __init__(self, bg: BackgroundData, phi, path: PathPoint, linv):
        ph = path.phase
        self.omega_phi = bg.Omega0() + complex_hessian(bg.grid, phi)
        a = linv @ self.omega_phi @ np.conj(linv.T)
        self.a = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
        self.det = np.linalg.det(self.a).real
        self.tr = np.trace(self.a, axis1=-2, axis2=-1).real
        self.G = (
            self.det
            - path.c_t * ph.sec2_theta * self.tr
            - 2.0 * path.t * ph.tan_theta * ph.sec2_theta
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            self.F_res = ph.sec2_theta * (path.c_t * self.tr + 2.0 * path.t * ph.tan_theta) / self.det - 1.0
        self.lam = np.linalg.eigvalsh(self.a)[..., ::-1]
        self.margins = cone_check(self.lam, path.c_t, path.t, ph)

    @property
    def residual_sup(self) -> float:
        r = float(np.max(np.abs(self.F_res)))
        return r if math.isfinite(r) else math.inf

    def min_margin(self) -> float:
        return min(float(np.min(m)) for m in self.margins)


def _adjugate(a):
    c0, c1, c2 = a[..., :, 0], a[..., :, 1], a[..., :, 2]
    return np.stack([np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)], axis=-2)


def _coefficients_from_state(state: PointwiseState, path: PathPoint, linv) -> np.ndarray:
    m = _adjugate(state.a) - path.c_t * path.phase.sec2_theta * np.eye(3)
    c = np.conj(linv.T) @ m @ linv
    return 0.5 * (c + np.conj(np.swapaxes(c, -1, -2)))


def _require_cone(margins: ConeMargins, where: str) -> None:
    worst = margins.minimum()
    if not all(m > 0 for m in worst):
        raise EllipticityLostError(
            f"cone margins not positive {where}: min lambda {worst.min_lambda:.3e}, "
            f"pair product {worst.min_pair_product_margin:.3e}, "
            f"pair sum {worst.min_pair_sum_margin:.3e}"
        )


def linearized_coefficients(bg: BackgroundData, phi, path: PathPoint) -> np.ndarray:
    """Pointwise coefficient matrix of the linearised path operator."""
    linv = metric_factor(bg.omega)
    state = PointwiseState(bg, phi, path, linv)
    _require_cone(state.margins, "in linearisation")
    return _coefficients_from_state(state, path, linv)


def apply_linearization(bg: BackgroundData, coeffs, u) -> np.ndarray:
    return contract_hessian(bg.grid, coeffs, u)


def _preconditioner_symbol(bg: BackgroundData, coeffs) -> np.ndarray:
    cbar = np.mean(coeffs, axis=tuple(range(bg.grid.dims_active)))
    sym = np.einsum("jk,...kj->...", cbar, bg.grid.hessian_symbol).real
    inv = np.zeros_like(sym)
    mask = bg.grid.resolved_mask & (np.abs(sym) > 0)
    inv[mask] = 1.0 / sym[mask]
    return inv


def _solve_linear(bg: BackgroundData, coeffs, rhs, config: SolverConfig):
    grid = bg.grid
    shape = grid.shape
    n = int(np.prod(shape))
    inv_sym = _preconditioner_symbol(bg, coeffs)

    def matvec(x):
        u = project_resolved(grid, x.reshape(shape))
        return project_resolved(grid, contract_hessian(grid, coeffs, u)).ravel()

    def precond(x):
        return np.fft.ifftn(inv_sym * np.fft.fftn(x.reshape(shape))).real.ravel()

    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    M = LinearOperator((n, n), matvec=precond, dtype=float)
    b = project_resolved(grid, rhs).ravel()
    count = [0]

    def cb(_):
        count[0] += 1

    sol, info = gmres(
        A, b, M=M, rtol=config.linear_tol, atol=0.0, restart=min(n, 100),
        maxiter=config.max_linear_iters, callback=cb, callback_type="pr_norm",
    )
    if info < 0:
        raise NoConvergenceError(f"GMRES breakdown (info={info})")
    return project_resolved(grid, sol.reshape(shape)), count[0]


def newton_solve(
    bg: BackgroundData,
    phi_init,
    path: PathPoint,
    config: Optional[SolverConfig] = None,
) -> NewtonResult:
    """Solve the path equation at fixed t by damped Newton-Krylov.

    Each update solves ``L u = -G`` on the mean-free, Nyquist-free subspace by
    GMRES preconditioned with the inverse of the grid-averaged constant
    coefficient operator.  A step is accepted only if every cone margin stays
    above ``cone_margin_floor`` and the L2 norm of G decreases.
    """
    config = config or SolverConfig()
    grid = bg.grid
    linv = metric_factor(bg.omega)
    phi = project_resolved(grid, phi_init)
    state = PointwiseState(bg, phi, path, linv)
    _require_cone(state.margins, "at the Newton seed")
    history = [state.residual_sup]
    lin_total = 0
    for it in range(config.max_newton_iters + 1):
        if state.residual_sup <= config.newton_tol:
            return NewtonResult(zero_mean(grid, phi), it, state.residual_sup, lin_total, history)
        if it == config.max_newton_iters:
            break
        coeffs = _coefficients_from_state(state, path, linv)
        du, nlin = _solve_linear(bg, coeffs, -state.G, config)
        lin_total += nlin
        g_norm = float(np.linalg.norm(state.G))
        step = 1.0
        while True:
            trial = phi + step * du
            trial_state = PointwiseState(bg, trial, path, linv)
            ok = trial_state.min_margin() >= config.cone_margin_floor
            if ok and np.linalg.norm(trial_state.G) <= (1.0 - 1e-4 * step) * g_norm:
                break
            step *= 0.5
            if step < 1e-8:
                raise NoConvergenceError(
                    f"line search failed at Newton iteration {it} "
                    f"(residual {state.residual_sup:.3e})",
                    history,
                )
        phi, state = trial, trial_state
        history.append(state.residual_sup)
        log.debug("t=%.6f newton %d step %.3g residual %.3e", path.t, it + 1, step, state.residual_sup)
    raise NoConvergenceError(
        f"no convergence after {config.max_newton_iters} Newton iterations "
        f"(residual {state.residual_sup:.3e})",
        history,
    )


def _record(bg, phi, path, result: NewtonResult) -> TraceRecord:
    linv = metric_factor(bg.omega)
    state = PointwiseState(bg, phi, path, linv)
    m = state.margins.minimum()
    return TraceRecord(
        t=path.t,
        c_t=path.c_t,
        newton_iters=result.iterations,
        residual_sup=result.residual_sup,
        margin_pos=m.min_lambda,
        margin_pair_prod=m.min_pair_product_margin,
        margin_pair_sum=m.min_pair_sum_margin,
        sup_phi=float(np.max(np.abs(phi))),
        sup_lambda1=float(np.max(state.lam[..., 0])),
        linear_iters=result.linear_iterations,
    )


def check_hypotheses(bg: BackgroundData) -> ClassIntegrals:
    """Subsolution test at every grid point, then class admissibility."""
    ok, margins = bg.check_subsolution()
    if not ok:
        raise HypothesisViolatedError(
            f"background fails the subsolution condition: positivity margin "
            f"{margins.positivity:.6g}, pair-product margin {margins.pair_product:.6g}",
            margins._asdict(),
        )
    integrals = class_integrals_grid(bg)
    integrals.check_admissible(bg.phase, grid_admissibility_rtol(bg.grid))
    return integrals


def continue_path(bg: BackgroundData, config: Optional[SolverConfig] = None):
    """Follow the continuity path from t = 0 (seed phi = 0) to t = 1.

    Returns ``(phi, trace)``.  The step doubles after easy solves and halves
    after failures; falling below ``t_step_min`` raises
    ContinuationStalledError carrying the partial trace.
    """
    config = config or SolverConfig()
    integrals = check_hypotheses(bg)
    rtol = grid_admissibility_rtol(bg.grid)
    trace = ContinuationTrace()

    path = compute_ct(integrals, 0.0, bg.phase, rtol=rtol)
    try:
        res = newton_solve(bg, np.zeros(bg.grid.shape), path, config)
    except NoConvergenceError as exc:
        # nothing to retreat to at t = 0: report the Newton failure itself
        exc.trace = trace
        raise
    except EllipticityLostError as exc:
        raise ContinuationStalledError(f"t=0 solve failed: {exc}", trace, 0.0) from exc
    phi = res.phi
    trace.append(_record(bg, phi, path, res))

    t, dt = 0.0, config.t_step_init
    while t < 1.0:
        t_new = min(1.0, t + dt)
        path = compute_ct(integrals, t_new, bg.phase, rtol=rtol)
        try:
            res = newton_solve(bg, phi, path, config)
        except (NoConvergenceError, EllipticityLostError) as exc:
            dt *= 0.5
            log.info("step to t=%.6f failed (%s); dt -> %.3g", t_new, exc, dt)
            if dt < config.t_step_min:
                raise ContinuationStalledError(
                    f"continuation stalled at t={t:.6f}: step below {config.t_step_min}",
                    trace, t,
                ) from exc
            continue
        phi, t = res.phi, t_new
        trace.append(_record(bg, phi, path, res))
        if res.iterations <= config.easy_step_iters:
            dt = min(2.0 * dt, config.t_step_max)
    return phi, trace


@dataclass
class VerificationReport:
    sup_F_tilde_residual: float
    sup_dhym_residual: float
    sup_phase_deviation: float
    min_lambda: float
    min_pair_product_margin: float
    min_pair_sum_margin: float

    def to_json(self) -> dict:
        return asdict(self)


def verify_solution(bg: BackgroundData, phi, ph: Optional[PhaseParameter] = None) -> VerificationReport:
    """Diagnostics of a candidate t = 1 solution against both equations."""
    ph = ph or bg.phase
    linv = metric_factor(bg.omega)
    state = PointwiseState(bg, phi, PathPoint(1.0, 1.0, ph), linv)
    i_theta = bg.i_theta(state.omega_phi)
    a = relative_spectrum(bg.omega, i_theta)
    phase_dev = np.abs(np.sum(np.arctan(a), axis=-1) - ph.theta_hat)
    m = state.margins.minimum()
    return VerificationReport(
        sup_F_tilde_residual=state.residual_sup,
        sup_dhym_residual=float(np.max(np.abs(dhym_residual(bg.omega, i_theta, ph)))),
        sup_phase_deviation=float(np.max(phase_dev)),
        min_lambda=m.min_lambda,
        min_pair_product_margin=m.min_pair_product_margin,
        min_pair_sum_margin=m.min_pair_sum_margin,
    )

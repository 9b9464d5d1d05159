"""JSON run configuration.

Conventions used in config files:

* Matrices are 3x3 Hermitian and given in the coordinate frame ``dz_j``.
  Real matrices may be written as nested lists; complex ones as
  ``{"re": [[...]], "im": [[...]]}``.
* ``omega`` is the constant Kahler form, ``Omega0`` the constant part of the
  background (1,1)-form.  Instead of ``Omega0`` one may give ``curvature``,
  the constant curvature representative ``sqrt(-1) Theta_0``; then
  ``Omega0 = curvature - tan(theta_hat) omega`` and ``theta_hat`` is derived
  from the class integral ``Z``.
* ``psi0`` is a list of trigonometric modes ``{"coeff", "wavevector",
  "kind"}`` with integer wavevectors over ``(x1, x2, x3, y1, y2, y3)``;
  the background is ``Omega0 + sqrt(-1) d dbar psi0``.
* Angles are in radians; the torus has period ``2 pi`` in every real axis.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .continuation import SolverConfig
from .lemmas import SampleSpec
from .path_constants import compute_theta_hat
from .phase_algebra import PhaseParameter
from .torus import (
    BackgroundData,
    TorusGrid,
    TrigMode,
    class_integral_z_grid,
    complex_hessian,
    make_grid,
    trig_field,
)

THETA_AGREEMENT_TOL = 1e-10


class ComplexMatrix(BaseModel):
    model_config = ConfigDict(extra="forbid")
    re: list[list[float]]
    im: list[list[float]]


MatrixSpec = Union[list[list[float]], ComplexMatrix]


def to_matrix(m: MatrixSpec) -> np.ndarray:
    if isinstance(m, ComplexMatrix):
        out = np.asarray(m.re, dtype=float) + 1j * np.asarray(m.im, dtype=float)
    else:
        out = np.asarray(m, dtype=complex)
    if out.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {out.shape}")
    return out


class ModeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    coeff: float
    wavevector: list[int] = Field(min_length=6, max_length=6)
    kind: Literal["cos", "sin"] = "cos"

    def to_mode(self) -> TrigMode:
        return TrigMode(self.coeff, tuple(self.wavevector), self.kind)


class BackgroundSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    omega: MatrixSpec
    Omega0: Optional[MatrixSpec] = None
    curvature: Optional[MatrixSpec] = None
    theta_hat: Optional[float] = None
    psi0: list[ModeSpec] = Field(default_factory=list)

    @field_validator("omega", "Omega0", "curvature")
    @classmethod
    def _square(cls, v):
        if v is not None:
            to_matrix(v)
        return v

    @model_validator(mode="after")
    def _one_source(self):
        if (self.Omega0 is None) == (self.curvature is None):
            raise ValueError("give exactly one of 'Omega0' and 'curvature'")
        if self.Omega0 is not None and self.theta_hat is None:
            raise ValueError("'theta_hat' is required together with 'Omega0'")
        return self


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dims_active: int = Field(ge=1, le=6)
    resolution: Union[int, list[int]]

    def build(self) -> TorusGrid:
        return make_grid(self.dims_active, self.resolution)


class SolverSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    newton_tol: float = 1e-11
    max_newton_iters: int = 30
    t_step_init: float = 0.125
    t_step_min: float = 1.0 / 4096
    t_step_max: float = 0.5
    linear_tol: float = 1e-12
    max_linear_iters: int = 300
    cone_margin_floor: float = 1e-8
    easy_step_iters: int = 3

    def build(self) -> SolverConfig:
        return SolverConfig(**self.model_dump())


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dir: Optional[str] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    background: BackgroundSpec
    grid: GridSpec
    solver: SolverSpec = Field(default_factory=SolverSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def _build_checks(self):
        self.grid.build()
        self.solver.build()
        return self


def load_run_config(path) -> RunConfig:
    return RunConfig.model_validate(json.loads(Path(path).read_text()))


def build_background(cfg: RunConfig) -> BackgroundData:
    """Assemble the background and fix theta_hat.

    With ``curvature`` the angle comes from ``Z``; a supplied ``theta_hat``
    must then agree with it to ``THETA_AGREEMENT_TOL``.  With ``Omega0`` the
    supplied angle is taken as given.
    """
    b = cfg.background
    grid = cfg.grid.build()
    omega = to_matrix(b.omega)
    psi0 = trig_field(grid, [m.to_mode() for m in b.psi0])
    hess = complex_hessian(grid, psi0)

    if b.curvature is not None:
        curv = to_matrix(b.curvature)
        ph = compute_theta_hat(class_integral_z_grid(grid, omega, curv + hess))
        if b.theta_hat is not None and abs(b.theta_hat - ph.theta_hat) > THETA_AGREEMENT_TOL:
            raise ValueError(
                f"theta_hat={b.theta_hat!r} disagrees with the class value {ph.theta_hat!r}"
            )
        Omega0 = curv - ph.tan_theta * omega
    else:
        # class compatibility is checked by the solver after the subsolution test
        ph = PhaseParameter(float(b.theta_hat))
        Omega0 = to_matrix(b.Omega0)
    return BackgroundData(grid, omega, Omega0, psi0, ph)


def load_sample_spec(path=None, seed: Optional[int] = None) -> SampleSpec:
    """SampleSpec from an optional JSON file, with ``seed`` overriding the file."""
    fields = json.loads(Path(path).read_text()) if path else {}
    if not isinstance(fields, dict):
        raise ValueError("lemma spec must be a JSON object")
    allowed = {"count", "seed", "theta_range", "lambda_scale", "on_level_set"}
    unknown = set(fields) - allowed
    if unknown:
        raise ValueError(f"unknown lemma spec fields: {sorted(unknown)}")
    if seed is not None:
        fields["seed"] = seed
    if "theta_range" in fields:
        fields["theta_range"] = tuple(fields["theta_range"])
    if "count" in fields and not isinstance(fields["count"], int):
        raise ValueError("count must be an integer")
    return SampleSpec(**fields)


def baseline_config_dict(theta_hat: float = 3 * math.pi / 4) -> dict:
    """The constant background omega = I, Omega0 = 2I used throughout the tests."""
    eye = np.eye(3).tolist()
    return {
        "background": {
            "omega": eye,
            "Omega0": (2 * np.eye(3)).tolist(),
            "theta_hat": theta_hat,
            "psi0": [],
        },
        "grid": {"dims_active": 2, "resolution": 16},
    }

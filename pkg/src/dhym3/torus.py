"""Periodic fields on the flat torus C^3 / (2 pi Z)^6 and their spectral calculus.

Real coordinates are ordered ``(x1, x2, x3, y1, y2, y3)`` with
``z_j = x_j + i y_j``.  A grid activates the first ``dims_active`` of these
axes (two active axes means fields of ``Re z1, Re z2``); fields are constant
along the remaining ones and are stored as arrays of shape ``grid.shape``
(scalar fields) or ``grid.shape + (3, 3)`` (form fields).

Fourier modes at the Nyquist frequency are treated as unresolved: every
derivative annihilates them, and :func:`project_resolved` removes them
together with the mean.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .path_constants import ClassIntegrals
from .phase_algebra import (
    PhaseParameter,
    check_hermitian,
    hermitian_part,
    metric_factor,
    normalize_form,
    subsolution_check_n3,
)

AXIS_NAMES = ("x1", "x2", "x3", "y1", "y2", "y3")
TORUS_VOLUME = (2.0 * math.pi) ** 6
PERIOD = 2.0 * math.pi

GMA3_MAGIC = b"GMA3"
GMA3_VERSION = 1


@dataclass(frozen=True, eq=False)
class TorusGrid:
    dims_active: int
    resolution: tuple[int, ...]

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolution)
        object.__setattr__(self, "resolution", res)
        if not 1 <= self.dims_active <= 6:
            raise ValueError("dims_active must lie in 1..6")
        if len(res) != self.dims_active:
            raise ValueError(
                f"need {self.dims_active} resolutions, got {len(res)}"
            )
        for n in res:
            if n < 8 or n % 2:
                raise ValueError(f"resolution {n} must be even and >= 8")

    def __eq__(self, other):
        return (
            isinstance(other, TorusGrid)
            and self.dims_active == other.dims_active
            and self.resolution == other.resolution
        )

    def __hash__(self):
        return hash((self.dims_active, self.resolution))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def full_resolution(self) -> tuple[int, ...]:
        return self.resolution + (1,) * (6 - self.dims_active)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(PERIOD / n for n in self.resolution)

    def coordinates(self) -> list:
        """Six coordinate arrays broadcastable to ``shape`` (zeros on inactive axes)."""
        d = self.dims_active
        out = []
        for a in range(6):
            if a < d:
                n = self.resolution[a]
                x = np.arange(n) * (PERIOD / n)
                shp = [1] * d
                shp[a] = n
                out.append(x.reshape(shp))
            else:
                out.append(np.zeros((1,) * d))
        return out

    @cached_property
    def _wavenumbers(self) -> list:
        d = self.dims_active
        out = []
        for a in range(6):
            if a < d:
                n = self.resolution[a]
                k = np.fft.fftfreq(n, d=1.0 / n)
                k[n // 2] = 0.0
                shp = [1] * d
                shp[a] = n
                out.append(k.reshape(shp))
            else:
                out.append(np.zeros((1,) * d))
        return out

    @cached_property
    def resolved_mask(self) -> np.ndarray:
        """Fourier modes kept by the solver: nonzero and below Nyquist on every axis."""
        mask = np.ones(self.shape, dtype=bool)
        for a, n in enumerate(self.resolution):
            shp = [1] * self.dims_active
            shp[a] = n
            keep = np.ones(n, dtype=bool)
            keep[n // 2] = False
            mask &= keep.reshape(shp)
        mask[(0,) * self.dims_active] = False
        return mask

    @cached_property
    def hessian_symbol(self) -> np.ndarray:
        """Multiplier S with (d dbar phi)_{jk}^ = S_jk(k) phi^(k)."""
        k = [np.broadcast_to(w, self.shape) for w in self._wavenumbers]
        sym = np.empty(self.shape + (3, 3), dtype=complex)
        for j in range(3):
            for m in range(3):
                kxj, kyj, kxm, kym = k[j], k[j + 3], k[m], k[m + 3]
                sym[..., j, m] = -0.25 * ((kxj * kxm + kyj * kym) + 1j * (kxj * kym - kyj * kxm))
        return sym

    @property
    def fft_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dims_active))


def complex_hessian(grid: TorusGrid, phi) -> np.ndarray:
    """Pointwise matrix ``phi_{j kbar}`` of ``sqrt(-1) d dbar phi`` by Fourier differentiation."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != grid.shape:
        raise ValueError(f"field shape {phi.shape} does not match grid {grid.shape}")
    phi_hat = np.fft.fftn(phi)
    h = np.fft.ifftn(grid.hessian_symbol * phi_hat[..., None, None], axes=grid.fft_axes)
    return hermitian_part(h)


def contract_hessian(grid: TorusGrid, coeffs, u) -> np.ndarray:
    """``sum_{jk} C_{jk} u_{k jbar}``: a second-order operator with coefficients C."""
    h = complex_hessian(grid, u)
    return np.einsum("...jk,...kj->...", coeffs, h).real


def quadrature(grid: TorusGrid, f) -> float:
    """Integral over the full 6-torus by the (spectrally exact) trapezoidal rule."""
    return float(np.mean(np.asarray(f, dtype=float))) * TORUS_VOLUME


def zero_mean(grid: TorusGrid, phi) -> np.ndarray:
    """Subtract the omega^3-weighted mean (the plain mean for constant omega)."""
    phi = np.asarray(phi, dtype=float)
    return phi - np.mean(phi)


def project_resolved(grid: TorusGrid, f) -> np.ndarray:
    """Remove the mean and the Nyquist modes of a scalar field."""
    f_hat = np.fft.fftn(np.asarray(f, dtype=float))
    f_hat[~grid.resolved_mask] = 0.0
    return np.fft.ifftn(f_hat).real


@dataclass(frozen=True)
class TrigMode:
    """One term ``coeff * cos(k . x)`` or ``coeff * sin(k . x)`` of a potential."""

    coeff: float
    wavevector: tuple[int, ...]
    kind: str = "cos"

    def __post_init__(self):
        if self.kind not in ("cos", "sin"):
            raise ValueError(f"unknown mode kind {self.kind!r}")
        wv = tuple(int(k) for k in self.wavevector)
        if len(wv) != 6:
            raise ValueError("wavevector needs six integer components (x1, x2, x3, y1, y2, y3)")
        object.__setattr__(self, "wavevector", wv)


def trig_field(grid: TorusGrid, modes: Iterable[TrigMode]) -> np.ndarray:
    """Sample a trigonometric polynomial exactly on the grid."""
    x = grid.coordinates()
    out = np.zeros(grid.shape)
    for mode in modes:
        for a, k in enumerate(mode.wavevector):
            if k and a >= grid.dims_active:
                raise ValueError(f"mode uses inactive axis {AXIS_NAMES[a]}")
            if a < grid.dims_active and 2 * abs(k) >= grid.resolution[a]:
                raise ValueError(f"mode {mode.wavevector} is not resolved on axis {AXIS_NAMES[a]}")
        arg = sum(k * x[a] for a, k in enumerate(mode.wavevector))
        fn = np.cos if mode.kind == "cos" else np.sin
        out = out + mode.coeff * fn(arg)
    return out


@dataclass(frozen=True, eq=False)
class BackgroundData:
    """Constant metric plus a d dbar-perturbed constant form in a fixed class."""

    grid: TorusGrid
    omega: np.ndarray
    Omega0_constant: np.ndarray
    psi0: np.ndarray
    phase: PhaseParameter
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "omega", check_hermitian(self.omega))
        object.__setattr__(self, "Omega0_constant", check_hermitian(self.Omega0_constant))
        psi = np.asarray(self.psi0, dtype=float)
        if psi.shape != self.grid.shape:
            raise ValueError("psi0 does not match the grid shape")
        object.__setattr__(self, "psi0", psi)
        metric_factor(self.omega)

    @property
    def omega_det(self) -> float:
        return float(np.linalg.det(self.omega).real)

    @property
    def int_omega3(self) -> float:
        return self.omega_det * TORUS_VOLUME

    def Omega0(self) -> np.ndarray:
        if "Omega0" not in self._cache:
            self._cache["Omega0"] = self.Omega0_constant + complex_hessian(self.grid, self.psi0)
        return self._cache["Omega0"]

    def i_theta(self, Omega_field=None) -> np.ndarray:
        """Curvature form ``Omega + omega tan(theta)`` for a given representative."""
        if Omega_field is None:
            Omega_field = self.Omega0()
        return Omega_field + self.phase.tan_theta * self.omega

    def check_subsolution(self):
        return subsolution_check_n3(self.omega, self.Omega0(), self.phase)


def class_integrals_grid(bg: BackgroundData) -> ClassIntegrals:
    """The three class integrals of the background by pointwise sigma-polynomials."""
    a = normalize_form(bg.omega, bg.Omega0())
    s3 = np.linalg.det(a).real
    s1 = np.trace(a, axis1=-2, axis2=-1).real
    vol = bg.omega_det
    return ClassIntegrals(
        quadrature(bg.grid, s3) * vol,
        quadrature(bg.grid, s1) * vol,
        bg.int_omega3,
    )


def class_integral_z_grid(grid: TorusGrid, omega, i_theta) -> complex:
    """``Z = int (omega - Theta)^3`` with ``i_theta`` the real curvature form field."""
    a = normalize_form(omega, i_theta)
    integrand = np.linalg.det(np.eye(3) + 1j * a)
    vol = float(np.linalg.det(np.asarray(omega, dtype=complex)).real)
    return complex(np.mean(integrand) * TORUS_VOLUME * vol)


def grid_admissibility_rtol(grid: TorusGrid) -> float:
    """Admissibility tolerance for grid quadrature: 10 h^2 with h the coarsest spacing."""
    h = max(grid.spacing)
    return 10.0 * h * h


def write_field(path, grid: TorusGrid, values) -> None:
    """Dump a scalar field in the GMA3 binary format (little-endian)."""
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.shape != grid.shape:
        raise ValueError("field shape does not match grid")
    header = GMA3_MAGIC + struct.pack("<II", GMA3_VERSION, grid.dims_active)
    header += struct.pack(f"<{grid.dims_active}I", *grid.resolution)
    with open(Path(path), "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes(order="C"))


def read_field(path) -> tuple[TorusGrid, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != GMA3_MAGIC:
        raise ValueError("not a GMA3 file (bad magic)")
    version, dims = struct.unpack_from("<II", data, 4)
    if version != GMA3_VERSION:
        raise ValueError(f"unsupported GMA3 version {version}")
    res = struct.unpack_from(f"<{dims}I", data, 12)
    offset = 12 + 4 * dims
    grid = TorusGrid(dims, tuple(res))
    n = int(np.prod(res))
    if len(data) - offset != 8 * n:
        raise ValueError("GMA3 payload size does not match header")
    values = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(res)
    return grid, values.astype(float)


def make_grid(dims_active: int, resolution: int | Sequence[int]) -> TorusGrid:
    if isinstance(resolution, int):
        resolution = (resolution,) * dims_active
    return TorusGrid(dims_active, tuple(resolution))

"""Manifold backends: static flat tori and axisymmetric conformal spheres.

Two backends are supported.

``flat_torus``
    The flat torus ``T^n = (R/LZ)^n`` with ``n`` in 1..3.  Fields are sampled
    on a periodic grid in the first coordinate and are constant in the others.
    The metric never changes and all curvature vanishes.

``conformal_sphere``
    ``g = exp(2 phi) g_S2`` with ``phi`` a function of the polar angle only.
    Fields live on a staggered grid ``theta_i = (i + 1/2) pi / N`` so no node
    sits on a pole; pole regularity comes from mirror ghost values.

All spatial derivatives are second-order centred differences.  Fields are
plain 1-d ``numpy`` arrays aligned with the grid nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    CorruptedState,
    InvalidGeometry,
    InvalidParameter,
    InvalidResolution,
    ShapeError,
)

FLAT_TORUS = "flat_torus"
CONFORMAL_SPHERE = "conformal_sphere"
BACKENDS = (FLAT_TORUS, CONFORMAL_SPHERE)

MIN_NODES = 8


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform 1-d grid, either periodic or polar-staggered."""

    kind: str
    N: int
    h: float
    nodes: np.ndarray
    # polar only; cached trig factors used by the stencils
    sin: Optional[np.ndarray] = field(default=None, repr=False)
    cot: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def periodic(self) -> bool:
        return self.kind == "periodic"

    @property
    def extent(self) -> float:
        return self.h * self.N


def build_grid(backend: str, N: int, L: float | None = None) -> Grid:
    """Build the grid for ``backend`` with ``N`` nodes."""
    if backend not in BACKENDS:
        raise InvalidGeometry(f"unknown backend {backend!r}")
    if int(N) != N or N < MIN_NODES:
        raise InvalidResolution(f"N must be an integer >= {MIN_NODES}, got {N}")
    N = int(N)
    if backend == FLAT_TORUS:
        if L is None or not math.isfinite(L) or L <= 0:
            raise InvalidGeometry(f"torus side length must be positive, got {L}")
        h = L / N
        nodes = np.arange(N) * h
        return Grid("periodic", N, h, nodes)
    if L is not None:
        raise InvalidGeometry("side length L only applies to flat_torus")
    h = math.pi / N
    nodes = (np.arange(N) + 0.5) * h
    return Grid("polar-staggered", N, h, nodes, sin=np.sin(nodes), cot=1.0 / np.tan(nodes))


@dataclass(frozen=True, eq=False)
class MetricState:
    """Snapshot of the metric at time ``t``.

    For the sphere ``phi`` holds the conformal exponent at the grid nodes; for
    the torus it is ``None`` and ``L`` is the side length.
    """

    backend: str
    n: int
    grid: Grid
    t: float = 0.0
    L: Optional[float] = None
    phi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.backend == FLAT_TORUS:
            if self.n not in (1, 2, 3):
                raise InvalidGeometry(f"torus dimension must be 1, 2 or 3, got {self.n}")
        elif self.backend == CONFORMAL_SPHERE:
            if self.n != 2:
                raise InvalidGeometry("conformal_sphere has dimension 2")
            if self.phi is None or self.phi.shape != (self.grid.N,):
                raise ShapeError("sphere metric needs phi aligned with the grid")
        else:
            raise InvalidGeometry(f"unknown backend {self.backend!r}")

    @property
    def is_sphere(self) -> bool:
        return self.backend == CONFORMAL_SPHERE

    def at(self, t: float, phi: Optional[np.ndarray] = None) -> "MetricState":
        """Same backend at another time (and optionally another ``phi``)."""
        if phi is None:
            phi = self.phi
        return replace(self, t=t, phi=phi)


def flat_torus(n: int, N: int, L: float = 2 * math.pi, t: float = 0.0) -> MetricState:
    return MetricState(FLAT_TORUS, n, build_grid(FLAT_TORUS, N, L), t=t, L=float(L))


def conformal_sphere(N: int, phi=0.0, t: float = 0.0) -> MetricState:
    """Sphere metric; ``phi`` may be a scalar, an array, or a callable of theta."""
    grid = build_grid(CONFORMAL_SPHERE, N)
    if callable(phi):
        values = np.asarray(phi(grid.nodes), dtype=float)
    else:
        values = np.broadcast_to(np.asarray(phi, dtype=float), (N,)).copy()
    return MetricState(CONFORMAL_SPHERE, 2, grid, t=t, phi=values)


# -- stencils -----------------------------------------------------------------


def _check(state: MetricState, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (state.grid.N,):
        raise ShapeError(f"field of shape {a.shape} does not match grid of {state.grid.N} nodes")
    return a


def _neighbours(grid: Grid, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values at i+1 and i-1, with periodic wrap or pole mirror ghosts."""
    if grid.periodic:
        return np.roll(a, -1), np.roll(a, 1)
    up = np.empty_like(a)
    down = np.empty_like(a)
    up[:-1] = a[1:]
    up[-1] = a[-1]  # a(pi + s) = a(pi - s)
    down[1:] = a[:-1]
    down[0] = a[0]  # a(-s) = a(s)
    return up, down


def d_theta(grid: Grid, a: np.ndarray) -> np.ndarray:
    up, down = _neighbours(grid, a)
    return (up - down) / (2.0 * grid.h)


def d2_theta(grid: Grid, a: np.ndarray) -> np.ndarray:
    up, down = _neighbours(grid, a)
    return (up - 2.0 * a + down) / (grid.h * grid.h)


def _round_laplacian(grid: Grid, a: np.ndarray) -> np.ndarray:
    # Laplacian of the unit round sphere for axisymmetric data
    up, down = _neighbours(grid, a)
    return (up - 2.0 * a + down) / (grid.h * grid.h) + grid.cot * (up - down) / (2.0 * grid.h)


def _phi(state: MetricState) -> np.ndarray:
    phi = state.phi
    if not np.all(np.isfinite(phi)):
        raise CorruptedState(f"non-finite conformal exponent at t={state.t}")
    return phi


def conformal_weight(state: MetricState) -> np.ndarray:
    """``exp(-2 phi)``: inverse metric factor; ones on the torus."""
    if state.is_sphere:
        return np.exp(-2.0 * _phi(state))
    return np.ones(state.grid.N)


def diffusivity_max(state: MetricState) -> float:
    """Largest diffusion coefficient on the grid, used by the step-size rule."""
    if state.is_sphere:
        return float(np.exp(-2.0 * _phi(state).min()))
    return 1.0


def scalar_curvature(state: MetricState) -> np.ndarray:
    """Scalar curvature ``R``; ``exp(-2 phi) (2 - 2 Lap_S2 phi)`` on the sphere."""
    if not state.is_sphere:
        return np.zeros(state.grid.N)
    phi = _phi(state)
    return np.exp(-2.0 * phi) * (2.0 - 2.0 * _round_laplacian(state.grid, phi))


def laplacian(state: MetricState, a) -> np.ndarray:
    a = _check(state, a)
    if state.is_sphere:
        return np.exp(-2.0 * _phi(state)) * _round_laplacian(state.grid, a)
    return d2_theta(state.grid, a)


def inner_grad(state: MetricState, a, b) -> np.ndarray:
    """Pointwise ``g(grad a, grad b)``."""
    a = _check(state, a)
    b = _check(state, b)
    da = d_theta(state.grid, a)
    db = d_theta(state.grid, b)
    if state.is_sphere:
        return np.exp(-2.0 * _phi(state)) * (da * db)
    return da * db


def gradient_norm_sq(state: MetricState, a) -> np.ndarray:
    return inner_grad(state, a, a)


def ricci_quadratic(state: MetricState, a) -> np.ndarray:
    """``Rc(grad a, grad a)``; on a surface ``Rc = (R/2) g``."""
    if not state.is_sphere:
        return np.zeros(state.grid.N)
    return 0.5 * scalar_curvature(state) * gradient_norm_sq(state, a)


def hessian_deficit_norm_sq(state: MetricState, a, sign: int, lam: float) -> np.ndarray:
    """Pointwise ``|Hess a + sign * Rc - lam * g|^2``.

    ``sign=-1, lam=1/t`` gives the forward-equation deficit and
    ``sign=+1, lam=1/tau`` the conjugate one.
    """
    a = _check(state, a)
    if sign not in (1, -1):
        raise InvalidParameter(f"sign must be +1 or -1, got {sign}")
    if not math.isfinite(lam):
        raise InvalidParameter(f"lambda must be finite, got {lam}")
    grid = state.grid
    if not state.is_sphere:
        diag = d2_theta(grid, a) - lam
        return diag * diag + (state.n - 1) * lam * lam
    phi = _phi(state)
    w = np.exp(-2.0 * phi)
    da = d_theta(grid, a)
    half_r = 0.5 * scalar_curvature(state)
    meridian = w * (d2_theta(grid, a) - d_theta(grid, phi) * da) + sign * half_r - lam
    azimuth = w * (grid.cot + d_theta(grid, phi)) * da + sign * half_r - lam
    return meridian * meridian + azimuth * azimuth


def ricci_flow_rhs(state: MetricState) -> np.ndarray:
    """``d phi / dt = -R/2``; zero on the static torus."""
    if not state.is_sphere:
        return np.zeros(state.grid.N)
    return -0.5 * scalar_curvature(state)


def scalar_curvature_time_derivative(state: MetricState) -> np.ndarray:
    """``dR/dt = Lap R + R^2`` for surface Ricci flow; zero on the torus."""
    if not state.is_sphere:
        return np.zeros(state.grid.N)
    R = scalar_curvature(state)
    return laplacian(state, R) + R * R


def measure_weights(state: MetricState) -> np.ndarray:
    """Midpoint-rule quadrature weights for ``dmu_g``."""
    grid = state.grid
    if state.is_sphere:
        return 2.0 * math.pi * np.exp(2.0 * _phi(state)) * grid.sin * grid.h
    return np.full(grid.N, state.L ** (state.n - 1) * grid.h)


def integrate_measure(state: MetricState, a) -> float:
    a = _check(state, a)
    return float(np.dot(measure_weights(state), a))


# -- point sampling -------------------------------------------------------------


def lattice_coordinates(grid: Grid, x) -> tuple[np.ndarray, np.ndarray]:
    """Left neighbour index and weight for linear interpolation at ``x``.

    Indices refer to an extended array ``[a_0, a_0..a_{N-1}, a_{N-1}]`` on the
    sphere (mirror ghosts) and to ``a`` itself, taken modulo ``N``, on the torus.
    """
    x = np.asarray(x, dtype=float)
    if grid.periodic:
        q = x / grid.h
        i0 = np.floor(q)
        w = q - i0
        return np.mod(i0, grid.N).astype(np.intp), w
    q = np.clip(x, 0.0, math.pi) / grid.h + 0.5
    i0 = np.minimum(np.floor(q), grid.N)
    return i0.astype(np.intp), q - i0


def extend(grid: Grid, a: np.ndarray) -> np.ndarray:
    """Array indexed by :func:`lattice_coordinates` (last axis extended)."""
    if grid.periodic:
        return np.concatenate([a, a[..., :1]], axis=-1)
    return np.concatenate([a[..., :1], a, a[..., -1:]], axis=-1)


def sample(grid: Grid, a: np.ndarray, x) -> np.ndarray:
    """Linear interpolation of a grid field at arbitrary positions ``x``."""
    i0, w = lattice_coordinates(grid, x)
    ext = extend(grid, np.asarray(a, dtype=float))
    return (1.0 - w) * ext[i0] + w * ext[i0 + 1]

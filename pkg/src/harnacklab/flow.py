"""Time integration of Ricci flow coupled to the heat-type equations.

Forward runs evolve the pair ``(phi, u)`` with one classical RK4 step per
accepted time step, where ``u = -ln f`` solves either

* ``log_heat``:      ``u_t = Lap u - |grad u|^2 - R - u``
* ``soliton_heat``:  ``u_t = Lap u - |grad u|^2 - R - u / (1 + t/2)``

and ``phi`` follows ``phi_t = -R/2`` (sphere) or stays put (torus).

Conjugate runs solve ``f_tau = Lap f - R f`` in ``tau = T - t`` over a stored
forward metric trajectory.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from . import geometry as geo
from .errors import (
    BlowupError,
    CFLError,
    ConfigError,
    DomainError,
    InterpolationError,
    InvalidParameter,
    WrongEquation,
)

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = 0.25
MAX_SIGMA = 0.5
EXTINCTION_GUARD = 1e-3
POSITIVITY_FLOOR = -1e-8
T_MIN_FRACTION = 0.05


class EquationKind(str, enum.Enum):
    LOG_HEAT = "log_heat"
    SOLITON_HEAT = "soliton_heat"
    CONJUGATE = "conjugate"


@dataclass(frozen=True)
class Mode:
    """One-mode profile ``a + b cos(k xi)``.

    ``xi`` is the polar angle on the sphere and ``2 pi x / L`` on the torus.
    """

    a: float = 0.0
    b: float = 0.0
    k: int = 1

    def evaluate(self, state: geo.MetricState) -> np.ndarray:
        xi = _angle(state)
        return self.a + self.b * np.cos(self.k * xi)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "k": self.k}


def _angle(state: geo.MetricState) -> np.ndarray:
    if state.is_sphere:
        return state.grid.nodes
    return 2.0 * math.pi * state.grid.nodes / state.L


def equation_decay(eqn: EquationKind, u: np.ndarray, t: float) -> np.ndarray:
    if eqn is EquationKind.LOG_HEAT:
        return u
    if eqn is EquationKind.SOLITON_HEAT:
        return u / (1.0 + 0.5 * t)
    raise WrongEquation(f"{eqn} has no forward u-form")


# -- configuration ------------------------------------------------------------------


CONFIG_KEYS = {
    "backend", "n", "N", "L", "phi0", "equation", "u0", "T_end", "t_min", "sigma",
    "theorems", "path_queries", "output_dir", "freeze_metric",
}


def canonical_bytes(doc: Mapping[str, Any]) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def digest(doc: Mapping[str, Any]) -> str:
    return hashlib.sha256(canonical_bytes(doc)).hexdigest()


@dataclass(frozen=True)
class ScenarioConfig:
    backend: str
    n: int
    N: int
    equation: EquationKind
    T_end: float
    u0: Mode = Mode(-1.0, 0.0, 1)
    L: Optional[float] = None
    phi0: Mode = Mode(0.0, 0.0, 1)
    t_min: Optional[float] = None
    sigma: float = DEFAULT_SIGMA
    freeze_metric: bool = False
    theorems: tuple = ()
    path_queries: tuple = ()
    output_dir: Optional[str] = None
    source_doc: Optional[dict] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        _validate(self)

    @property
    def monitor_start(self) -> float:
        return self.t_min if self.t_min is not None else T_MIN_FRACTION * self.T_end

    @property
    def digest(self) -> str:
        return digest(self.source_doc if self.source_doc is not None else self.to_dict())

    def with_resolution(self, N: int) -> "ScenarioConfig":
        doc = self.to_dict()
        doc["N"] = N
        return ScenarioConfig.from_dict(doc)

    def initial_metric(self) -> geo.MetricState:
        if self.backend == geo.FLAT_TORUS:
            return geo.flat_torus(self.n, self.N, self.L)
        grid = geo.build_grid(geo.CONFORMAL_SPHERE, self.N)
        return geo.MetricState(geo.CONFORMAL_SPHERE, 2, grid, phi=self.phi0.a + self.phi0.b * np.cos(self.phi0.k * grid.nodes))

    def to_dict(self) -> dict:
        doc = {
            "backend": self.backend,
            "n": self.n,
            "N": self.N,
            "equation": self.equation.value,
            "u0": self.u0.to_dict(),
            "T_end": self.T_end,
            "t_min": self.monitor_start,
            "sigma": self.sigma,
        }
        if self.backend == geo.FLAT_TORUS:
            doc["L"] = self.L
        else:
            doc["phi0"] = self.phi0.to_dict()
        if self.freeze_metric:
            doc["freeze_metric"] = True
        if self.theorems:
            doc["theorems"] = list(self.theorems)
        if self.path_queries:
            doc["path_queries"] = [dict(q) for q in self.path_queries]
        if self.output_dir is not None:
            doc["output_dir"] = self.output_dir
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ScenarioConfig":
        if not isinstance(doc, Mapping):
            raise ConfigError("config", "expected a JSON object")
        unknown = set(doc) - CONFIG_KEYS
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown key")
        for key in ("backend", "N", "equation", "T_end"):
            if key not in doc:
                raise ConfigError(key, "missing required key")
        backend = doc["backend"]
        if backend not in geo.BACKENDS:
            raise ConfigError("backend", f"must be one of {geo.BACKENDS}")
        try:
            equation = EquationKind(doc["equation"])
        except ValueError:
            raise ConfigError("equation", f"must be one of {[e.value for e in EquationKind]}") from None
        n = doc.get("n", 2 if backend == geo.CONFORMAL_SPHERE else 1)
        L = doc.get("L", 2 * math.pi if backend == geo.FLAT_TORUS else None)
        return cls(
            backend=backend,
            n=_int_field(doc, "n", n),
            N=_int_field(doc, "N", doc["N"]),
            equation=equation,
            T_end=_float_field("T_end", doc["T_end"]),
            u0=_mode_field(doc, "u0", Mode(-1.0, 0.0, 1)),
            L=None if L is None else _float_field("L", L),
            phi0=_mode_field(doc, "phi0", Mode(0.0, 0.0, 1)),
            t_min=None if doc.get("t_min") is None else _float_field("t_min", doc["t_min"]),
            sigma=_float_field("sigma", doc.get("sigma", DEFAULT_SIGMA)),
            freeze_metric=bool(doc.get("freeze_metric", False)),
            theorems=tuple(doc.get("theorems", ())),
            path_queries=tuple(doc.get("path_queries", ())),
            output_dir=doc.get("output_dir"),
            source_doc=dict(doc),
        )


def _int_field(doc, key, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return int(value)


def _float_field(key, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(key, f"expected a finite number, got {value!r}")
    return float(value)


def _mode_field(doc, key, default: Mode) -> Mode:
    raw = doc.get(key)
    if raw is None:
        return default
    if not isinstance(raw, Mapping) or set(raw) - {"a", "b", "k"}:
        raise ConfigError(key, "expected an object with keys a, b, k")
    return Mode(
        _float_field(f"{key}.a", raw.get("a", 0.0)),
        _float_field(f"{key}.b", raw.get("b", 0.0)),
        _int_field(doc, f"{key}.k", raw.get("k", 1)),
    )


def _validate(cfg: ScenarioConfig) -> None:
    if cfg.N < geo.MIN_NODES:
        raise ConfigError("N", f"must be >= {geo.MIN_NODES}")
    if cfg.backend == geo.FLAT_TORUS:
        if cfg.n not in (1, 2, 3):
            raise ConfigError("n", "torus dimension must be 1, 2 or 3")
        if cfg.L is None or cfg.L <= 0:
            raise ConfigError("L", "torus side length must be positive")
    else:
        if cfg.n != 2:
            raise ConfigError("n", "conformal_sphere has dimension 2")
        if cfg.phi0.k < 0:
            raise ConfigError("phi0.k", "must be nonnegative")
    if cfg.u0.k < 0:
        raise ConfigError("u0.k", "must be nonnegative")
    if cfg.T_end <= 0:
        raise ConfigError("T_end", "must be positive")
    if cfg.t_min is not None and not (0 < cfg.t_min < cfg.T_end):
        raise ConfigError("T_end", f"need T_end > t_min > 0 (t_min={cfg.t_min}, T_end={cfg.T_end})")
    if not (0 < cfg.sigma <= MAX_SIGMA):
        raise ConfigError("sigma", f"must lie in (0, {MAX_SIGMA}]")
    for th in cfg.theorems:
        if th not in ("thm_1_1", "thm_1_2", "thm_4_1", "thm_3_6_P", "corollary_2_3"):
            raise ConfigError("theorems", f"unknown theorem id {th!r}")
    for q in cfg.path_queries:
        if not isinstance(q, Mapping) or set(q) != {"x1", "t1", "x2", "t2"}:
            raise ConfigError("path_queries", "each query needs exactly x1, t1, x2, t2")


# -- trajectories -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FlowTrajectory:
    """Immutable record of one run.

    ``times`` are the physical times ``t`` for forward runs and ``tau`` for
    conjugate runs (``terminal_time`` is then set and ``t = T - tau``).
    ``solution`` holds ``u`` (forward), ``f`` (conjugate) or ``None`` for a
    metric-only run.
    """

    backend: str
    n: int
    grid: geo.Grid
    L: Optional[float]
    times: np.ndarray
    phi: Optional[np.ndarray]
    solution: Optional[np.ndarray]
    min_R: np.ndarray
    max_R: np.ndarray
    equation: Optional[EquationKind]
    t_min: float
    sigma: float = DEFAULT_SIGMA
    mass: Optional[np.ndarray] = None
    hypothesis_violated: bool = False
    truncated: bool = False
    terminal_time: Optional[float] = None
    frozen: bool = False
    interpolation_order: Optional[int] = None
    fingerprint: str = ""

    def __len__(self) -> int:
        return len(self.times)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def is_conjugate(self) -> bool:
        return self.terminal_time is not None

    def physical_time(self, k: int) -> float:
        if self.is_conjugate:
            return self.terminal_time - float(self.times[k])
        return float(self.times[k])

    def metric(self, k: int) -> geo.MetricState:
        phi = None if self.phi is None else self.phi[k]
        return geo.MetricState(self.backend, self.n, self.grid, t=self.physical_time(k), L=self.L, phi=phi)

    def stamp_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))


def default_tolerance(h: float) -> float:
    return max(1e-6, 5.0 * h * h)


# -- stepping -----------------------------------------------------------------------

Source = Callable[[float], np.ndarray]


def _forward_rhs(template, phi, u, t, eqn, frozen, source):
    state = template.at(t, phi)
    R = geo.scalar_curvature(state)
    dphi = None if (phi is None or frozen) else -0.5 * R
    du = None
    if eqn is not None:
        du = geo.laplacian(state, u) - geo.gradient_norm_sq(state, u) - R - equation_decay(eqn, u, t)
        if source is not None:
            du = du + source(t)
    return dphi, du


def _axpy(y, a, k):
    if y is None or k is None:
        return y
    return y + a * k


def step(
    metric: geo.MetricState,
    u: Optional[np.ndarray],
    eqn: Optional[EquationKind],
    dt: float,
    *,
    sigma: float = DEFAULT_SIGMA,
    frozen: bool = False,
    source: Optional[Source] = None,
) -> tuple[geo.MetricState, Optional[np.ndarray]]:
    """Advance metric and ``u`` by one coupled RK4 step of size ``dt``.

    ``eqn=None`` advances the metric only.
    """
    if eqn is EquationKind.CONJUGATE:
        raise WrongEquation("conjugate equation is solved by run_conjugate")
    if not (dt > 0):
        raise InvalidParameter(f"dt must be positive, got {dt}")
    limit = sigma * metric.grid.h ** 2 / geo.diffusivity_max(metric)
    if dt > limit * (1.0 + 1e-12):
        raise CFLError(f"dt={dt:.3e} exceeds stability limit {limit:.3e} at t={metric.t}")
    if eqn is not None:
        u = geo._check(metric, u)
    t, phi = metric.t, metric.phi
    k1 = _forward_rhs(metric, phi, u, t, eqn, frozen, source)
    k2 = _forward_rhs(metric, _axpy(phi, 0.5 * dt, k1[0]), _axpy(u, 0.5 * dt, k1[1]), t + 0.5 * dt, eqn, frozen, source)
    k3 = _forward_rhs(metric, _axpy(phi, 0.5 * dt, k2[0]), _axpy(u, 0.5 * dt, k2[1]), t + 0.5 * dt, eqn, frozen, source)
    k4 = _forward_rhs(metric, _axpy(phi, dt, k3[0]), _axpy(u, dt, k3[1]), t + dt, eqn, frozen, source)

    def combine(y, i):
        if y is None or k1[i] is None:
            return y
        return y + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

    new_phi = combine(phi, 0)
    new_u = combine(u, 1) if eqn is not None else u
    t_new = t + dt
    if new_phi is not None and not np.all(np.isfinite(new_phi)):
        raise BlowupError(f"non-finite metric at t={t_new}", t=t_new)
    if eqn is not None and not np.all(np.isfinite(new_u)):
        raise BlowupError(f"non-finite solution at t={t_new}", t=t_new)
    return metric.at(t_new, new_phi), new_u


def _next_dt(metric: geo.MetricState, sigma: float, remaining: float) -> float:
    dt_max = sigma * metric.grid.h ** 2 / geo.diffusivity_max(metric)
    # equal-size steps that land exactly on T_end
    return remaining / math.ceil(remaining / dt_max - 1e-9)


def _integrate(
    cfg: ScenarioConfig,
    u_init: Optional[np.ndarray],
    source_factory: Optional[Callable[[geo.MetricState], Source]] = None,
) -> FlowTrajectory:
    metric = cfg.initial_metric()
    eqn = None if cfg.equation is EquationKind.CONJUGATE else cfg.equation
    u = u_init
    source = source_factory(metric) if source_factory is not None else None
    times, phis, sols, min_R, max_R = [], [], [], [], []

    def record(state, sol):
        R = geo.scalar_curvature(state)
        times.append(state.t)
        phis.append(state.phi)
        sols.append(sol)
        min_R.append(float(R.min()))
        max_R.append(float(R.max()))

    record(metric, u)
    truncated = False
    k = 0
    while cfg.T_end - metric.t > 1e-12 * cfg.T_end:
        dt = _next_dt(metric, cfg.sigma, cfg.T_end - metric.t)
        try:
            new_metric, new_u = step(metric, u, eqn, dt, sigma=cfg.sigma, frozen=cfg.freeze_metric, source=source)
        except BlowupError as exc:
            exc.step = k + 1
            raise
        if new_metric.is_sphere and np.exp(2.0 * new_metric.phi).min() <= EXTINCTION_GUARD:
            truncated = True
            logger.info("extinction guard hit at t=%.6f; trajectory truncated", new_metric.t)
            break
        metric, u = new_metric, new_u
        k += 1
        record(metric, u)
    if not truncated:
        # snap the last stamp onto T_end exactly
        times[-1] = cfg.T_end
    min_R_arr = np.asarray(min_R)
    return FlowTrajectory(
        backend=cfg.backend,
        n=cfg.n,
        grid=metric.grid,
        L=cfg.L if cfg.backend == geo.FLAT_TORUS else None,
        times=np.asarray(times),
        phi=np.stack(phis) if metric.is_sphere else None,
        solution=np.stack(sols) if eqn is not None else None,
        min_R=min_R_arr,
        max_R=np.asarray(max_R),
        equation=eqn,
        t_min=cfg.monitor_start,
        sigma=cfg.sigma,
        hypothesis_violated=bool(min_R_arr.min() < POSITIVITY_FLOOR),
        truncated=truncated,
        frozen=cfg.freeze_metric,
        fingerprint=cfg.digest,
    )


def run_forward(cfg: ScenarioConfig) -> FlowTrajectory:
    """Integrate the scenario from ``t = 0`` to ``T_end``.

    For ``equation = conjugate`` only the metric is evolved; pass the result
    to :func:`run_conjugate`.
    """
    u0 = None
    if cfg.equation is not EquationKind.CONJUGATE:
        u0 = cfg.u0.evaluate(cfg.initial_metric())
    return _integrate(cfg, u0)


def terminal_data(cfg: ScenarioConfig) -> np.ndarray:
    """``f_T = exp(-u0)`` for conjugate scenarios."""
    return np.exp(-cfg.u0.evaluate(cfg.initial_metric()))


def _hermite_phi(traj: FlowTrajectory, k0: int, k1: int, s: float) -> Optional[np.ndarray]:
    """Cubic Hermite interpolation of phi between forward stamps k0 < k1."""
    if traj.phi is None:
        return None
    phi0, phi1 = traj.phi[k0], traj.phi[k1]
    if traj.frozen:
        return phi0
    span = traj.times[k1] - traj.times[k0]
    dphi0 = geo.ricci_flow_rhs(traj.metric(k0))
    dphi1 = geo.ricci_flow_rhs(traj.metric(k1))
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * phi0 + h10 * span * dphi0 + h01 * phi1 + h11 * span * dphi1


def run_conjugate(metric_trajectory: FlowTrajectory, f_T) -> FlowTrajectory:
    """Solve ``f_tau = Lap f - R f`` backwards over the stored metric.

    Stamps of the result are ``tau_j = T - t_{M-j}``; RK4 half-step metrics
    come from cubic Hermite interpolation of ``phi`` using ``phi_t = -R/2``.
    """
    traj = metric_trajectory
    if traj.is_conjugate:
        raise WrongEquation("expected a forward metric trajectory")
    times = traj.times
    if len(times) < 2 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise InterpolationError("metric trajectory must start at t=0 with increasing stamps")
    f = np.asarray(f_T, dtype=float)
    if f.shape != (traj.grid.N,):
        raise geo.ShapeError("terminal data does not match the grid")
    if not np.all(np.isfinite(f)) or f.min() <= 0:
        raise DomainError("terminal data must be strictly positive")
    M = len(times) - 1
    T = float(times[-1])

    def rhs(state, f):
        return geo.laplacian(state, f) - geo.scalar_curvature(state) * f

    sols = [f]
    masses = [geo.integrate_measure(traj.metric(M), f)]
    for j in range(M):
        k_hi, k_lo = M - j, M - j - 1
        dtau = float(times[k_hi] - times[k_lo])
        start, end = traj.metric(k_hi), traj.metric(k_lo)
        limit = traj.sigma * traj.grid.h ** 2 / geo.diffusivity_max(end)
        if dtau > limit * (1.0 + 1e-12):
            raise CFLError(f"stored step {dtau:.3e} exceeds stability limit {limit:.3e}")
        mid = start.at(0.5 * (start.t + end.t), _hermite_phi(traj, k_lo, k_hi, 0.5))
        k1 = rhs(start, f)
        k2 = rhs(mid, f + 0.5 * dtau * k1)
        k3 = rhs(mid, f + 0.5 * dtau * k2)
        k4 = rhs(end, f + dtau * k3)
        f = f + (dtau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(f)) or f.min() <= 0:
            raise BlowupError(f"conjugate solution lost positivity at t={end.t}", t=end.t, step=j + 1)
        sols.append(f)
        masses.append(geo.integrate_measure(end, f))

    taus = T - times[::-1]
    taus[0] = 0.0
    return FlowTrajectory(
        backend=traj.backend,
        n=traj.n,
        grid=traj.grid,
        L=traj.L,
        times=taus,
        phi=None if traj.phi is None else traj.phi[::-1].copy(),
        solution=np.stack(sols),
        min_R=traj.min_R[::-1].copy(),
        max_R=traj.max_R[::-1].copy(),
        equation=EquationKind.CONJUGATE,
        t_min=traj.t_min,
        sigma=traj.sigma,
        mass=np.asarray(masses),
        hypothesis_violated=traj.hypothesis_violated,
        truncated=traj.truncated,
        terminal_time=T,
        frozen=traj.frozen,
        interpolation_order=None if traj.phi is None or traj.frozen else 4,
        fingerprint=traj.fingerprint,
    )


def mass_drift(traj: FlowTrajectory) -> float:
    """``max_k |m_k - m_0| / |m_0|`` relative to the terminal mass."""
    if traj.mass is None:
        raise WrongEquation("mass is only recorded for conjugate runs")
    m = traj.mass
    return float(np.max(np.abs(m - m[0])) / abs(m[0]))


# -- manufactured solutions ------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedTarget:
    """``u*(xi, t) = offset + amplitude * exp(-rate t) * trig(k xi)``.

    ``xi`` is as in :class:`Mode`; ``trig`` is ``"cos"`` or ``"sin"``
    (only ``cos`` is smooth at the poles of the sphere).
    """

    amplitude: float = 1.0
    rate: float = 1.0
    k: int = 1
    trig: str = "sin"
    offset: float = 0.0

    def _wavenumber(self, state: geo.MetricState) -> float:
        return float(self.k) if state.is_sphere else 2.0 * math.pi * self.k / state.L

    def jets(self, state: geo.MetricState, t: float):
        """``u*, du*/dt, du*/dx, d2u*/dx2`` at the grid nodes."""
        kappa = self._wavenumber(state)
        arg = kappa * state.grid.nodes
        amp = self.amplitude * math.exp(-self.rate * t)
        if self.trig == "cos":
            c, dc = np.cos(arg), -np.sin(arg)
        else:
            c, dc = np.sin(arg), np.cos(arg)
        u = self.offset + amp * c
        return u, -self.rate * amp * c, amp * kappa * dc, -amp * kappa * kappa * c

    def value(self, state: geo.MetricState, t: float) -> np.ndarray:
        return self.jets(state, t)[0]


def _exact_sphere_terms(cfg: ScenarioConfig, nodes: np.ndarray):
    """Closed-form ``exp(-2 phi)`` and ``R`` for the frozen initial metric."""
    a, b, k = cfg.phi0.a, cfg.phi0.b, cfg.phi0.k
    phi = a + b * np.cos(k * nodes)
    phi_t = -b * k * np.sin(k * nodes)
    phi_tt = -b * k * k * np.cos(k * nodes)
    w = np.exp(-2.0 * phi)
    return w, w * (2.0 - 2.0 * (phi_tt + phi_t / np.tan(nodes)))


def manufactured_source(cfg: ScenarioConfig, target: ManufacturedTarget, state: geo.MetricState) -> Source:
    """Source ``S = u*_t - Lap u* + |grad u*|^2 + R + decay(u*)``."""
    eqn = cfg.equation
    if state.is_sphere:
        if not cfg.freeze_metric:
            raise InvalidParameter("manufactured runs on the sphere need freeze_metric")
        if target.trig != "cos":
            raise InvalidParameter("sphere targets must use cos to stay smooth at the poles")
        w, R = _exact_sphere_terms(cfg, state.grid.nodes)
        cot = state.grid.cot
    else:
        w, R, cot = 1.0, 0.0, 0.0

    def source(t: float) -> np.ndarray:
        u, ut, ux, uxx = target.jets(state, t)
        lap = w * (uxx + cot * ux)
        return ut - lap + w * ux * ux + R + equation_decay(eqn, u, t)

    return source


@dataclass(frozen=True)
class ConvergenceReport:
    resolutions: tuple
    errors: tuple
    order: float


def manufactured_run(cfg: ScenarioConfig, target: ManufacturedTarget) -> ConvergenceReport:
    """L-infinity error at ``T_end`` for resolutions ``N`` and ``2N``."""
    if cfg.equation not in (EquationKind.LOG_HEAT, EquationKind.SOLITON_HEAT):
        raise WrongEquation("manufactured runs need log_heat or soliton_heat")
    errors = []
    resolutions = (cfg.N, 2 * cfg.N)
    for N in resolutions:
        c = cfg.with_resolution(N)
        start = c.initial_metric()
        traj = _integrate(c, target.value(start, 0.0), lambda st, c=c: manufactured_source(c, target, st))
        exact = target.value(start, float(traj.times[-1]))
        errors.append(float(np.max(np.abs(traj.solution[-1] - exact))))
    if errors[1] > 0 and errors[0] > 0:
        order = math.log2(errors[0] / errors[1])
    else:
        order = float("nan")
    return ConvergenceReport(resolutions, tuple(errors), order)


def empirical_orders(resolutions: Sequence[int], values: Sequence[float]) -> list[Optional[float]]:
    """Observed orders between consecutive rows; ``None`` for the first row."""
    out: list[Optional[float]] = [None]
    for (n0, v0), (n1, v1) in zip(zip(resolutions, values), zip(resolutions[1:], values[1:])):
        if v0 is None or v1 is None or v0 <= 0 or v1 <= 0:
            out.append(None)
        else:
            out.append(math.log(v0 / v1) / math.log(n1 / n0))
    return out

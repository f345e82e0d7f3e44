"""Space-time action minimisation and the integrated Harnack inequality.

The action of a path ``gamma`` joining ``(x1, t1)`` to ``(x2, t2)`` is

    int_{t1}^{t2} e^t (|gamma'|^2 + R + 2n/t + n/4) dt.

Paths are piecewise linear in ``(x, t)``.  Each segment is integrated over
every stored stamp it spans: trapezoid for the potential part, midpoint for
the kinetic part (metric and ``e^t`` taken at sub-interval midpoints).  A
path's action is the left-to-right sum of its segment costs, which is also
the order in which the dynamic programme accumulates, so DP values and
:func:`path_action` agree bit for bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from .errors import InvalidQuery, InvalidTime, InvalidWindow, ResolutionError, WrongEquation
from .flow import EquationKind, FlowTrajectory, default_tolerance
from .harnack import BREACH, FAIL, PASS, HarnackReport

DEFAULT_SLICES = 24
MIN_STAMPS = 4


@dataclass(frozen=True)
class PathQuery:
    x1: float
    t1: float
    x2: float
    t2: float

    def __post_init__(self):
        if not (self.t1 > 0):
            raise InvalidTime(f"t1 must be positive, got {self.t1}")
        if not (self.t1 < self.t2):
            raise InvalidQuery(f"need t1 < t2, got t1={self.t1}, t2={self.t2}")

    def to_dict(self) -> dict:
        return {"x1": self.x1, "t1": self.t1, "x2": self.x2, "t2": self.t2}


@dataclass
class SpaceTimePath:
    positions: np.ndarray
    times: np.ndarray
    action: Optional[float] = None
    dp_value: Optional[float] = None
    sweep_actions: list = field(default_factory=list)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.positions.shape != self.times.shape or len(self.times) < 2:
            raise InvalidQuery("a path needs matching position/time lists with at least two nodes")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidQuery("path times must be strictly increasing")

    @property
    def nodes(self) -> list[tuple[float, float]]:
        return [(float(x), float(t)) for x, t in zip(self.positions, self.times)]


@dataclass
class _Subgrid:
    s: np.ndarray
    k: np.ndarray
    w: np.ndarray
    exp_s: np.ndarray
    pot_const: np.ndarray
    ds: np.ndarray
    frac: np.ndarray
    mid_frac: np.ndarray
    mid_k: np.ndarray
    mid_w: np.ndarray
    exp_mid: np.ndarray


class ActionField:
    """Trajectory fields prepared for repeated action evaluation."""

    def __init__(self, traj: FlowTrajectory):
        if traj.is_conjugate:
            raise WrongEquation("path actions are defined on forward trajectories")
        self.traj = traj
        self.grid = traj.grid
        self.n = traj.n
        self.times = traj.times
        self.exp_times = np.exp(self.times)
        self.exp_mids = np.exp(0.5 * (self.times[:-1] + self.times[1:]))
        R = np.stack([geo.scalar_curvature(traj.metric(k)) for k in range(len(traj))])
        self.R = self._table(R)
        self.G = None if traj.phi is None else self._table(np.exp(2.0 * traj.phi))
        self.u = None if traj.solution is None else self._table(traj.solution)
        self._cache: dict = {}

    def _table(self, values: np.ndarray) -> np.ndarray:
        # extra final row so index k + 1 stays valid for the last stamp
        ext = geo.extend(self.grid, values)
        return np.concatenate([ext, ext[-1:]], axis=0)

    @property
    def periodic(self) -> bool:
        return self.grid.periodic

    @property
    def period(self) -> float:
        return self.grid.extent

    def displacement(self, xa, xb):
        xa = np.asarray(xa, dtype=float)
        xb = np.asarray(xb, dtype=float)
        if not self.periodic:
            return xb - xa
        r = np.mod(xb - xa, self.period)
        return np.where(r > 0.5 * self.period, r - self.period, r)

    def locate(self, t: float) -> tuple[int, float]:
        times = self.times
        if t < times[0] or t > times[-1]:
            raise InvalidWindow(f"time {t} outside the trajectory range [{times[0]}, {times[-1]}]")
        j = int(np.searchsorted(times, t))
        if j < len(times) and times[j] == t:
            return j, 0.0
        k = j - 1
        return k, float((t - times[k]) / (times[k + 1] - times[k]))

    def _exp_at(self, t: float, k: int, w: float) -> float:
        return float(self.exp_times[k]) if w == 0.0 else math.exp(t)

    def subgrid(self, ta: float, tb: float) -> _Subgrid:
        key = (ta, tb)
        sg = self._cache.get(key)
        if sg is not None:
            return sg
        times = self.times
        lo = int(np.searchsorted(times, ta, side="right"))
        hi = int(np.searchsorted(times, tb, side="left"))
        inner = np.arange(lo, hi)
        ka, wa = self.locate(ta)
        kb, wb = self.locate(tb)
        s = np.concatenate([[ta], times[inner], [tb]])
        k = np.concatenate([[ka], inner, [kb]]).astype(np.intp)
        w = np.concatenate([[wa], np.zeros(len(inner)), [wb]])
        exp_s = np.concatenate([[self._exp_at(ta, ka, wa)], self.exp_times[inner], [self._exp_at(tb, kb, wb)]])
        ds = np.diff(s)
        span = tb - ta
        mids = 0.5 * (s[:-1] + s[1:])
        mid_k = np.empty(len(mids), dtype=np.intp)
        mid_w = np.empty(len(mids))
        exp_mid = np.empty(len(mids))
        for j, m in enumerate(mids):
            if w[j] == 0.0 and w[j + 1] == 0.0 and k[j + 1] == k[j] + 1:
                mid_k[j], mid_w[j], exp_mid[j] = k[j], 0.5, self.exp_mids[k[j]]
            else:
                kk, ww = self.locate(m)
                mid_k[j], mid_w[j], exp_mid[j] = kk, ww, math.exp(m)
        sg = _Subgrid(
            s=s, k=k, w=w, exp_s=exp_s,
            pot_const=2.0 * self.n / s + self.n / 4.0,
            ds=ds, frac=(s - ta) / span, mid_frac=(mids - ta) / span,
            mid_k=mid_k, mid_w=mid_w, exp_mid=exp_mid,
        )
        self._cache[key] = sg
        return sg

    def interpolate(self, table: np.ndarray, k: np.ndarray, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Field value at positions ``x`` (shape ``(C, m)``) and times ``(k, w)``."""
        i0, wx = geo.lattice_coordinates(self.grid, x)
        lo = table[k[None, :], i0]
        hi = table[k[None, :], i0 + 1]
        a = (1.0 - wx) * lo + wx * hi
        if not np.any(w):
            return a
        lo = table[k[None, :] + 1, i0]
        hi = table[k[None, :] + 1, i0 + 1]
        b = (1.0 - wx) * lo + wx * hi
        return (1.0 - w) * a + w * b

    def segment_costs(self, xa, xb, ta: float, tb: float) -> np.ndarray:
        """Action of straight segments ``(xa, ta) -> (xb, tb)``, vectorised over ``xa, xb``."""
        xa, xb = np.broadcast_arrays(np.atleast_1d(np.asarray(xa, float)), np.atleast_1d(np.asarray(xb, float)))
        sg = self.subgrid(ta, tb)
        d = self.displacement(xa, xb)
        x = xa[:, None] + d[:, None] * sg.frac[None, :]
        F = sg.exp_s * (self.interpolate(self.R, sg.k, sg.w, x) + sg.pot_const)
        pot = 0.5 * sg.ds * (F[:, :-1] + F[:, 1:])
        speed = d / (tb - ta)
        speed2 = (speed * speed)[:, None]
        if self.G is None:
            kin = (sg.ds * sg.exp_mid) * speed2
        else:
            xm = xa[:, None] + d[:, None] * sg.mid_frac[None, :]
            kin = (sg.ds * sg.exp_mid) * self.interpolate(self.G, sg.mid_k, sg.mid_w, xm) * speed2
        # sequential accumulation keeps results independent of the batch shape
        return np.cumsum(pot + kin, axis=1)[:, -1]

    def value(self, table: np.ndarray, x: float, t: float) -> float:
        k, w = self.locate(t)
        out = self.interpolate(table, np.array([k]), np.array([w]), np.array([[x]]))
        return float(out[0, 0])

    def u_at(self, x: float, t: float) -> float:
        if self.u is None:
            raise WrongEquation("trajectory carries no solution field")
        return self.value(self.u, x, t)

    def action(self, positions: Sequence[float], times: Sequence[float]) -> float:
        total = 0.0
        for j in range(len(times) - 1):
            total += float(self.segment_costs(positions[j], positions[j + 1], float(times[j]), float(times[j + 1]))[0])
        return total

    def clamp(self, x):
        if self.periodic:
            return np.mod(x, self.period)
        return np.clip(x, 0.0, math.pi)


def _check_times(field: ActionField, t1: float, t2: float) -> None:
    if not (t1 > 0):
        raise InvalidTime(f"t1 must be positive, got {t1}")
    times = field.times
    if t1 < times[0] or t2 > times[-1]:
        raise InvalidWindow(f"[{t1}, {t2}] is outside the trajectory range [{times[0]}, {times[-1]}]")


def path_action(traj: FlowTrajectory | ActionField, path: SpaceTimePath) -> float:
    """Action of a fixed piecewise-linear path."""
    field_ = traj if isinstance(traj, ActionField) else ActionField(traj)
    _check_times(field_, float(path.times[0]), float(path.times[-1]))
    return field_.action(path.positions, path.times)


# -- optimisation -----------------------------------------------------------------------


def _lattice(field_: ActionField, factor: int) -> np.ndarray:
    grid = field_.grid
    count = grid.N * factor
    spacing = grid.extent / count
    if grid.periodic:
        return np.arange(count) * spacing
    return (np.arange(count) + 0.5) * spacing


def _nearest_index(field_: ActionField, x: float, count: int) -> int:
    spacing = field_.grid.extent / count
    if field_.periodic:
        return int(np.round(x / spacing)) % count
    return int(np.clip(np.round(x / spacing - 0.5), 0, count - 1))


def _offsets_ok(field_: ActionField, i: np.ndarray, j: np.ndarray, count: int, W: int) -> np.ndarray:
    diff = j - i
    if field_.periodic:
        diff = np.mod(diff + count // 2, count) - count // 2
    return np.abs(diff) <= W


def slice_times(field_: ActionField, t1: float, t2: float, slices: Optional[int]) -> np.ndarray:
    times = field_.times
    inside = np.nonzero((times >= t1) & (times <= t2))[0]
    if len(inside) < MIN_STAMPS:
        raise ResolutionError(f"only {len(inside)} stored stamps in [{t1}, {t2}], need {MIN_STAMPS}")
    inner = times[(times > t1) & (times < t2)]
    want = DEFAULT_SLICES if slices is None else int(slices)
    if want < 2:
        raise InvalidQuery("a path needs at least two time nodes")
    interior = want - 2
    if interior >= len(inner):
        chosen = inner
    elif interior <= 0:
        chosen = inner[:0]
    else:
        picks = np.unique(np.round(np.linspace(0, len(inner) - 1, interior)).astype(int))
        chosen = inner[picks]
    return np.concatenate([[t1], chosen, [t2]])


def dynamic_programme(
    field_: ActionField,
    q: PathQuery,
    times: np.ndarray,
    lattice_factor: int = 1,
    window: Optional[int] = None,
) -> tuple[float, np.ndarray]:
    """Minimum action over lattice paths with bounded per-slice jumps.

    Ties are broken toward the smaller lattice index.
    """
    P = _lattice(field_, lattice_factor)
    count = len(P)
    W = max(2, math.ceil(count / 8)) if window is None else int(window)
    K = len(times) - 1
    if K == 1:
        cost = float(field_.segment_costs(q.x1, q.x2, times[0], times[1])[0])
        return cost, np.array([q.x1, q.x2])
    idx = np.arange(count)
    start = _nearest_index(field_, q.x1, count)
    end = _nearest_index(field_, q.x2, count)

    cost = np.full(count, np.inf)
    ok = _offsets_ok(field_, np.full(count, start), idx, count, W)
    cost[ok] = field_.segment_costs(q.x1, P[ok], times[0], times[1])
    back = []
    offsets = np.arange(-W, W + 1)
    for k in range(1, K - 1):
        I = np.repeat(idx, len(offsets))
        J = I + np.tile(offsets, count)
        if field_.periodic:
            J = np.mod(J, count)
        keep = (J >= 0) & (J < count) & np.isfinite(cost[I])
        I, J = I[keep], J[keep]
        seg = field_.segment_costs(P[I], P[J], times[k], times[k + 1])
        table = np.full((count, count), np.inf)
        table[I, J] = cost[I] + seg
        back.append(np.argmin(table, axis=0))
        cost = table.min(axis=0)
    ok = _offsets_ok(field_, idx, np.full(count, end), count, W) & np.isfinite(cost)
    if not np.any(ok):
        raise ResolutionError("no lattice path reaches the end point within the jump window")
    final = np.full(count, np.inf)
    final[ok] = cost[ok] + field_.segment_costs(P[ok], q.x2, times[K - 1], times[K])
    j = int(np.argmin(final))
    value = float(final[j])
    nodes = [j]
    for arg in reversed(back):
        j = int(arg[j])
        nodes.append(j)
    positions = np.concatenate([[q.x1], P[np.array(nodes[::-1])], [q.x2]])
    return value, positions


def refine(
    field_: ActionField,
    positions: np.ndarray,
    times: np.ndarray,
    step: float,
    tol: float,
    max_sweeps: int = 60,
) -> tuple[np.ndarray, list[float]]:
    """Coordinate descent on interior node positions; never increases the action.

    Each node tries ``x +- delta`` and the vertex of the parabola through the
    three local costs.  ``delta`` halves after a sweep that moves nothing.
    Returns the refined positions and the action after every accepted sweep.
    """
    x = np.array(positions, dtype=float)
    actions = [field_.action(x, times)]
    delta = step
    sweeps = 0

    def local(trial, k, cand):
        return (
            field_.segment_costs(trial[k - 1], cand, times[k - 1], times[k])
            + field_.segment_costs(cand, trial[k + 1], times[k], times[k + 1])
        )

    while delta > tol and sweeps < max_sweeps:
        sweeps += 1
        trial = x.copy()
        moved = False
        for k in range(1, len(x) - 1):
            cand = field_.clamp(np.array([trial[k], trial[k] - delta, trial[k] + delta]))
            costs = local(trial, k, cand)
            c0, cm, cp = costs
            curv = cm - 2.0 * c0 + cp
            if curv > 0:
                shift = float(np.clip(-0.5 * delta * (cp - cm) / curv, -4.0 * delta, 4.0 * delta))
                vertex = field_.clamp(np.array([trial[k] + shift]))
                cand = np.concatenate([cand, vertex])
                costs = np.concatenate([costs, local(trial, k, vertex)])
            best = int(np.argmin(costs))
            if costs[best] < c0:
                trial[k] = cand[best]
                moved = True
        if moved:
            value = field_.action(trial, times)
            if value < actions[-1]:
                x = trial
                actions.append(value)
                continue
        delta *= 0.5
    return x, actions


def straight_path(field_: ActionField, q: PathQuery, times: np.ndarray) -> np.ndarray:
    d = float(field_.displacement(q.x1, q.x2))
    pos = q.x1 + d * (times - q.t1) / (q.t2 - q.t1)
    pos = field_.clamp(pos)
    pos[0], pos[-1] = q.x1, q.x2
    return pos


def optimize_path(
    traj: FlowTrajectory | ActionField,
    q: PathQuery,
    *,
    slices: Optional[int] = None,
    lattice_factor: int = 1,
    window: Optional[int] = None,
    refine_nodes: bool = True,
) -> tuple[float, SpaceTimePath]:
    """Approximate ``inf`` of the action over paths joining the query points.

    Dynamic programming over the space-time lattice, then coordinate-descent
    refinement; the straight line is kept as a fallback candidate.
    """
    field_ = traj if isinstance(traj, ActionField) else ActionField(traj)
    _check_times(field_, q.t1, q.t2)
    times = slice_times(field_, q.t1, q.t2, slices)
    dp_value, dp_positions = dynamic_programme(field_, q, times, lattice_factor, window)
    spacing = field_.grid.extent / (field_.grid.N * lattice_factor)
    tol = 1e-7 * spacing
    best_x, sweeps = dp_positions, [dp_value]
    if refine_nodes:
        best_x, sweeps = refine(field_, dp_positions, times, spacing, tol)
    line = straight_path(field_, q, times)
    line_value = field_.action(line, times)
    if line_value < sweeps[-1]:
        if refine_nodes:
            line, line_sweeps = refine(field_, line, times, spacing, tol)
            line_value = line_sweeps[-1]
        if line_value < sweeps[-1]:
            best_x, sweeps = line, sweeps + [line_value]
    gamma = float(sweeps[-1])
    path = SpaceTimePath(best_x, times, action=gamma, dp_value=dp_value, sweep_actions=[float(a) for a in sweeps])
    return gamma, path


# -- integrated Harnack ----------------------------------------------------------------


def default_queries(traj: FlowTrajectory, count: int = 10) -> list[PathQuery]:
    """Fixed lattice of query pairs inside the monitored window, snapped to stamps."""
    times = traj.times
    t_lo = max(traj.t_min, float(times[times > 0][0]))
    t_hi = float(times[-1])
    span = t_hi - t_lo
    nodes = traj.grid.nodes
    N = traj.grid.N

    def snap(t):
        return float(times[int(np.argmin(np.abs(times - t)))])

    queries = []
    for i in range(count):
        t1 = snap(t_lo + span * (0.05 + 0.06 * i))
        t2 = snap(min(t_hi, t1 + span * (0.15 + 0.05 * (i % 4))))
        j1 = (i * N) // count
        j2 = (j1 + (i % 3) * max(1, N // 16)) % N
        queries.append(PathQuery(float(nodes[j1]), t1, float(nodes[j2]), t2))
    return queries


def verify_integrated_harnack(
    traj: FlowTrajectory,
    queries: Sequence[PathQuery],
    tolerance: Optional[float] = None,
    **optimize_kwargs,
) -> HarnackReport:
    """Check ``e^{t1} ln f(x1,t1) <= e^{t2} ln f(x2,t2) + Gamma/2`` per query.

    Violations are divided by ``e^{t2}`` before comparison with the tolerance.
    """
    if traj.equation is not EquationKind.LOG_HEAT:
        got = None if traj.equation is None else traj.equation.value
        raise WrongEquation(f"corollary_2_3 needs a log_heat trajectory, got {got}")
    if not queries:
        raise InvalidWindow("no path queries given")
    tol = default_tolerance(traj.h) if tolerance is None else float(tolerance)
    field_ = ActionField(traj)
    records = []
    scaled = []
    for q in queries:
        started = time.perf_counter()
        gamma, path = optimize_path(field_, q, **optimize_kwargs)
        elapsed = time.perf_counter() - started
        ln_f1 = -field_.u_at(q.x1, q.t1)
        ln_f2 = -field_.u_at(q.x2, q.t2)
        lhs = math.exp(q.t1) * ln_f1
        rhs = math.exp(q.t2) * ln_f2 + 0.5 * gamma
        violation = lhs - rhs
        scaled.append(violation / math.exp(q.t2))
        records.append({
            "query": q.to_dict(),
            "gamma": gamma,
            "dp_value": path.dp_value,
            "nodes": path.nodes,
            "sweep_actions": path.sweep_actions,
            "margin": -violation,
            "scaled_violation": violation / math.exp(q.t2),
            "reverse_slack": math.exp(q.t2) * ln_f2 - math.exp(q.t1) * ln_f1 - 0.5 * gamma,
            "seconds": elapsed,
        })
    scaled_arr = np.asarray(scaled)
    max_violation = float(scaled_arr.max())
    if traj.hypothesis_violated:
        verdict = BREACH
    else:
        verdict = PASS if max_violation <= tol else FAIL
    t2s = np.array([q.t2 for q in queries])
    min_R = np.array([traj.min_R[traj.stamp_index(t)] for t in t2s])
    return HarnackReport(
        theorem="corollary_2_3",
        window=(float(min(q.t1 for q in queries)), float(max(q.t2 for q in queries))),
        times=t2s,
        sup_series=scaled_arr,
        min_R_series=min_R,
        max_violation=max_violation,
        tolerance=tol,
        verdict=verdict,
        fingerprint=traj.fingerprint,
        details={"queries": records},
    )

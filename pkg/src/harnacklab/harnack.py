"""Differential Harnack quantities and their verification along trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry as geo
from .errors import DomainError, InvalidTime, InvalidWindow, WrongEquation
from .flow import EquationKind, FlowTrajectory, default_tolerance

THEOREMS = ("thm_1_1", "thm_1_2", "thm_4_1", "thm_3_6_P", "corollary_2_3")

_EQUATION_FOR = {
    "thm_1_1": EquationKind.LOG_HEAT,
    "thm_1_2": EquationKind.SOLITON_HEAT,
    "thm_4_1": EquationKind.CONJUGATE,
    "thm_3_6_P": EquationKind.CONJUGATE,
    "corollary_2_3": EquationKind.LOG_HEAT,
}

PASS, FAIL, BREACH = "pass", "fail", "hypothesis_breach"


@dataclass
class HarnackReport:
    theorem: str
    window: tuple[float, float]
    times: np.ndarray
    sup_series: np.ndarray
    min_R_series: np.ndarray
    max_violation: float
    tolerance: float
    verdict: str
    fingerprint: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS


def _verdict(max_violation: float, tolerance: float, breached: bool) -> str:
    if breached:
        return BREACH
    return PASS if max_violation <= tolerance else FAIL


def _positive_time(t: float, name: str = "t") -> float:
    if not (t > 0) or not math.isfinite(t):
        raise InvalidTime(f"{name} must be positive, got {t}")
    return float(t)


# -- pointwise quantities --------------------------------------------------------------


def compute_H(metric: geo.MetricState, u, t: float) -> np.ndarray:
    """``H = 2 Lap u - |grad u|^2 - 3R - 2n/t``."""
    t = _positive_time(t)
    lap = geo.laplacian(metric, u)
    grad2 = geo.gradient_norm_sq(metric, u)
    R = geo.scalar_curvature(metric)
    return 2.0 * lap - grad2 - 3.0 * R - 2.0 * metric.n / t


def conjugate_potential(metric: geo.MetricState, f, tau: float) -> np.ndarray:
    """``v = -ln f - (n/2) ln(4 pi tau)``."""
    tau = _positive_time(tau, "tau")
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise DomainError("f must be strictly positive")
    return -np.log(f) - 0.5 * metric.n * math.log(4.0 * math.pi * tau)


def compute_P_tilde(metric: geo.MetricState, f, tau: float) -> np.ndarray:
    """``P~ = 2 Lap v - |grad v|^2 + R``."""
    v = conjugate_potential(metric, f, tau)
    return 2.0 * geo.laplacian(metric, v) - geo.gradient_norm_sq(metric, v) + geo.scalar_curvature(metric)


def compute_P(metric: geo.MetricState, f, tau: float) -> np.ndarray:
    """``P = P~ - 2n/tau``."""
    return compute_P_tilde(metric, f, tau) - 2.0 * metric.n / tau


def trace_harnack(metric: geo.MetricState, u, t: float) -> np.ndarray:
    """``dR/dt + R/t + 2 <grad R, grad u> + 2 Rc(grad u, grad u)``."""
    t = _positive_time(t)
    R = geo.scalar_curvature(metric)
    return (
        geo.scalar_curvature_time_derivative(metric)
        + R / t
        + 2.0 * geo.inner_grad(metric, R, u)
        + 2.0 * geo.ricci_quadratic(metric, u)
    )


# -- evolution-identity residuals -------------------------------------------------------


def _centered_derivative(times: np.ndarray, values: list, k: int) -> np.ndarray:
    """Five-point derivative at stamp ``k`` from stamps ``k-2 .. k+2``.

    Exact for quartics on nonuniform stamps, so the time-differencing error
    is O(dt^4) and stays far below the spatial O(h^2) residual.
    """
    window = times[k - 2 : k + 3]
    scale = times[k + 1] - times[k - 1]
    s = (window - times[k]) / scale
    vander = np.vander(s, 5, increasing=True).T
    rhs = np.zeros(5)
    rhs[1] = 1.0 / scale
    weights = np.linalg.solve(vander, rhs)
    return sum(w * v for w, v in zip(weights, values))


def _interior_stamp(traj: FlowTrajectory, t: float) -> int:
    times = traj.times
    if not (times[0] < t < times[-1]):
        raise InvalidTime(f"t={t} is not inside ({times[0]}, {times[-1]})")
    k = traj.stamp_index(t)
    if k < 2 or k > len(times) - 3:
        raise InvalidTime(f"t={t} needs two stored neighbours on each side")
    if traj.times[k] <= 0:
        raise InvalidTime("residual needs a positive stamp")
    return k


def evolution_rhs_H(metric: geo.MetricState, u, t: float, eqn: EquationKind) -> np.ndarray:
    """Right-hand side of the H evolution identity for ``eqn``."""
    H = compute_H(metric, u, t)
    grad2 = geo.gradient_norm_sq(metric, u)
    extra = -2.0 * geo.laplacian(metric, u) + 2.0 * grad2
    if eqn is EquationKind.SOLITON_HEAT:
        extra = 2.0 / (t + 2.0) * extra
    elif eqn is not EquationKind.LOG_HEAT:
        raise WrongEquation(f"no H identity for {eqn}")
    return (
        geo.laplacian(metric, H)
        - 2.0 * geo.inner_grad(metric, H, u)
        - 2.0 * geo.hessian_deficit_norm_sq(metric, u, -1, 1.0 / t)
        - 2.0 / t * H
        - 2.0 / t * grad2
        - 2.0 * trace_harnack(metric, u, t)
        + extra
    )


def evolution_residual_H(traj: FlowTrajectory, t: float) -> float:
    """``max |dH/dt - RHS|`` at the stored stamp nearest ``t``."""
    if traj.equation not in (EquationKind.LOG_HEAT, EquationKind.SOLITON_HEAT):
        raise WrongEquation("H residual needs a log_heat or soliton_heat trajectory")
    k = _interior_stamp(traj, t)
    Hs = [compute_H(traj.metric(j), traj.solution[j], traj.times[j]) for j in range(k - 2, k + 3)]
    dH = _centered_derivative(traj.times, Hs, k)
    rhs = evolution_rhs_H(traj.metric(k), traj.solution[k], float(traj.times[k]), traj.equation)
    return float(np.max(np.abs(dH - rhs)))


def evolution_rhs_P(metric: geo.MetricState, f, tau: float) -> np.ndarray:
    P = compute_P(metric, f, tau)
    v = conjugate_potential(metric, f, tau)
    R = geo.scalar_curvature(metric)
    return (
        geo.laplacian(metric, P)
        - 2.0 * geo.inner_grad(metric, P, v)
        - 2.0 * geo.hessian_deficit_norm_sq(metric, v, +1, 1.0 / tau)
        - 2.0 / tau * P
        - 2.0 * geo.gradient_norm_sq(metric, v) / tau
        - 2.0 * R / tau
    )


def evolution_residual_P(traj: FlowTrajectory, tau: float) -> float:
    """``max |dP/dtau - RHS|`` at the stored stamp nearest ``tau``."""
    if traj.equation is not EquationKind.CONJUGATE:
        raise WrongEquation("P residual needs a conjugate trajectory")
    k = _interior_stamp(traj, tau)
    Ps = [compute_P(traj.metric(j), traj.solution[j], traj.times[j]) for j in range(k - 2, k + 3)]
    dP = _centered_derivative(traj.times, Ps, k)
    rhs = evolution_rhs_P(traj.metric(k), traj.solution[k], float(traj.times[k]))
    return float(np.max(np.abs(dP - rhs)))


# -- theorem verification ------------------------------------------------------------------


def monitored_stamps(traj: FlowTrajectory) -> np.ndarray:
    idx = np.nonzero(traj.times >= traj.t_min * (1.0 - 1e-12))[0]
    idx = idx[traj.times[idx] > 0]
    if len(idx) == 0:
        raise InvalidWindow(f"no stamps at or after t_min={traj.t_min}")
    return idx


def check_equation(traj: FlowTrajectory, theorem: str) -> None:
    if theorem not in _EQUATION_FOR:
        raise WrongEquation(f"unknown theorem id {theorem!r}")
    expected = _EQUATION_FOR[theorem]
    if traj.equation is not expected:
        got = None if traj.equation is None else traj.equation.value
        raise WrongEquation(f"{theorem} needs a {expected.value} trajectory, got {got}")


def sup_series(traj: FlowTrajectory, quantity: str, stamps: Optional[np.ndarray] = None) -> np.ndarray:
    """Grid maximum of ``H``, ``P`` or ``P_tilde`` at each stamp."""
    if stamps is None:
        stamps = monitored_stamps(traj)
    fn = {"H": compute_H, "P": compute_P, "P_tilde": compute_P_tilde}[quantity]
    return np.array([fn(traj.metric(k), traj.solution[k], traj.times[k]).max() for k in stamps])


def trace_harnack_minimum(traj: FlowTrajectory) -> tuple[float, np.ndarray]:
    """Grid minimum of the trace-Harnack expression over the monitored window."""
    if traj.equation not in (EquationKind.LOG_HEAT, EquationKind.SOLITON_HEAT):
        raise WrongEquation("trace Harnack is evaluated on forward u-trajectories")
    stamps = monitored_stamps(traj)
    mins = np.array([trace_harnack(traj.metric(k), traj.solution[k], traj.times[k]).min() for k in stamps])
    return float(mins.min()), mins


def verify_theorem(traj: FlowTrajectory, theorem: str, tolerance: Optional[float] = None) -> HarnackReport:
    """Check one theorem's conclusion over the monitored window of ``traj``."""
    if theorem == "corollary_2_3":
        from .pathopt import default_queries, verify_integrated_harnack

        return verify_integrated_harnack(traj, default_queries(traj), tolerance)
    check_equation(traj, theorem)
    tol = default_tolerance(traj.h) if tolerance is None else float(tolerance)
    stamps = monitored_stamps(traj)
    times = traj.times[stamps]
    window = (float(times[0]), float(times[-1]))
    n = traj.n
    details: dict = {}
    breached = traj.hypothesis_violated

    if theorem == "thm_1_1":
        sups = sup_series(traj, "H", stamps)
        t_hi = window[1]
        bounds = {"n_over_4": n / 4.0, "max_point": n / 4.0 * (1.0 - 5.0 / (t_hi + 1.0))}
        if t_hi < 4.0:
            bounds["nonpositive"] = 0.0
        violations = {name: float(sups.max() - b) for name, b in bounds.items()}
        details.update(bounds=bounds, violations=violations, observed_sup=float(sups.max()))
        max_violation = max(violations.values())
    elif theorem == "thm_1_2":
        sups = sup_series(traj, "H", stamps)
        max_violation = float(sups.max())
        details["observed_sup"] = max_violation
    elif theorem == "thm_3_6_P":
        sups = sup_series(traj, "P", stamps)
        max_violation = float(sups.max())
        details["observed_sup"] = max_violation
    else:  # thm_4_1: max P~ nondecreasing in t, i.e. nonincreasing in tau
        sups = sup_series(traj, "P_tilde", stamps)
        increments = np.diff(sups)
        max_violation = float(increments.max()) if len(increments) else -math.inf
        # no curvature hypothesis for this one
        breached = False
    phys = np.array([traj.physical_time(k) for k in stamps])
    return HarnackReport(
        theorem=theorem,
        window=window,
        times=phys,
        sup_series=sups,
        min_R_series=traj.min_R[stamps],
        max_violation=max_violation,
        tolerance=tol,
        verdict=_verdict(max_violation, tol, breached),
        fingerprint=traj.fingerprint,
        details=details,
    )

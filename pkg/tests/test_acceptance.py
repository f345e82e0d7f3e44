"""Acceptance suite at N = 128.

Each test covers one acceptance criterion, prints a single PASS/FAIL line
(also repeated in the pytest terminal summary) and then asserts.
"""

import functools
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import expi

from harnacklab import cli, flow, geometry as geo, harnack, pathopt
from harnacklab.flow import ManufacturedTarget, default_tolerance

from conftest import report_criterion, scenario

N = 128
RUN_BUDGET = 30.0
QUERY_BUDGET = 5.0
SWEEP_BUDGET = 120.0

ONE_MODE = (-1.0, 0.3, 1)
CONSTANT = (-1.0, 0.0, 1)

SCENARIOS = {
    "torus n=1 const": dict(n=1, u0=CONSTANT),
    "torus n=1 mode": dict(n=1, u0=ONE_MODE),
    "torus n=2 const": dict(n=2, u0=CONSTANT),
    "torus n=2 mode": dict(n=2, u0=ONE_MODE),
    "sphere phi0=0": dict(backend="conformal_sphere", u0=ONE_MODE),
    "sphere phi0=0.05cos": dict(backend="conformal_sphere", u0=ONE_MODE, phi0=(0.0, 0.05, 1)),
}

CONJUGATE_SCENARIOS = {
    "torus n=1 const": dict(n=1, u0=CONSTANT),
    "torus n=1 mode": dict(n=1, u0=ONE_MODE),
    "torus n=2 mode": dict(n=2, u0=ONE_MODE),
    "sphere phi0=0": dict(backend="conformal_sphere", u0=ONE_MODE),
    "sphere phi0=0.05cos": dict(backend="conformal_sphere", u0=ONE_MODE, phi0=(0.0, 0.05, 1)),
}


@functools.lru_cache(maxsize=None)
def _timed_run(doc_json):
    started = time.perf_counter()
    cfg = flow.ScenarioConfig.from_dict(json.loads(doc_json))
    traj = flow.run_forward(cfg)
    if cfg.equation is flow.EquationKind.CONJUGATE:
        traj = flow.run_conjugate(traj, flow.terminal_data(cfg))
    return traj, time.perf_counter() - started


def timed_run(equation, resolution=N, **kw):
    return _timed_run(json.dumps(scenario(N=resolution, equation=equation, **kw), sort_keys=True))


def order(coarse, fine, ratio=2.0):
    return math.log(coarse / fine) / math.log(ratio)


def in_band(value, lo=1.7, hi=2.3):
    return lo <= value <= hi


def theorem_suite(number, equation, theorem):
    failures, notes = [], []
    for name, kw in SCENARIOS.items():
        traj, seconds = timed_run(equation, **kw)
        report = harnack.verify_theorem(traj, theorem)
        tol = default_tolerance(traj.h)
        sup_h = float(report.sup_series.max())
        # the window lies inside (0, 4): sup H <= tol is the binding bound
        ok = (
            report.verdict == harnack.PASS
            and sup_h <= traj.n / 4.0 + tol
            and sup_h <= tol
            and not traj.hypothesis_violated
            and seconds <= RUN_BUDGET
        )
        notes.append(f"{name}: sup H={sup_h:.3g} ({seconds:.1f}s)")
        if not ok:
            failures.append(name)
    passed = not failures
    title = f"{theorem} suite ({equation}, N={N}, tol=max(1e-6, 5h^2))"
    report_criterion(number, title, passed, "; ".join(notes) + (f" | failing: {failures}" if failures else ""))
    assert passed, failures


def test_criterion_1_thm_1_1_suite():
    theorem_suite(1, "log_heat", "thm_1_1")


def test_criterion_2_thm_1_2_suite():
    theorem_suite(2, "soliton_heat", "thm_1_2")


def test_criterion_3_trace_harnack():
    failures, worst = [], math.inf
    for equation in ("log_heat", "soliton_heat"):
        for name, kw in SCENARIOS.items():
            traj, _ = timed_run(equation, **kw)
            low, _ = harnack.trace_harnack_minimum(traj)
            worst = min(worst, low)
            if low < -default_tolerance(traj.h):
                failures.append(f"{name}/{equation}")
    passed = not failures
    report_criterion(3, "trace Harnack >= -tol on all scenarios", passed, f"12 runs, min value {worst:.4g}")
    assert passed, failures


def test_criterion_4_evolution_residuals():
    started = time.perf_counter()
    notes, failures = [], []
    varying = {k: v for k, v in SCENARIOS.items() if v["u0"] != CONSTANT}
    for equation in ("log_heat", "soliton_heat"):
        for name, kw in varying.items():
            res = [harnack.evolution_residual_H(t, cli.mid_window(t)) for t in (timed_run(equation, M, **kw)[0] for M in (64, N))]
            p = order(*res)
            notes.append(f"H {equation} {name}: {p:.3f}")
            if not in_band(p):
                failures.append(f"H {equation} {name}")
    for name, kw in CONJUGATE_SCENARIOS.items():
        if kw["u0"] == CONSTANT:
            continue
        res = [harnack.evolution_residual_P(t, cli.mid_window(t)) for t in (timed_run("conjugate", M, **kw)[0] for M in (64, N))]
        p = order(*res)
        notes.append(f"P {name}: {p:.3f}")
        if not in_band(p):
            failures.append(f"P {name}")
    worst_constant = 0.0
    constant_cases = [(eq, dict(n=n, u0=CONSTANT)) for eq in ("log_heat", "soliton_heat") for n in (1, 2)]
    constant_cases += [(eq, dict(backend="conformal_sphere", u0=CONSTANT)) for eq in ("log_heat", "soliton_heat")]
    for equation, kw in constant_cases:
        for M in (64, N):
            traj, _ = timed_run(equation, M, **kw)
            worst_constant = max(worst_constant, harnack.evolution_residual_H(traj, cli.mid_window(traj)))
    for n in (1, 2):
        for M in (64, N):
            traj, _ = timed_run("conjugate", M, n=n, u0=CONSTANT)
            worst_constant = max(worst_constant, harnack.evolution_residual_P(traj, cli.mid_window(traj)))
    if worst_constant > 1e-6:
        failures.append(f"constant cases residual {worst_constant:.3g}")
    elapsed = time.perf_counter() - started
    if elapsed > SWEEP_BUDGET:
        failures.append(f"sweep took {elapsed:.0f}s")
    passed = not failures
    detail = f"orders 64->128: {'; '.join(notes)}; constant cases max {worst_constant:.2g}; {elapsed:.0f}s"
    report_criterion(4, "evolution-identity residual orders in [1.7, 2.3]", passed, detail)
    assert passed, failures


def test_criterion_5_conjugate_suite():
    failures, notes = [], []
    for name, kw in CONJUGATE_SCENARIOS.items():
        traj, _ = timed_run("conjugate", **kw)
        drift = flow.mass_drift(traj)
        tol = default_tolerance(traj.h)
        mono = harnack.verify_theorem(traj, "thm_4_1")
        ok = drift <= 1e-3 and mono.verdict == harnack.PASS
        m_by_t = mono.sup_series[np.argsort(mono.times)]
        ok = ok and bool(np.all(np.diff(m_by_t) >= -tol))
        note = f"{name}: drift {drift:.2g}, thm_4_1 {mono.verdict}"
        if traj.min_R.min() >= 0:
            p_report = harnack.verify_theorem(traj, "thm_3_6_P")
            ok = ok and p_report.verdict == harnack.PASS and p_report.sup_series.max() <= tol
            note += f", thm_3_6_P {p_report.verdict}"
        if traj.backend == geo.CONFORMAL_SPHERE:
            coarse = flow.mass_drift(timed_run("conjugate", 64, **kw)[0])
            p = order(coarse, drift)
            ok = ok and in_band(p)
            note += f", drift order {p:.3f}"
        notes.append(note)
        if not ok:
            failures.append(name)
    passed = not failures
    report_criterion(5, "conjugate mass drift, thm_4_1 monotonicity, thm_3_6_P", passed, "; ".join(notes))
    assert passed, failures


def test_criterion_6_integrated_harnack():
    notes, failures = [], []
    # (a) stationary action against two independent evaluations of the integral
    closed = 2 * (expi(2.0) - expi(1.0)) + (math.e**2 - math.e) / 4
    numeric, _ = quad(lambda t: math.exp(t) * (2 / t + 0.25), 1.0, 2.0, epsabs=0, epsrel=1e-13)
    torus = pathopt.ActionField(timed_run("log_heat", n=1, u0=ONE_MODE)[0])
    gamma = pathopt.path_action(torus, pathopt.SpaceTimePath([1.0, 1.0], [1.0, 2.0]))
    rel = abs(gamma - closed) / closed
    ok_a = rel <= 1e-4 and abs(closed - numeric) <= 1e-12 * closed
    notes.append(f"(a) stationary {gamma:.7f} vs {closed:.7f}, rel {rel:.1e}")
    if not ok_a:
        failures.append("a")

    # (b) DP against exhaustive enumeration on an 8x8 lattice
    small = pathopt.ActionField(timed_run("log_heat", 8, n=1, u0=ONE_MODE)[0])
    nodes = small.grid.nodes
    mismatches = 0
    for i1, i2 in [(1, 3), (0, 7), (5, 5)]:
        q = pathopt.PathQuery(float(nodes[i1]), float(small.times[1]), float(nodes[i2]), float(small.times[8]))
        times = pathopt.slice_times(small, q.t1, q.t2, 8)
        value, _ = pathopt.dynamic_programme(small, q, times)
        best = math.inf
        for inner in itertools.product(range(8), repeat=6):
            seq = (i1, *inner, i2)
            if all(min((b - a) % 8, (a - b) % 8) <= 2 for a, b in zip(seq, seq[1:])):
                best = min(best, small.action([nodes[j] for j in seq], times))
        mismatches += value != best
    notes.append(f"(b) 8x8 DP == exhaustive on 3 queries: {mismatches == 0}")
    if mismatches:
        failures.append("b")

    # (c) ten lattice queries per log_heat scenario
    slowest, worst = 0.0, -math.inf
    for name, kw in SCENARIOS.items():
        traj, _ = timed_run("log_heat", **kw)
        report = pathopt.verify_integrated_harnack(traj, pathopt.default_queries(traj))
        slowest = max(slowest, max(rec["seconds"] for rec in report.details["queries"]))
        worst = max(worst, report.max_violation)
        if report.verdict != harnack.PASS or len(report.details["queries"]) != 10:
            failures.append(f"c {name}")
    if slowest > QUERY_BUDGET:
        failures.append(f"c slowest query {slowest:.1f}s")
    notes.append(f"(c) 60 queries, max scaled violation {worst:.3g}, slowest query {slowest:.2f}s")
    passed = not failures
    report_criterion(6, "integrated Harnack / path action", passed, "; ".join(notes))
    assert passed, failures


def test_criterion_7_exact_solutions():
    notes, failures = [], []
    round_traj, _ = timed_run("log_heat", backend="conformal_sphere", u0=CONSTANT)
    rel = np.max(np.abs(np.exp(2 * round_traj.phi) / (1 - 2 * round_traj.times)[:, None] - 1))
    notes.append(f"round sphere rel err {rel:.1e} up to t={round_traj.times[-1]}")
    if rel > 1e-6 or round_traj.times[-1] != 0.45:
        failures.append("round sphere")

    for equation, exact in (("log_heat", -math.exp(-1.0)), ("soliton_heat", -1.0 / 1.5**2)):
        traj, _ = timed_run(equation, T_end=1.0, u0=CONSTANT)
        err = float(np.abs(traj.solution[-1] - exact).max())
        notes.append(f"{equation} ODE err {err:.1e}")
        if traj.times[-1] != 1.0 or err > 1e-8:
            failures.append(equation)

    for label, field, eig in (("cos", np.cos, -2.0), ("P2", lambda th: 0.5 * (3 * np.cos(th) ** 2 - 1), -6.0)):
        errs = []
        for M in (64, N):
            state = geo.conformal_sphere(M)
            a = field(state.grid.nodes)
            errs.append(np.abs(geo.laplacian(state, a) - eig * a).max())
        p = order(*errs)
        notes.append(f"Laplacian {label} order {p:.3f}")
        if not in_band(p):
            failures.append(label)
    passed = not failures
    report_criterion(7, "exact-solution regressions", passed, "; ".join(notes))
    assert passed, failures


def test_criterion_8_manufactured_solutions():
    torus_cfg = flow.ScenarioConfig.from_dict(scenario(N=64, T_end=0.5))
    torus = flow.manufactured_run(torus_cfg, ManufacturedTarget(amplitude=1.0, rate=1.0, k=1, trig="sin"))
    sphere_cfg = flow.ScenarioConfig.from_dict(scenario(backend="conformal_sphere", N=64, T_end=0.2, freeze_metric=True))
    sphere = flow.manufactured_run(sphere_cfg, ManufacturedTarget(amplitude=1.0, rate=2.0, k=1, trig="cos"))
    passed = in_band(torus.order) and in_band(sphere.order)
    detail = f"torus e^-t sin x order {torus.order:.3f}; sphere e^-2t cos(theta) order {sphere.order:.3f} (N 64->128)"
    report_criterion(8, "manufactured-solution convergence", passed, detail)
    assert passed


@pytest.mark.parametrize("kw", [dict(backend="conformal_sphere", equation="conjugate", phi0=(0.0, 0.05, 1))])
def test_criterion_9_determinism(tmp_path, kw):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario(N=64, **kw)))
    codes = [cli.main(["run", "--config", str(path), "--out", str(tmp_path / tag)]) for tag in ("first", "second")]
    dirs = [next((tmp_path / tag).iterdir()) for tag in ("first", "second")]
    names = sorted(p.name for p in dirs[0].glob("*.csv"))
    same = all((dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names)
    passed = codes == [0, 0] and same and len(names) == 2 and dirs[0].name == dirs[1].name
    report_criterion(9, "determinism of cmd_run CSV outputs", passed, f"{', '.join(names)} byte-identical: {same}")
    assert passed

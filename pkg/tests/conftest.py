import functools
import json

import pytest

from harnacklab import flow


def scenario(backend="flat_torus", N=64, equation="log_heat", T_end=None, u0=(-1.0, 0.3, 1), phi0=(0.0, 0.0, 1), **extra):
    doc = {"backend": backend, "N": N, "equation": equation, "u0": dict(zip("abk", u0))}
    if backend == "conformal_sphere":
        doc["phi0"] = dict(zip("abk", phi0))
        doc["T_end"] = 0.45 if T_end is None else T_end
    else:
        doc["T_end"] = 2.0 if T_end is None else T_end
    doc.update(extra)
    return doc


@functools.lru_cache(maxsize=None)
def _cached(doc_json: str):
    cfg = flow.ScenarioConfig.from_dict(json.loads(doc_json))
    traj = flow.run_forward(cfg)
    if cfg.equation is flow.EquationKind.CONJUGATE:
        traj = flow.run_conjugate(traj, flow.terminal_data(cfg))
    return traj


def trajectory(**kw):
    """Run (once per process) the scenario built from ``kw``; conjugate runs include the backward solve."""
    return _cached(json.dumps(scenario(**kw), sort_keys=True))


def config(**kw):
    return flow.ScenarioConfig.from_dict(scenario(**kw))


@pytest.fixture
def write_config(tmp_path):
    def _write(name="scenario.json", **kw):
        path = tmp_path / name
        path.write_text(json.dumps(scenario(**kw)))
        return path

    return _write


ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} :: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

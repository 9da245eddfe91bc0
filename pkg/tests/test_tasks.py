from dataclasses import replace

import numpy as np
import pytest

from delta6.control import ContactEnvironment, TaskConfig, run_task
from delta6.control.tasks import TRACE_COLUMNS

SMALL = TaskConfig(scan_bounds=(0.0, 0.02, 0.0, 0.03), scan_pitch=0.01)
PEG = ContactEnvironment(kind="peg_hole")


@pytest.fixture(scope="module")
def flat_run():
    return run_task("buffing", ContactEnvironment(), SMALL, seed=0)


def test_flat_buffing(flat_run):
    r = flat_run
    assert r.success, r.message
    assert [p[0] for p in r.phases] == ["contacting", "polishing"]
    assert r.metrics["fz_max_dev"] <= 0.10 * 2.5
    assert abs(r.metrics["fz_mean"] + 2.5) < 0.05
    assert r.metrics["mx_max"] < 0.05 and r.metrics["my_max"] < 0.05


def test_trace_layout(flat_run):
    tr = flat_run.trace
    assert tr.shape[1] == len(TRACE_COLUMNS)
    assert np.all(np.diff(tr[:, 0]) > 0)
    assert set(np.unique(tr[:, 1]).astype(int)) <= set(range(len(flat_run.phase_names)))


def test_deterministic():
    cfg = replace(SMALL, scan_bounds=(0.0, 0.01, 0.0, 0.01))
    a = run_task("buffing", ContactEnvironment(amplitude=0.001, wavelength=0.05), cfg, seed=1)
    b = run_task("buffing", ContactEnvironment(amplitude=0.001, wavelength=0.05), cfg, seed=1)
    assert a.to_dict() == b.to_dict() and np.array_equal(a.trace, b.trace)


def test_peg_feedback_small():
    outcomes = [run_task("peg_in_hole", PEG, seed=s).outcome for s in range(2)]
    assert outcomes == ["success", "success"]


def test_peg_without_feedback_breaches():
    r = run_task("peg_in_hole", PEG, seed=0, feedback=False)
    assert r.outcome == "LimitBreach" and not r.success
    assert r.metrics["offset"] >= PEG.clearance


def test_limit_breach_reported():
    # an aggressive force reference trips the global force limit
    cfg = replace(SMALL, fz_ref=-40.0)
    r = run_task("buffing", ContactEnvironment(), cfg, seed=0)
    assert r.outcome == "LimitBreach" and r.message


def test_timeout_without_surface():
    cfg = replace(SMALL, approach_gap=0.5, contact_timeout=0.2)
    r = run_task("buffing", ContactEnvironment(), cfg, seed=0)
    assert r.outcome == "Timeout"


def test_task_env_mismatch():
    with pytest.raises(ValueError):
        run_task("buffing", PEG)
    with pytest.raises(ValueError):
        run_task("peg_in_hole", ContactEnvironment())
    with pytest.raises(ValueError):
        run_task("welding", PEG)


def test_env_validation():
    with pytest.raises(ValueError):
        ContactEnvironment(kind="sand")
    with pytest.raises(ValueError):
        ContactEnvironment(clearance=0)
    with pytest.raises(ValueError):
        ContactEnvironment(stiffness=-1)
    e = ContactEnvironment(amplitude=0.002)
    assert ContactEnvironment.from_dict(e.to_dict()) == e
    assert TaskConfig.from_dict(SMALL.to_dict()) == SMALL


def test_surface_wrench_sign():
    env = ContactEnvironment()
    # z points into the workpiece: pressing 1 mm gives a negative normal force
    W = env.wrench(np.array([0, 0, 1e-3, 0, 0, 0]), np.zeros(6))
    assert W[2] == pytest.approx(-10.0, rel=1e-6)
    assert np.array_equal(env.wrench(np.array([0, 0, -1e-3, 0, 0, 0]), np.zeros(6)), np.zeros(6))


def test_hole_geometry():
    # ``inside`` means inside the material
    env = ContactEnvironment(kind="peg_hole", clearance=2e-4, funnel=5e-4, depth=0.015)
    assert not env.inside(1e-4, 0.005) and env.inside(1e-4, 0.02)
    assert env.inside(5e-4, 0.005) and not env.inside(5e-4, 1e-4)   # chamfer
    assert env.inside(2e-3, 1e-4) and not env.inside(2e-3, -1e-4)
    assert env.captured([6e-4, 0, 0]) and not env.captured([8e-4, 0, 0])

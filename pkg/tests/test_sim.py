import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from funnelctl.controllers import ControllerSpec, FunnelBreach
from funnelctl.funnel import FunnelFunction
from funnelctl.plants import ScalarPlant, Signal
from funnelctl.scenarios import get, run_config
from funnelctl.sim import (COMPLETED, GUARD_AT_START, MIN_STEP, ClosedLoopProblem, GuardUnsatisfiableAtStart,
                           assemble, integrate, trajectory_csv, verify_invariants)


def linear_problem(A, x0, t_end=10.0):
    A = np.asarray(A, float)

    def evaluate(t, x):
        return A @ x, {"y": x[:1], "u": np.zeros(1), "e": x[:1], "gains": {}, "eps": {}, "psi": [], "extra": {}}
    return ClosedLoopProblem(evaluate, np.asarray(x0, float), 0.0, t_end, {"plant": slice(0, len(x0))}, 1)


def test_linear_matches_expm():
    A = np.array([[-0.5, 2.0, 0.0], [-2.0, -0.5, 0.0], [0.0, 0.3, -1.0]])
    x0 = np.array([1.0, 0.0, -1.0])
    rtol = 1e-9
    tr = integrate(linear_problem(A, x0), rtol=rtol, atol=1e-12)
    assert tr.completed
    ref = np.array([sla.expm(A * t) @ x0 for t in tr.t])
    assert np.max(np.abs(tr.x - ref)) <= 10 * rtol


def test_dense_output_between_steps():
    A = np.array([[0.0, 1.0], [-4.0, -0.2]])
    x0 = np.array([1.0, 0.0])
    tr = integrate(linear_problem(A, x0, 5.0), rtol=1e-10, atol=1e-12, max_step=0.05)
    for t in np.linspace(0.013, 4.97, 23):
        np.testing.assert_allclose(tr.interpolate(t), sla.expm(A * t) @ x0, atol=1e-7)


def test_tolerances_must_be_positive():
    with pytest.raises(ValueError):
        integrate(linear_problem([[-1.0]], [1.0]), rtol=0.0)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3))
def test_pack_unpack_roundtrip(vals):
    prob = ClosedLoopProblem(lambda t, x: (x, {}), np.zeros(3), 0.0, 1.0,
                             {"plant": slice(0, 2), "controller": slice(2, 3)}, 1)
    x = np.array(vals)
    assert np.array_equal(prob.pack(prob.unpack(x)), x)


def test_min_step_reached_reported():
    def evaluate(t, x):
        if x[0] >= 1.0:
            raise FunnelBreach("outside")
        return np.array([1.0]), {"y": x, "u": np.zeros(1), "e": x, "gains": {}, "eps": {}, "psi": [], "extra": {}}
    tr = integrate(ClosedLoopProblem(evaluate, np.zeros(1), 0.0, 2.0, {"plant": slice(0, 1)}, 1))
    assert tr.termination == MIN_STEP
    assert tr.t_fail == pytest.approx(1.0, abs=1e-9)
    assert np.all(tr.x[:, 0] < 1.0)


def test_guard_at_start_in_integrate():
    def evaluate(t, x):
        raise FunnelBreach("never inside")
    tr = integrate(ClosedLoopProblem(evaluate, np.zeros(1), 0.0, 1.0, {"plant": slice(0, 1)}, 1))
    assert tr.termination == GUARD_AT_START


def scalar_fc(x0, phi, b=1.0, t_end=2.0, dist=None, ref=None):
    plant = ScalarPlant(1.0, b, 1.0, x0, dist)
    return assemble(plant, ControllerSpec("ClassicFC"), ref or Signal.zero(1), {"phi": phi}, t_end)


def test_assembly_refuses_outside_funnel():
    with pytest.raises(GuardUnsatisfiableAtStart):
        scalar_fc(1.0, FunnelFunction.constant(1.0))


def test_ramp_funnel_trivially_admits_any_start():
    scalar_fc(1e3, FunnelFunction.linear_ramp(0.1, 1.0))
    tr = integrate(scalar_fc(3.0, FunnelFunction.linear_ramp(0.1, 1.0)), 1e-8, 1e-8)
    assert tr.completed and np.all(tr.eps["phi"] < 1)


def test_wrong_sign_reaches_min_step():
    tr = integrate(scalar_fc(0.9, FunnelFunction.constant(1.0), b=-1.0), 1e-9, 1e-9)
    assert tr.termination == MIN_STEP and tr.t_fail is not None


def test_steep_funnel_guard_rejections_recover():
    prob = scalar_fc(0.9, FunnelFunction.exp_decay(1.0, 200.0, 0.01), dist={"kind": "sine", "amp": 2.0, "freq": 5.0},
                     ref=Signal.sine([0.5], [3.0]))
    tr = integrate(prob, 1e-4, 1e-4)
    assert tr.stats["rejected_guard"] > 0
    assert tr.termination == COMPLETED
    assert np.all(tr.eps["phi"] < 1.0)


def test_guard_never_evaluated_outside():
    calls = {"outside": 0}
    prob = scalar_fc(0.9, FunnelFunction.exp_decay(1.0, 200.0, 0.01), dist={"kind": "sine", "amp": 2.0, "freq": 5.0},
                     ref=Signal.sine([0.5], [3.0]))
    inner = prob.evaluate
    phi = FunnelFunction.exp_decay(1.0, 200.0, 0.01)

    def spy(t, x):
        out = inner(t, x)
        if phi(t) * abs(x[0] - 0.5 * math.sin(3 * t)) >= 1.0:
            calls["outside"] += 1
        return out
    prob.evaluate = spy
    integrate(prob, 1e-4, 1e-4)
    assert calls["outside"] == 0


def test_robot_layout():
    prob = get("robot_fc").problem()
    assert prob.n == 4 and prob.layout["plant"] == slice(0, 4)
    assert prob.layout["controller"] == slice(4, 4)


def test_high_gain_conservation():
    tr, rep = get("high_gain").run(rtol=1e-9, atol=1e-9)
    assert tr.completed and rep.drifts["conservation"] <= 1e-6


def test_nussbaum_identity():
    for name in ("nussbaum_pos", "nussbaum_neg"):
        _, rep = get(name).run()
        assert rep.drifts["nussbaum_identity"] <= 1e-5


def test_lambda_gain_monotone():
    _, rep = get("lambda_tracker").run()
    assert rep.drifts["gain_min_increment"] >= -1e-12


def test_verify_invariants_reports_errors():
    tr = integrate(linear_problem([[-1.0]], [1.0], 1.0))
    rep = verify_invariants(tr, [("boom", lambda tr: 1 / 0), ("flag", lambda tr: True), ("d", lambda tr: 0.5)])
    assert rep.checks["boom"].startswith("error")
    assert rep.checks["flag"] is True and rep.drifts["d"] == 0.5


def test_csv_layout_and_precision():
    tr, _ = get("saturated").run(t_end=1.0)
    text = trajectory_csv(tr)
    lines = text.splitlines()
    assert lines[0] == "t,y_1,u_1,e_1,psi_1,x,k"
    row = [float(v) for v in lines[5].split(",")]
    assert row[0] == tr.t[4] and row[1] == tr.y[4, 0] and row[-1] == tr.gains["k"][4]


def test_delay_history_resolution():
    cfg = get("delay_funnel").to_config()
    cfg["sim"].update(rtol=1e-11, atol=1e-11)
    cfg["sim"]["max_step"] = 0.02
    tr1, _ = run_config(cfg)
    cfg["sim"]["max_step"] = 0.01
    tr2, _ = run_config(cfg)
    for t in np.linspace(0.5, 9.5, 10):
        assert abs(tr1.interpolate(t)[0] - tr2.interpolate(t)[0]) < 1e-6


def test_lsoda_backend_agrees_with_rk45():
    cfg = get("delay_funnel").to_config()
    cfg["system"] = {"kind": "scalar", "a": 1.0, "b": 1.0, "c": 1.0, "x0": 0.2}
    cfg["sim"].update(rtol=1e-10, atol=1e-10)
    tr1, _ = run_config(cfg)
    cfg["sim"]["method"] = "lsoda"
    tr2, _ = run_config(cfg)
    assert tr2.completed
    for t in (1.0, 5.0, 9.0):
        assert tr1.interpolate(t)[0] == pytest.approx(tr2.interpolate(t)[0], abs=1e-6)


def test_eps_sup_refines_sampled_max():
    cfg = get("double_integrator_precomp").to_config()
    sups = []
    for ms in (None, 0.01):
        cfg["sim"]["max_step"] = ms
        tr, rep = run_config(cfg)
        assert rep.eps_observed["output"] >= float(np.max(tr.eps["output"]))
        sups.append(rep.eps_observed["output"])
    assert abs(sups[0] - sups[1]) < 1e-6

"""Acceptance suite: one marked group per criterion; the terminal summary prints PASS/FAIL per criterion."""

import math
import time

import numpy as np
import pytest

from funnelctl.controllers import (Alpha, ControllerSpec, InfeasibleConfigError, NFun, fc_output, filter_fc,
                                   precomp_design, rho_r, saturate, validate_khat)
from funnelctl.dae import DaeController, DaeNormalForm, assemble_dae_closed_loop
from funnelctl.funnel import FunnelFunction
from funnelctl.lti import byrnes_isidori, pencil_minimum_phase, random_lti, transfer_eval, zero_dynamics
from funnelctl.operators import DistributedDelay, History, InternalDynamicsLTI, PointDelay, Relay, apply, \
    np1_linear_check
from funnelctl.plants import Signal, build_plant
from funnelctl.scenarios import DAE_SYNTHETIC, get, run_config, saturated_feasibility
from funnelctl.sim import assemble, integrate

crit = pytest.mark.criterion


def timed_run(name, **kw):
    t0 = time.perf_counter()
    tr, rep = get(name).run(**kw)
    return tr, rep, time.perf_counter() - t0


# 1 ---------------------------------------------------------------------------
@crit(1, "scalar disturbance prototype matches the closed form")
def test_c1_scalar_disturbance():
    tr, rep, wall = timed_run("scalar_disturbance", rtol=1e-9, atol=1e-9)
    assert tr.completed and tr.t[-1] == 50.0
    x_err = np.max(np.abs(tr.x[:, 0] - (1 + tr.t) ** (-1 / 3)))
    k_err = np.max(np.abs(tr.x[:, 1] - 3 * ((1 + tr.t) ** (1 / 3) - 1)))
    print(f"x_err={x_err:.3g} k_err={k_err:.3g} wall={wall:.3f}s")
    assert x_err <= 1e-5 and k_err <= 1e-5
    assert wall < 1.0


# 2 ---------------------------------------------------------------------------
@crit(2, "high-gain stabilizer conserves y^2 + k^2")
def test_c2_high_gain_conservation():
    cfg = get("high_gain").config
    s = cfg["system"]
    assert (s["a"], s["b"] * s["c"], s["x0"], cfg["controller"]["params"]["k0"]) == (0.0, 1.0, 1.0, 0.0)
    tr, rep, _ = timed_run("high_gain", rtol=1e-9, atol=1e-9)
    drift = np.max(np.abs(tr.y[:, 0] ** 2 + tr.x[:, 1] ** 2 - 1.0))
    print(f"drift={drift:.3g}")
    assert tr.completed and drift <= 1e-6


# 3 ---------------------------------------------------------------------------
@crit(3, "Nussbaum identity, convergence for both control directions")
@pytest.mark.parametrize("name,cb", [("nussbaum_pos", 1.0), ("nussbaum_neg", -1.0)])
def test_c3_nussbaum(name, cb):
    cfg = get(name).config
    assert cfg["system"]["b"] * cfg["system"]["c"] == cb
    tr, rep, _ = timed_run(name)
    a, y0 = cfg["system"]["a"], cfg["system"]["x0"]
    k = tr.x[:, 1]
    s2 = lambda s: s * s * np.sin(s) + 2 * s * np.cos(s) - 2 * np.sin(s)  # antiderivative of k^2 cos k
    resid = np.max(np.abs(0.5 * (tr.y[:, 0] ** 2 - y0 ** 2) - a * k - cb * (s2(k) - s2(0.0))))
    k_half = tr.interpolate(25.0)[1]
    print(f"resid={resid:.3g} y50={tr.y[-1, 0]:.3g} dk={k[-1] - k_half:.3g}")
    assert tr.completed and tr.t[-1] == 50.0
    assert resid <= 1e-5
    assert abs(tr.y[-1, 0]) < 1e-3
    assert k[-1] - k_half < 1e-3


# 4 ---------------------------------------------------------------------------
@crit(4, "lambda-tracking: tail inside the tube, monotone bounded gain")
def test_c4_lambda_tracking():
    cfg = get("lambda_tracker").config
    lam = cfg["controller"]["params"]["lam"]
    assert cfg["system"]["disturbance"]["amp"] > 0
    tr, rep, _ = timed_run("lambda_tracker")
    T = tr.t[-1]
    tail = tr.t >= 0.9 * T
    dist = np.maximum(np.abs(tr.e[:, 0]) - lam, 0.0)
    k = tr.gains["k"]
    k_half = tr.interpolate(T / 2)[1]
    print(f"tail_dist={dist[tail].max():.3g} min_dk={np.min(np.diff(k)):.3g} k_end={k[-1]:.6g}")
    assert tr.completed
    assert np.max(dist[tail]) < 1e-3
    assert np.min(np.diff(k)) >= 0.0
    assert math.isfinite(k[-1]) and k[-1] - k_half < 1e-3


# 5 ---------------------------------------------------------------------------
@crit(5, "robot manipulator: both controllers inside the funnel, tolerance robust, fast")
@pytest.mark.parametrize("name", ["robot_fc", "robot_nonbackstep"])
def test_c5_robot(name):
    sc = get(name)
    s = sc.config["sim"]
    tr, rep, wall = timed_run(name)
    tr2, rep2, wall2 = timed_run(name, rtol=s["rtol"] / 2, atol=s["atol"] / 2)
    d = abs(rep.eps_observed["phi"] - rep2.eps_observed["phi"])
    print(f"eps={rep.eps_observed['phi']:.6f} halving_delta={d:.3g} wall={wall:.2f}/{wall2:.2f}s "
          f"u_sup={rep.input_sup:.4g}")
    assert tr.completed and tr.t[-1] == 10.0
    assert np.all(tr.eps["phi"] <= 0.99) and rep.eps_observed["phi"] <= 0.99
    assert np.all(np.isfinite(tr.u)) and math.isfinite(rep.input_sup)
    assert d <= 1e-3
    assert wall < 10.0 and wall2 < 10.0


# 6 ---------------------------------------------------------------------------
def _direct_G(sys, s):
    return sys.C @ np.linalg.solve(s * np.eye(sys.n) - sys.A, sys.B)


@crit(6, "Byrnes-Isidori form: transfer function and zero-dynamics verdicts")
def test_c6_byrnes_isidori():
    rng = np.random.default_rng(20261018)
    worst, verdicts = 0.0, 0
    for i in range(100):
        m = int(rng.integers(1, 3))
        r = int(rng.integers(1, 4))
        n = int(rng.integers(r * m, 9))
        sys = random_lti(rng, n, m, r, stable_zero_dynamics=bool(i % 3))
        bif = byrnes_isidori(sys)
        assert bif.r == r
        pts = rng.uniform(-4, 4, 20) + 1j * rng.uniform(-4, 4, 20)
        for s in pts:
            G = _direct_G(sys, s)
            rel = np.linalg.norm(transfer_eval(bif, s) - G) / np.linalg.norm(G)
            worst = max(worst, rel)
        if n <= 6:
            verdicts += 1
            assert zero_dynamics(bif).asymptotically_stable == pencil_minimum_phase(sys)
    print(f"worst_rel={worst:.3g} verdicts_checked={verdicts}")
    assert worst <= 1e-8 and verdicts > 0


# 7 ---------------------------------------------------------------------------
def _companion(q):
    r = len(q)
    Q = np.zeros((r, r))
    Q[:, 0] = -np.asarray(q)
    for i in range(r - 1):
        Q[i, i + 1] = 1.0
    return Q


@crit(7, "funnel pre-compensator design and double-integrator cascade")
def test_c7_precomp_designs():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        r = int(rng.integers(2, 5))
        roots = -rng.uniform(0.3, 3.0, r)
        q = np.poly(roots)[1:]
        M = rng.normal(size=(r, r))
        R = M @ M.T + 0.1 * np.eye(r)
        d = precomp_design(q, R)
        Q = _companion(q)
        res = np.linalg.norm(Q.T @ d.P + d.P @ Q + R)
        worst = max(worst, res)
        assert d.p[0] == 1.0
        np.linalg.cholesky(d.P)
    print(f"worst_residual={worst:.3g}")
    assert worst <= 1e-10


@crit(7, "funnel pre-compensator design and double-integrator cascade")
def test_c7_precomp_cascade_run():
    tr, rep, _ = timed_run("double_integrator_precomp")
    print(f"stage={rep.eps_observed['stage_1']:.6f} output={rep.eps_observed['output']:.6f}")
    assert tr.completed
    assert np.all(tr.eps["stage_1"] < 1) and rep.eps_observed["stage_1"] < 1
    assert tr.eps["output"][-1] < 1 and rep.eps_observed["output"] < 1


# 8 ---------------------------------------------------------------------------
@crit(8, "filter controller: r=1 degeneration and double-integrator run")
def test_c8_filter_degeneration():
    rng = np.random.default_rng(8)
    worst = 0.0
    alphas = [Alpha(), Alpha("PowerReciprocal", 2.0)]
    for i in range(1000):
        m = int(rng.integers(1, 4))
        phi = float(rng.uniform(0.1, 5.0))
        e = rng.normal(size=m)
        e *= rng.uniform(0, 0.999) / (phi * np.linalg.norm(e))
        a = alphas[i % 2]
        u_f, _ = filter_fc(phi, e, np.zeros((0, m)), 1, alpha=a)
        u_d = fc_output(phi, e[None, :], a, NFun())
        worst = max(worst, float(np.max(np.abs(u_f - u_d))))
    print(f"worst={worst:.3g}")
    assert worst <= 1e-12


@crit(8, "filter controller: r=1 degeneration and double-integrator run")
def test_c8_filter_scenario():
    tr, rep, _ = timed_run("double_integrator_filter")
    assert tr.completed and np.all(tr.eps["phi"] < 1) and rep.eps_observed["phi"] < 1


# 9 ---------------------------------------------------------------------------
@crit(9, "input-constrained funnel controller")
def test_c9_icfc_saturated():
    cfg = get("icfc").config
    p = cfg["controller"]["params"]
    tr, rep, _ = timed_run("icfc")
    floor = p["beta_d"] / p["alpha_d"]
    assert tr.completed
    assert np.all(np.linalg.norm(tr.u, axis=1) <= p["u_hat"])
    assert np.min(tr.psi[:, 0]) >= floor - 1e-9
    sat = tr.extra["saturated"] > 0
    assert sat.any(), "the saturated scenario must actually saturate"
    last = int(np.flatnonzero(sat)[-1]) + 1
    t, z = tr.t[last:], tr.psi[last:, 0] - floor
    keep = z > 1e-6 * z[0]
    rate = -np.polyfit(t[keep] - t[keep][0], np.log(z[keep]), 1)[0]
    print(f"rate={rate:.6f} alpha_d={p['alpha_d']} events={rep.drifts['saturation_events']}")
    assert abs(rate - p["alpha_d"]) <= 0.1 * p["alpha_d"]


@crit(9, "input-constrained funnel controller")
def test_c9_icfc_unsaturated_matches_funnel_controller():
    cfg = get("icfc_unsaturated").to_config()
    p = cfg["controller"]["params"]
    rtol = cfg["sim"]["rtol"]
    tr, _ = run_config(cfg)
    a_d, b_d, psi0 = p["alpha_d"], p["beta_d"], p["psi0"]
    phi = FunnelFunction.exp_decay(psi0 - b_d / a_d, a_d, b_d / a_d)
    plant = build_plant(cfg["system"])
    prob = assemble(plant, ControllerSpec("NonBackstepFC"), Signal.from_dict(cfg["reference"]), {"phi_0": phi},
                    cfg["sim"]["t_end"])
    ref = integrate(prob, rtol, cfg["sim"]["atol"])
    assert tr.completed and ref.completed
    gap = max(abs(tr.interpolate(t)[0] - ref.interpolate(t)[0]) for t in np.linspace(0, tr.t[-1], 61))
    print(f"gap={gap:.3g}")
    assert gap <= 10 * rtol


# 10 --------------------------------------------------------------------------
@crit(10, "saturated funnel controller: feasibility, invariance, no saturation under strong start")
def test_c10_saturated():
    cfg = get("saturated").config
    assert saturated_feasibility(cfg)["feasible"]
    tr, rep, _ = timed_run("saturated")
    assert tr.completed and np.all(tr.eps["phi"] < 1) and rep.eps_observed["phi"] < 1
    assert rep.drifts["saturation_events"] >= 1


@crit(10, "saturated funnel controller: feasibility, invariance, no saturation under strong start")
def test_c10_strong_initial_condition():
    cfg = get("saturated_strong_ic").config
    u_hat = cfg["controller"]["params"]["u_hat"]
    phi = FunnelFunction.from_dict(cfg["funnel"]["phi"])
    e0 = cfg["system"]["x0"] - Signal.from_dict(cfg["reference"])(0.0)[0]
    assert phi(0.0) * abs(e0) < u_hat / (1 + u_hat)
    assert saturated_feasibility(cfg)["feasible"]
    tr, rep, _ = timed_run("saturated_strong_ic")
    assert tr.completed and np.all(tr.eps["phi"] < 1)
    assert not np.any(tr.extra["saturated"]) and np.all(np.abs(tr.u) <= u_hat)


# 11 --------------------------------------------------------------------------
@crit(11, "DAE funnel controller: both funnels, algebraic residual, gain rule")
def test_c11_dae():
    tr, rep, _ = timed_run("dae_synthetic")
    print(f"I={rep.eps_observed['I']:.4f} II={rep.eps_observed['II']:.4f} "
          f"resid={np.max(tr.extra['residual']):.3g}")
    assert tr.completed
    assert np.all(tr.eps["I"] < 1) and np.all(tr.eps["II"] < 1)
    assert rep.eps_observed["I"] < 1 and rep.eps_observed["II"] < 1
    assert np.max(tr.extra["residual"]) <= 1e-8


@crit(11, "DAE funnel controller: both funnels, algebraic residual, gain rule")
def test_c11_khat_rule():
    d = {k: v for k, v in DAE_SYNTHETIC.items() if k not in ("kind", "yI0", "x30")}
    nf = DaeNormalForm.from_dict(d)
    bound = np.linalg.norm(nf.P2, 2)
    f = FunnelFunction.exp_decay(2.0, 1.0, 0.5)
    for khat in (bound, 0.999 * bound, 0.0):
        with pytest.raises(InfeasibleConfigError):
            validate_khat(khat, nf.P2)
        with pytest.raises(InfeasibleConfigError):
            assemble_dae_closed_loop(nf, DaeController(khat, f, f), Signal.zero(2), 1.0)
    validate_khat(1.1 * bound, nf.P2)


# 12 --------------------------------------------------------------------------
@crit(12, "property suites")
def test_c12_rho_range():
    rng = np.random.default_rng(12)
    for r in range(1, 5):
        for m in range(1, 4):
            hits = 0
            for _ in range(10_000):
                eta = rng.uniform(-1, 1, size=(r, m)) * rng.uniform(0, 1)
                res = rho_r(eta)
                if res.ok:
                    hits += 1
                    assert np.linalg.norm(res.w) < 1.0
            assert hits > 100, (r, m, hits)


@crit(12, "property suites")
def test_c12_saturate():
    rng = np.random.default_rng(13)
    for _ in range(2000):
        v = rng.normal(size=int(rng.integers(1, 5))) * rng.uniform(0, 10)
        u_hat = float(rng.uniform(0.01, 5))
        s = saturate(v, u_hat)
        assert np.linalg.norm(s) <= u_hat * (1 + 1e-15)
        assert np.allclose(saturate(s, u_hat), s, rtol=1e-15, atol=0)


@crit(12, "property suites")
def test_c12_np1():
    rng = np.random.default_rng(14)
    z = np.zeros((3, 3))
    for _ in range(100):
        n = int(rng.integers(1, 4))
        G = rng.normal(size=(n, n))
        H = 0.5 * (G + G.T)
        minors = [np.linalg.det(H[:k, :k]) for k in range(1, n + 1)]
        pos = all(x > 0 for x in minors)
        neg = all((-1) ** (k + 1) * x > 0 for k, x in enumerate(minors))
        assert np1_linear_check(z[:n, :n], z[:n, :n], G) == (pos or neg)


@crit(12, "property suites")
def test_c12_causality():
    t_cut = 2.0

    def sig(bump):
        f = lambda s: np.array([math.cos(s) + (bump * (s - t_cut) ** 4 if s > t_cut else 0.0)])
        df = lambda s: np.array([-math.sin(s) + (4 * bump * (s - t_cut) ** 3 if s > t_cut else 0.0)])
        return History.from_function(f, df, 4.0, n=2001, memory=1.0)

    h1, h2 = sig(0.0), sig(3.0)
    ops = [PointDelay([lambda t, x: x ** 3], [0.4]), DistributedDelay(lambda s, x: np.exp(s) * x, 1.0),
           InternalDynamicsLTI([[-1.0, 0.5], [0.0, -2.0]], [[1.0], [1.0]], [[1.0, -1.0]]), Relay(-0.3, 0.3)]
    for op in ops:
        for t in np.linspace(0.0, t_cut, 9):
            np.testing.assert_allclose(apply(op, h1, t), apply(op, h2, t), atol=1e-9)


@crit(12, "property suites")
@pytest.mark.parametrize("f,t", [(FunnelFunction.exp_decay(4, 2, 0.1), 0.7),
                                 (FunnelFunction.linear_ramp(0.2, 3.0), 1.1),
                                 (FunnelFunction.custom("2 + sin(3*t)*exp(-t)", bounded=True,
                                                        liminf_positive=True), 0.9)])
def test_c12_funnel_fd(f, t):
    for order in (1, 2) if f.max_derivative_order >= 2 else (1,):
        g = (lambda s: f.value(s)) if order == 1 else (lambda s: f.derivative(s, 1))
        d = f.derivative(t, order)
        e1 = abs((g(t + 1e-2) - g(t - 1e-2)) / 2e-2 - d)
        e2 = abs((g(t + 5e-3) - g(t - 5e-3)) / 1e-2 - d)
        if e1 < 1e-12:  # exact (piecewise linear) within rounding
            continue
        assert 3.5 < e1 / e2 < 4.5


# 13 --------------------------------------------------------------------------
@crit(13, "heat equation modal truncation: funnel performance independent of n_modes")
def test_c13_heat():
    eps = {}
    for n in (3, 10, 30):
        tr, rep, _ = timed_run(f"heat_modal_{n}")
        assert tr.completed
        eps[n] = rep.eps_observed["phi"]
    print(eps)
    assert max(eps.values()) - min(eps.values()) <= 0.05
    assert max(eps.values()) < 1

import math
import warnings

import numpy as np
import pytest
import scipy.integrate as sint
import scipy.linalg as sla

from funnelctl.operators import (Composite, DistributedDelay, History, InputNonlinearity,
                                 InsufficientHistoryError, InternalDynamicsLTI, Nonlinearity, OperatorError,
                                 PointDelay, Relay, UnboundedOperatorWarning, apply, bibo_probe, deadzone,
                                 deadzone_eval, deadzone_inverse, np1_linear_check)


def const_history(c, t_end=5.0, memory=1.0):
    return History.from_function(lambda t: np.array([c]), lambda t: np.array([0.0]), t_end, memory=memory)


def test_point_delay_identity_constant():
    op = PointDelay([lambda t, x: x], [1.0])
    h = const_history(1.0)
    for t in (0.0, 0.5, 3.0):
        assert apply(op, h, t)[0] == pytest.approx(1.0)


def test_point_delay_shifts_signal():
    op = PointDelay([lambda t, x: x], [0.7])
    h = History.from_function(np.sin, np.cos, 6.0, n=4001, memory=0.7)
    for t in (1.0, 2.5, 5.9):
        assert apply(op, h, t)[0] == pytest.approx(math.sin(t - 0.7), abs=1e-9)


def test_internal_dynamics_step_response():
    op = InternalDynamicsLTI([[-1.0]], [[1.0]], [[1.0]])
    h = const_history(1.0, memory=0.0)
    for t in (0.5, 1.0, 3.0):
        assert apply(op, h, t)[0] == pytest.approx(1 - math.exp(-t), abs=1e-8)


def test_distributed_delay_constant_two():
    op = DistributedDelay(lambda s, x: x, 1.0)
    assert apply(op, const_history(2.0), 2.0)[0] == pytest.approx(2.0, abs=1e-12)


def test_distributed_delay_matches_quad():
    op = DistributedDelay(lambda s, x: np.exp(s) * x ** 2, 1.5, order=6, panels=10)
    h = History.from_function(np.sin, np.cos, 6.0, n=6001, memory=1.5)
    t = 4.2
    ref, _ = sint.quad(lambda s: math.exp(s) * math.sin(t + s) ** 2, -1.5, 0.0, epsabs=1e-13)
    assert apply(op, h, t)[0] == pytest.approx(ref, abs=1e-9)


def test_insufficient_history():
    h = History(1)
    h.append(0.0, [0.0], [0.0])
    h.append(1.0, [1.0], [1.0])
    with pytest.raises(InsufficientHistoryError):
        h(2.0)
    with pytest.raises(InsufficientHistoryError):
        h(-0.5)


def test_history_must_increase():
    h = History(1)
    h.append(0.0, [0.0], [0.0])
    with pytest.raises(OperatorError):
        h.append(0.0, [1.0], [0.0])


def test_hermite_exact_on_cubics():
    f = lambda t: np.array([t ** 3 - 2 * t])
    df = lambda t: np.array([3 * t ** 2 - 2])
    h = History.from_function(f, df, 2.0, n=5)
    for t in (0.1, 0.77, 1.93):
        assert h(t)[0] == pytest.approx(f(t)[0], abs=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_internal_dynamics_convolution_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    M = rng.normal(size=(n, n))
    Q = M - (np.max(np.linalg.eigvals(M).real) + 0.5) * np.eye(n)
    P = rng.normal(size=(n, 1))
    S = rng.normal(size=(1, n))
    op = InternalDynamicsLTI(Q, P, S)
    u = lambda s: math.sin(2 * s) + 0.5
    h = History.from_function(lambda s: np.array([u(s)]), lambda s: np.array([2 * math.cos(2 * s)]), 3.0, n=6001)
    t = 2.5
    conv, _ = sint.quad_vec(lambda s: sla.expm(Q * (t - s)) @ P[:, 0] * u(s), 0.0, t, epsabs=1e-12, epsrel=1e-12)
    assert apply(op, h, t)[0] == pytest.approx(float((S @ conv)[0]), abs=1e-6)


def splice(t_cut, bump):
    f = lambda s: np.array([math.cos(s) + (bump * (s - t_cut) ** 4 if s > t_cut else 0.0)])
    df = lambda s: np.array([-math.sin(s) + (4 * bump * (s - t_cut) ** 3 if s > t_cut else 0.0)])
    return f, df


@pytest.mark.parametrize("make", [
    lambda: PointDelay([lambda t, x: x ** 2, lambda t, x: np.sin(x)], [0.3, 1.0]),
    lambda: DistributedDelay(lambda s, x: x, 1.0),
    lambda: InternalDynamicsLTI([[-2.0]], [[1.0]], [[1.0]]),
    lambda: Relay(-0.5, 0.5),
])
def test_causality_prefix_perturbation(make):
    op = make()
    t_cut = 2.0
    h1 = History.from_function(*splice(t_cut, 0.0), 4.0, n=4001, memory=1.0)
    h2 = History.from_function(*splice(t_cut, 5.0), 4.0, n=4001, memory=1.0)
    for t in (0.5, 1.2, 1.99):
        np.testing.assert_allclose(apply(op, h1, t), apply(op, h2, t), atol=1e-8)
    assert not np.allclose(apply(op, h1, 3.5), apply(op, h2, 3.5)) or isinstance(op, Relay)


def test_lipschitz_probe_point_delay():
    op = PointDelay([lambda t, x: np.sin(x)], [0.5])
    base = History.from_function(np.cos, lambda s: -np.sin(s), 3.0, n=3001, memory=0.5)
    ratios = []
    for delta in (1e-2, 1e-3, 1e-4):
        pert = History.from_function(lambda s: np.cos(s) + delta, lambda s: -np.sin(s), 3.0, n=3001, memory=0.5)
        diff = max(abs(apply(op, base, t)[0] - apply(op, pert, t)[0]) for t in np.linspace(0.5, 3.0, 11))
        ratios.append(diff / delta)
    assert max(ratios) <= 1.0 + 1e-6
    assert ratios[-1] == pytest.approx(ratios[-2], rel=1e-2)


def test_relay_hysteresis():
    op = Relay(-0.5, 0.5)
    h = History.from_function(np.sin, np.cos, 7.0, n=3001)
    assert apply(op, h, 0.2)[0] == -1.0        # below the upper threshold: initial state held
    assert apply(op, h, 1.0)[0] == 1.0
    assert apply(op, h, math.pi)[0] == 1.0     # sin = 0 lies inside the band: holds +1
    assert apply(op, h, 4.0)[0] == -1.0


def test_composite_stacks():
    op = Composite([PointDelay([lambda t, x: x], [0.0]), PointDelay([lambda t, x: 2 * x], [0.0])])
    np.testing.assert_allclose(apply(op, const_history(1.5), 1.0), [1.5, 3.0])


def test_bibo_scalar():
    op = InternalDynamicsLTI([[-1.0]], [[1.0]], [[1.0]])
    out = bibo_probe(op, 1.0, 5, 20.0)
    assert out["analytic_bound"] == pytest.approx(1.0, rel=1e-8)
    assert out["c2_estimate"] <= 1.0 + 1e-8


def test_bibo_two_dim():
    op = InternalDynamicsLTI(-2 * np.eye(2), np.eye(2), np.eye(2))
    out = bibo_probe(op, 3.0, 6, 20.0)
    assert out["analytic_bound"] == pytest.approx(1.5, rel=1e-8)
    assert out["c2_estimate"] <= 1.5 + 1e-6


def test_bibo_delay_identity():
    out = bibo_probe(PointDelay([lambda t, x: x], [1.0]), 1.0, 3, 5.0)
    assert out["c2_estimate"] == pytest.approx(1.0)


def test_bibo_unbounded_warns():
    with pytest.warns(UnboundedOperatorWarning):
        bibo_probe(InternalDynamicsLTI([[0.5]], [[1.0]], [[1.0]]), 1.0, 1, 2.0)


def test_np1_examples():
    z = np.zeros((2, 2))
    assert np1_linear_check(z, z, np.eye(2))
    assert not np1_linear_check(z, z, np.array([[0.0, 1.0], [-1.0, 0.0]]))
    G = np.array([[1.0, 3.0], [0.0, 1.0]])
    np.testing.assert_allclose(np.linalg.eigvalsh(0.5 * (G + G.T)), [-0.5, 2.5])
    assert not np1_linear_check(z, z, G)


def test_affine_nonlinearity_exact_gamma():
    G = np.array([[2.0, 1.0], [0.0, 3.0]])
    f = Nonlinearity.affine(np.ones((2, 1)), np.ones((2, 2)), G)
    d, z, u = np.array([0.3]), np.array([1.0, -2.0]), np.array([0.7, -0.1])
    assert np.array_equal(f.eval(d, z, u) - f.eval(d, z, np.zeros(2)), G @ u)
    assert f.control_direction == "Positive"
    assert Nonlinearity.affine(np.ones((1, 1)), np.ones((1, 1)), [[-1.0]]).control_direction == "Negative"


@pytest.mark.parametrize("v,expected", [(0.5, 0.0), (2.0, 1.0), (-3.0, -2.0)])
def test_deadzone(v, expected):
    dz = deadzone(-1.0, 1.0, D_l=lambda x: x + 1, D_r=lambda x: x - 1)
    assert deadzone_eval(dz, v) == expected


def test_deadzone_inverse_roundtrip():
    dz = deadzone(-0.7, 1.3)
    for v in np.concatenate([np.linspace(-5, -0.71, 9), np.linspace(1.31, 5, 9)]):
        assert deadzone_inverse(dz, deadzone_eval(dz, v)) == pytest.approx(v)


def test_input_nonlinearity_rejections():
    with pytest.raises(OperatorError):
        InputNonlinearity("Saturating")
    with pytest.raises(OperatorError):
        deadzone(0.5, 1.0)
    assert InputNonlinearity("SignedSquare", {"a": 2.0})(-3.0) == -18.0

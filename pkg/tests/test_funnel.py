import math

import numpy as np
import pytest
import sympy as sp

from funnelctl.funnel import (ClassUndecidableError, FunnelFunction, UnsupportedDerivativeError,
                              check_class, check_phi2_pair, eval_phi)


def test_linear_ramp_value():
    assert eval_phi(FunnelFunction.linear_ramp(0.1, 2.0), 1.0) == pytest.approx(5.0)


def test_exp_decay_at_zero():
    assert eval_phi(FunnelFunction.exp_decay(4, 2, 0.1), 0.0) == pytest.approx(1 / 4.1, rel=1e-15)


def test_constant_is_reciprocal():
    assert eval_phi(FunnelFunction.constant(4.0), 1.0) == 0.25


def test_constant_derivative_zero():
    assert eval_phi(FunnelFunction.constant(2.0), 3.7, 1) == 0.0


def test_ramp_second_derivative_unsupported():
    with pytest.raises(UnsupportedDerivativeError):
        eval_phi(FunnelFunction.linear_ramp(0.1, 2.0), 1.0, 2)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        eval_phi(FunnelFunction.constant(1.0), -1.0)


def test_ramp_flags_infinite_start():
    assert FunnelFunction.linear_ramp(0.5, 1.0).infinite_at_start
    assert not FunnelFunction.exp_decay(1, 1, 1).infinite_at_start


@pytest.mark.parametrize("order", range(0, 6))
def test_exp_decay_derivatives_match_symbolic(order):
    t = sp.symbols("t")
    expr = 1 / (4 * sp.exp(-2 * t) + sp.Rational(1, 10))
    f = FunnelFunction.exp_decay(4, 2, 0.1)
    for tv in (0.0, 0.3, 1.7):
        ref = float(sp.diff(expr, t, order).subs(t, tv))
        assert eval_phi(f, tv, order) == pytest.approx(ref, rel=1e-11, abs=1e-12)


def test_custom_derivatives_match_symbolic():
    t = sp.symbols("t")
    f = FunnelFunction.custom("1 + t**2*exp(-t) + sin(t)", bounded=True, liminf_positive=True)
    expr = 1 + t**2 * sp.exp(-t) + sp.sin(t)
    for order in range(4):
        ref = float(sp.diff(expr, t, order).subs(t, 0.9))
        assert eval_phi(f, 0.9, order) == pytest.approx(ref, rel=1e-11)


def test_vectorised_values_agree():
    f = FunnelFunction.exp_decay(1.0, 0.5, 0.3)
    ts = np.linspace(0, 5, 17)
    np.testing.assert_allclose(f.values(ts), [f.value(t) for t in ts], rtol=1e-15)


def test_check_class_t_squared():
    f = FunnelFunction.custom("t**2", bounded=False, liminf_positive=True)
    assert check_class(f, 1, 20.0).in_Phi


def test_check_class_constant():
    rep = check_class(FunnelFunction.constant(2.0), [1, 2, 3], 10.0)
    assert rep.in_Phi and all(rep.in_Phi_r.values())


def test_check_class_rejects_gaussian_growth():
    f = FunnelFunction.custom("exp(t**2)", bounded=False, liminf_positive=True)
    assert not check_class(f, 1, 10.0).in_Phi


def test_check_class_custom_needs_declarations():
    with pytest.raises(ClassUndecidableError):
        check_class(FunnelFunction.custom("1 + t"), 1, 5.0)


def test_phi2_pair_constant():
    out = check_phi2_pair(FunnelFunction.constant(2.0), FunnelFunction.constant(2.0), 5.0)
    assert out["ok"] and out["delta"] == pytest.approx(2.0)  # phi = 1/2, so 1/phi1 = 2


def test_phi2_pair_robot_funnel_is_not_in_class():
    # 1/phi1 + d/dt(1/phi0) = 0.1 + 4e^{-2t} - 8e^{-2t}; infimum at t = 0
    f = FunnelFunction.exp_decay(4, 2, 0.1)
    out = check_phi2_pair(f, f, 5.0)
    assert not out["ok"]
    assert out["delta"] == pytest.approx(-3.9, abs=1e-12)


def test_roundtrip_dict():
    for f in (FunnelFunction.constant(3.0), FunnelFunction.exp_decay(1, 2, 3),
              FunnelFunction.linear_ramp(0.2, 1.0)):
        g = FunnelFunction.from_dict(f.to_dict())
        assert g.value(0.7) == f.value(0.7)


@pytest.mark.parametrize("f", [FunnelFunction.constant(2.0), FunnelFunction.exp_decay(1.5, 0.7, 0.2),
                               FunnelFunction.linear_ramp(0.5, 3.0)])
def test_scaled(f):
    g = f.scaled(2.5)
    for t in (0.0, 0.4, 5.0):
        assert g.value(t) == pytest.approx(2.5 * f.value(t), rel=1e-14)


def test_psi_bounds_exp_decay():
    psi_sup, dpsi_sup = FunnelFunction.exp_decay(4, 2, 0.1).psi_bounds()
    assert psi_sup == pytest.approx(4.1) and dpsi_sup == pytest.approx(8.0)
    assert math.isinf(FunnelFunction.linear_ramp(1, 1).psi_bounds()[0])

"""Curated closed-loop experiments.

Every scenario is a plain config dict (the same document the CLI reads) plus a
set of named checks evaluated on the resulting trajectory.  ``run_config``
turns any config into ``(Trajectory, RunReport)``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np

from . import controllers as ctl
from .controllers import ControllerSpec, InfeasibleConfigError
from .dae import DaeController, DaeNormalForm, assemble_dae_closed_loop
from .funnel import FunnelFunction
from .plants import Signal, build_plant
from .sim import ClosedLoopProblem, RunReport, Trajectory, assemble, integrate, verify_invariants

DEFAULT_SIM = {"t_end": 10.0, "rtol": 1e-9, "atol": 1e-9, "max_step": None, "seed": 0, "method": "rk45"}

Check = tuple[str, Callable[[Trajectory], Any]]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Heat equation modal truncation
# ---------------------------------------------------------------------------


def heat_modal_matrices(n_modes: int, z0="zero"):
    """Neumann heat equation on [0, 1] in the cosine basis cos(k pi xi), k < n_modes.

    The input acts uniformly in space and the output is the cos^2(pi xi)
    weighted average, so b = e_0 and c = (1/2, 0, 1/4, 0, ...).
    """
    n = int(n_modes)
    if n < 1:
        raise ConfigError("n_modes must be at least 1")
    k = np.arange(n)
    A = np.diag(-(k * math.pi) ** 2)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = np.zeros((1, n))
    C[0, 0] = 0.5
    if n > 2:
        C[0, 2] = 0.25
    if isinstance(z0, str):
        if z0 != "zero":
            raise ConfigError(f"unknown initial profile {z0!r}")
        x0 = np.zeros(n)
    else:
        x0 = np.zeros(n)
        vals = np.asarray(z0, dtype=float).reshape(-1)
        x0[:min(n, vals.size)] = vals[:n]
    return A, B, C, x0


def heat_inner_products(n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature cross-check of (b, c) for :func:`heat_modal_matrices`."""
    from scipy.integrate import quad

    b, c = np.zeros(n_modes), np.zeros(n_modes)
    for k in range(n_modes):
        norm = quad(lambda s: math.cos(k * math.pi * s) ** 2, 0, 1, limit=200)[0]
        b[k] = quad(lambda s: math.cos(k * math.pi * s), 0, 1, limit=200)[0] / norm
        c[k] = quad(lambda s: math.cos(math.pi * s) ** 2 * math.cos(k * math.pi * s), 0, 1, limit=200)[0]
    return b, c


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def _funnels(d: Mapping[str, Any]) -> dict[str, FunnelFunction]:
    return {name: FunnelFunction.from_dict(spec) for name, spec in d.items()}


def sim_settings(cfg: Mapping[str, Any], rtol=None, atol=None, t_end=None) -> dict:
    s = dict(DEFAULT_SIM)
    s.update({k: v for k, v in cfg.get("sim", {}).items() if v is not None})
    for key, val in (("rtol", rtol), ("atol", atol), ("t_end", t_end)):
        if val is not None:
            s[key] = float(val)
    return s


def build_problem(cfg: Mapping[str, Any], t_end: Optional[float] = None) -> ClosedLoopProblem:
    """Closed-loop problem for a config; raises ``InfeasibleConfigError`` on refused data."""
    sim = sim_settings(cfg, t_end=t_end)
    system = dict(cfg["system"])
    ref = Signal.from_dict(cfg.get("reference", {"kind": "zero", "m": 1}))
    funnels = _funnels(cfg.get("funnel", {}))
    c = cfg["controller"]
    params = copy.deepcopy(c.get("params", {}))
    if system.get("kind") == "dae_normal_form":
        if c["variant"] != "DaeFC":
            raise InfeasibleConfigError("normal-form DAEs take the DaeFC controller")
        init = {k: system.pop(k) for k in ("yI0", "x30") if k in system}
        nf = DaeNormalForm.from_dict(system)
        a = params.get("alpha", {"kind": "Reciprocal"})
        ctrl = DaeController(float(params["khat"]), funnels["phi_I"], funnels["phi_II"],
                             ctl.Alpha(a.get("kind", "Reciprocal"), float(a.get("beta", 1.0))),
                             ctl.NFun(params.get("N", "NegIdentity")))
        return assemble_dae_closed_loop(nf, ctrl, ref, float(sim["t_end"]), init.get("yI0"), init.get("x30"))
    plant = build_plant(system)
    spec = ControllerSpec(c["variant"], params)
    return assemble(plant, spec, ref, funnels, float(sim["t_end"]))


def run_config(cfg: Mapping[str, Any], rtol=None, atol=None, t_end=None) -> tuple[Trajectory, RunReport]:
    sim = sim_settings(cfg, rtol, atol, t_end)
    prob = build_problem(cfg, t_end=sim["t_end"])
    traj = integrate(prob, rtol=float(sim["rtol"]), atol=float(sim["atol"]), max_step=sim["max_step"],
                     method=sim.get("method", "rk45"))
    return traj, verify_invariants(traj, checks_for(cfg))


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def _funnel_inside(traj: Trajectory) -> bool:
    return all(bool(np.all(v < 1.0)) for v in traj.eps.values())


def _completed(traj: Trajectory) -> bool:
    return traj.completed


def _gain(traj: Trajectory, name: str = "k") -> np.ndarray:
    return traj.gains[name]


def _checks_scalar_disturbance(cfg) -> list[Check]:
    def ex(tr):
        return float(np.max(np.abs(tr.x[:, 0] - (1 + tr.t) ** (-1 / 3))))

    def ek(tr):
        return float(np.max(np.abs(tr.x[:, 1] - 3 * ((1 + tr.t) ** (1 / 3) - 1))))
    return [("oracle_x_err", ex), ("oracle_k_err", ek)]


def _checks_high_gain(cfg) -> list[Check]:
    s = cfg["system"]
    y0, k0 = s["c"] * s["x0"], cfg["controller"]["params"].get("k0", 0.0)

    def cons(tr):
        y = tr.y[:, 0]
        return float(np.max(np.abs(y * y + tr.x[:, 1] ** 2 - (y0 * y0 + k0 * k0))))
    return [("conservation", cons)]


def nussbaum_identity_residual(tr: Trajectory, a: float, cb: float, y0: float, k0: float) -> float:
    """max |(y^2 - y0^2)/2 - a (k - k0) - cb int_{k0}^{k} N|; exact along solutions for y' = a y + cb u."""
    y, k = tr.y[:, 0], tr.x[:, 1]
    integ = np.array([ctl.nussbaum_N_integral(k0, kk) for kk in k])
    return float(np.max(np.abs(0.5 * (y * y - y0 * y0) - a * (k - k0) - cb * integ)))


def _half_index(tr: Trajectory) -> int:
    return int(np.searchsorted(tr.t, 0.5 * tr.t[-1]))


def _checks_nussbaum(cfg) -> list[Check]:
    s = cfg["system"]
    a, cb, y0 = s["a"], s["b"] * s["c"], s["c"] * s["x0"]
    k0 = cfg["controller"]["params"].get("k0", 0.0)
    return [("nussbaum_identity", lambda tr: nussbaum_identity_residual(tr, a, cb, y0, k0)),
            ("y_final", lambda tr: float(abs(tr.y[-1, 0]))),
            ("gain_convergence", lambda tr: float(tr.x[-1, 1] - tr.x[_half_index(tr), 1]))]


def _checks_lambda(cfg) -> list[Check]:
    def tail(tr):
        i = int(np.searchsorted(tr.t, 0.9 * tr.t[-1]))
        return float(np.max(tr.extra["dist"][i:]))

    return [("dist_tail", tail),
            ("gain_min_increment", lambda tr: float(np.min(np.diff(_gain(tr))))),
            ("gain_convergence", lambda tr: float(_gain(tr)[-1] - _gain(tr)[_half_index(tr)]))]


def _checks_robot(cfg) -> list[Check]:
    return [("max_abs_error", lambda tr: float(np.max(np.abs(tr.e)))),
            ("phi_norm_e_max", lambda tr: float(np.max(tr.eps["phi"]))),
            ("input_bounded", lambda tr: bool(np.all(np.isfinite(tr.u))))]


def _checks_precomp(cfg) -> list[Check]:
    return [("stage_max", lambda tr: float(np.max(tr.eps["stage_1"]))),
            ("output_max", lambda tr: float(np.max(tr.eps["output"])))]


def _checks_icfc(cfg) -> list[Check]:
    p = cfg["controller"]["params"]
    u_hat, a_d, b_d, psi0 = p.get("u_hat", math.inf), p["alpha_d"], p["beta_d"], p["psi0"]

    def u_ok(tr):
        return bool(np.all(np.linalg.norm(tr.u, axis=1) <= u_hat))

    def psi_floor(tr):
        return float(np.min(tr.psi[:, 0]) - min(psi0, b_d / a_d))

    checks = [("input_within_bound", u_ok), ("psi_floor_margin", psi_floor),
              ("saturation_events", lambda tr: int(np.sum(np.diff(tr.extra["saturated"]) > 0)
                                                   + (tr.extra["saturated"][0] > 0)))]
    if math.isfinite(u_hat):
        checks.append(("decay_rate_rel_err", lambda tr: abs(icfc_decay_rate(tr, b_d / a_d) - a_d) / a_d))
    return checks


def icfc_decay_rate(tr: Trajectory, floor: float) -> float:
    """Log-linear fit of psi - floor after the last saturation episode."""
    sat = tr.extra["saturated"] > 0
    last = int(np.flatnonzero(sat)[-1]) + 1 if sat.any() else 0
    t, z = tr.t[last:], tr.psi[last:, 0] - floor
    keep = z > 1e-6 * max(z[0], 1e-300)
    t, z = t[keep], z[keep]
    if t.size < 3:
        raise ValueError("too few samples after the last saturation episode")
    return float(-np.polyfit(t - t[0], np.log(z), 1)[0])


def _checks_saturated(cfg) -> list[Check]:
    return [("saturation_events", lambda tr: int(np.sum(np.diff(tr.extra["saturated"]) > 0)
                                                 + (tr.extra["saturated"][0] > 0))),
            ("saturated_fraction", lambda tr: float(np.mean(tr.extra["saturated"])))]


def saturated_feasibility(cfg: Mapping[str, Any]) -> dict:
    """Evaluate the scalar feasibility inequality from declared analytic bounds."""
    s, p = cfg["system"], cfg["controller"]["params"]
    phi = FunnelFunction.from_dict(cfg["funnel"]["phi"])
    psi_sup, dpsi_sup = phi.psi_bounds()
    ref = Signal.from_dict(cfg["reference"])
    return ctl.feasibility_check(s["b"] * s["c"], p["u_hat"], s["a"], psi_sup, ref.sup(0), ref.sup(1), dpsi_sup)


def _checks_dae(cfg) -> list[Check]:
    return [("algebraic_residual", lambda tr: float(np.max(tr.extra["residual"]))),
            ("funnel_I", lambda tr: float(np.max(tr.eps["I"]))),
            ("funnel_II", lambda tr: float(np.max(tr.eps["II"])))]


def _checks_ppc(cfg) -> list[Check]:
    return [(f"stage_{i + 1}_max", (lambda tr, i=i: float(np.max(tr.eps[f"stage_{i + 1}"]))))
            for i in range(int(cfg["system"]["r"]))]


_CHECKS: dict[str, Callable[[Mapping[str, Any]], list[Check]]] = {
    "scalar_disturbance": _checks_scalar_disturbance,
    "high_gain": _checks_high_gain,
    "nussbaum_pos": _checks_nussbaum,
    "nussbaum_neg": _checks_nussbaum,
    "lambda_tracker": _checks_lambda,
    "robot_fc": _checks_robot,
    "robot_nonbackstep": _checks_robot,
    "double_integrator_precomp": _checks_precomp,
    "icfc": _checks_icfc,
    "icfc_unsaturated": _checks_icfc,
    "saturated": _checks_saturated,
    "saturated_strong_ic": _checks_saturated,
    "dae_synthetic": _checks_dae,
    "ppc": _checks_ppc,
}


def checks_for(cfg: Mapping[str, Any]) -> list[Check]:
    base = [("completed", _completed), ("funnel_invariance", _funnel_inside)]
    extra = _CHECKS.get(cfg.get("name", ""))
    return base + (extra(cfg) if extra else [])


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    description: str
    config: dict = field(repr=False)

    def to_config(self) -> dict:
        return copy.deepcopy(self.config)

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "Scenario":
        return cls(cfg.get("name", "custom"), cfg.get("description", ""), copy.deepcopy(dict(cfg)))

    def run(self, rtol=None, atol=None, t_end=None) -> tuple[Trajectory, RunReport]:
        return run_config(self.config, rtol, atol, t_end)

    def problem(self) -> ClosedLoopProblem:
        return build_problem(self.config)


def _cfg(name, description, system, controller, reference, funnel, **sim) -> dict:
    s = dict(DEFAULT_SIM)
    s.update(sim)
    return {"name": name, "description": description, "system": system, "controller": controller,
            "reference": reference, "funnel": funnel, "sim": s}


_ZERO1 = {"kind": "zero", "m": 1}


def _exp(a, b, c) -> dict:
    return {"family": "ExpDecayReciprocal", "a": a, "b": b, "c": c}


def scenario_scalar_disturbance() -> Scenario:
    return Scenario.from_config(_cfg(
        "scalar_disturbance", "high-gain stabilizer on x' = u + d with a closed-form solution",
        {"kind": "scalar", "a": 0.0, "b": 1.0, "c": 1.0, "x0": 1.0, "disturbance": {"kind": "prototype"}},
        {"variant": "HighGain", "params": {"k0": 0.0}}, _ZERO1, {}, t_end=50.0))


def scenario_high_gain() -> Scenario:
    return Scenario.from_config(_cfg(
        "high_gain", "high-gain stabilizer on y' = u; y^2 + k^2 is conserved",
        {"kind": "scalar", "a": 0.0, "b": 1.0, "c": 1.0, "x0": 1.0},
        {"variant": "HighGain", "params": {"k0": 0.0}}, _ZERO1, {}, t_end=50.0))


def _nussbaum(cb: float) -> Scenario:
    name = "nussbaum_pos" if cb > 0 else "nussbaum_neg"
    return Scenario.from_config(_cfg(
        name, f"Nussbaum controller, unknown control direction (cb = {cb:+g})",
        {"kind": "scalar", "a": 1.0, "b": cb, "c": 1.0, "x0": 1.0},
        {"variant": "Nussbaum", "params": {"k0": 0.0}}, _ZERO1, {}, t_end=50.0, rtol=1e-11, atol=1e-11))


def scenario_nussbaum_pair() -> tuple[Scenario, Scenario]:
    return _nussbaum(1.0), _nussbaum(-1.0)


def scenario_lambda_tracker() -> Scenario:
    return Scenario.from_config(_cfg(
        "lambda_tracker", "lambda-tracking with a bounded sinusoidal disturbance",
        {"kind": "scalar", "a": 1.0, "b": 1.0, "c": 1.0, "x0": 5.0,
         "disturbance": {"kind": "sine", "amp": 0.2, "freq": 3.0}},
        {"variant": "LambdaTracker", "params": {"lam": 0.25, "k0": 0.0}},
        {"kind": "sine", "amp": [0.5], "freq": [1.0]}, {}, t_end=50.0))


_ROBOT_PHI = _exp(4.0, 2.0, 0.1)


def _robot(variant: str) -> Scenario:
    name = "robot_fc" if variant == "FunnelRdR" else "robot_nonbackstep"
    funnel = {"phi": _ROBOT_PHI} if variant == "FunnelRdR" else {"phi_0": _ROBOT_PHI, "phi_1": _ROBOT_PHI}
    params = {"alpha": {"kind": "Reciprocal"}, "N": "NegIdentity"} if variant == "FunnelRdR" else {}
    label = "funnel controller" if variant == "FunnelRdR" else "non-backstepping funnel controller"
    return Scenario.from_config(_cfg(
        name, f"two-link planar manipulator, {label}",
        {"kind": "robot", "m1": 1.0, "m2": 1.0, "l1": 1.0, "l2": 1.0, "g": 9.81,
         "y0": [0.0, 0.0], "v0": [0.0, 0.0]},
        {"variant": variant, "params": params},
        {"kind": "sine", "amp": [1.0, 1.0], "freq": [1.0, 2.0]}, funnel, t_end=10.0, method="lsoda"))


def scenario_robot() -> tuple[Scenario, Scenario]:
    return _robot("FunnelRdR"), _robot("NonBackstepFC")


_DI = {"kind": "lti", "A": [[0.0, 1.0], [0.0, 0.0]], "B": [[0.0], [1.0]], "C": [[1.0, 0.0]], "x0": [1.0, 0.0]}
_RAMP = {"family": "LinearRamp", "eps": 0.2, "T": 2.0}


def scenario_double_integrator_filter() -> Scenario:
    return Scenario.from_config(_cfg(
        "double_integrator_filter", "double integrator, funnel controller with input filter",
        dict(_DI), {"variant": "FilterFC", "params": {"mu": 1.0}}, _ZERO1, {"phi": _RAMP}, t_end=10.0))


def scenario_double_integrator_precomp() -> Scenario:
    phi1 = {"family": "LinearRamp", "eps": 0.1, "T": 2.0}
    return Scenario.from_config(_cfg(
        "double_integrator_precomp", "double integrator, funnel controller with pre-compensator",
        dict(_DI), {"variant": "PreCompFC", "params": {"q": [1.0, 1.0], "p": [1.0, 1.0 / 3.0],
                                                       "Gamma_tilde": [[1.0]]}},
        _ZERO1, {"phi_1": phi1, "phi_fc": phi1, "phi_out": _RAMP}, t_end=10.0))


def scenario_heat_modal(n_modes: int) -> Scenario:
    return Scenario.from_config(_cfg(
        f"heat_modal_{n_modes}", f"Neumann heat equation, {n_modes}-mode truncation, funnel controller",
        {"kind": "heat_modal", "n_modes": int(n_modes), "z0": "zero"},
        {"variant": "FunnelRd1", "params": {"alpha": {"kind": "Reciprocal"}, "N": "NegIdentity"}},
        {"kind": "sine", "amp": [1.0], "freq": [1.0]}, {"phi": _exp(1.0, 1.0, 0.2)}, t_end=10.0))


def _icfc(u_hat: float) -> Scenario:
    name = "icfc" if math.isfinite(u_hat) else "icfc_unsaturated"
    params = {"alpha_d": 1.0, "beta_d": 0.1, "psi0": 1.0}
    if math.isfinite(u_hat):
        params["u_hat"] = u_hat
    return Scenario.from_config(_cfg(
        name, "input-constrained funnel controller" + ("" if math.isfinite(u_hat) else " without saturation"),
        {"kind": "scalar", "a": 1.0, "b": 1.0, "c": 1.0, "x0": 0.9},
        {"variant": "ICFC", "params": params}, {"kind": "sine", "amp": [0.5], "freq": [1.0]}, {},
        t_end=15.0))


def scenario_icfc() -> Scenario:
    return _icfc(1.0)


def scenario_icfc_unsaturated() -> Scenario:
    return _icfc(math.inf)


def _saturated(x0: float, name: str, note: str) -> Scenario:
    return Scenario.from_config(_cfg(
        name, f"funnel controller under input saturation, {note}",
        {"kind": "scalar", "a": 1.0, "b": 1.0, "c": 1.0, "x0": x0},
        {"variant": "SaturatedFC", "params": {"u_hat": 4.0}},
        {"kind": "sine", "amp": [0.5], "freq": [1.0]}, {"phi": _exp(1.0, 1.0, 0.2)}, t_end=10.0))


def scenario_saturated() -> Scenario:
    return _saturated(1.1, "saturated", "feasible data")


def scenario_saturated_strong_ic() -> Scenario:
    return _saturated(0.5, "saturated_strong_ic", "initial error small enough that the limit is never hit")


DAE_SYNTHETIC = {
    "kind": "dae_normal_form", "r": 1, "l": 1, "m": 2, "Gh": [[1.0]],
    "R1": [[[0.1]]], "R2": [[[0.1]]], "P1": [[0.1]], "P2": [[0.1]], "S1": [[0.1]], "S2": [[0.1]],
    "Q": [[-1.0]], "A31": [[0.1, 0.1]], "Gt": [[0.1]], "yI0": [[0.3]], "x30": [0.2],
}


def scenario_dae_synthetic() -> Scenario:
    return Scenario.from_config(_cfg(
        "dae_synthetic", "linear DAE in normal form (m = 2, l = 1), DAE funnel controller",
        copy.deepcopy(DAE_SYNTHETIC),
        {"variant": "DaeFC", "params": {"khat": 0.11, "alpha": {"kind": "Reciprocal"}, "N": "NegIdentity"}},
        {"kind": "sine", "amp": [1.0, 0.5], "freq": [1.0, 2.0]},
        {"phi_I": _exp(2.0, 1.0, 0.5), "phi_II": _exp(2.0, 1.0, 0.5)}, t_end=10.0))


def scenario_ppc() -> Scenario:
    return Scenario.from_config(_cfg(
        "ppc", "prescribed performance controller on a pure-feedback chain",
        {"kind": "pure_feedback", "r": 2, "sigma": 0.5, "x0": [0.2, 0.0]},
        {"variant": "PPC", "params": {"k": [1.0, 1.0]}}, {"kind": "sine", "amp": [0.5], "freq": [1.0]},
        {"phi_1": _exp(1.0, 1.0, 0.2), "phi_2": _exp(0.3, 1.0, 0.2)}, t_end=10.0))


def scenario_pd_funnel() -> Scenario:
    return Scenario.from_config(_cfg(
        "pd_funnel", "PD funnel controller on the double integrator",
        dict(_DI, x0=[0.5, 0.0]), {"variant": "PdFunnel", "params": {"modified": False}},
        {"kind": "sine", "amp": [0.5], "freq": [1.0]},
        {"phi_0": _exp(1.0, 1.0, 0.5), "phi_1": _exp(1.0, 1.0, 0.5)}, t_end=10.0))


def scenario_delay_funnel() -> Scenario:
    return Scenario.from_config(_cfg(
        "delay_funnel", "relative-degree-one funnel controller with a delayed state term",
        {"kind": "delay_scalar", "a": -1.0, "b": 1.0, "c_d": 0.5, "h": 0.5, "y0": 0.2},
        {"variant": "FunnelRd1", "params": {"alpha": {"kind": "Reciprocal"}, "N": "NegIdentity"}},
        {"kind": "sine", "amp": [0.5], "freq": [1.0]}, {"phi": _exp(1.0, 1.0, 0.2)}, t_end=10.0))


def catalog() -> dict[str, Scenario]:
    items = [scenario_scalar_disturbance(), scenario_high_gain(), *scenario_nussbaum_pair(),
             scenario_lambda_tracker(), *scenario_robot(), scenario_double_integrator_filter(),
             scenario_double_integrator_precomp(), *(scenario_heat_modal(n) for n in (3, 10, 30)),
             scenario_icfc(), scenario_icfc_unsaturated(), scenario_saturated(), scenario_saturated_strong_ic(),
             scenario_dae_synthetic(), scenario_ppc(), scenario_pd_funnel(), scenario_delay_funnel()]
    return {s.name: s for s in items}


TOPICS = {
    "scalar_disturbance": "scalar prototype, closed-form solution",
    "high_gain": "high-gain stabilizer",
    "nussbaum_pos": "Nussbaum control",
    "nussbaum_neg": "Nussbaum control",
    "lambda_tracker": "lambda-tracking",
    "robot_fc": "robot manipulator",
    "robot_nonbackstep": "robot manipulator",
    "double_integrator_filter": "input filter",
    "double_integrator_precomp": "funnel pre-compensator",
    "heat_modal_3": "heat equation",
    "heat_modal_10": "heat equation",
    "heat_modal_30": "heat equation",
    "icfc": "input-constrained funnel control",
    "icfc_unsaturated": "input-constrained funnel control",
    "saturated": "input saturation",
    "saturated_strong_ic": "input saturation",
    "dae_synthetic": "DAE funnel control",
    "ppc": "prescribed performance control",
    "pd_funnel": "PD funnel control",
    "delay_funnel": "delay operator",
}


def get(name: str) -> Scenario:
    cat = catalog()
    if name not in cat:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(sorted(cat))}")
    return cat[name]

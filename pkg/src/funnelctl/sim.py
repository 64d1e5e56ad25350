"""Guarded closed-loop integration.

The closed loop is one ODE on the stacked state (plant, controller).  Any
controller evaluated outside its open domain raises ``FunnelBreach``; the
integrator treats that exactly like an error-test failure and halves the step.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import LSODA
from scipy.optimize import minimize_scalar

from . import controllers as ctl
from .controllers import ControllerSpec, FunnelBreach, InfeasibleConfigError
from .funnel import FunnelFunction
from .plants import Plant, Signal

COMPLETED = "Completed"
MIN_STEP = "MinStepReached"
GUARD_AT_START = "GuardUnsatisfiableAtStart"
INTEGRATION_FAILURE = "IntegrationFailure"


class SimError(RuntimeError):
    pass


class GuardUnsatisfiableAtStart(InfeasibleConfigError):
    """Initial data violate a funnel condition (phi(0) e(0) must lie in the domain)."""


class IntegrationFailure(SimError):
    pass


# ---------------------------------------------------------------------------
# Problem
# ---------------------------------------------------------------------------


@dataclass
class ClosedLoopProblem:
    """A guarded initial-value problem.

    ``evaluate(t, x)`` returns ``(dx, info)``; ``info`` carries the recorded
    quantities (u, e, psi, gains, eps, extra).  It raises ``FunnelBreach``
    outside the controller domain.
    """

    evaluate: Callable[[float, np.ndarray], tuple[np.ndarray, dict]]
    x0: np.ndarray
    t0: float
    t_end: float
    layout: dict
    m: int
    on_accept: Optional[Callable[[float, np.ndarray, np.ndarray], None]] = None
    max_step: float = math.inf
    meta: dict = field(default_factory=dict)

    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.evaluate(t, x)[0]

    @property
    def n(self) -> int:
        return self.x0.size

    def unpack(self, x: np.ndarray) -> dict:
        return {k: x[s] for k, s in self.layout.items()}

    def pack(self, parts: Mapping[str, np.ndarray]) -> np.ndarray:
        x = np.empty(self.n)
        for k, s in self.layout.items():
            x[s] = parts[k]
        return x


# ---------------------------------------------------------------------------
# Trajectory / report
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    psi: np.ndarray
    gains: dict
    eps: dict
    extra: dict
    termination: str
    t_fail: Optional[float]
    stats: dict
    m: int
    wall_time: float = 0.0
    message: str = ""
    layout: dict = field(default_factory=dict)
    eps_sup: dict = field(default_factory=dict)
    rhs: Optional[Callable[[float, np.ndarray], np.ndarray]] = field(default=None, repr=False, compare=False)

    @property
    def completed(self) -> bool:
        return self.termination == COMPLETED

    def interpolate(self, t: float) -> np.ndarray:
        """Dense output between accepted steps.

        With the loop right-hand side attached this is one fifth-order sub-step
        from the left node, as accurate as the accepted step itself; otherwise
        (or if a stage leaves the domain) cubic Hermite.
        """
        ts = self.t
        if not ts[0] <= t <= ts[-1]:
            raise ValueError("time outside the integrated interval")
        if len(ts) == 1:
            return self.x[0].copy()
        i = min(int(np.searchsorted(ts, t, side="right")) - 1, len(ts) - 2)
        i = max(i, 0)
        return _dense(self.rhs, t, ts[i], ts[i + 1], self.x[i], self.x[i + 1], self.dx[i], self.dx[i + 1])


@dataclass
class RunReport:
    termination: str
    t_final: float
    eps_observed: dict
    gain_max: dict
    input_sup: float
    drifts: dict
    checks: dict
    wall_time: float
    stats: dict
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "termination": self.termination,
            "t_final": self.t_final,
            "eps_observed": self.eps_observed,
            "gain_max": self.gain_max,
            "input_sup": self.input_sup,
            "drifts": self.drifts,
            "checks": self.checks,
            "wall_time": self.wall_time,
            "stats": self.stats,
            "message": self.message,
        }

    def to_text(self) -> str:
        lines = [f"termination: {self.termination}", f"t_final: {self.t_final:.17g}"]
        for k, v in self.eps_observed.items():
            lines.append(f"eps_observed[{k}]: {v:.17g}")
        for k, v in self.gain_max.items():
            lines.append(f"gain_max[{k}]: {v:.17g}")
        lines.append(f"input_sup: {self.input_sup:.17g}")
        for k, v in self.drifts.items():
            lines.append(f"drift[{k}]: {v:.17g}")
        for k, v in self.checks.items():
            lines.append(f"check[{k}]: {v}")
        lines.append(f"steps: {self.stats}")
        if self.message:
            lines.append(f"message: {self.message}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Cash-Karp 4(5)
# ---------------------------------------------------------------------------
# The fifth-order weights are all non-negative, so a component whose derivative
# is non-negative at every stage (adaptive gains) never decreases numerically.

_C = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [3 / 10, -9 / 10, 6 / 5],
    [-11 / 54, 5 / 2, -70 / 27, 35 / 27],
    [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096],
]
_B = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_E = _B - np.array([2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4])


class _Rejected(Exception):
    def __init__(self, kind: str):
        self.kind = kind


def _safe_eval(problem: ClosedLoopProblem, t: float, x: np.ndarray, full: bool = False):
    try:
        f, info = problem.evaluate(t, x)
    except FunnelBreach:
        raise _Rejected("guard")
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError, ZeroDivisionError):
        raise _Rejected("nonfinite")
    if not np.all(np.isfinite(f)):
        raise _Rejected("nonfinite")
    return (f, info) if full else f


def _initial_step(problem, t0, x0, f0, rtol, atol, t_end) -> float:
    scale = atol + rtol * np.abs(x0)
    d0 = np.sqrt(np.mean((x0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0, problem.max_step)
    try:
        f1 = _safe_eval(problem, t0 + h0, x0 + h0 * f0)
        d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    except _Rejected:
        return h0 * 0.1
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_end - t0, problem.max_step)


def integrate(problem: ClosedLoopProblem, rtol: float = 1e-9, atol: float = 1e-9,
              max_step: Optional[float] = None, t_end: Optional[float] = None,
              max_steps: int = 2_000_000, method: str = "rk45") -> Trajectory:
    """Adaptive embedded Runge-Kutta 4(5) with PI step control and guard-aware rejection.

    A trial step is rejected (and halved) when any stage or the endpoint leaves
    the controller domain; below ``1e-12 * t_end`` the run stops with
    ``MinStepReached``.  ``method="lsoda"`` hands stiff loops (gains near the
    funnel boundary) to scipy's LSODA; see :func:`_integrate_lsoda`.
    """
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    if method == "lsoda":
        return _integrate_lsoda(problem, rtol, atol, max_step, t_end, max_steps)
    if method != "rk45":
        raise ValueError(f"unknown method {method!r}")
    wall0 = time.perf_counter()
    t_end = problem.t_end if t_end is None else t_end
    h_max = min(problem.max_step, max_step if max_step is not None else math.inf, t_end - problem.t0)
    min_step = 1e-12 * max(abs(t_end), 1.0)
    t = problem.t0
    x = problem.x0.astype(float).copy()
    stats = {"accepted": 0, "rejected_error": 0, "rejected_guard": 0, "rejected_nonfinite": 0, "rhs_calls": 0}
    ts, xs, fs, infos = [], [], [], []

    try:
        f, info = _safe_eval(problem, t, x, full=True)
    except _Rejected as rej:
        return _finish(problem, [t], [x], [np.full_like(x, np.nan)], [None],
                       GUARD_AT_START if rej.kind == "guard" else INTEGRATION_FAILURE, t, stats, wall0,
                       "initial state outside the controller domain")
    stats["rhs_calls"] += 1
    ts.append(t), xs.append(x.copy()), fs.append(f), infos.append(info)
    if problem.on_accept:
        problem.on_accept(t, x, f)

    h = min(_initial_step(problem, t, x, f, rtol, atol, t_end), h_max)
    err_prev = 1e-4
    termination, t_fail, message = COMPLETED, None, ""
    last_reject = None
    K = np.empty((6, x.size))

    while t < t_end:
        if stats["accepted"] >= max_steps:
            termination, t_fail, message = INTEGRATION_FAILURE, t, "step budget exhausted"
            break
        h = min(h, h_max)
        if t + h > t_end or t_end - (t + h) < min_step:
            h = t_end - t
        try:
            K[0] = f
            for s in range(1, 6):
                K[s] = _safe_eval(problem, t + _C[s] * h, x + h * np.dot(_A[s], K[:s]))
                stats["rhs_calls"] += 1
            x_new = x + h * (_B @ K)
            err_vec = h * (_E @ K)
            scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            if not math.isfinite(err):
                raise _Rejected("nonfinite")
            if err <= 1.0:
                f_new, info_new = _safe_eval(problem, t + h, x_new, full=True)
                stats["rhs_calls"] += 1
        except _Rejected as rej:
            stats["rejected_guard" if rej.kind == "guard" else "rejected_nonfinite"] += 1
            last_reject = rej.kind
            h *= 0.5
            if h < min_step:
                termination = MIN_STEP if rej.kind == "guard" else INTEGRATION_FAILURE
                t_fail = t
                message = ("step size fell below the minimum at the funnel guard" if rej.kind == "guard"
                           else "non-finite right-hand side")
                break
            continue
        if err <= 1.0:
            t = t + h
            x, f = x_new, f_new
            stats["accepted"] += 1
            ts.append(t), xs.append(x.copy()), fs.append(f), infos.append(info_new)
            if problem.on_accept:
                problem.on_accept(t, x, f)
            err_c = max(err, 1e-10)
            fac = 0.9 * err_c ** -0.17 * err_prev ** 0.04
            if last_reject is not None:
                fac = min(fac, 1.0)
            h *= min(5.0, max(0.2, fac))
            err_prev = err_c
            last_reject = None
        else:
            stats["rejected_error"] += 1
            h *= max(0.2, 0.9 * err ** -0.2)
            last_reject = "error"
            if h < min_step:
                termination, t_fail, message = MIN_STEP, t, "error test cannot be met above the minimum step"
                break

    return _finish(problem, ts, xs, fs, infos, termination, t_fail, stats, wall0, message)


def _integrate_lsoda(problem, rtol, atol, max_step, t_end, max_steps) -> Trajectory:
    """Stiff fallback: LSODA with a guard-aware right-hand side.

    Trial points outside the funnel return NaN, which makes LSODA shrink the
    step.  Every accepted point is re-evaluated, so a breach there terminates
    the run exactly as in the explicit integrator.
    """
    wall0 = time.perf_counter()
    t_end = problem.t_end if t_end is None else t_end
    h_max = min(problem.max_step, max_step if max_step is not None else math.inf, t_end - problem.t0)
    stats = {"accepted": 0, "rejected_error": 0, "rejected_guard": 0, "rejected_nonfinite": 0, "rhs_calls": 0}
    t, x = problem.t0, problem.x0.astype(float).copy()
    try:
        f, info = _safe_eval(problem, t, x, full=True)
    except _Rejected as rej:
        return _finish(problem, [t], [x], [np.full_like(x, np.nan)], [None],
                       GUARD_AT_START if rej.kind == "guard" else INTEGRATION_FAILURE, t, stats, wall0,
                       "initial state outside the controller domain")
    ts, xs, fs, infos = [t], [x.copy()], [f], [info]
    if problem.on_accept:
        problem.on_accept(t, x, f)

    def rhs(tt, xx):
        stats["rhs_calls"] += 1
        try:
            return _safe_eval(problem, tt, xx)
        except _Rejected as rej:
            stats["rejected_guard" if rej.kind == "guard" else "rejected_nonfinite"] += 1
            return np.full_like(xx, np.nan)

    solver = LSODA(rhs, t, x, t_end, rtol=rtol, atol=atol,
                   max_step=h_max if math.isfinite(h_max) else np.inf)
    termination, t_fail, message = COMPLETED, None, ""
    while solver.status == "running":
        if stats["accepted"] >= max_steps:
            termination, t_fail, message = INTEGRATION_FAILURE, solver.t, "step budget exhausted"
            break
        msg = solver.step()
        if solver.status == "failed":
            termination, t_fail = (MIN_STEP if stats["rejected_guard"] else INTEGRATION_FAILURE), solver.t
            message = str(msg)
            break
        try:
            f, info = _safe_eval(problem, solver.t, solver.y, full=True)
        except _Rejected as rej:
            termination, t_fail = (MIN_STEP if rej.kind == "guard" else INTEGRATION_FAILURE), ts[-1]
            message = "accepted point left the controller domain"
            break
        stats["accepted"] += 1
        ts.append(solver.t), xs.append(solver.y.copy()), fs.append(f), infos.append(info)
        if problem.on_accept:
            problem.on_accept(solver.t, solver.y, f)
    return _finish(problem, ts, xs, fs, infos, termination, t_fail, stats, wall0, message)


def _finish(problem, ts, xs, fs, infos, termination, t_fail, stats, wall0, message) -> Trajectory:
    m = problem.m
    good = [i for i, inf in enumerate(infos) if inf is not None]
    N = len(good)
    ts_a = np.array([ts[i] for i in good]) if N else np.array(ts[:1])
    xs_a = np.array([xs[i] for i in good]) if N else np.array(xs[:1])
    fs_a = np.array([fs[i] for i in good]) if N else np.array(fs[:1])

    def stack(key, width):
        if not N:
            return np.zeros((len(ts_a), width))
        return np.array([np.asarray(infos[i].get(key, np.zeros(width)), dtype=float).reshape(-1) for i in good])

    y = stack("y", m)
    u = stack("u", m)
    e = stack("e", m)
    psi = stack("psi", 0) if N and len(np.atleast_1d(infos[good[0]].get("psi", []))) else np.zeros((len(ts_a), 0))

    def dict_series(key):
        if not N:
            return {}
        names = list(infos[good[0]].get(key, {}).keys())
        return {k: np.array([float(infos[i][key][k]) for i in good]) for k in names}

    eps = dict_series("eps")
    return Trajectory(ts_a, xs_a, fs_a, y, u, e, psi, dict_series("gains"), eps,
                      dict_series("extra"), termination, t_fail, stats, m,
                      time.perf_counter() - wall0, message, dict(problem.layout),
                      _refine_sup(problem, ts_a, xs_a, fs_a, eps), problem.rhs)


def _hermite(t, t0, t1, x0, x1, f0, f1):
    h = t1 - t0
    s = (t - t0) / h
    return ((1 + 2 * s) * (1 - s) ** 2 * x0 + s * (1 - s) ** 2 * h * f0
            + s * s * (3 - 2 * s) * x1 + s * s * (s - 1) * h * f1)


def _substep(rhs, t0, x0, f0, h):
    K = np.empty((6, x0.size))
    K[0] = f0
    for s in range(1, 6):
        K[s] = rhs(t0 + _C[s] * h, x0 + h * np.dot(_A[s], K[:s]))
    return x0 + h * (_B @ K)


def _dense(rhs, t, t0, t1, x0, x1, f0, f1):
    if t == t0:
        return np.array(x0, dtype=float)
    if t == t1:
        return np.array(x1, dtype=float)
    if rhs is not None:
        try:
            x = _substep(rhs, t0, x0, f0, t - t0)
            if np.all(np.isfinite(x)):
                return x
        except Exception:  # a stage outside the domain: fall back to Hermite
            pass
    return _hermite(t, t0, t1, x0, x1, f0, f1)


def _refine_sup(problem, ts, xs, fs, eps: dict, n_peaks: int = 5) -> dict:
    """Sup of each eps series over the dense output, not only at accepted steps.

    The sampled maximum depends on where the steps land, so it moves with the
    tolerance.  Around the largest sampled local maxima the loop is
    re-evaluated on the dense output and maximised per interval.
    """
    out = {}
    for key, ser in eps.items():
        best = float(np.max(ser)) if ser.size else 0.0
        if ser.size < 3 or not np.all(np.isfinite(ser)):
            out[key] = best
            continue
        inner = np.flatnonzero((ser[1:-1] >= ser[:-2]) & (ser[1:-1] >= ser[2:])) + 1
        cand = inner[np.argsort(ser[inner])[::-1][:n_peaks]]
        for i in cand:
            for a in (i - 1, i):
                def neg(t, a=a):
                    x = _dense(problem.rhs, t, ts[a], ts[a + 1], xs[a], xs[a + 1], fs[a], fs[a + 1])
                    try:
                        val = problem.evaluate(t, x)[1]["eps"][key]
                    except Exception:  # outside the domain: fall back to the samples
                        return -max(ser[a], ser[a + 1])
                    return -float(val)
                res = minimize_scalar(neg, bounds=(ts[a], ts[a + 1]), method="bounded",
                                      options={"xatol": 1e-12 * max(1.0, abs(ts[a + 1]))})
                best = max(best, -float(res.fun))
        out[key] = best
    return out


# ---------------------------------------------------------------------------
# Invariants
# ---------------------------------------------------------------------------


def verify_invariants(traj: Trajectory, checks: Sequence[tuple[str, Callable[[Trajectory], Any]]] = ()) -> RunReport:
    """Evaluate named checks; numeric results are drifts, anything else is recorded verbatim."""
    drifts, results = {}, {}
    for name, fn in checks:
        try:
            val = fn(traj)
        except Exception as exc:  # a failing check is reported, not raised
            results[name] = f"error: {exc}"
            continue
        if isinstance(val, (bool, np.bool_)):
            results[name] = bool(val)
        elif isinstance(val, (int, float, np.floating)):
            drifts[name] = float(val)
        else:
            results[name] = val
    eps = {k: traj.eps_sup.get(k, float(np.max(v)) if v.size else 0.0) for k, v in traj.eps.items()}
    gains = {k: float(np.max(v)) if v.size else 0.0 for k, v in traj.gains.items()}
    u_sup = float(np.max(np.linalg.norm(traj.u, axis=1))) if traj.u.size else 0.0
    return RunReport(traj.termination, float(traj.t[-1]), eps, gains, u_sup, drifts, results,
                     traj.wall_time, dict(traj.stats), traj.message)


def drift(series: np.ndarray) -> float:
    return float(np.max(np.abs(series - series[0]))) if series.size else 0.0


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _state_names(layout: Mapping[str, slice], n: int) -> list[str]:
    prefix = {"plant": "x", "controller": "xc"}
    names: list[str] = []
    for key, sl in layout.items():
        width = len(range(*sl.indices(n)))
        base = prefix.get(key, key)
        names += [base] if width == 1 else [f"{base}_{i + 1}" for i in range(width)]
    if len(names) != n:
        names = ["x"] if n == 1 else [f"x_{i + 1}" for i in range(n)]
    return names


def trajectory_csv(traj: Trajectory, state_names: Optional[Sequence[str]] = None) -> str:
    m = traj.m
    n = traj.x.shape[1]
    if state_names is None:
        state_names = _state_names(traj.layout, n)
    header = ["t"] + [f"y_{i + 1}" for i in range(m)] + [f"u_{i + 1}" for i in range(m)] \
        + [f"e_{i + 1}" for i in range(m)] + [f"psi_{i + 1}" for i in range(traj.psi.shape[1])] \
        + list(state_names) + [k if k.startswith("k") else f"k_{k}" for k in traj.gains]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    gain_cols = list(traj.gains.values())
    for i in range(len(traj.t)):
        row = [traj.t[i], *traj.y[i], *traj.u[i], *traj.e[i], *traj.psi[i], *traj.x[i]]
        row += [g[i] for g in gain_cols]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(traj: Trajectory, path: str, state_names: Optional[Sequence[str]] = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(trajectory_csv(traj, state_names))


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


_EMPTY = np.zeros(0)


def _psi(phi_t: float) -> float:
    return math.inf if phi_t == 0.0 else 1.0 / phi_t


def _design(params: dict) -> tuple[ctl.Alpha, ctl.NFun]:
    a = params.get("alpha", {"kind": "Reciprocal"})
    alpha = ctl.Alpha(a.get("kind", "Reciprocal"), float(a.get("beta", 1.0)))
    N = ctl.NFun(params.get("N", "NegIdentity"))
    return alpha, N


class _Law:
    """Controller law bound to a plant: ``law(t, xp, xc) -> (u, dxc, info)``."""

    n_c: int = 0

    def c0(self) -> np.ndarray:
        return np.zeros(self.n_c)


def _e_derivs(plant: Plant, ref: Signal, t: float, xp: np.ndarray) -> np.ndarray:
    return plant.output_derivs(t, xp) - ref.derivs(t, plant.r - 1)


def build_law(plant: Plant, spec: ControllerSpec, ref: Signal, funnels: Mapping[str, FunnelFunction]) -> _Law:
    p = spec.params
    v = spec.variant
    m, r = plant.m, plant.r
    law = _Law()
    if ref.m != m:
        raise InfeasibleConfigError(f"reference has {ref.m} components, plant output has {m}")

    def need(name):
        if name in funnels:
            return funnels[name]
        if name != "phi" and "phi" in funnels:
            return funnels["phi"]
        raise InfeasibleConfigError(f"controller {v} needs funnel {name!r}")

    if v in ("HighGain", "Nussbaum"):
        law.n_c = 1
        law.c0 = lambda: np.array([float(p.get("k0", 0.0))])
        N = (lambda k: ctl.nussbaum_N(k)) if v == "Nussbaum" else None

        def f(t, xp, xc):
            y = plant.output(t, xp)
            k = xc[0]
            if v == "HighGain":
                u, dk = ctl.high_gain_step(k, y)
            else:
                u, dk = ctl.nussbaum_N(k) * y, float(y @ y)
            return u, np.array([dk]), {"y": y, "u": u, "e": y, "gains": {"k": k}, "eps": {}, "psi": [], "extra": {}}
        law.f = f
        return law

    if v == "LambdaTracker":
        lam = float(p["lam"])
        law.n_c = 1
        law.c0 = lambda: np.array([float(p.get("k0", 0.0))])

        def f(t, xp, xc):
            y = plant.output(t, xp)
            e = y - ref(t)
            u, dk = ctl.lambda_step(xc[0], e, lam)
            return u, np.array([dk]), {"y": y, "u": u, "e": e, "gains": {"k": xc[0]}, "eps": {},
                                       "psi": [], "extra": {"dist": ctl.dist_lambda(e, lam)}}
        law.f = f
        return law

    if v in ("ClassicFC", "SaturatedFC"):
        phi = need("phi")
        if r != 1:
            raise InfeasibleConfigError(f"{v} needs relative degree one")
        u_hat = float(p.get("u_hat", math.inf))

        def f(t, xp, xc):
            y = plant.output(t, xp)
            e = y - ref(t)
            ph = phi(t)
            k = ctl.classic_gain(ph, e)
            v_ = -k * e
            if v == "SaturatedFC":
                u = ctl.saturate(v_, u_hat)
                sat = float(np.linalg.norm(v_) > u_hat)
            else:
                u, sat = v_, 0.0
            return u, np.zeros(0), {"y": y, "u": u, "e": e, "gains": {"k": k}, "eps": {"phi": ph * np.linalg.norm(e)},
                                    "psi": [_psi(ph)], "extra": {"saturated": sat}}
        law.f = f
        return law

    if v in ("FunnelRd1", "FunnelRdR"):
        phi = need("phi")
        alpha, N = _design(p)
        if v == "FunnelRd1" and r != 1:
            raise InfeasibleConfigError("FunnelRd1 needs relative degree one")

        def f(t, xp, xc):
            yd = plant.output_derivs(t, xp)
            ed = yd - ref.derivs(t, r - 1)
            ph = phi(t)
            u, w = ctl.fc_output_w(ph, ed, alpha, N)
            w2 = float(w @ w)
            return u, _EMPTY, {"y": yd[0], "u": u, "e": ed[0], "gains": {"k": alpha(w2)},
                               "eps": {"phi": ph * math.sqrt(float(ed[0] @ ed[0])), "w": math.sqrt(w2)},
                               "psi": [_psi(ph)], "extra": {}}
        law.f = f
        return law

    if v == "NonBackstepFC":
        phis = [need(f"phi_{i}") for i in range(r)]

        def f(t, xp, xc):
            yd = plant.output_derivs(t, xp)
            ed = yd - ref.derivs(t, r - 1)
            u = ctl.non_backstep_fc(t, ed, phis)
            ph = phis[0](t)
            return u, _EMPTY, {"y": yd[0], "u": u, "e": ed[0], "gains": {},
                               "eps": {"phi": ph * math.sqrt(float(ed[0] @ ed[0]))}, "psi": [_psi(ph)],
                               "extra": {}}
        law.f = f
        return law

    if v == "FilterFC":
        phi = need("phi")
        alpha, N = _design(p)
        mu = float(p["mu"])
        law.n_c = (r - 1) * m
        x0c = p.get("xi0")
        law.c0 = lambda: np.zeros(law.n_c) if x0c is None else np.asarray(x0c, float).reshape(law.n_c)

        def f(t, xp, xc):
            y = plant.output(t, xp)
            e = y - ref(t)
            ph = phi(t)
            u, dxi = ctl.filter_fc(ph, e, xc.reshape(max(r - 1, 0), m), r, alpha, N, mu)
            nv = ph * float(np.linalg.norm(e))
            return u, dxi.reshape(-1), {"y": y, "u": u, "e": e, "gains": {"k": alpha(nv * nv)},
                                        "eps": {"phi": nv}, "psi": [_psi(ph)], "extra": {}}
        law.f = f
        return law

    if v == "PreCompFC":
        if r < 2:
            raise InfeasibleConfigError("the pre-compensator needs relative degree >= 2")
        alpha, N = _design(p)
        q = np.asarray(p["q"], float)
        if q.size != r:
            raise InfeasibleConfigError("q must have r entries")
        if "p" in p:
            pv = np.asarray(p["p"], float)
        else:
            pv = ctl.precomp_design(q, p.get("R")).p
        Gt = np.atleast_2d(np.asarray(p.get("Gamma_tilde", np.eye(m)), float))
        rho = float(p.get("rho", 1.0))
        phi1 = need("phi_1")
        stage_phis = [phi1] + [phi1.scaled(rho) for _ in range(r - 2)]
        phi_fc = funnels.get("phi_fc", phi1)
        phi_out = funnels.get("phi_out")
        ns = r - 1
        law.n_c = ns * r * m
        law.c0 = lambda: np.zeros(law.n_c) if p.get("xi0") is None else np.asarray(p["xi0"], float).reshape(law.n_c)

        def f(t, xp, xc):
            y = plant.output(t, xp)
            stages = [xc[j * r * m:(j + 1) * r * m].reshape(r, m) for j in range(ns)]
            eps = {}
            inp = y
            for j, st in enumerate(stages):
                sj = stage_phis[j](t) * float(np.linalg.norm(inp - st[0]))
                if not sj <= ctl.GUARD:
                    raise FunnelBreach(f"compensator stage {j + 1} breached", j + 1)
                eps[f"stage_{j + 1}"] = sj
                inp = st[0]
            zd = ctl.precomp_surrogate_derivatives(y, stages, pv, q, stage_phis, t)
            ed = zd - ref.derivs(t, r - 1)
            ph = phi_fc(t)
            u = ctl.fc_output(ph, ed, alpha, N)
            dx = np.empty(law.n_c)
            inp = y
            for j, st in enumerate(stages):
                d, _ = ctl.precomp_step(pv, q, Gt, stage_phis[j](t), inp, st, u)
                dx[j * r * m:(j + 1) * r * m] = d.reshape(-1)
                inp = st[0]
            eps["fc"] = ph * float(np.linalg.norm(ed[0]))
            if phi_out is not None:
                eps["output"] = phi_out(t) * float(np.linalg.norm(y - ref(t)))
            return u, dx, {"y": y, "u": u, "e": y - ref(t), "gains": {}, "eps": eps,
                           "psi": [_psi(ph)], "extra": {"z": float(zd[0, 0])}}
        law.f = f
        law.design_p = pv
        return law

    if v == "PdFunnel":
        if r != 2 or m != 1:
            raise InfeasibleConfigError("PD funnel controller needs a scalar relative-degree-two plant")
        phi0, phi1 = need("phi_0"), need("phi_1")
        modified = bool(p.get("modified", False))

        def f(t, xp, xc):
            ed = _e_derivs(plant, ref, t, xp)
            p0, p1 = phi0(t), phi1(t)
            u = np.array([ctl.pd_funnel(p0, p1, ed[0, 0], ed[1, 0], modified)])
            return u, np.zeros(0), {"y": plant.output(t, xp), "u": u, "e": ed[0], "gains": {},
                                    "eps": {"phi_0": p0 * abs(ed[0, 0]), "phi_1": p1 * abs(ed[1, 0])},
                                    "psi": [_psi(p0), _psi(p1)], "extra": {}}
        law.f = f
        return law

    if v == "PPC":
        if not hasattr(plant, "chain"):
            raise InfeasibleConfigError("PPC needs a plant exposing its state chain")
        n_stage = plant.n
        phis = [need(f"phi_{i + 1}") for i in range(n_stage)]
        ks = [float(k) for k in p["k"]]
        if len(ks) != n_stage:
            raise InfeasibleConfigError("one gain per chain state required")

        def f(t, xp, xc):
            u, stages = ctl.ppc_stages(plant.chain(xp), ref(t), [ph(t) for ph in phis], ks)
            y = plant.output(t, xp)
            eps = {f"stage_{i + 1}": float(np.max(np.abs(s))) for i, s in enumerate(stages)}
            return u, np.zeros(0), {"y": y, "u": u, "e": y - ref(t), "gains": {}, "eps": eps,
                                    "psi": [_psi(phis[0](t))], "extra": {}}
        law.f = f
        return law

    if v == "ICFC":
        u_hat = float(p.get("u_hat", math.inf))
        a_d, b_d = float(p["alpha_d"]), float(p["beta_d"])
        law.n_c = 1
        law.c0 = lambda: np.array([float(p["psi0"])])

        def f(t, xp, xc):
            y = plant.output(t, xp)
            e = y - ref(t)
            res = ctl.icfc_step(e, xc[0], u_hat, a_d, b_d)
            u = res["u"]
            return u, np.array([res["psi_dot"]]), {
                "y": y, "u": u, "e": e, "gains": {"k": res["k"]},
                "eps": {"psi": float(np.linalg.norm(e)) / xc[0]}, "psi": [xc[0]],
                "extra": {"kappa": res["kappa"], "saturated": float(res["kappa"] > 0.0)}}
        law.f = f
        return law

    raise InfeasibleConfigError(f"controller {v} cannot be attached to this plant")


def assemble(plant: Plant, controller: ControllerSpec, reference: Signal,
             funnels: Mapping[str, FunnelFunction], t_end: float, t0: float = 0.0,
             check_start: bool = True) -> ClosedLoopProblem:
    law = build_law(plant, controller, reference, funnels)
    n = plant.n
    xc0 = law.c0()
    x0 = np.concatenate([plant.x0, xc0])
    layout = {"plant": slice(0, n), "controller": slice(n, n + law.n_c)}

    def evaluate(t, x):
        xp, xc = x[:n], x[n:]
        u, dxc, info = law.f(t, xp, xc)
        dxp = plant.rhs(t, xp, u)
        return np.concatenate([dxp, dxc]), info

    prob = ClosedLoopProblem(evaluate, x0, t0, t_end, layout, plant.m, plant.on_accept,
                             plant.max_step(), {"controller": controller.variant, "law": law})
    if check_start:
        try:
            evaluate(t0, x0)
        except FunnelBreach as exc:
            raise GuardUnsatisfiableAtStart(
                f"initial condition violates phi(0) e(0) in the funnel domain ({exc})") from exc
    return prob

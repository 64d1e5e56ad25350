"""Funnel functions, their classes, and the boundary reciprocal psi = 1/phi."""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

from ._autodiff import Jet, jcos, jexp, jlog, jsin, jsqrt

GRID_POINTS = 10_000


class FunnelError(ValueError):
    """Invalid funnel parameters."""


class UnsupportedDerivativeError(FunnelError):
    pass


class ClassUndecidableError(FunnelError):
    """Raised when a Custom funnel lacks the asymptotic declarations a class check needs."""


FAMILIES = ("ConstantReciprocal", "ExpDecayReciprocal", "LinearRamp", "Custom")

_ALLOWED_FUNCS = ("exp", "sin", "cos", "log", "sqrt")
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load, ast.Call,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _compile_expr(expr: str):
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise FunnelError(f"disallowed syntax in funnel expression: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in ("t", "pi", "e") + _ALLOWED_FUNCS:
            raise FunnelError(f"unknown name {node.id!r} in funnel expression")
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_FUNCS
        ):
            raise FunnelError("only exp, sin, cos, log, sqrt may be called")
    return compile(tree, "<funnel>", "eval")


_NUM_NS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "log": np.log, "sqrt": np.sqrt,
           "pi": math.pi, "e": math.e}
_JET_NS = {"exp": jexp, "sin": jsin, "cos": jcos, "log": jlog, "sqrt": jsqrt,
           "pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class FunnelFunction:
    """A closed-form funnel function phi with exact derivatives.

    ``params`` per family:
      ConstantReciprocal: c          (phi = 1/c)
      ExpDecayReciprocal: a, b, c    (phi = 1/(a exp(-b t) + c))
      LinearRamp:         eps, T     (phi = min(t/T, 1)/eps)
      Custom:             expr       (expression in t), plus declared asymptotics
                                     ``bounded`` and ``liminf_positive``
    """

    family: str
    params: Mapping[str, Any]
    max_derivative_order: int = 6
    _code: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        p = dict(self.params)
        if self.family == "ConstantReciprocal":
            if not p.get("c", 0) > 0:
                raise FunnelError("ConstantReciprocal needs c > 0")
        elif self.family == "ExpDecayReciprocal":
            a, b, c = p.get("a"), p.get("b"), p.get("c")
            if a is None or b is None or c is None or a < 0 or b <= 0 or c <= 0:
                raise FunnelError("ExpDecayReciprocal needs a >= 0, b > 0, c > 0")
        elif self.family == "LinearRamp":
            if not (p.get("eps", 0) > 0 and p.get("T", 0) > 0):
                raise FunnelError("LinearRamp needs eps > 0 and T > 0")
            # piecewise linear: only the first derivative exists (almost everywhere)
            object.__setattr__(self, "max_derivative_order", min(self.max_derivative_order, 1))
        elif self.family == "Custom":
            if "expr" not in p:
                raise FunnelError("Custom funnel needs an expression 'expr'")
            object.__setattr__(self, "_code", _compile_expr(p["expr"]))
        else:
            raise FunnelError(f"unknown funnel family {self.family!r}")
        object.__setattr__(self, "params", p)

    # constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> "FunnelFunction":
        return cls("ConstantReciprocal", {"c": c})

    @classmethod
    def exp_decay(cls, a: float, b: float, c: float) -> "FunnelFunction":
        return cls("ExpDecayReciprocal", {"a": a, "b": b, "c": c})

    @classmethod
    def linear_ramp(cls, eps: float, T: float) -> "FunnelFunction":
        return cls("LinearRamp", {"eps": eps, "T": T})

    @classmethod
    def custom(cls, expr: str, *, bounded: bool | None = None,
               liminf_positive: bool | None = None, max_derivative_order: int = 4) -> "FunnelFunction":
        return cls("Custom", {"expr": expr, "bounded": bounded, "liminf_positive": liminf_positive},
                   max_derivative_order)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FunnelFunction":
        d = dict(d)
        family = d.pop("family")
        order = d.pop("max_derivative_order", 4 if family == "Custom" else 6)
        return cls(family, d, order)

    def to_dict(self) -> dict:
        out = {"family": self.family, **self.params}
        if self.family != "LinearRamp":
            out["max_derivative_order"] = self.max_derivative_order
        return out

    def scaled(self, k: float) -> "FunnelFunction":
        """The funnel function k*phi (k > 0), kept inside the same family."""
        if not k > 0:
            raise FunnelError("scale factor must be positive")
        p = dict(self.params)
        fam = self.family
        if fam == "ConstantReciprocal":
            p["c"] = p["c"] / k
        elif fam == "ExpDecayReciprocal":
            p["a"], p["c"] = p["a"] / k, p["c"] / k
        elif fam == "LinearRamp":
            p["eps"] = p["eps"] / k
        else:
            p["expr"] = f"{k!r}*({p['expr']})"
        return FunnelFunction(fam, p, self.max_derivative_order)

    # evaluation -----------------------------------------------------------
    def __call__(self, t: float) -> float:
        return self.value(t)

    def value(self, t: float) -> float:
        p = self.params
        fam = self.family
        if fam == "ConstantReciprocal":
            return 1.0 / p["c"]
        if fam == "ExpDecayReciprocal":
            return 1.0 / (p["a"] * math.exp(-p["b"] * t) + p["c"])
        if fam == "LinearRamp":
            return min(t / p["T"], 1.0) / p["eps"]
        with np.errstate(over="ignore", invalid="ignore"):
            return float(eval(self._code, {"__builtins__": {}}, {**_NUM_NS, "t": t}))

    def values(self, t: np.ndarray) -> np.ndarray:
        """Vectorised order-0 evaluation."""
        t = np.asarray(t, dtype=float)
        p = self.params
        fam = self.family
        if fam == "ConstantReciprocal":
            return np.full_like(t, 1.0 / p["c"])
        if fam == "ExpDecayReciprocal":
            return 1.0 / (p["a"] * np.exp(-p["b"] * t) + p["c"])
        if fam == "LinearRamp":
            return np.minimum(t / p["T"], 1.0) / p["eps"]
        with np.errstate(over="ignore", invalid="ignore"):
            v = eval(self._code, {"__builtins__": {}}, {**_NUM_NS, "t": t})
        return np.broadcast_to(np.asarray(v, dtype=float), t.shape).copy()

    def jet(self, t: float, order: int) -> Jet:
        """Taylor jet of phi at t up to ``order``."""
        if order > self.max_derivative_order:
            raise UnsupportedDerivativeError(
                f"{self.family} supports derivatives up to order {self.max_derivative_order}, got {order}")
        p = self.params
        fam = self.family
        if fam == "ConstantReciprocal":
            return Jet.constant(1.0 / p["c"], order)
        if fam == "ExpDecayReciprocal":
            tau = Jet.variable(t, order)
            psi = p["a"] * jexp(-p["b"] * tau) + p["c"]
            return 1.0 / psi
        if fam == "LinearRamp":
            c = np.zeros(order + 1)
            c[0] = self.value(t)
            if order >= 1 and t < p["T"]:
                c[1] = 1.0 / (p["eps"] * p["T"])
            return Jet(c)
        tau = Jet.variable(t, order)
        with np.errstate(over="ignore", invalid="ignore"):
            out = eval(self._code, {"__builtins__": {}}, {**_JET_NS, "t": tau})
        if not isinstance(out, Jet):
            out = Jet.constant(out, order)
        return out

    def derivative(self, t: float, order: int = 1) -> float:
        if order == 0:
            return self.value(t)
        return float(self.jet(t, order).derivatives()[order])

    def psi(self, t: float) -> float:
        """Funnel radius 1/phi (infinite where phi vanishes)."""
        v = self.value(t)
        return math.inf if v == 0.0 else 1.0 / v

    # metadata -------------------------------------------------------------
    @property
    def infinite_at_start(self) -> bool:
        return self.value(0.0) == 0.0

    @property
    def bounded(self) -> bool | None:
        if self.family == "Custom":
            return self.params.get("bounded")
        return True

    @property
    def liminf_positive(self) -> bool | None:
        if self.family == "Custom":
            return self.params.get("liminf_positive")
        return True

    @property
    def smoothness(self) -> int:
        """Largest r with phi in C^r (by construction of the family)."""
        if self.family == "LinearRamp":
            return 0
        if self.family == "Custom":
            return self.max_derivative_order
        return 10**6

    def psi_bounds(self) -> tuple[float, float]:
        """Declared (sup psi, sup |psi'|) used by a-priori feasibility inequalities."""
        p = self.params
        if self.family == "ConstantReciprocal":
            return p["c"], 0.0
        if self.family == "ExpDecayReciprocal":
            return p["a"] + p["c"], p["a"] * p["b"]
        if self.family == "LinearRamp":
            return math.inf, math.inf
        raise ClassUndecidableError("Custom funnels carry no declared bounds on psi")


def eval_phi(f: FunnelFunction, t: float, order: int = 0) -> float:
    """d^order phi / dt^order at t."""
    if t < 0:
        raise ValueError("funnel evaluated at negative time")
    if order > f.max_derivative_order:
        raise UnsupportedDerivativeError(
            f"{f.family} supports derivatives up to order {f.max_derivative_order}, got {order}")
    return f.derivative(t, order)


@dataclass(frozen=True)
class FunnelClassReport:
    in_Phi: bool
    in_Phi_r: dict[int, bool]
    lipschitz_constant_estimate: float
    c_estimate: float
    liminf_positive: bool
    bounded: bool
    positive: bool


def _grid(horizon: float) -> np.ndarray:
    return np.linspace(0.0, horizon, GRID_POINTS)


def _derivs_on_grid(f: FunnelFunction, ts: np.ndarray, order: int) -> np.ndarray:
    """Rows 0..order of derivatives on the grid."""
    if f.family in ("ConstantReciprocal", "ExpDecayReciprocal", "LinearRamp") and order <= 1:
        out = np.empty((order + 1, ts.size))
        out[0] = f.values(ts)
        if order == 1:
            p = f.params
            if f.family == "ConstantReciprocal":
                out[1] = 0.0
            elif f.family == "ExpDecayReciprocal":
                ex = p["a"] * np.exp(-p["b"] * ts)
                out[1] = p["b"] * ex / (ex + p["c"]) ** 2
            else:
                out[1] = np.where(ts < p["T"], 1.0 / (p["eps"] * p["T"]), 0.0)
        return out
    # Jets are evaluated pointwise; vectorise by feeding the whole grid as components.
    tau = Jet(np.vstack([ts, np.ones_like(ts)] + [np.zeros_like(ts)] * (order - 1))[: order + 1])
    p = f.params
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if f.family == "ExpDecayReciprocal":
            jet = 1.0 / (p["a"] * jexp(-p["b"] * tau) + p["c"])
        elif f.family == "ConstantReciprocal":
            jet = Jet(np.vstack([np.full_like(ts, 1.0 / p["c"])] + [np.zeros_like(ts)] * order))
        else:
            jet = eval(f._code, {"__builtins__": {}}, {**_JET_NS, "t": tau})
            if not isinstance(jet, Jet):
                jet = Jet(np.vstack([np.full_like(ts, float(jet))] + [np.zeros_like(ts)] * order))
        return jet.derivatives()


def _growth_signature(ratio: np.ndarray) -> bool:
    """True when the grid ratio looks unbounded: still rising at the end and
    clearly above everything seen in the first half of the horizon."""
    n = ratio.size
    head = np.max(ratio[: n // 2])
    tail = ratio[3 * n // 4:]
    rising = np.all(np.diff(tail) >= 0.0)
    return bool(rising and tail[-1] > 1.5 * head and tail[-1] > 1e-9)


def check_class(f: FunnelFunction, r: int | Iterable[int], horizon: float) -> FunnelClassReport:
    """Grid check of membership in Phi and Phi_r on [0, horizon].

    The liminf and boundedness clauses come from the family's declaration;
    the grid can only falsify them.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rs = [r] if isinstance(r, int) else list(r)
    if f.family == "Custom" and (f.bounded is None or f.liminf_positive is None):
        raise ClassUndecidableError(
            "Custom funnel needs declared 'bounded' and 'liminf_positive' for a class check")
    ts = _grid(horizon)
    top = max([1] + [min(ri, f.max_derivative_order) for ri in rs])
    d = _derivs_on_grid(f, ts, top)
    phi, dphi = d[0], d[1]
    finite = bool(np.all(np.isfinite(d)))
    positive = bool(np.all(phi[1:] > 0.0) and phi[0] >= 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.abs(dphi) / (1.0 + phi)
    c_est = float(np.max(ratio)) if finite else math.inf
    lip = float(np.max(np.abs(dphi))) if finite else math.inf
    derivative_ok = finite and not _growth_signature(ratio)
    liminf = bool(f.liminf_positive)
    bounded = bool(f.bounded) and finite and not _growth_signature(np.abs(phi))
    in_phi = positive and derivative_ok and liminf

    in_phi_r: dict[int, bool] = {}
    for ri in rs:
        ok = in_phi and bounded and f.smoothness >= ri and ri <= f.max_derivative_order
        if ok:
            for k in range(1, ri + 1):
                if _growth_signature(np.abs(d[k])):
                    ok = False
        in_phi_r[ri] = bool(ok)
    return FunnelClassReport(in_phi, in_phi_r, lip, c_est, liminf, bounded, positive)


def check_phi2_pair(f0: FunnelFunction, f1: FunnelFunction, horizon: float) -> dict:
    """Grid infimum of (1/phi1) + d/dt(1/phi0) on [0, horizon].

    t = 0 is dropped when phi0(0) = 0 (infinite funnel at the start).
    """
    for f in (f0, f1):
        if f.max_derivative_order < 1:
            raise UnsupportedDerivativeError("pair check needs first derivatives")
    ts = _grid(horizon)
    if f0.value(0.0) == 0.0:
        ts = ts[1:]
    d0 = _derivs_on_grid(f0, ts, 1)
    phi1 = f1.values(ts)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv1 = np.where(phi1 > 0, 1.0 / phi1, np.inf)
        dpsi0 = -d0[1] / d0[0] ** 2
    delta = float(np.min(inv1 + dpsi0))
    return {"ok": bool(delta > 0.0), "delta": delta}

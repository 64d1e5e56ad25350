"""Plant models and reference/disturbance signals used by the closed-loop builder.

Every plant exposes the same small interface:

* ``n``, ``m``, ``r``: state, input/output dimension and relative degree
* ``x0``: initial state
* ``rhs(t, x, u)``: state derivative
* ``output_derivs(t, x)``: array (r, m) with y, y', ..., y^{(r-1)}; these do not
  depend on u by definition of the relative degree
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .operators import History, PointDelay


class PlantError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Signal:
    """Componentwise offset + amp*sin(freq t + phase) with exact derivatives of any order."""

    amp: tuple = (0.0,)
    freq: tuple = (1.0,)
    phase: tuple = (0.0,)
    offset: tuple = (0.0,)

    @classmethod
    def zero(cls, m: int = 1) -> "Signal":
        return cls((0.0,) * m, (1.0,) * m, (0.0,) * m, (0.0,) * m)

    @classmethod
    def sine(cls, amp, freq, phase=None, offset=None) -> "Signal":
        amp = tuple(np.atleast_1d(np.asarray(amp, dtype=float)).tolist())
        m = len(amp)
        freq = tuple(np.broadcast_to(np.asarray(freq, dtype=float), (m,)).tolist())
        phase = (0.0,) * m if phase is None else tuple(np.broadcast_to(np.asarray(phase, float), (m,)).tolist())
        offset = (0.0,) * m if offset is None else tuple(np.broadcast_to(np.asarray(offset, float), (m,)).tolist())
        return cls(amp, freq, phase, offset)

    def __post_init__(self):
        object.__setattr__(self, "_cache", {})

    @property
    def m(self) -> int:
        return len(self.amp)

    def _tables(self, order: int):
        tab = self._cache.get(order)
        if tab is None:
            w = np.asarray(self.freq, dtype=float)
            j = np.arange(order + 1)[:, None]
            tab = (np.asarray(self.amp, dtype=float) * w**j, w,
                   np.asarray(self.phase, dtype=float) + 0.5 * math.pi * j, np.asarray(self.offset, dtype=float))
            self._cache[order] = tab
        return tab

    def derivs(self, t: float, order: int) -> np.ndarray:
        """Array (order+1, m) of y_ref, y_ref', ..., y_ref^{(order)} at t."""
        aw, w, ph, off = self._tables(order)
        out = aw * np.sin(w * t + ph)
        out[0] += off
        return out

    def __call__(self, t: float) -> np.ndarray:
        return self.derivs(t, 0)[0]

    def sup(self, order: int = 0) -> float:
        """Declared sup-norm (Euclidean over components) of the order-th derivative."""
        a = np.abs(np.asarray(self.amp)) * np.abs(np.asarray(self.freq)) ** order
        if order == 0:
            a = a + np.abs(np.asarray(self.offset))
        return float(np.linalg.norm(a))

    def to_dict(self) -> dict:
        return {"kind": "sine", "amp": list(self.amp), "freq": list(self.freq),
                "phase": list(self.phase), "offset": list(self.offset)}

    @classmethod
    def from_dict(cls, d: dict) -> "Signal":
        if d.get("kind", "sine") == "zero":
            return cls.zero(int(d.get("m", 1)))
        return cls.sine(d["amp"], d.get("freq", 1.0), d.get("phase"), d.get("offset"))


def disturbance(spec: Optional[dict]):
    """Scalar disturbance d(t) from a config entry."""
    if spec is None or spec.get("kind", "none") == "none":
        return lambda t: 0.0
    kind = spec["kind"]
    if kind == "constant":
        c = float(spec["value"])
        return lambda t: c
    if kind == "sine":
        a, w = float(spec["amp"]), float(spec.get("freq", 1.0))
        return lambda t: a * math.sin(w * t)
    if kind == "prototype":
        # makes ((1+t)^{-1/3}, 3((1+t)^{1/3}-1)) the exact solution under u = -k x, k' = x^2
        return lambda t: 3.0 - (10.0 + 9.0 * t) / (3.0 * (1.0 + t) ** (4.0 / 3.0))
    raise PlantError(f"unknown disturbance kind {kind!r}")


# ---------------------------------------------------------------------------
# Plants
# ---------------------------------------------------------------------------


class Plant:
    n: int
    m: int
    r: int
    x0: np.ndarray
    control_sign: float = 1.0

    def rhs(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_derivs(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.output_derivs(t, x)[0]

    def on_accept(self, t: float, x: np.ndarray, dx: np.ndarray) -> None:
        """Hook for history-carrying plants (delays)."""

    def max_step(self) -> float:
        return math.inf


@dataclass
class ScalarPlant(Plant):
    """x' = a x + b u + d(t), y = c x."""

    a: float
    b: float
    c: float
    x_init: float
    dist: Optional[dict] = None

    def __post_init__(self):
        if self.b * self.c == 0:
            raise PlantError("cb must be nonzero")
        self.n, self.m, self.r = 1, 1, 1
        self.x0 = np.array([self.x_init], dtype=float)
        self._d = disturbance(self.dist)
        self.control_sign = math.copysign(1.0, self.b * self.c)

    def rhs(self, t, x, u):
        return np.array([self.a * x[0] + self.b * u[0] + self._d(t)])

    def output_derivs(self, t, x):
        return np.array([[self.c * x[0]]])


@dataclass
class LtiPlant(Plant):
    """x' = A x + B u, y = C x with strict relative degree r."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x_init: np.ndarray

    def __post_init__(self):
        from .lti import LtiSystem, relative_degree

        sys = LtiSystem(self.A, self.B, self.C)
        rd = relative_degree(sys)
        if rd is None:
            raise PlantError("system has no strict relative degree")
        self.A, self.B, self.C = sys.A, sys.B, sys.C
        self.n, self.m, self.r = sys.n, sys.m, rd.r
        self.Gamma = rd.Gamma
        self.x0 = np.asarray(self.x_init, dtype=float).reshape(self.n)
        self._CA = np.stack([self.C @ np.linalg.matrix_power(self.A, j) for j in range(self.r)])
        ev = np.linalg.eigvalsh(0.5 * (self.Gamma + self.Gamma.T))
        self.control_sign = 1.0 if ev[0] > 0 else -1.0

    def rhs(self, t, x, u):
        return self.A @ x + self.B @ u

    def output_derivs(self, t, x):
        return self._CA @ x


@dataclass
class RobotPlant(Plant):
    """Planar two-link arm M(y) y'' + C(y, y') y' + G(y) = u."""

    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    g: float = 9.81
    y_init: tuple = (0.0, 0.0)
    v_init: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.n, self.m, self.r = 4, 2, 2
        self.x0 = np.array([*self.y_init, *self.v_init], dtype=float)

    def mass(self, y) -> np.ndarray:
        m1, m2, l1, l2 = self.m1, self.m2, self.l1, self.l2
        c2 = math.cos(y[1])
        off = m2 * (l2 * l2 + l1 * l2 * c2)
        return np.array([[m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2 * l1 * l2 * c2), off],
                         [off, m2 * l2 * l2]])

    def coriolis(self, y, v) -> np.ndarray:
        h = self.m2 * self.l1 * self.l2 * math.sin(y[1])
        return np.array([[-2.0 * h * v[0], -h * v[1]], [-h * v[0], 0.0]])

    def gravity(self, y) -> np.ndarray:
        m1, m2, l1, l2, g = self.m1, self.m2, self.l1, self.l2, self.g
        c1, c12 = math.cos(y[0]), math.cos(y[0] + y[1])
        return g * np.array([m1 * l1 * c1 + m2 * (l1 * c1 + l2 * c12), m2 * l2 * c12])

    def rhs(self, t, x, u):
        y1, y2, v1, v2 = x.tolist()
        m1, m2, l1, l2, g = self.m1, self.m2, self.l1, self.l2, self.g
        c2, s2 = math.cos(y2), math.sin(y2)
        c1, c12 = math.cos(y1), math.cos(y1 + y2)
        M11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2 * l1 * l2 * c2)
        M12 = m2 * (l2 * l2 + l1 * l2 * c2)
        M22 = m2 * l2 * l2
        h = m2 * l1 * l2 * s2
        b1 = u[0] + 2.0 * h * v1 * v1 + h * v2 * v2 - g * (m1 * l1 * c1 + m2 * (l1 * c1 + l2 * c12))
        b2 = u[1] + h * v1 * v1 - g * m2 * l2 * c12
        # 2x2 Cholesky factorisation of M doubles as the positive-definiteness check
        if not M11 > 0:
            raise np.linalg.LinAlgError("mass matrix is not positive definite")
        L11 = math.sqrt(M11)
        L21 = M12 / L11
        d = M22 - L21 * L21
        if not d > 0:
            raise np.linalg.LinAlgError("mass matrix is not positive definite")
        L22 = math.sqrt(d)
        z1 = b1 / L11
        z2 = (b2 - L21 * z1) / L22
        a2 = z2 / L22
        a1 = (z1 - L21 * a2) / L11
        return np.array([v1, v2, a1, a2])

    def output_derivs(self, t, x):
        return np.array([x[:2], x[2:]])


@dataclass
class PureFeedbackPlant(Plant):
    """Scalar pure-feedback chain of length r with trivial internal dynamics.

    x_k' = x_{k+1} + sigma * tanh(x_1 ... x_k mix) + 0.25 * x_{k+1}^3 / (1 + x_{k+1}^2) for k < r,
    x_r' = (1 + 0.5 sin(x_1)^2) u + sigma * sin(x_r); y = x_1.
    """

    r_chain: int = 2
    sigma: float = 0.5
    x_init: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.n, self.m, self.r = self.r_chain, 1, 1
        self.x0 = np.asarray(self.x_init, dtype=float).reshape(self.n)

    def rhs(self, t, x, u):
        n = self.n
        dx = np.empty(n)
        for k in range(n - 1):
            nxt = x[k + 1]
            dx[k] = nxt + 0.25 * nxt**3 / (1.0 + nxt * nxt) + self.sigma * math.tanh(np.sum(x[:k + 1]))
        dx[-1] = (1.0 + 0.5 * math.sin(x[0]) ** 2) * u[0] + self.sigma * math.sin(x[-1])
        return dx

    def output_derivs(self, t, x):
        return np.array([[x[0]]])

    def chain(self, x) -> np.ndarray:
        return x.reshape(self.n, 1)


@dataclass
class DelayScalarPlant(Plant):
    """y' = a y + c_d y(t - h) + b u with a point-delay operator and constant prehistory."""

    a: float
    b: float
    c_d: float
    h: float
    y_init: float

    def __post_init__(self):
        if self.h <= 0 or self.b == 0:
            raise PlantError("need h > 0 and b != 0")
        self.n, self.m, self.r = 1, 1, 1
        self.x0 = np.array([self.y_init])
        self.op = PointDelay([lambda t, v: self.c_d * v], [self.h])
        self.history = History(1, lambda s: np.array([self.y_init]), start=0.0, memory=self.h)
        self.control_sign = math.copysign(1.0, self.b)

    def rhs(self, t, x, u):
        delayed = self.op.apply(self.history, t)
        return np.array([self.a * x[0] + delayed[0] + self.b * u[0]])

    def output_derivs(self, t, x):
        return np.array([[x[0]]])

    def on_accept(self, t, x, dx):
        self.history.append(t, x, dx)

    def max_step(self) -> float:
        return self.h


def build_plant(d: dict) -> Plant:
    kind = d["kind"]
    if kind == "scalar":
        return ScalarPlant(d["a"], d["b"], d["c"], d["x0"], d.get("disturbance"))
    if kind == "lti":
        return LtiPlant(np.array(d["A"], float), np.array(d["B"], float), np.array(d["C"], float),
                        np.array(d["x0"], float))
    if kind == "heat_modal":
        from .scenarios import heat_modal_matrices

        A, B, C, x0 = heat_modal_matrices(int(d["n_modes"]), d.get("z0", "zero"))
        return LtiPlant(A, B, C, x0)
    if kind == "robot":
        keys = ("m1", "m2", "l1", "l2", "g")
        return RobotPlant(**{k: float(d[k]) for k in keys if k in d},
                          y_init=tuple(d.get("y0", (0.0, 0.0))), v_init=tuple(d.get("v0", (0.0, 0.0))))
    if kind == "pure_feedback":
        return PureFeedbackPlant(int(d["r"]), float(d.get("sigma", 0.5)), tuple(d["x0"]))
    if kind == "delay_scalar":
        return DelayScalarPlant(d["a"], d["b"], d["c_d"], d["h"], d["y0"])
    raise PlantError(f"unknown system kind {kind!r}")

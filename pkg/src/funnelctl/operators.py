"""Causal operators, nonlinearity metadata, and input nonlinearities."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.integrate as sint
import scipy.linalg as sla

from .lti import sign_definite


class OperatorError(ValueError):
    pass


class InsufficientHistoryError(OperatorError):
    pass


class UnboundedOperatorWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# Sampled input history with cubic Hermite interpolation
# ---------------------------------------------------------------------------


class History:
    """Piecewise cubic Hermite store of a vector signal on [t0 - h, t_last].

    ``prehistory`` supplies values (and optionally derivatives) before the first
    sample; it plays the role of the initial trajectory on [-h, 0].
    """

    def __init__(self, dim: int, prehistory: Optional[Callable[[float], np.ndarray]] = None,
                 start: float = 0.0, memory: float = 0.0):
        self.dim = dim
        self.prehistory = prehistory
        self.start = start
        self.memory = memory
        self._t: list[float] = []
        self._y: list[np.ndarray] = []
        self._dy: list[np.ndarray] = []

    def append(self, t: float, y, dy) -> None:
        if self._t and t <= self._t[-1]:
            raise OperatorError("history times must increase")
        self._t.append(float(t))
        self._y.append(np.asarray(y, dtype=float).reshape(self.dim))
        self._dy.append(np.asarray(dy, dtype=float).reshape(self.dim))

    @classmethod
    def from_function(cls, f: Callable[[float], np.ndarray], df: Callable[[float], np.ndarray],
                      t_end: float, n: int = 2001, memory: float = 0.0) -> "History":
        dim = np.atleast_1d(f(0.0)).size
        h = cls(dim, prehistory=lambda s: np.atleast_1d(f(s)), start=0.0, memory=memory)
        for t in np.linspace(0.0, t_end, n):
            h.append(t, np.atleast_1d(f(t)), np.atleast_1d(df(t)))
        return h

    @property
    def t_last(self) -> float:
        return self._t[-1] if self._t else self.start

    def __call__(self, t: float) -> np.ndarray:
        if not self._t or t < self._t[0]:
            if self.prehistory is None or t < self.start - self.memory - 1e-12:
                raise InsufficientHistoryError(f"no history at t={t}")
            return np.asarray(self.prehistory(t), dtype=float).reshape(self.dim)
        ts = self._t
        if t > ts[-1] + 1e-12 * max(1.0, abs(ts[-1])):
            raise InsufficientHistoryError(f"history ends at {ts[-1]}, requested {t}")
        i = int(np.searchsorted(ts, t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 2) if len(ts) > 1 else 0
        if len(ts) == 1:
            return self._y[0].copy()
        t0, t1 = ts[i], ts[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * self._y[i] + h10 * h * self._dy[i] + h01 * self._y[i + 1] + h11 * h * self._dy[i + 1]


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


class CausalOperator:
    memory_h: float = 0.0
    input_dim: int = 1
    output_dim: int = 1
    state_dim: int = 0

    def apply(self, history: History, t: float) -> np.ndarray:
        raise NotImplementedError


@dataclass
class PointDelay(CausalOperator):
    """sum_i Psi_i(t, y(t - h_i))."""

    psis: Sequence[Callable[[float, np.ndarray], np.ndarray]]
    delays: Sequence[float]
    input_dim: int = 1
    output_dim: int = 1

    def __post_init__(self):
        if len(self.psis) != len(self.delays) or any(h < 0 for h in self.delays):
            raise OperatorError("one non-negative delay per Psi_i required")
        self.memory_h = max(self.delays) if self.delays else 0.0

    def apply(self, history: History, t: float) -> np.ndarray:
        out = np.zeros(self.output_dim)
        for psi, h in zip(self.psis, self.delays):
            out = out + np.atleast_1d(psi(t, history(t - h)))
        return out


@dataclass
class DistributedDelay(CausalOperator):
    """int_{-h0}^0 Psi0(s, y(t + s)) ds by composite Gauss-Legendre quadrature."""

    psi0: Callable[[float, np.ndarray], np.ndarray]
    h0: float
    order: int = 5
    panels: int = 8
    input_dim: int = 1
    output_dim: int = 1

    def __post_init__(self):
        if self.h0 <= 0:
            raise OperatorError("h0 must be positive")
        self.memory_h = self.h0
        x, w = np.polynomial.legendre.leggauss(self.order)
        edges = np.linspace(-self.h0, 0.0, self.panels + 1)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
            weights.append(0.5 * (b - a) * w)
        self._nodes = np.concatenate(nodes)
        self._weights = np.concatenate(weights)

    def apply(self, history: History, t: float) -> np.ndarray:
        out = np.zeros(self.output_dim)
        for s, w in zip(self._nodes, self._weights):
            out = out + w * np.atleast_1d(self.psi0(s, history(t + s)))
        return out


@dataclass
class InternalDynamicsLTI(CausalOperator):
    """eta' = Q eta + P y, output S eta.  Carries its own state for augmentation."""

    Q: np.ndarray
    P: np.ndarray
    S: np.ndarray
    eta0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.S = np.atleast_2d(np.asarray(self.S, dtype=float))
        k = self.Q.shape[0]
        if self.P.shape[0] != k or self.S.shape[1] != k:
            raise OperatorError("inconsistent (Q, P, S) dimensions")
        self.state_dim = k
        self.input_dim = self.P.shape[1]
        self.output_dim = self.S.shape[0]
        self.eta0 = np.zeros(k) if self.eta0 is None else np.asarray(self.eta0, dtype=float)

    @property
    def hurwitz(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.Q).real < 0))

    def rhs(self, eta: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.Q @ eta + self.P @ np.atleast_1d(y)

    def output(self, eta: np.ndarray) -> np.ndarray:
        return self.S @ eta

    def apply(self, history: History, t: float, rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
        """Standalone evaluation: integrates eta on [0, t] against the stored input."""
        if t == 0.0:
            return self.output(self.eta0)
        sol = sint.solve_ivp(lambda s, eta: self.rhs(eta, history(s)), (0.0, t), self.eta0,
                             rtol=rtol, atol=atol, method="DOP853")
        return self.output(sol.y[:, -1])

    def gain_integral(self) -> float:
        """int_0^inf ||exp(Q tau)|| d tau (spectral norm), by adaptive quadrature."""
        if not self.hurwitz:
            return math.inf
        val, _ = sint.quad(lambda s: np.linalg.norm(sla.expm(self.Q * s), 2), 0.0, np.inf, limit=200)
        return float(val)


@dataclass
class Relay(CausalOperator):
    """Two-threshold relay (hysteresis stub): +1 above ``upper``, -1 below ``lower``,
    otherwise it holds its previous value."""

    lower: float
    upper: float
    initial: float = -1.0
    samples_per_unit: int = 200

    def __post_init__(self):
        if not self.lower < self.upper:
            raise OperatorError("relay needs lower < upper")
        self.memory_h = 0.0

    def apply(self, history: History, t: float) -> np.ndarray:
        state = self.initial
        n = max(2, int(math.ceil(t * self.samples_per_unit)) + 1)
        for s in np.linspace(0.0, t, n):
            v = float(history(s)[0])
            if v >= self.upper:
                state = 1.0
            elif v <= self.lower:
                state = -1.0
        return np.array([state])


@dataclass
class Composite(CausalOperator):
    parts: Sequence[CausalOperator] = field(default_factory=list)

    def __post_init__(self):
        self.memory_h = max((p.memory_h for p in self.parts), default=0.0)
        self.output_dim = sum(p.output_dim for p in self.parts)

    def apply(self, history: History, t: float) -> np.ndarray:
        return np.concatenate([np.atleast_1d(p.apply(history, t)) for p in self.parts])


def apply(op: CausalOperator, history: History, t: float) -> np.ndarray:
    if t - op.memory_h < history.start - history.memory - 1e-12 and history.prehistory is None:
        raise InsufficientHistoryError("history does not cover [t - h, t]")
    return op.apply(history, t)


def random_bounded_signal(rng: np.random.Generator, dim: int, c1: float, n_terms: int = 6,
                          max_freq: float = 3.0):
    """Band-limited random signal with sup norm at most c1 (per component and in 2-norm)."""
    amps = rng.uniform(0.2, 1.0, size=(n_terms, dim))
    amps *= (c1 / math.sqrt(dim)) / amps.sum(axis=0)
    freqs = rng.uniform(0.0, max_freq, size=(n_terms, dim))
    phases = rng.uniform(0.0, 2 * math.pi, size=(n_terms, dim))

    def f(t):
        return np.sum(amps * np.cos(freqs * t + phases), axis=0)

    def df(t):
        return np.sum(-amps * freqs * np.sin(freqs * t + phases), axis=0)

    return f, df


def bibo_probe(op: CausalOperator, c1: float, trials: int, horizon: float, seed: int = 0) -> dict:
    """Drive ``op`` with random inputs bounded by c1 and report the observed output sup."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    analytic = None
    if isinstance(op, InternalDynamicsLTI):
        if not op.hurwitz:
            warnings.warn("Q is not Hurwitz: operator is not BIBO", UnboundedOperatorWarning)
        else:
            analytic = (np.linalg.norm(op.S, 2) * np.linalg.norm(op.P, 2) * c1 * op.gain_integral())
    sup = 0.0
    ts = np.linspace(0.0, horizon, 401)
    for trial in range(trials):
        if trial == 0:
            # the constant input at full amplitude is the extremal band-limited signal
            level = np.full(op.input_dim, c1 / math.sqrt(op.input_dim))
            f, df = (lambda s, v=level: v), (lambda s, v=level: np.zeros_like(v))
        else:
            f, df = random_bounded_signal(rng, op.input_dim, c1)
        if isinstance(op, InternalDynamicsLTI):
            sol = sint.solve_ivp(lambda s, eta: op.rhs(eta, f(s)),
                                 (0.0, horizon), np.zeros(op.state_dim), t_eval=ts,
                                 rtol=1e-9, atol=1e-12, method="DOP853")
            outs = op.S @ sol.y
            sup = max(sup, float(np.max(np.linalg.norm(outs, axis=0))))
        else:
            hist = History.from_function(f, df, horizon, memory=op.memory_h)
            for t in ts[:: 4]:
                sup = max(sup, float(np.linalg.norm(op.apply(hist, t))))
    return {"c2_estimate": sup, "analytic_bound": analytic}


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Nonlinearity:
    """f(d, z, u) with declared control direction; ``affine_gamma`` marks f0(d,z) + Gamma u."""

    p: int
    q: int
    m: int
    eval: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    control_direction: str = "Unknown"
    affine_gamma: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.control_direction not in ("Positive", "Negative", "Unknown"):
            raise OperatorError("control_direction must be Positive, Negative or Unknown")

    @classmethod
    def affine(cls, L1: np.ndarray, L2: np.ndarray, Gamma: np.ndarray) -> "Nonlinearity":
        L1, L2, G = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (L1, L2, Gamma))
        Hs = 0.5 * (G + G.T)
        ev = np.linalg.eigvalsh(Hs)
        direction = "Positive" if np.all(ev > 0) else "Negative" if np.all(ev < 0) else "Unknown"
        return cls(L1.shape[1], L2.shape[1], G.shape[0],
                   lambda d, z, u: L1 @ d + L2 @ z + G @ u, direction, G)


def np1_linear_check(L1: np.ndarray, L2: np.ndarray, Gamma: np.ndarray) -> bool:
    """For affine f = L1 d + L2 z + Gamma u the high-gain property holds iff Gamma is sign definite."""
    G = np.atleast_2d(np.asarray(Gamma, dtype=float))
    if G.shape[0] != G.shape[1]:
        raise OperatorError("Gamma must be square")
    return sign_definite(G)


@dataclass(frozen=True)
class InputNonlinearity:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "Saturating":
            raise OperatorError("a saturating input map is not surjective and is rejected")
        if self.kind not in ("Linear", "SignedSquare", "DeadZone"):
            raise OperatorError(f"unknown input nonlinearity {self.kind!r}")
        if self.kind == "DeadZone":
            bl, br = self.params.get("b_l"), self.params.get("b_r")
            if bl is None or br is None or not bl < 0 < br:
                raise OperatorError("dead-zone needs b_l < 0 < b_r")
        if self.kind == "Linear" and self.params.get("a", 1.0) == 0:
            raise OperatorError("linear input map with zero slope is not surjective")

    @property
    def surjective_unbounded(self) -> bool:
        return True

    def __call__(self, v: float) -> float:
        if self.kind == "Linear":
            return self.params.get("a", 1.0) * v + self.params.get("b", 0.0)
        if self.kind == "SignedSquare":
            return self.params.get("a", 1.0) * v * abs(v)
        return deadzone_eval(self, v)


def deadzone(b_l: float, b_r: float, D_l: Optional[Callable] = None,
             D_r: Optional[Callable] = None) -> InputNonlinearity:
    return InputNonlinearity("DeadZone", {"b_l": b_l, "b_r": b_r, "D_l": D_l, "D_r": D_r})


def deadzone_eval(dz: InputNonlinearity, v: float) -> float:
    if dz.kind != "DeadZone":
        raise OperatorError("not a dead-zone")
    bl, br = dz.params["b_l"], dz.params["b_r"]
    if v >= br:
        D_r = dz.params.get("D_r") or (lambda x: x - br)
        return float(D_r(v))
    if v <= bl:
        D_l = dz.params.get("D_l") or (lambda x: x - bl)
        return float(D_l(v))
    return 0.0


def deadzone_inverse(dz: InputNonlinearity, w: float) -> float:
    """Right inverse for the default shifted-identity branches."""
    bl, br = dz.params["b_l"], dz.params["b_r"]
    if w > 0:
        return w + br
    if w < 0:
        return w + bl
    return 0.0

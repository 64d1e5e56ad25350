"""Small exact-differentiation helpers.

Two tools live here:

* ``Jet``: truncated Taylor expansions in one variable (time), used to get
  exact higher derivatives of closed-form funnel expressions and to resolve
  the shorthand derivatives of the non-backstepping controller.
* ``Dual``: tagged forward-mode dual numbers.  Tags make nesting safe, so a
  function that internally differentiates another function can itself be
  differentiated (needed by the filter controller recursion).
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np


# ---------------------------------------------------------------------------
# Taylor jets
# ---------------------------------------------------------------------------


class Jet:
    """Truncated power series ``sum_j c[j] tau**j`` (coefficients, not derivatives).

    ``c`` has shape ``(K+1, *shape)``; the trailing axes hold vector components.
    """

    __slots__ = ("c",)
    __array_priority__ = 1000

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)

    @classmethod
    def from_derivatives(cls, derivs) -> "Jet":
        d = np.asarray(derivs, dtype=float)
        fact = np.array([math.factorial(j) for j in range(d.shape[0])], dtype=float)
        return cls(d / fact.reshape((-1,) + (1,) * (d.ndim - 1)))

    @classmethod
    def variable(cls, t: float, order: int) -> "Jet":
        c = np.zeros(order + 1)
        c[0] = t
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        v = np.asarray(value, dtype=float)
        c = np.zeros((order + 1,) + v.shape)
        c[0] = v
        return cls(c)

    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    @property
    def value(self):
        return self.c[0]

    def derivatives(self) -> np.ndarray:
        fact = np.array([math.factorial(j) for j in range(self.order + 1)], dtype=float)
        return self.c * fact.reshape((-1,) + (1,) * (self.c.ndim - 1))

    def deriv(self) -> "Jet":
        """Series of the time derivative; loses one order."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        k = np.arange(1, self.order + 1, dtype=float)
        return Jet(self.c[1:] * k.reshape((-1,) + (1,) * (self.c.ndim - 1)))

    def truncate(self, order: int) -> "Jet":
        return Jet(self.c[: order + 1])

    def sum(self) -> "Jet":
        """Sum over component axes."""
        if self.c.ndim == 1:
            return self
        return Jet(self.c.reshape(self.c.shape[0], -1).sum(axis=1))

    def __getitem__(self, idx) -> "Jet":
        return Jet(self.c[(slice(None),) + (idx if isinstance(idx, tuple) else (idx,))])

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            k = min(self.order, other.order)
            return _align(self.c[: k + 1], other.c[: k + 1])
        o = np.asarray(other, dtype=float)
        oc = np.zeros((self.order + 1,) + o.shape)
        oc[0] = o
        return _align(self.c, oc)

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a + b)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a - b)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        return Jet(b - a)

    def __neg__(self):
        return Jet(-self.c)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            o = np.asarray(other, dtype=float)
            a, b = _align(self.c, o[None, ...])
            return Jet(a * b)
        a, b = self._coerce(other)
        return Jet(_cauchy(a, b))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            o = np.asarray(other, dtype=float)
            a, b = _align(self.c, o[None, ...])
            return Jet(a / b)
        a, b = self._coerce(other)
        return Jet(_series_div(a, b))

    def __rtruediv__(self, other):
        a, b = self._coerce(other)
        return Jet(_series_div(b, a))

    def __pow__(self, p):
        if isinstance(p, Jet):
            return jexp(p * jlog(self))
        if float(p).is_integer() and p >= 0:
            out = Jet.constant(np.ones_like(self.c[0]), self.order)
            for _ in range(int(p)):
                out = out * self
            return out
        return Jet(_series_pow(self.c, float(p)))

    def __rpow__(self, base):
        return jexp(self * math.log(base))

    def __repr__(self) -> str:
        return f"Jet({self.c!r})"


def _align(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pad component axes so that a lower-rank operand broadcasts over the other."""
    da, db = a.ndim, b.ndim
    if da < db:
        a = a.reshape(a.shape[:1] + (1,) * (db - da) + a.shape[1:])
    elif db < da:
        b = b.reshape(b.shape[:1] + (1,) * (da - db) + b.shape[1:])
    return a, b


def _cauchy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(n):
        acc = a[0] * b[k]
        for j in range(1, k + 1):
            acc = acc + a[j] * b[k - j]
        out[k] = acc
    return out


def _series_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    q = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(n):
        acc = a[k]
        for j in range(1, k + 1):
            acc = acc - b[j] * q[k - j]
        q[k] = acc / b[0]
    return q


def _series_pow(a: np.ndarray, p: float) -> np.ndarray:
    n = a.shape[0]
    y = np.zeros_like(a)
    y[0] = a[0] ** p
    for k in range(1, n):
        acc = np.zeros_like(a[0])
        for j in range(1, k + 1):
            acc = acc + (p * j - (k - j)) * a[j] * y[k - j]
        y[k] = acc / (k * a[0])
    return y


def jexp(x: Jet) -> Jet:
    a = x.c
    e = np.zeros_like(a)
    e[0] = np.exp(a[0])
    for k in range(1, a.shape[0]):
        acc = np.zeros_like(a[0])
        for j in range(1, k + 1):
            acc = acc + j * a[j] * e[k - j]
        e[k] = acc / k
    return Jet(e)


def jlog(x: Jet) -> Jet:
    a = x.c
    l = np.zeros_like(a)
    l[0] = np.log(a[0])
    for k in range(1, a.shape[0]):
        acc = np.zeros_like(a[0])
        for j in range(1, k):
            acc = acc + j * l[j] * a[k - j]
        l[k] = (a[k] - acc / k) / a[0]
    return Jet(l)


def _jsincos(x: Jet) -> tuple[Jet, Jet]:
    a = x.c
    s = np.zeros_like(a)
    c = np.zeros_like(a)
    s[0], c[0] = np.sin(a[0]), np.cos(a[0])
    for k in range(1, a.shape[0]):
        ss = np.zeros_like(a[0])
        cc = np.zeros_like(a[0])
        for j in range(1, k + 1):
            ss = ss + j * a[j] * c[k - j]
            cc = cc + j * a[j] * s[k - j]
        s[k] = ss / k
        c[k] = -cc / k
    return Jet(s), Jet(c)


def jsin(x: Jet) -> Jet:
    return _jsincos(x)[0]


def jcos(x: Jet) -> Jet:
    return _jsincos(x)[1]


def jsqrt(x: Jet) -> Jet:
    return Jet(_series_pow(x.c, 0.5))


# ---------------------------------------------------------------------------
# Tagged dual numbers
# ---------------------------------------------------------------------------

_TAGS = itertools.count(1)


class Dual:
    """``val + eps * d`` where ``d`` is an infinitesimal identified by ``tag``.

    A dual of tag ``t`` only ever contains duals of smaller tags in its parts,
    which is what keeps nested differentiation from confusing perturbations.
    """

    __slots__ = ("tag", "val", "eps")

    def __init__(self, tag: int, val, eps):
        self.tag = tag
        self.val = val
        self.eps = eps

    def __add__(self, o):
        t = _top(self, o)
        av, ae = _split(self, t)
        bv, be = _split(o, t)
        return Dual(t, av + bv, ae + be)

    __radd__ = __add__

    def __sub__(self, o):
        t = _top(self, o)
        av, ae = _split(self, t)
        bv, be = _split(o, t)
        return Dual(t, av - bv, ae - be)

    def __rsub__(self, o):
        t = _top(self, o)
        av, ae = _split(self, t)
        bv, be = _split(o, t)
        return Dual(t, bv - av, be - ae)

    def __neg__(self):
        return Dual(self.tag, -self.val, -self.eps)

    def __mul__(self, o):
        t = _top(self, o)
        av, ae = _split(self, t)
        bv, be = _split(o, t)
        return Dual(t, av * bv, ae * bv + av * be)

    __rmul__ = __mul__

    def __truediv__(self, o):
        t = _top(self, o)
        av, ae = _split(self, t)
        bv, be = _split(o, t)
        return Dual(t, av / bv, (ae * bv - av * be) / (bv * bv))

    def __rtruediv__(self, o):
        t = _top(self, o)
        av, ae = _split(self, t)
        bv, be = _split(o, t)
        return Dual(t, bv / av, (be * av - bv * ae) / (av * av))

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        if p == 2:
            return self * self
        return Dual(self.tag, self.val**p, p * self.val ** (p - 1) * self.eps)

    def __float__(self):
        return float(primal(self))

    def __lt__(self, o):
        return primal(self) < primal(o)

    def __le__(self, o):
        return primal(self) <= primal(o)

    def __gt__(self, o):
        return primal(self) > primal(o)

    def __ge__(self, o):
        return primal(self) >= primal(o)

    def __repr__(self) -> str:
        return f"Dual(tag={self.tag}, val={self.val!r}, eps={self.eps!r})"


def _top(a, b) -> int:
    ta = a.tag if isinstance(a, Dual) else 0
    tb = b.tag if isinstance(b, Dual) else 0
    return max(ta, tb)


def _split(x, tag: int):
    if isinstance(x, Dual) and x.tag == tag:
        return x.val, x.eps
    return x, 0.0


def primal(x) -> float:
    while isinstance(x, Dual):
        x = x.val
    return float(x)


def _lift(f: Callable, df: Callable) -> Callable:
    def g(x):
        if isinstance(x, Dual):
            return Dual(x.tag, g(x.val), df(x.val) * x.eps)
        return f(x)

    return g


sin_d = _lift(math.sin, lambda v: cos_d(v))
cos_d = _lift(math.cos, lambda v: -sin_d(v))
exp_d = _lift(math.exp, lambda v: exp_d(v))


def sqrt_d(x):
    """Square root; at zero the derivative is taken as 0 (subgradient choice)."""
    if isinstance(x, Dual):
        v = sqrt_d(x.val)
        if primal(v) == 0.0:
            return Dual(x.tag, v, 0.0 * x.eps)
        return Dual(x.tag, v, x.eps / (2.0 * v))
    return math.sqrt(x)


def norm_d(xs: Sequence) -> object:
    """Euclidean norm of a list of scalars (floats or duals)."""
    acc = 0.0
    for x in xs:
        acc = acc + x * x
    return sqrt_d(acc)


def jacobian(f: Callable[[list], list], x: Sequence) -> list[list]:
    """Forward-mode Jacobian ``J[i][j] = d f_i / d x_j``; ``x`` may hold duals."""
    cols = []
    n = len(x)
    for j in range(n):
        tag = next(_TAGS)
        xs = [Dual(tag, x[i], 1.0 if i == j else 0.0) for i in range(n)]
        out = f(xs)
        cols.append([o.eps if isinstance(o, Dual) and o.tag == tag else 0.0 for o in out])
    m = len(cols[0]) if cols else 0
    return [[cols[j][i] for j in range(n)] for i in range(m)]

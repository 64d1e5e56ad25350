"""Feedback laws: adaptive prototypes, funnel controllers and their relatives.

All laws are pure maps from instantaneous measurements (plus small dynamic
controller state where the law is dynamic) to control values.  Domain
violations raise ``FunnelBreach``; the integrator treats that as a rejected step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from ._autodiff import Dual, Jet, cos_d, jacobian, norm_d, primal, sin_d
from .funnel import FunnelFunction

GUARD = 1.0 - 1e-12


class ControllerError(ValueError):
    pass


class FunnelBreach(ControllerError):
    """State left (or touched) the open domain of a feedback law."""

    def __init__(self, message: str, stage: Any = None):
        super().__init__(message)
        self.stage = stage


class DesignError(ControllerError):
    pass


class InfeasibleConfigError(ControllerError):
    pass


# ---------------------------------------------------------------------------
# Design functions alpha and N
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Alpha:
    """Bijection [0,1) -> [1,inf): Reciprocal 1/(1-s) or PowerReciprocal (1-s)^(-beta)."""

    kind: str = "Reciprocal"
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("Reciprocal", "PowerReciprocal"):
            raise DesignError(f"unknown alpha {self.kind!r}")
        if self.beta <= 0:
            raise DesignError("beta must be positive")

    def __call__(self, s):
        if self.kind == "Reciprocal" or self.beta == 1.0:
            return 1.0 / (1.0 - s)
        return (1.0 - s) ** (-self.beta)

    def a(self, kappa):
        """The map with alpha' = a(alpha)."""
        if self.kind == "Reciprocal" or self.beta == 1.0:
            return kappa * kappa
        return self.beta * kappa ** ((self.beta + 1.0) / self.beta)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta": self.beta}


@dataclass(frozen=True)
class NFun:
    """Surjection used by the funnel controller (and the Nussbaum gain map)."""

    kind: str = "NegIdentity"
    fn: Optional[Callable] = field(default=None, compare=False)
    dfn: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("NegIdentity", "PosIdentity", "SSinS", "KSqCosK", "Custom"):
            raise DesignError(f"unknown N {self.kind!r}")
        if self.kind == "Custom" and self.fn is None:
            raise DesignError("Custom N needs a callable")

    def __call__(self, s):
        k = self.kind
        if k == "NegIdentity":
            return -s
        if k == "PosIdentity":
            return s
        if k == "SSinS":
            return s * sin_d(s)
        if k == "KSqCosK":
            return s * s * cos_d(s)
        return self.fn(s)

    def deriv(self, s):
        k = self.kind
        if k == "NegIdentity":
            return -1.0
        if k == "PosIdentity":
            return 1.0
        if k == "SSinS":
            return sin_d(s) + s * cos_d(s)
        if k == "KSqCosK":
            return 2.0 * s * cos_d(s) - s * s * sin_d(s)
        if self.dfn is not None:
            return self.dfn(s)
        tag_j = jacobian(lambda z: [self.fn(z[0])], [s])
        return tag_j[0][0]

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class DesignParams:
    alpha: Alpha
    N: NFun
    phi: FunnelFunction
    r: int = 1
    r_hat: int = 1

    def __post_init__(self):
        if not 1 <= self.r_hat <= self.r:
            raise DesignError("r_hat must lie in [1, r]")
        if self.r_hat < self.r and not self.phi.bounded:
            raise DesignError("r_hat < r requires a bounded funnel function")


@dataclass
class ControllerSpec:
    """Tagged controller variant plus its parameters (used by configs and scenarios)."""

    variant: str
    params: dict = field(default_factory=dict)

    VARIANTS = ("HighGain", "LambdaTracker", "Nussbaum", "ClassicFC", "FunnelRd1", "FunnelRdR",
                "FilterFC", "PreCompFC", "NonBackstepFC", "PdFunnel", "PPC", "SaturatedFC",
                "ICFC", "DaeFC")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise DesignError(f"unknown controller variant {self.variant!r}")
        self.validate()

    def validate(self) -> None:
        p = self.params
        if self.variant == "LambdaTracker" and not p.get("lam", 0) > 0:
            raise InfeasibleConfigError("lambda-tracker needs lam > 0")
        if self.variant == "ICFC":
            validate_icfc(p["alpha_d"], p["beta_d"], p["psi0"], p.get("u_hat", math.inf))
        if self.variant == "SaturatedFC" and not p.get("u_hat", 0) > 0:
            raise InfeasibleConfigError("saturation level must be positive")
        if self.variant == "FilterFC" and not p.get("mu", 0) > 0:
            raise InfeasibleConfigError("filter pole mu must be positive")


# ---------------------------------------------------------------------------
# Core funnel maps
# ---------------------------------------------------------------------------


def gamma(w, alpha: Alpha = Alpha()) -> np.ndarray:
    """alpha(||w||^2) w on the open unit ball."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    s = float(w @ w)
    if not math.sqrt(s) <= GUARD:
        raise FunnelBreach(f"gamma evaluated at ||w|| = {math.sqrt(s):.17g} >= 1")
    return alpha(s) * w


@dataclass(frozen=True)
class RhoResult:
    ok: bool
    w: Optional[np.ndarray]
    stage: Optional[int] = None


def _rho(eta: np.ndarray, alpha: Alpha) -> tuple[Optional[np.ndarray], Optional[int]]:
    w = eta[0]
    s = float(w @ w)
    if not math.sqrt(s) <= GUARD:
        return None, 1
    for k in range(1, eta.shape[0]):
        w = eta[k] + alpha(s) * w
        s = float(w @ w)
        if not math.sqrt(s) <= GUARD:
            return None, k + 1
    return w, None


def rho_r(eta, alpha: Alpha = Alpha(), m: Optional[int] = None) -> RhoResult:
    """Recursion rho_1 = eta_1, rho_k = eta_k + gamma(rho_{k-1}); stage is 1-based."""
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        m = 1 if m is None else m
        eta = eta.reshape(-1, m)
    w, stage = _rho(eta, alpha)
    return RhoResult(w is not None, None if w is None else w.copy(), stage)


def fc_output_w(phi_t: float, e_vec, alpha: Alpha = Alpha(), N: NFun = NFun()) -> tuple[np.ndarray, np.ndarray]:
    """Funnel controller output together with w = rho_r(phi e)."""
    e_vec = np.atleast_2d(np.asarray(e_vec, dtype=float))
    w, stage = _rho(phi_t * e_vec, alpha)
    if w is None:
        raise FunnelBreach(f"phi*e outside the funnel domain at stage {stage}", stage)
    return N(alpha(float(w @ w))) * w, w


def fc_output(phi_t: float, e_vec, alpha: Alpha = Alpha(), N: NFun = NFun()) -> np.ndarray:
    """u = N(alpha(||w||^2)) w with w = rho_r(phi e); ``e_vec`` has shape (r, m)."""
    return fc_output_w(phi_t, e_vec, alpha, N)[0]


def classic_gain(phi_t: float, e) -> float:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    s = phi_t * float(np.linalg.norm(e))
    if not s <= GUARD:
        raise FunnelBreach(f"phi|e| = {s:.17g} at the funnel boundary")
    return phi_t / (1.0 - s * s)


def classic_fc(phi_t: float, e) -> np.ndarray:
    return -classic_gain(phi_t, e) * np.atleast_1d(np.asarray(e, dtype=float))


# ---------------------------------------------------------------------------
# Adaptive prototypes
# ---------------------------------------------------------------------------


def high_gain_step(k: float, y) -> tuple[np.ndarray, float]:
    """u = -k y, k' = ||y||^2."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return -k * y, float(y @ y)


def dist_lambda(z, lam: float) -> float:
    return max(float(np.linalg.norm(np.atleast_1d(z))) - lam, 0.0)


def lambda_step(k: float, e, lam: float) -> tuple[np.ndarray, float]:
    """u = -k e, k' = |e| dist_lambda(e)."""
    if lam <= 0:
        raise DesignError("lambda must be positive")
    e = np.atleast_1d(np.asarray(e, dtype=float))
    return -k * e, float(np.linalg.norm(e)) * dist_lambda(e, lam)


def nussbaum_N(k: float) -> float:
    return k * k * math.cos(k)


def nussbaum_N_integral(k0: float, k: float) -> float:
    """int_{k0}^{k} s^2 cos s ds in closed form."""
    F = lambda s: s * s * math.sin(s) + 2 * s * math.cos(s) - 2 * math.sin(s)
    return F(k) - F(k0)


def nussbaum_step(k: float, y) -> tuple[np.ndarray, float]:
    """u = N(k) y, k' = y^2."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return nussbaum_N(k) * y, float(y @ y)


# ---------------------------------------------------------------------------
# Filter-based funnel controller
# ---------------------------------------------------------------------------


def _gamma_i(i: int, kappa, v: list, xi: list, alpha: Alpha, N: NFun, mu: float) -> list:
    """gamma_i(kappa, v, pi_{i-1} xi); ``xi`` is a list of blocks (lists of m scalars)."""
    m = len(v)
    if i == 1:
        Nk = N(kappa)
        return [Nk * vj for vj in v]
    prev_args = [kappa] + list(v) + [x for blk in xi[: i - 2] for x in blk]

    def g_prev(z):
        kap = z[0]
        vv = z[1:1 + m]
        rest = z[1 + m:]
        blocks = [rest[j * m:(j + 1) * m] for j in range(i - 2)]
        return _gamma_i(i - 1, kap, vv, blocks, alpha, N, mu)

    J = jacobian(g_prev, prev_args)
    dnorm2 = 0.0
    for row in J:
        for x in row:
            dnorm2 = dnorm2 + x * x
    g = g_prev(prev_args)
    proj = norm_d([x for blk in xi[: i - 1] for x in blk])
    a_k = alpha.a(kappa)
    fac = a_k * a_k * (1.0 + proj) * (1.0 + proj) * dnorm2
    scale = mu ** (2 - i)
    last = xi[i - 2]
    return [g[j] - fac * (scale * last[j] - g[j]) for j in range(m)]


def filter_gamma(r: int, kappa: float, v, xi, alpha: Alpha = Alpha(), N: NFun = NFun(),
                 mu: float = 1.0) -> np.ndarray:
    """gamma_r evaluated at plain floats; ``xi`` has shape (r-1, m)."""
    v = [float(x) for x in np.atleast_1d(v)]
    m = len(v)
    blocks = [list(map(float, b)) for b in np.asarray(xi, dtype=float).reshape(-1, m)] if r > 1 else []
    out = _gamma_i(r, float(kappa), v, blocks, alpha, N, mu)
    return np.array([primal(x) for x in out])


def filter_fc(phi_t: float, e, xi, r: int, alpha: Alpha = Alpha(), N: NFun = NFun(),
              mu: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """u = gamma_r(alpha(phi^2 ||e||^2), phi e, xi) and the filter derivative."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    m = e.size
    v = phi_t * e
    s = float(v @ v)
    if not math.sqrt(s) <= GUARD:
        raise FunnelBreach(f"phi|e| = {math.sqrt(s):.17g} at the funnel boundary", 1)
    kappa = alpha(s)
    xi = np.asarray(xi, dtype=float).reshape(max(r - 1, 0), m)
    u = filter_gamma(r, kappa, v, xi, alpha, N, mu)
    xi_dot = -mu * xi
    if r > 1:
        xi_dot[:-1] += xi[1:]
        xi_dot[-1] += u
    return u, xi_dot


# ---------------------------------------------------------------------------
# Funnel pre-compensator
# ---------------------------------------------------------------------------


def companion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    r = q.size
    Q = np.zeros((r, r))
    Q[:, 0] = -q
    Q[np.arange(r - 1), np.arange(1, r)] = 1.0
    return Q


@dataclass(frozen=True)
class PrecompDesign:
    p: np.ndarray
    q: np.ndarray
    P: np.ndarray
    residual: float


def precomp_design(q, R=None) -> PrecompDesign:
    """Solve Q^T P + P Q + R = 0 and return p = (1, -P4^{-1} P2^T)."""
    q = np.asarray(q, dtype=float)
    Q = companion(q)
    r = q.size
    if not np.all(np.linalg.eigvals(Q).real < 0):
        raise DesignError("companion matrix of q is not Hurwitz")
    R = np.eye(r) if R is None else np.asarray(R, dtype=float)
    if not (np.allclose(R, R.T) and np.all(np.linalg.eigvalsh(R) > 0)):
        raise DesignError("R must be symmetric positive definite")
    P = sla.solve_continuous_lyapunov(Q.T, -R)
    P = 0.5 * (P + P.T)
    np.linalg.cholesky(P)  # P > 0 follows from Hurwitz Q and R > 0
    resid = float(np.linalg.norm(Q.T @ P + P @ Q + R))
    p = np.empty(r)
    p[0] = 1.0
    if r > 1:
        P2 = P[0:1, 1:]
        P4 = P[1:, 1:]
        p[1:] = -np.linalg.solve(P4, P2.T).ravel()
    return PrecompDesign(p, q, P, resid)


def precomp_step(p, q, Gamma_tilde, phi_t: float, y_prev, xi, u) -> tuple[np.ndarray, float]:
    """One funnel pre-compensator stage; ``xi`` has shape (r, m)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    d = np.atleast_1d(y_prev) - xi[0]
    s = phi_t * float(np.linalg.norm(d))
    if not s <= GUARD:
        raise FunnelBreach(f"compensator error at the funnel boundary ({s:.17g})")
    k = 1.0 / (1.0 - s * s)
    xi_dot = np.empty_like(xi)
    xi_dot[:-1] = xi[1:]
    xi_dot[-1] = np.atleast_2d(Gamma_tilde) @ np.atleast_1d(u)
    xi_dot += np.outer(q + p * k, d)
    return xi_dot, k


def gain_matrix_bound(r: int, rho: float) -> float:
    """Right-hand side of the admissibility condition on ||I - Gamma Gamma_tilde^{-1}|| (r >= 3)."""
    if r < 3:
        return math.inf
    return min((rho - 1.0) / (r - 2), rho / (4.0 * rho**2 * (rho + 1.0) ** (r - 2) - 1.0))


def gain_matrix_bound_max(r: int) -> tuple[float, float]:
    """Maximise the admissibility bound over rho > 1 (golden-section on a unimodal profile)."""
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(lambda rho: -gain_matrix_bound(r, rho), bounds=(1.0, 10.0), method="bounded",
                          options={"xatol": 1e-12})
    return float(-res.fun), float(res.x)


def _stage_first_jet(j: int, L: int, y: np.ndarray, xis: Sequence[np.ndarray], p, q,
                     phis: Sequence[FunnelFunction], t: float) -> Jet:
    """Taylor jet (order L <= j) of xi_{j,1}, the first component of stage j (1-based)."""
    xi = xis[j - 1]
    m = xi.shape[1]
    coeffs = np.zeros((L + 1, m))
    coeffs[0] = xi[0]
    if L == 0:
        return Jet(coeffs)
    W = Jet.constant(y, 0) if j == 1 else _stage_first_jet(j - 1, L - 1, y, xis, p, q, phis, t)
    for l in range(1, L + 1):
        X = Jet.from_derivatives(_coef_to_derivs(coeffs[:l]))
        d = W.truncate(l - 1) - X
        ph = phis[j - 1].jet(t, l - 1)
        k = 1.0 / (1.0 - ph * ph * (d * d).sum())
        Xi = np.zeros(m)
        for i in range(1, l + 1):
            g = (q[i - 1] + p[i - 1] * k) * d
            Xi = Xi + g.derivatives()[l - i]
        coeffs[l] = (xi[l] + Xi) / math.factorial(l)
    return Jet(coeffs)


def _coef_to_derivs(c: np.ndarray) -> np.ndarray:
    fact = np.array([math.factorial(j) for j in range(c.shape[0])], dtype=float)
    return c * fact[:, None]


def precomp_surrogate_derivatives(y, xis: Sequence[np.ndarray], p, q,
                                  phis: Sequence[FunnelFunction], t: float) -> np.ndarray:
    """z, z', ..., z^{(r-1)} of the cascade output z = xi_{r-1,1}; returns shape (r, m)."""
    xis = [np.atleast_2d(np.asarray(x, dtype=float)) for x in xis]
    r = xis[0].shape[0]
    if len(xis) != r - 1:
        raise DesignError("cascade must have r - 1 stages")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    jet = _stage_first_jet(r - 1, r - 1, y, xis, np.asarray(p, float), np.asarray(q, float), phis, t)
    return jet.derivatives()


# ---------------------------------------------------------------------------
# Derivative-feedback funnel controllers
# ---------------------------------------------------------------------------


def non_backstep_fc(t: float, e_derivs, phis: Sequence[FunnelFunction]) -> np.ndarray:
    """u = -k_{r-1} e_{r-1} with e_{i+1} = e_i' + k_i e_i resolved exactly via Taylor jets.

    ``e_derivs`` has shape (r, m) and holds e, e', ..., e^{(r-1)}.
    """
    ed = np.atleast_2d(np.asarray(e_derivs, dtype=float))
    r = ed.shape[0]
    if len(phis) != r:
        raise DesignError("one funnel function per stage required")
    if r <= 2:
        return _non_backstep_low(t, ed, phis)
    E = Jet.from_derivatives(ed)
    for i in range(r):
        K = r - 1 - i
        ph = phis[i].jet(t, K)
        s = ph.value * float(np.linalg.norm(E.value))
        if not s <= GUARD:
            raise FunnelBreach(f"stage {i} error at the funnel boundary ({s:.17g})", i)
        k = 1.0 / (1.0 - ph * ph * (E * E).sum())
        if i == r - 1:
            return -float(k.value) * E.value
        E = E.deriv() + k.truncate(K - 1) * E.truncate(K - 1)
    raise AssertionError("unreachable")


def _non_backstep_low(t, ed, phis):
    # closed forms for r = 1, 2; agrees with the jet recursion
    e = ed[0]
    ee = float(e @ e)
    if len(phis) == 1:
        p0 = phis[0](t)
        if not p0 * math.sqrt(ee) <= GUARD:
            raise FunnelBreach(f"stage 0 error at the funnel boundary ({p0 * math.sqrt(ee):.17g})", 0)
        return -e / (1.0 - p0 * p0 * ee)
    p0 = phis[0](t)
    s0 = p0 * math.sqrt(ee)
    if not s0 <= GUARD:
        raise FunnelBreach(f"stage 0 error at the funnel boundary ({s0:.17g})", 0)
    e1 = ed[1] + e / (1.0 - p0 * p0 * ee)
    p1 = phis[1](t)
    n1 = float(e1 @ e1)
    s1 = p1 * math.sqrt(n1)
    if not s1 <= GUARD:
        raise FunnelBreach(f"stage 1 error at the funnel boundary ({s1:.17g})", 1)
    return -e1 / (1.0 - p1 * p1 * n1)


def pd_funnel(phi0_t: float, phi1_t: float, e: float, edot: float, modified: bool = False) -> float:
    s0 = phi0_t * abs(e)
    s1 = phi1_t * abs(edot)
    if not s0 <= GUARD:
        raise FunnelBreach("error funnel breached", "e")
    if not s1 <= GUARD:
        raise FunnelBreach("derivative funnel breached", "edot")
    k0 = phi0_t / (1.0 - s0)
    k1 = phi1_t / (1.0 - s1)
    if modified:
        return -k0 * k0 * e - k0 * k1 * edot
    return -k0 * k0 * e - k1 * edot


def T_f(s):
    s = np.asarray(s, dtype=float)
    return np.log((1.0 + s) / (1.0 - s))


def ppc_stages(x, y_ref, phis_t: Sequence[float], ks: Sequence[float]) -> tuple[np.ndarray, list]:
    """Prescribed performance controller plus the normalised stage errors phi_i (x_i - a_{i-1})."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = np.atleast_1d(np.asarray(y_ref, dtype=float))
    stages = []
    for i in range(x.shape[0]):
        s = phis_t[i] * (x[i] - a)
        if not np.all(np.abs(s) <= GUARD):
            raise FunnelBreach(f"prescribed performance stage {i + 1} breached", i + 1)
        stages.append(s)
        a = -ks[i] * T_f(s)
    return a, stages


def ppc(x, y_ref, phis_t: Sequence[float], ks: Sequence[float]) -> np.ndarray:
    """Prescribed performance controller on states x (shape (r, m))."""
    return ppc_stages(x, y_ref, phis_t, ks)[0]


# ---------------------------------------------------------------------------
# Input constraints
# ---------------------------------------------------------------------------


def saturate(v, u_hat: float) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u_hat <= 0:
        raise DesignError("saturation level must be positive")
    nv = float(np.linalg.norm(v))
    if nv > u_hat:
        return (u_hat / nv) * v
    return v.copy()


def saturated_fc(phi_t: float, e, u_hat: float) -> tuple[np.ndarray, bool]:
    """u = -sat(k e) with the classic gain; also reports whether the clamp was active."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    v = -classic_gain(phi_t, e) * e
    return saturate(v, u_hat), bool(np.linalg.norm(v) > u_hat)


def feasibility_check(cb: float, u_hat: float, a: float, psi_sup: float, ref_sup: float,
                      dref_sup: float, dpsi_sup: float) -> dict:
    """cb u_hat >= |a| (||psi|| + ||y_ref||) + ||y_ref'|| + ||psi'||, sup norms declared a priori."""
    lhs = cb * u_hat
    if a == 0:
        rhs = dref_sup + dpsi_sup
    else:
        rhs = abs(a) * (psi_sup + ref_sup) + dref_sup + dpsi_sup
    return {"lhs": lhs, "rhs": rhs, "feasible": bool(lhs >= rhs)}


def validate_icfc(alpha_d: float, beta_d: float, psi0: float, u_hat: float) -> None:
    if not (alpha_d > 0 and beta_d > 0):
        raise InfeasibleConfigError("ICFC needs alpha_d > 0 and beta_d > 0")
    if not psi0 > beta_d / alpha_d:
        raise InfeasibleConfigError(f"ICFC needs psi0 > beta_d/alpha_d = {beta_d / alpha_d}")
    if not u_hat > 0:
        raise InfeasibleConfigError("saturation level must be positive")


def icfc_step(e, psi: float, u_hat: float, alpha_d: float, beta_d: float) -> dict:
    """Input-constrained funnel controller: returns u, psi', k, v, kappa."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    ne = float(np.linalg.norm(e))
    if not ne <= GUARD * psi:
        raise FunnelBreach(f"||e|| = {ne:.17g} reached psi = {psi:.17g}")
    k = 1.0 / (1.0 - (ne / psi) ** 2)
    v = -k * e
    u = saturate(v, u_hat) if math.isfinite(u_hat) else v.copy()
    kappa = float(np.linalg.norm(v - u))
    psi_dot = -alpha_d * psi + beta_d
    if kappa > 0.0 and ne >= 1e-12:
        psi_dot += psi * kappa / ne
    return {"u": u, "psi_dot": psi_dot, "k": k, "v": v, "kappa": kappa}


# ---------------------------------------------------------------------------
# DAE funnel controller
# ---------------------------------------------------------------------------


def validate_khat(khat: float, P2) -> None:
    """Linear-case gain rule: khat must exceed the spectral norm of P2."""
    bound = float(np.linalg.norm(np.atleast_2d(P2), 2))
    if not khat > bound:
        raise InfeasibleConfigError(f"khat = {khat} must exceed ||P2|| = {bound}")


def dae_fc(phi_I_t: float, eI_vec, phi_II_t: float, e_II, khat: float,
           alpha: Alpha = Alpha(), N: NFun = NFun()) -> tuple[np.ndarray, np.ndarray]:
    """(u_I, u_II): funnel controller on the e_I block and a static funnel law on e_II."""
    try:
        u_I = fc_output(phi_I_t, eI_vec, alpha, N)
    except FunnelBreach as exc:
        raise FunnelBreach(str(exc), "I") from exc
    v = phi_II_t * np.atleast_1d(np.asarray(e_II, dtype=float))
    nv = float(np.linalg.norm(v))
    if not nv <= GUARD:
        raise FunnelBreach(f"phi_II |e_II| = {nv:.17g} at the funnel boundary", "II")
    u_II = -khat * alpha(nv * nv) * v
    return u_I, u_II


def dae_consistency_residual(nf, t0_data: dict, u0) -> float:
    """Norm of the algebraic row at t = 0 (see ``dae.DaeNormalForm.algebraic_residual``)."""
    from .dae import consistency_residual

    return consistency_residual(nf, t0_data, u0)

"""Linear time-invariant systems: relative degree, Byrnes-Isidori form, zero dynamics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

REL_TOL = 1e-10
COND_LIMIT = 1e12


class LtiError(ValueError):
    pass


class NumericalRankError(LtiError):
    pass


class PoleError(LtiError):
    pass


class NotApplicableError(LtiError):
    pass


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if C.ndim == 1:
            C = C.reshape(1, -1)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or C.shape[0] != B.shape[1]:
            raise LtiError(f"inconsistent dimensions A{A.shape} B{B.shape} C{C.shape}")
        if B.shape[1] > n:
            raise LtiError("more inputs than states")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @classmethod
    def scalar(cls, a: float, b: float, c: float) -> "LtiSystem":
        return cls([[a]], [[b]], [[c]])


@dataclass(frozen=True)
class RelativeDegree:
    r: int
    Gamma: np.ndarray


@dataclass(frozen=True)
class ByrnesIsidoriForm:
    r: int
    R: tuple  # R_1..R_r, each m x m
    Gamma: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    S: np.ndarray
    U: np.ndarray
    U_inv: np.ndarray

    @property
    def m(self) -> int:
        return self.Gamma.shape[0]


@dataclass(frozen=True)
class ZeroDynamicsReport:
    spectrum_Q: list
    asymptotically_stable: bool
    bounded: bool


def _norm2(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def relative_degree(sys: LtiSystem, r_max: Optional[int] = None) -> Optional[RelativeDegree]:
    """Smallest r <= r_max with C A^k B = 0 (k < r-1) and C A^{r-1} B invertible."""
    n = sys.n
    r_max = n if r_max is None else r_max
    if r_max > n:
        raise LtiError("r_max must not exceed the state dimension")
    nA = max(_norm2(sys.A), 1.0)
    base = _norm2(sys.C) * _norm2(sys.B)
    if base == 0.0:
        return None
    AkB = sys.B.copy()
    for k in range(r_max):
        M = sys.C @ AkB
        scale = base * nA**k
        if np.linalg.norm(M) > REL_TOL * scale:
            sv = np.linalg.svd(M, compute_uv=False)
            if sv[-1] > REL_TOL * scale:
                return RelativeDegree(k + 1, M)
            return None
        AkB = sys.A @ AkB
    return None


def byrnes_isidori(sys: LtiSystem) -> ByrnesIsidoriForm:
    rd = relative_degree(sys)
    if rd is None:
        raise LtiError("system has no (strict) relative degree")
    r, m, n = rd.r, sys.m, sys.n
    A, B, C = sys.A, sys.B, sys.C
    Br = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(r)])
    Cr = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(r)])
    CrBr = Cr @ Br
    if np.linalg.cond(CrBr) > COND_LIMIT:
        raise NumericalRankError(f"cond(C_r B_r) = {np.linalg.cond(CrBr):.3e} exceeds {COND_LIMIT:g}")
    left = Br @ np.linalg.inv(CrBr)
    if r * m < n:
        _, _, vh = np.linalg.svd(Cr)
        W = vh[r * m:].T  # orthonormal basis of ker C_r
        V = np.linalg.solve(W.T @ W, W.T @ (np.eye(n) - left @ Cr))
    else:
        W = np.zeros((n, 0))
        V = np.zeros((0, n))
    U = np.vstack([Cr, V])
    U_inv = np.hstack([left, W])
    At = U @ A @ U_inv
    rows = slice((r - 1) * m, r * m)
    R = tuple(At[rows, i * m:(i + 1) * m].copy() for i in range(r))
    S = At[rows, r * m:].copy()
    P = At[r * m:, :m].copy()
    Q = At[r * m:, r * m:].copy()
    return ByrnesIsidoriForm(r, R, rd.Gamma.copy(), Q, P, S, U, U_inv)


def transfer_eval(obj, s: complex) -> np.ndarray:
    """G(s) from a state-space system or from a Byrnes-Isidori form."""
    if isinstance(obj, ByrnesIsidoriForm):
        m, r = obj.m, obj.r
        M = sum(obj.R[i] * s**i for i in range(r)) - s**r * np.eye(m)
        if obj.Q.size:
            res = s * np.eye(obj.Q.shape[0]) - obj.Q
            _check_resolvent(res)
            M = M + obj.S @ np.linalg.solve(res, obj.P)
        _check_resolvent(M)
        return -np.linalg.solve(M, obj.Gamma)
    res = s * np.eye(obj.n) - obj.A
    _check_resolvent(res)
    return obj.C @ np.linalg.solve(res, obj.B)


def _check_resolvent(M: np.ndarray) -> None:
    if np.linalg.cond(M) > 1e14:
        raise PoleError("evaluation point is (numerically) a pole")


def zero_dynamics(obj) -> ZeroDynamicsReport:
    bif = obj if isinstance(obj, ByrnesIsidoriForm) else byrnes_isidori(obj)
    Q = bif.Q
    if Q.size == 0:
        return ZeroDynamicsReport([], True, True)
    ev = np.linalg.eigvals(Q)
    scale = max(_norm2(Q), 1.0)
    stable = bool(np.all(ev.real < 0.0))
    bounded = bool(np.all(ev.real <= 1e-9 * scale))
    if bounded and not stable:
        # eigenvalues on the imaginary axis must be semisimple
        for lam in ev[np.abs(ev.real) <= 1e-9 * scale]:
            alg = int(np.sum(np.abs(ev - lam) <= 1e-7 * scale))
            geo = Q.shape[0] - np.linalg.matrix_rank(Q - lam * np.eye(Q.shape[0]), tol=1e-7 * scale)
            if geo < alg:
                bounded = False
    return ZeroDynamicsReport(list(ev), stable, bounded)


def invariant_zeros(sys: LtiSystem) -> np.ndarray:
    """Finite generalized eigenvalues of the Rosenbrock pencil [A - sI, B; C, 0]."""
    n, m = sys.n, sys.m
    M = np.block([[sys.A, sys.B], [sys.C, np.zeros((m, m))]])
    N = np.block([[np.eye(n), np.zeros((n, m))], [np.zeros((m, n)), np.zeros((m, m))]])
    alpha, beta = sla.eig(M, N, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-9 * np.maximum(np.abs(alpha), 1.0)
    z = alpha[finite] / beta[finite]
    # Infinite eigenvalues of high index get smeared by rounding into huge finite
    # ones; with a strict relative degree exactly n - r m zeros are finite.
    rd = relative_degree(sys)
    if rd is not None:
        z = z[np.argsort(np.abs(z))][: n - rd.r * m]
    return z


def pencil_minimum_phase(sys: LtiSystem) -> bool:
    """det[A - sI, B; C, 0] has no zeros in the closed right half plane."""
    z = invariant_zeros(sys)
    return bool(np.all(z.real < 0.0))


def sign_definite(G: np.ndarray) -> bool:
    Hs = 0.5 * (G + G.T)
    ev = np.linalg.eigvalsh(Hs)
    return bool(np.all(ev > 0.0) or np.all(ev < 0.0))


def is_in_Lmr(sys: LtiSystem) -> dict:
    rd = relative_degree(sys)
    if rd is None:
        return {"member": False, "r": None, "sign_definite": False, "zd_stable": False}
    sd = sign_definite(rd.Gamma)
    try:
        zd = zero_dynamics(byrnes_isidori(sys)).asymptotically_stable
    except NumericalRankError:
        zd = False
    return {"member": bool(sd and zd), "r": rd.r, "sign_definite": sd, "zd_stable": zd}


def _spectrum_stable(M: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(M).real < 0.0))


def high_gain_threshold(sys: LtiSystem, k_max: float, n_sweep: int = 200) -> Optional[dict]:
    """Smallest sampled k* <= k_max with sigma(A - k B C) in the open left half plane on [k*, k_max]."""
    rd = relative_degree(sys)
    if rd is None or rd.r != 1:
        raise NotApplicableError("high-gain threshold needs relative degree one")
    if not np.all(np.linalg.eigvals(rd.Gamma).real > 0.0):
        raise NotApplicableError("spectrum of CB must lie in the open right half plane")
    if not zero_dynamics(sys).asymptotically_stable:
        raise NotApplicableError("zero dynamics are not asymptotically stable")
    A, BC = sys.A, sys.B @ sys.C
    ks = np.logspace(-8, np.log10(k_max), n_sweep)
    ok = [_spectrum_stable(A - k * BC) for k in ks]
    if not ok[-1]:
        return None
    j = len(ks) - 1
    while j > 0 and ok[j - 1]:
        j -= 1
    lo = 0.0 if j == 0 else ks[j - 1]
    hi = ks[j]
    if j == 0 and _spectrum_stable(A):
        return {"k_star": 0.0}
    while hi - lo > 1e-6 * max(1.0, hi) * 1e-3:
        mid = 0.5 * (lo + hi)
        if _spectrum_stable(A - mid * BC):
            hi = mid
        else:
            lo = mid
    return {"k_star": float(hi)}


def random_lti(rng: np.random.Generator, n: int, m: int, r: int, *,
               stable_zero_dynamics: bool = True, coordinate_change: bool = True) -> LtiSystem:
    """Random system with relative degree r, built in BI coordinates and then
    moved by a well-conditioned similarity transform."""
    if r * m > n:
        raise LtiError("need r*m <= n")
    k = n - r * m
    A = np.zeros((n, n))
    for i in range(r - 1):
        A[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = np.eye(m)
    last = slice((r - 1) * m, r * m)
    A[last, :r * m] = rng.normal(size=(m, r * m))
    if k:
        Q = rng.normal(size=(k, k))
        shift = np.max(np.linalg.eigvals(Q).real)
        if stable_zero_dynamics:
            Q -= (shift + rng.uniform(0.2, 1.5)) * np.eye(k)
        A[last, r * m:] = rng.normal(size=(m, k))
        A[r * m:, :m] = rng.normal(size=(k, m))
        A[r * m:, r * m:] = Q
    G = rng.normal(size=(m, m)) + 2.0 * np.eye(m)
    while np.linalg.cond(G) > 50:
        G = rng.normal(size=(m, m)) + 2.0 * np.eye(m)
    B = np.zeros((n, m))
    B[last] = G
    C = np.zeros((m, n))
    C[:, :m] = np.eye(m)
    if coordinate_change:
        Qo, _ = np.linalg.qr(rng.normal(size=(n, n)))
        D = np.diag(rng.uniform(0.5, 2.0, size=n))
        T = Qo @ D
        Ti = np.linalg.inv(T)
        A, B, C = T @ A @ Ti, T @ B, C @ Ti
    return LtiSystem(A, B, C)

"""Linear DAEs in normal form, truncated relative degree, and the DAE funnel loop.

The normal form with truncated strict relative degree ``(r, l)`` reads::

    y_I^{(r)} = sum_k R1[k] y_I^{(k)} + P1 y_II + S1 x3 + Gh u_I
    0         = sum_k R2[k] y_I^{(k)} + P2 y_II + S2 x3 + Gt u_I + u_II
    x3'       = Q x3 + A31 [y_I; y_II]

with ``k = 0..r-1``.  Only the differential part (the ``y_I`` chain and ``x3``)
is integrated; ``y_II`` is recovered from the algebraic row at every call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, root

from . import controllers as ctl
from .controllers import GUARD, DesignError, FunnelBreach, InfeasibleConfigError
from .funnel import FunnelFunction
from .plants import Signal


class DaeError(ValueError):
    pass


class InconsistentInitialValue(InfeasibleConfigError):
    pass


class SingularPencil(DaeError):
    pass


def _mat(a, rows: int, cols: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((rows, cols))
    a = np.asarray(a, dtype=float)
    if a.size == 0 and rows * cols == 0:
        return np.zeros((rows, cols))
    a = a.reshape(rows, cols) if a.ndim < 2 and a.size == rows * cols else a
    if a.shape != (rows, cols):
        raise DaeError(f"{name} has shape {a.shape}, expected {(rows, cols)}")
    return a


@dataclass
class DaeNormalForm:
    """Linear normal form; unspecified coupling blocks default to zero."""

    r: int
    l: int
    m: int
    Gh: np.ndarray
    R1: Sequence[np.ndarray] = ()
    R2: Sequence[np.ndarray] = ()
    P1: Optional[np.ndarray] = None
    P2: Optional[np.ndarray] = None
    S1: Optional[np.ndarray] = None
    S2: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    A31: Optional[np.ndarray] = None
    Gt: Optional[np.ndarray] = None

    def __post_init__(self):
        r, l, m = int(self.r), int(self.l), int(self.m)
        if r < 1 or not 0 <= l <= m:
            raise DaeError("need r >= 1 and 0 <= l <= m")
        if l == 0:
            raise DaeError("l = 0 leaves no differential output channel")
        self.r, self.l, self.m = r, l, m
        q = m - l
        n3 = 0 if self.Q is None else np.atleast_2d(np.asarray(self.Q, dtype=float)).shape[0]
        self.Gh = _mat(self.Gh, l, l, "Gh")
        if abs(np.linalg.det(self.Gh)) < 1e-14:
            raise DaeError("Gh must be invertible")
        self.R1 = [_mat(a, l, l, "R1") for a in self.R1] or [np.zeros((l, l))] * r
        self.R2 = [_mat(a, q, l, "R2") for a in self.R2] or [np.zeros((q, l))] * r
        if len(self.R1) != r or len(self.R2) != r:
            raise DaeError("R1 and R2 need one block per derivative order")
        self.P1 = _mat(self.P1, l, q, "P1")
        self.P2 = _mat(self.P2, q, q, "P2")
        self.S1 = _mat(self.S1, l, n3, "S1")
        self.S2 = _mat(self.S2, q, n3, "S2")
        self.Q = _mat(self.Q, n3, n3, "Q")
        self.A31 = _mat(self.A31, n3, m, "A31")
        self.Gt = _mat(self.Gt, q, l, "Gt")

    @property
    def q(self) -> int:
        return self.m - self.l

    @property
    def n3(self) -> int:
        return self.Q.shape[0]

    @property
    def n_diff(self) -> int:
        return self.r * self.l + self.n3

    def zd_stable(self) -> bool:
        return self.n3 == 0 or bool(np.all(np.linalg.eigvals(self.Q).real < 0))

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Differential state -> (y_I derivatives (r, l), x3)."""
        rl = self.r * self.l
        return z[:rl].reshape(self.r, self.l), z[rl:]

    def algebraic_residual(self, yI: np.ndarray, yII, x3, u_I, u_II) -> np.ndarray:
        yI = np.asarray(yI, dtype=float).reshape(self.r, self.l)
        res = self.P2 @ np.asarray(yII, dtype=float) + self.S2 @ x3 + self.Gt @ u_I + np.asarray(u_II, dtype=float)
        for k in range(self.r):
            res = res + self.R2[k] @ yI[k]
        return res

    def differential_rhs(self, yI, yII, x3, u_I) -> np.ndarray:
        yI = np.asarray(yI, dtype=float).reshape(self.r, self.l)
        top = self.P1 @ yII + self.S1 @ x3 + self.Gh @ u_I
        for k in range(self.r):
            top = top + self.R1[k] @ yI[k]
        dyI = np.vstack([yI[1:], top[None, :]]).reshape(-1)
        dx3 = self.Q @ x3 + self.A31 @ np.concatenate([yI[0], yII])
        return np.concatenate([dyI, dx3])

    def to_dict(self) -> dict:
        return {"r": self.r, "l": self.l, "m": self.m, "Gh": self.Gh.tolist(),
                "R1": [a.tolist() for a in self.R1], "R2": [a.tolist() for a in self.R2],
                "P1": self.P1.tolist(), "P2": self.P2.tolist(), "S1": self.S1.tolist(),
                "S2": self.S2.tolist(), "Q": self.Q.tolist(), "A31": self.A31.tolist(), "Gt": self.Gt.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DaeNormalForm":
        keys = ("r", "l", "m", "Gh", "R1", "R2", "P1", "P2", "S1", "S2", "Q", "A31", "Gt")
        unknown = set(d) - set(keys) - {"kind"}
        if unknown:
            raise DaeError(f"unknown normal-form keys {sorted(unknown)}")
        return cls(**{k: d[k] for k in keys if k in d})


def consistency_residual(nf: DaeNormalForm, t0_data: Mapping[str, Any], u0) -> float:
    """Norm of the algebraic row at t = 0.

    ``t0_data`` holds ``yI`` (shape (r, l)), ``yII`` and ``x3``; ``u0`` is the
    pair ``(u_I(0), u_II(0))``.
    """
    u_I, u_II = u0
    yI = np.asarray(t0_data.get("yI", np.zeros((nf.r, nf.l))), dtype=float)
    yII = np.asarray(t0_data.get("yII", np.zeros(nf.q)), dtype=float)
    x3 = np.asarray(t0_data.get("x3", np.zeros(nf.n3)), dtype=float)
    return float(np.linalg.norm(nf.algebraic_residual(yI, yII, x3, np.asarray(u_I, float), np.asarray(u_II, float))))


# ---------------------------------------------------------------------------
# Transfer functions and truncated relative degree
# ---------------------------------------------------------------------------


def dae_example_transfer(E, A, B, C, s: complex) -> np.ndarray:
    """C (sE - A)^{-1} B for a regular pencil."""
    E, A = np.atleast_2d(np.asarray(E, dtype=float)), np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(E.shape[0], -1)
    C = np.asarray(C, dtype=float).reshape(-1, E.shape[0])
    if pencil_singular(E, A):
        raise SingularPencil("det(sE - A) vanishes identically")
    M = s * E - A
    try:
        return C @ np.linalg.solve(M.astype(complex), B.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise DaeError(f"s = {s} lies on the pencil spectrum") from exc


def pencil_singular(E, A, samples: int = 7, seed: int = 0) -> bool:
    """det(sE - A) == 0 identically, tested at random complex points."""
    rng = np.random.default_rng(seed)
    n = E.shape[0]
    scale = 1.0 + np.abs(A).max() + np.abs(E).max()
    for s in rng.normal(size=samples) + 1j * rng.normal(size=samples):
        sv = np.linalg.svd(s * scale * E - A, compute_uv=False)
        if sv[-1] > 1e-10 * max(sv[0], 1.0) * n:
            return False
    return True


@dataclass(frozen=True)
class TruncatedRelDegree:
    degrees: tuple[int, ...]
    l: int
    Gamma_l: np.ndarray
    strict: Optional[tuple[int, int]]
    order: tuple[int, ...] = field(default=())


def _trim(p) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    nz = np.flatnonzero(np.abs(p) > 1e-14 * max(np.abs(p).max(), 1e-300))
    return p[nz[0]:] if nz.size else np.zeros(1)


def truncated_reldeg_from_H(H: Sequence[Sequence[tuple]]) -> TruncatedRelDegree:
    """Column degrees and Gamma_l of a rational matrix given by coefficient data.

    ``H[i][j] = (num, den)`` with coefficients in descending powers.  Column
    ``j`` has degree ``r_j = max(deg num - deg den over the column, 0)``; the
    leading-coefficient ratios of the entries attaining it form the limit
    ``H(s) diag(s^{-r_j})`` as ``s -> inf``.  Columns are sorted by decreasing
    degree (``order`` records the permutation).
    """
    rows, cols = len(H), len(H[0])
    excess = np.full((rows, cols), -np.inf)
    lead = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            num, den = (_trim(c) for c in H[i][j])
            if not np.any(den):
                raise DaeError(f"entry ({i},{j}) has a zero denominator")
            if np.any(num):
                excess[i, j] = (num.size - 1) - (den.size - 1)
                lead[i, j] = num[0] / den[0]
    deg = np.zeros(cols, dtype=int)
    G = np.zeros((rows, cols))
    for j in range(cols):
        top = excess[:, j].max()
        deg[j] = int(max(top, 0)) if math.isfinite(top) else 0
        if math.isfinite(top) and top == deg[j]:
            hit = excess[:, j] == top
            G[hit, j] = lead[hit, j]
    order = tuple(int(i) for i in np.argsort(-deg, kind="stable"))
    deg_sorted = tuple(int(deg[i]) for i in order)
    l = sum(1 for d in deg_sorted if d > 0)
    Gamma_l = G[:, list(order[:l])]
    strict = None
    if l > 0 and len(set(deg_sorted[:l])) == 1 and np.linalg.matrix_rank(Gamma_l) == l:
        strict = (deg_sorted[0], l)
    return TruncatedRelDegree(deg_sorted, l, Gamma_l, strict, order)


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------


@dataclass
class DaeController:
    """DAE funnel controller data (the ``DaeFC`` variant)."""

    khat: float
    phi_I: FunnelFunction
    phi_II: FunnelFunction
    alpha: ctl.Alpha = field(default_factory=ctl.Alpha)
    N: ctl.NFun = field(default_factory=ctl.NFun)


class _AlgebraicSolve:
    """Recover y_II from 0 = g + P2 y_II - khat alpha(||v||^2) v, v = phi (y_II - ref)."""

    def __init__(self, nf: DaeNormalForm, ctrl: DaeController):
        self.nf, self.c = nf, ctrl
        self.v_prev = np.zeros(nf.q)

    def __call__(self, g: np.ndarray, ref: np.ndarray, ph: float) -> np.ndarray:
        nf, c = self.nf, self.c
        P2 = nf.P2
        if ph == 0.0:
            return np.linalg.solve(P2, -g) if nf.q else np.zeros(0)
        # F(v) = g + P2 ref + P2 v / ph - khat alpha(||v||^2) v
        g0 = g + P2 @ ref
        if nf.q == 1:
            p = float(P2[0, 0]) / ph
            a, gg = c.alpha, float(g0[0])
            F = lambda v: gg + p * v - c.khat * a(v * v) * v
            lo, hi = -GUARD, GUARD
            flo, fhi = F(lo), F(hi)
            if not (flo > 0 > fhi):
                raise FunnelBreach("algebraic row has no solution inside the funnel", "II")
            v = brentq(F, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        else:
            P2s = P2 / ph

            def F(v):
                n2 = float(v @ v)
                if not n2 < 1.0:
                    return np.full_like(v, 1e6) * (1 + n2)
                return g0 + P2s @ v - c.khat * c.alpha(n2) * v

            def J(v):
                n2 = float(v @ v)
                if not n2 < 1.0:
                    return np.eye(v.size)
                ka = c.alpha(n2)
                # alpha' = a(alpha)
                return P2s - c.khat * (ka * np.eye(v.size) + 2.0 * c.alpha.a(ka) * np.outer(v, v))

            tol = 1e-13 * (1.0 + float(np.linalg.norm(g0)))
            v = None
            for start in (self.v_prev, np.zeros(nf.q)):
                sol = root(F, start, jac=J, method="hybr", tol=1e-14)
                if float(sol.x @ sol.x) < GUARD ** 2 and float(np.linalg.norm(F(sol.x))) <= tol:
                    v = sol.x
                    break
            if v is None:
                raise FunnelBreach("algebraic solve failed inside the funnel", "II")
        v = np.atleast_1d(np.asarray(v, dtype=float))
        self.v_prev = v
        return ref + v / ph


def assemble_dae_closed_loop(nf: DaeNormalForm, controller: DaeController, reference: Signal,
                             t_end: float, yI0=None, x30=None, t0: float = 0.0,
                             consistency_tol: float = 1e-8, check_start: bool = True):
    """Closed-loop problem over the differential state ``(y_I chain, x3)``.

    ``y_II(0)`` is not free: it is the solution of the algebraic row under the
    controller, which makes the initial value consistent by construction.
    """
    from .sim import ClosedLoopProblem, GuardUnsatisfiableAtStart

    if reference.m != nf.m:
        raise DaeError(f"reference has {reference.m} channels, system has {nf.m}")
    if nf.q:
        ctl.validate_khat(controller.khat, nf.P2)
    if not controller.alpha(0.0) > 0:
        raise DesignError("alpha must be positive")
    l, r, q = nf.l, nf.r, nf.q
    yI0 = np.zeros((r, l)) if yI0 is None else np.asarray(yI0, dtype=float).reshape(r, l)
    x30 = np.zeros(nf.n3) if x30 is None else np.asarray(x30, dtype=float).reshape(nf.n3)
    solver = _AlgebraicSolve(nf, controller)

    def evaluate(t, z):
        yI, x3 = nf.split(z)
        refd = reference.derivs(t, r - 1)
        eI = yI - refd[:, :l]
        pI = controller.phi_I(t)
        u_I, w = ctl.fc_output_w(pI, eI, controller.alpha, controller.N)
        if q:
            pII = controller.phi_II(t)
            g = nf.S2 @ x3 + nf.Gt @ u_I
            for k in range(r):
                g = g + nf.R2[k] @ yI[k]
            yII = solver(g, refd[0, l:], pII)
            e_II = yII - refd[0, l:]
            _, u_II = ctl.dae_fc(pI, eI, pII, e_II, controller.khat, controller.alpha, controller.N)
            resid = float(np.linalg.norm(g + nf.P2 @ yII + u_II))
            eps_II = pII * float(np.linalg.norm(e_II))
        else:
            pII, yII, e_II, u_II, resid, eps_II = 0.0, np.zeros(0), np.zeros(0), np.zeros(0), 0.0, 0.0
        dz = nf.differential_rhs(yI, yII, x3, u_I)
        e = np.concatenate([eI[0], e_II])
        info = {"y": np.concatenate([yI[0], yII]), "u": np.concatenate([u_I, u_II]), "e": e,
                "gains": {}, "eps": {"I": pI * float(np.linalg.norm(eI[0])), "w": float(np.linalg.norm(w)),
                                      "II": eps_II},
                "psi": [math.inf if pI == 0 else 1.0 / pI], "extra": {"residual": resid}}
        return dz, info

    z0 = np.concatenate([yI0.reshape(-1), x30])
    layout = {"yI": slice(0, r * l), "x3": slice(r * l, r * l + nf.n3)}
    prob = ClosedLoopProblem(evaluate, z0, t0, t_end, layout, nf.m, None, math.inf,
                             {"controller": "DaeFC", "normal_form": nf})
    if check_start:
        try:
            _, info = evaluate(t0, z0)
        except FunnelBreach as exc:
            raise GuardUnsatisfiableAtStart(f"initial data violate the funnel conditions ({exc})") from exc
        if info["extra"]["residual"] > consistency_tol:
            raise InconsistentInitialValue(
                f"algebraic residual {info['extra']['residual']:.3g} exceeds {consistency_tol:g} at t = {t0}")
    return prob

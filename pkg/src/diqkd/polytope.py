"""Linear programming over the (2,2,2,2) local polytope.

``lp_solve`` is a dense two-phase tableau simplex with Bland's rule.  It is
meant for the small problems that appear here (tens of variables) and is
deterministic across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._numerics import DomainError, mutual_information
from .behavior import Behavior, deterministic_vertices

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-12


@dataclass
class LpProblem:
    """maximize c.x subject to A_eq x = b_eq, A_ub x <= b_ub, x >= 0."""

    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        for a_name, b_name in (("A_eq", "b_eq"), ("A_ub", "b_ub")):
            a, b = getattr(self, a_name), getattr(self, b_name)
            if a is None:
                setattr(self, a_name, np.zeros((0, n)))
                setattr(self, b_name, np.zeros(0))
                continue
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if a.shape != (b.size, n):
                raise DomainError(f"{a_name} has shape {a.shape}, expected ({b.size}, {n})")
            if not np.all(np.isfinite(b)) or not np.all(np.isfinite(a)):
                raise DomainError(f"{a_name}/{b_name} must be finite")
            setattr(self, a_name, a)
            setattr(self, b_name, b)


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = float("nan")
    x: Optional[np.ndarray] = None


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _simplex(T: np.ndarray, basis: list, allowed: np.ndarray, max_iter: int) -> str:
    """Run Bland's-rule simplex on tableau T (last row = reduced costs, minimisation).

    T has shape (m + 1, n + 1); column n is the rhs.
    """
    m = T.shape[0] - 1
    for _ in range(max_iter):
        cost = T[-1, :-1]
        enter = -1
        for j in np.flatnonzero(allowed):
            if cost[j] < -FEAS_TOL:
                enter = j
                break
        if enter < 0:
            return "optimal"
        colv = T[:m, enter]
        best_ratio = np.inf
        leave = -1
        for i in range(m):
            if colv[i] > PIVOT_TOL:
                ratio = T[i, -1] / colv[i]
                # Bland: smallest ratio, ties to the lowest basic variable index
                if ratio < best_ratio - 1e-15 or (abs(ratio - best_ratio) <= 1e-15 and basis[i] < basis[leave]):
                    best_ratio = ratio
                    leave = i
        if leave < 0:
            return "unbounded"
        _pivot(T, leave, enter)
        basis[leave] = enter
    raise RuntimeError("simplex iteration limit reached")


def lp_solve(p: LpProblem, max_iter: int = 10000) -> LpSolution:
    """Solve an :class:`LpProblem` with the two-phase simplex method.

    Rows are scaled to unit max-abs before solving.  Infeasible and
    unbounded problems are reported through ``status``.
    """
    n = p.c.size
    m_ub = p.b_ub.size
    # inequality rows get slack variables
    A = np.zeros((p.b_eq.size + m_ub, n + m_ub))
    b = np.zeros(p.b_eq.size + m_ub)
    A[: p.b_eq.size, :n] = p.A_eq
    b[: p.b_eq.size] = p.b_eq
    A[p.b_eq.size:, :n] = p.A_ub
    A[p.b_eq.size:, n:] = np.eye(m_ub)
    b[p.b_eq.size:] = p.b_ub
    c = np.concatenate([p.c, np.zeros(m_ub)])
    nv = n + m_ub
    m = b.size

    scale = np.max(np.abs(np.column_stack([A, b])), axis=1) if m else np.zeros(0)
    keep = scale > 0.0
    # all-zero rows are consistent (0 = 0) and dropped
    A, b, scale = A[keep], b[keep], scale[keep]
    A = A / scale[:, None]
    b = b / scale
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    m = b.size

    if m == 0:
        if np.any(c > FEAS_TOL):
            return LpSolution("unbounded")
        return LpSolution("optimal", 0.0, np.zeros(n))

    # phase 1: artificial variables nv .. nv + m - 1
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = A
    T[:m, nv:nv + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :nv] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(nv, nv + m))
    allowed = np.ones(nv + m, dtype=bool)
    _simplex(T, basis, allowed, max_iter)
    if -T[-1, -1] > FEAS_TOL * max(1.0, float(np.sum(b))):
        return LpSolution("infeasible")

    # drive remaining artificials out of the basis; rows that cannot be are redundant
    redundant = []
    for i, bv in enumerate(basis):
        if bv >= nv:
            row = T[i, :nv]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            if cand.size:
                _pivot(T, i, int(cand[0]))
                basis[i] = int(cand[0])
            else:
                redundant.append(i)
    if redundant:
        keep_rows = [i for i in range(m) if i not in redundant]
        T = np.vstack([T[keep_rows], T[-1:]])
        basis = [basis[i] for i in keep_rows]
        m = len(basis)

    # phase 2 on the original objective (maximise c.x == minimise -c.x)
    T2 = np.zeros((m + 1, nv + 1))
    T2[:m, :nv] = T[:m, :nv]
    T2[:m, -1] = T[:m, -1]
    T2[-1, :nv] = -c
    for i, bv in enumerate(basis):
        if T2[-1, bv] != 0.0:
            T2[-1] -= T2[-1, bv] * T2[i]
    allowed = np.ones(nv, dtype=bool)
    status = _simplex(T2, basis, allowed, max_iter)
    if status == "unbounded":
        return LpSolution("unbounded")
    x = np.zeros(nv)
    for i, bv in enumerate(basis):
        x[bv] = T2[i, -1]
    x = x[:n]
    x[np.abs(x) < 1e-15] = 0.0
    return LpSolution("optimal", float(p.c @ x), x)


# ---------------------------------------------------------------- local polytope

_VERTICES = None


def vertex_matrix() -> np.ndarray:
    """Columns are the flattened tables of the 16 deterministic vertices."""
    global _VERTICES
    if _VERTICES is None:
        _VERTICES = np.column_stack([v.table.ravel() for v in deterministic_vertices()])
        _VERTICES.setflags(write=False)
    return _VERTICES


def _require_2222(b: Behavior) -> None:
    if b.shape != (2, 2, 2, 2):
        raise DomainError(f"(2,2,2,2) behavior required, got shape {b.shape}")


def is_local(b: Behavior, tol: float = FEAS_TOL) -> tuple[bool, Optional[np.ndarray]]:
    """Membership of ``b`` in the local polytope.

    Returns ``(True, weights)`` with weights over :func:`deterministic_vertices`
    when some convex combination reproduces ``b`` within ``tol``, and
    ``(False, None)`` otherwise.
    """
    _require_2222(b)
    V = vertex_matrix()
    target = b.table.ravel()
    sol = lp_solve(LpProblem(np.zeros(V.shape[1]), V, target))
    if sol.status != "optimal":
        return False, None
    w = np.clip(sol.x, 0.0, None)
    if np.max(np.abs(V @ w - target)) > tol * 10 or abs(w.sum() - 1.0) > tol * 10:
        return False, None
    return True, w


def local_bound(coeffs: np.ndarray) -> float:
    """Maximum of ``sum coeffs * p`` over the deterministic vertices."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (2, 2, 2, 2):
        raise DomainError(f"coefficient table must have shape (2,2,2,2), got {coeffs.shape}")
    return float(np.max(coeffs.ravel() @ vertex_matrix()))


@dataclass
class CcDecomposition:
    """Convex-combination decomposition b = sum q^L_i L_i + sum q^NL_j N_j."""

    status: str
    q_l: float = float("nan")
    q_local: Optional[np.ndarray] = None
    q_nonlocal: Optional[np.ndarray] = None
    residual: float = float("nan")


def cc_local_weight(b: Behavior, nonlocal_points: Sequence[Behavior]) -> CcDecomposition:
    """Largest total weight on local vertices in a mixture reproducing ``b``.

    The nonlocal candidates must be supplied by the caller.  If ``b`` is not
    in the convex hull of the vertices and the candidates the status is
    ``"infeasible"``.
    """
    _require_2222(b)
    for pt in nonlocal_points:
        if pt.shape != b.shape:
            raise DomainError("nonlocal points must share the behavior's shape")
    V = vertex_matrix()
    N = (np.column_stack([pt.table.ravel() for pt in nonlocal_points])
         if len(nonlocal_points) else np.zeros((16, 0)))
    k = N.shape[1]
    A = np.vstack([np.hstack([V, N]), np.ones((1, 16 + k))])
    rhs = np.concatenate([b.table.ravel(), [1.0]])
    c = np.concatenate([np.ones(16), np.zeros(k)])
    sol = lp_solve(LpProblem(c, A, rhs))
    if sol.status != "optimal":
        return CcDecomposition(sol.status)
    x = np.clip(sol.x, 0.0, None)
    resid = float(np.max(np.abs(A[:16] @ x - rhs[:16])))
    return CcDecomposition("optimal", float(min(x[:16].sum(), 1.0)), x[:16], x[16:], resid)


def cc_eve_distribution(q_l: float, local_part: Behavior, nonlocal_part: Behavior, x: int, y: int) -> np.ndarray:
    """Joint p(a, b, e) at fixed (x, y) for the convex-combination attack.

    Eve's alphabet is the four pairs (a, b), indexed 2a + b, followed by
    "?" at index 4.
    """
    if not 0.0 <= q_l <= 1.0:
        raise DomainError(f"q_L must lie in [0, 1], got {q_l}")
    pl = local_part.table[:, :, x, y]
    pn = nonlocal_part.table[:, :, x, y]
    out = np.zeros((2, 2, 5))
    for a in range(2):
        for bb in range(2):
            out[a, bb, 2 * a + bb] = q_l * pl[a, bb]
            out[a, bb, 4] = (1.0 - q_l) * pn[a, bb]
    return out


def cc_conditional_mutual_info(q_l: float, local_part: Behavior, nonlocal_part: Behavior, x: int, y: int) -> float:
    """I(A:B|E) of the convex-combination attack distribution at setting (x, y)."""
    pabe = cc_eve_distribution(q_l, local_part, nonlocal_part, x, y)
    total = 0.0
    for e in range(5):
        pe = pabe[:, :, e].sum()
        if pe > 0.0:
            total += pe * mutual_information(pabe[:, :, e])
    return float(total)


def cc_rate_upper_bound(q_l: float, local_part: Behavior, nonlocal_part: Behavior, p_xy: np.ndarray) -> float:
    """sum_xy p_xy I_xy(A:B|E) with caller-chosen setting weights ``p_xy``.

    No minimisation over Eve's post-processing channels is performed.
    """
    p_xy = np.asarray(p_xy, dtype=float)
    if p_xy.shape != (local_part.nX, local_part.nY) or abs(p_xy.sum() - 1.0) > 1e-12 or np.any(p_xy < 0):
        raise DomainError("p_xy must be a probability table over the settings")
    return float(sum(p_xy[x, y] * cc_conditional_mutual_info(q_l, local_part, nonlocal_part, x, y)
                     for x in range(p_xy.shape[0]) for y in range(p_xy.shape[1])))


def local_part_from_weights(weights: np.ndarray) -> Behavior:
    """Normalised mixture of the deterministic vertices with the given weights."""
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        raise DomainError("local weights must have positive total")
    return Behavior((vertex_matrix() @ (w / w.sum())).reshape(2, 2, 2, 2))

"""Detection-efficiency maps, critical efficiencies and routed Bell bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from ._numerics import DomainError, NoRootError, bisect, first_crossing
from .behavior import Behavior, chsh_facets, chsh_value
from .polytope import cc_local_weight, is_local
from .qcore import born_behavior, tilted_state

SQRT2 = math.sqrt(2.0)
ETA_GARG_MERMIN = 2.0 / (1.0 + SQRT2)


@dataclass(frozen=True)
class DetectionModel:
    """Per-party efficiencies and no-click assignment rules.

    ``q_a[a, x]`` is the probability that Alice outputs ``a`` on setting
    ``x`` when her detector does not click; ``q_b`` likewise for Bob.
    """

    eta_a: float
    eta_b: float
    q_a: np.ndarray
    q_b: np.ndarray

    def __post_init__(self):
        for name in ("eta_a", "eta_b"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        for name in ("q_a", "q_b"):
            q = np.array(getattr(self, name), dtype=float)
            if q.ndim != 2 or np.any(q < 0) or np.max(np.abs(q.sum(axis=0) - 1.0)) > 1e-12:
                raise DomainError(f"{name} must be a column-stochastic (outcome, setting) table")
            q.setflags(write=False)
            object.__setattr__(self, name, q)

    @classmethod
    def delta(cls, eta_a: float, eta_b: Optional[float] = None, outcome: int = 0,
              n_outcomes: int = 2, n_x: int = 2, n_y: int = 2) -> "DetectionModel":
        """Both parties map no-clicks deterministically to ``outcome``."""
        eta_b = eta_a if eta_b is None else eta_b
        qa = np.zeros((n_outcomes, n_x))
        qa[outcome] = 1.0
        qb = np.zeros((n_outcomes, n_y))
        qb[outcome] = 1.0
        return cls(eta_a, eta_b, qa, qb)


def apply_detection(b: Behavior, d: DetectionModel) -> Behavior:
    """Behavior seen when no-clicks are binned by the assignment rules.

    ``p^ = eA eB p + eA (1 - eB) pA qB + (1 - eA) eB qA pB + (1 - eA)(1 - eB) qA qB``
    with the marginals taken column by column, so the map stays affine even
    for signaling inputs.
    """
    if d.q_a.shape != (b.nA, b.nX) or d.q_b.shape != (b.nB, b.nY):
        raise DomainError("assignment tables do not match the behavior's shape")
    ea, eb = d.eta_a, d.eta_b
    pa = b.table.sum(axis=1)  # (a, x, y)
    pb = b.table.sum(axis=0)  # (b, x, y)
    qa = d.q_a[:, None, :, None]  # (a, ., x, .)
    qb = d.q_b[None, :, None, :]  # (., b, ., y)
    t = (ea * eb * b.table
         + ea * (1 - eb) * pa[:, None, :, :] * qb
         + (1 - ea) * eb * qa * pb[None, :, :, :]
         + (1 - ea) * (1 - eb) * qa * qb)
    return Behavior(t)


def effective_chsh(S: float, eta_a: float, eta_b: float, m_a0: float, m_b0: float) -> float:
    """CHSH value after loss when both parties map no-clicks to outcome +1."""
    if abs(m_a0) > 1.0 or abs(m_b0) > 1.0:
        raise DomainError("local means must lie in [-1, 1]")
    for e in (eta_a, eta_b):
        if not 0.0 <= e <= 1.0:
            raise DomainError(f"efficiency must lie in [0, 1], got {e}")
    return (eta_a * eta_b * S + 2 * eta_a * (1 - eta_b) * m_a0
            + 2 * (1 - eta_a) * eta_b * m_b0 + 2 * (1 - eta_a) * (1 - eta_b))


def cde_symmetric_maxent(tol: float = 1e-10) -> float:
    """Symmetric critical efficiency for the maximally entangled state.

    Root of 2 sqrt2 eta^2 + 2 (1 - eta)^2 = 2 on (1/2, 1).
    """
    return bisect(lambda e: 2 * SQRT2 * e * e + 2 * (1 - e) ** 2 - 2.0, 0.5, 1.0, tol)


# ---------------------------------------------------------------- Eberhard scan


@dataclass
class EberhardPoint:
    theta: float
    eta_star: float
    angles: np.ndarray
    converged: bool


@dataclass
class EberhardScan:
    points: list
    monotone: bool

    def __iter__(self):
        return iter((p.theta, p.eta_star) for p in self.points)

    def __len__(self):
        return len(self.points)


def _tilted_correlators(theta: float, angles: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    b = born_behavior(tilted_state(theta), angles[:2], angles[2:])
    E = b.correlators()
    return E, np.array([b.mean_a(0), b.mean_a(1)]), np.array([b.mean_b(0), b.mean_b(1)])


def _facet_crossing(E: np.ndarray, mA: np.ndarray, mB: np.ndarray) -> float:
    """Smallest symmetric eta in (0, 1] at which some CHSH facet exceeds 2.

    With no-clicks mapped to +1 every correlator is quadratic in eta, so
    each facet crossing solves a quadratic.
    """
    best = 1.0 + 1.0
    for k in range(4):
        s = np.ones((2, 2))
        s[k // 2, k % 2] = -1.0
        for sign in (1.0, -1.0):
            ss = sign * s
            # facet(eta) = eta^2 F + eta (1 - eta) G + (1 - eta)^2 H
            F = float(np.sum(ss * E))
            G = float(np.sum(ss * (mA[:, None] + mB[None, :])))
            H = float(np.sum(ss))
            # coefficients of c2 eta^2 + c1 eta + c0 - 2 = 0
            c2 = F - G + H
            c1 = G - 2 * H
            c0 = H - 2.0
            roots = np.roots([c2, c1, c0]) if abs(c2) > 1e-15 else (
                np.array([-c0 / c1]) if abs(c1) > 1e-15 else np.array([]))
            for r in roots:
                if abs(r.imag) < 1e-12 and 0.0 < r.real <= 1.0:
                    e = r.real
                    slope = 2 * c2 * e + c1
                    if slope > 0:
                        best = min(best, e)
    return best


def _eberhard_point(theta: float, budget: int, rng: np.random.Generator, warm: Optional[np.ndarray],
                   locate: bool = True) -> EberhardPoint:
    def objective(v):
        E, mA, mB = _tilted_correlators(theta, v)
        return _facet_crossing(E, mA, mB)

    starts = [np.array([0.0, math.pi / 2, math.pi / 4, -math.pi / 4])]
    if warm is not None:
        starts.insert(0, np.asarray(warm, dtype=float))
    starts += [rng.uniform(-math.pi, math.pi, 4) for _ in range(3)]
    best_x, best_f, converged = starts[0], objective(starts[0]), False
    per_start = max(budget // len(starts), 50)
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead",
                       options=dict(maxfev=per_start, xatol=1e-10, fatol=1e-12))
        if res.fun < best_f:
            best_f, best_x, converged = float(res.fun), res.x, bool(res.success)
        elif res.fun == best_f:
            converged = converged or bool(res.success)
    if best_f > 1.0 or not locate:
        return EberhardPoint(theta, float("nan") if best_f > 1.0 else best_f, best_x, False)

    # eta* is where LP membership fails for the optimised settings
    base = born_behavior(tilted_state(theta), best_x[:2], best_x[2:])

    def nonlocal_at(eta: float) -> bool:
        bh = apply_detection(base, DetectionModel.delta(eta))
        return not is_local(bh)[0]

    hi = min(1.0, best_f + 1e-4)
    while not nonlocal_at(hi) and hi < 1.0:
        hi = min(1.0, hi + 1e-3)
    lo = max(0.0, best_f - 1e-2)
    try:
        eta_star = first_crossing(nonlocal_at, lo, hi, tol=1e-8)
    except NoRootError:
        return EberhardPoint(theta, float("nan"), best_x, False)
    return EberhardPoint(theta, float(eta_star), best_x, converged)


EBERHARD_MAX_STEP = 0.11
DEFAULT_EBERHARD_GRID = (math.pi / 4, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05)


def eberhard_scan(theta_grid: Sequence[float] = DEFAULT_EBERHARD_GRID,
                  angle_optimizer_budget: int = 4000, seed: int = 0) -> EberhardScan:
    """Critical symmetric efficiency of tilted states under LP membership.

    For each theta the four measurement angles are optimised (Nelder-Mead)
    to make the CHSH-facet crossing as early as possible; the reported
    eta* is then the smallest efficiency at which the lossy behavior with
    no-clicks mapped to outcome 0 leaves the local polytope.

    Returns
    -------
    EberhardScan
        Points ordered as given; ``monotone`` is False if eta* fails to be
        non-increasing as theta decreases.
    """
    grid = [float(t) for t in theta_grid]
    for t in grid:
        if not 0.0 < t <= math.pi / 4 + 1e-12:
            raise DomainError(f"theta must lie in (0, pi/4], got {t}")
    rng = np.random.default_rng(seed)
    points = []
    warm = None
    prev = math.pi / 4
    for t in sorted(grid, reverse=True):
        # the optimal angles drift with theta; large jumps lose the basin
        n_steps = int(math.ceil((prev - t) / EBERHARD_MAX_STEP))
        for s in np.linspace(prev, t, n_steps + 1)[1:-1]:
            warm = _eberhard_point(float(s), angle_optimizer_budget, rng, warm, locate=False).angles
        pt = _eberhard_point(t, angle_optimizer_budget, rng, warm)
        warm = pt.angles
        prev = t
        points.append(pt)
    by_theta = {p.theta: p for p in points}
    ordered = [by_theta[t] for t in grid]
    desc = sorted(points, key=lambda p: -p.theta)
    monotone = all(b.eta_star <= a.eta_star + 1e-6 for a, b in zip(desc, desc[1:]))
    return EberhardScan(ordered, monotone)


# ---------------------------------------------------------------- routed Bell tests


def routed_s1_bound(S0: float) -> float:
    """Largest far-device CHSH value S1 compatible with short-range S0."""
    if not 2.0 - 1e-12 <= S0 <= 2 * SQRT2 + 1e-12:
        raise DomainError(f"S0 must lie in [2, 2 sqrt 2], got {S0}")
    return math.sqrt(max(8.0 - S0 * S0, 0.0))


@dataclass
class RoutedParams:
    eta_a0: float = 1.0
    eta_b: float = 1.0
    eta: Optional[float] = None  # symmetric near efficiency
    S0: Optional[float] = None
    S1: Optional[float] = None
    m_a1: int = 2
    m_b: int = 2
    T: Optional[float] = None
    theta: float = 0.0


@dataclass
class RoutedResult:
    value: float
    status: str = "ok"


def routed_symmetric_s0(eta: float) -> float:
    return 2 * SQRT2 * eta * eta + 2 * (1 - eta) ** 2


def routed_symmetric_s1(eta: float, eta_a1: float) -> float:
    return 2 * SQRT2 * eta_a1 * eta + 2 * (1 - eta_a1) * (1 - eta)


def routed_symmetric_threshold(tol: float = 1e-10) -> float:
    """Near efficiency below which S0 <= 2 (no short-range violation)."""
    return bisect(lambda e: routed_symmetric_s0(e) - 2.0, 0.5, 1.0, tol)


def routed_critical_eta(mode: str, params: RoutedParams) -> RoutedResult:
    """Critical efficiency of the remote device A1.

    ``asymmetric``: sqrt(1 - eta_A0^2).  ``symmetric``: with near devices at
    efficiency eta, solve S1(eta, eta_A1) = sqrt(8 - S0(eta)^2) for eta_A1.
    """
    if mode == "asymmetric":
        e = params.eta_a0
        if not 0.0 <= e <= 1.0:
            raise DomainError(f"eta_A0 must lie in [0, 1], got {e}")
        return RoutedResult(math.sqrt(1.0 - e * e))
    if mode == "symmetric":
        eta = params.eta
        if eta is None or not 0.0 <= eta <= 1.0:
            raise DomainError("symmetric mode needs eta in [0, 1]")
        if eta <= ETA_GARG_MERMIN:
            return RoutedResult(float("nan"), "no violation possible")
        s0 = min(routed_symmetric_s0(eta), 2 * SQRT2)
        target = routed_s1_bound(s0)
        f = lambda ea1: routed_symmetric_s1(eta, ea1) - target
        if f(0.0) >= 0.0:
            return RoutedResult(0.0)
        return RoutedResult(bisect(f, 0.0, 1.0, 1e-8))
    raise DomainError(f"unknown routed mode '{mode}'")


def srq_j1_bound(S0: float) -> float:
    """Short-range-quantum bound on J1 given the near CHSH value S0."""
    if not 2.0 - 1e-12 <= S0 <= 2 * SQRT2 + 1e-12:
        raise DomainError(f"S0 must lie in [2, 2 sqrt 2], got {S0}")
    return 0.5 * (S0 + math.sqrt(max(8.0 - S0 * S0, 0.0)))


def srq_universal_eta(eta_b: float, m_a1: int, m_b: int) -> RoutedResult:
    """Remote efficiency at or below which a short-range model exists."""
    if m_a1 < 2 or m_b < 2:
        raise DomainError("setting counts must be at least 2")
    if not 0.0 <= eta_b <= 1.0:
        raise DomainError(f"eta_B must lie in [0, 1], got {eta_b}")
    den = eta_b * (m_a1 * m_b - 1) - (m_a1 - 1)
    if den <= 0.0:
        return RoutedResult(float("nan"), "bound vacuous")
    return RoutedResult(eta_b * (m_b - 1) / den)


def sekatski_c_bound(T: float, S0: float) -> float:
    """Bound on the continuous-setting correlation C given click rate T and S0."""
    if not 0.0 <= T <= 1.0:
        raise DomainError(f"T must lie in [0, 1], got {T}")
    if not 0.0 <= S0 <= 2 * SQRT2 + 1e-12:
        raise DomainError(f"S0 must lie in [0, 2 sqrt 2], got {S0}")
    pre = (2.0 / math.pi) * math.sin(math.pi * T / 2.0)
    if S0 > 2.0:
        return pre * (S0 + math.sqrt(max(8.0 - S0 * S0, 0.0))) / (2 * SQRT2)
    return pre * SQRT2

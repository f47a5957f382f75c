"""Behaviors p(ab|xy), canonical boxes and Bell-type functionals.

Tables are stored in full as ``p[a, b, x, y]`` so that signaling and
normalisation defects stay visible after noise or loss maps.  Outcome 0
maps to the correlator value +1 and outcome 1 to -1 everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from ._numerics import DomainError, binary_entropy

NORM_TOL = 1e-12
NEG_TOL = 1e-12


@dataclass(frozen=True)
class Behavior:
    """Conditional distribution ``table[a, b, x, y] = p(ab|xy)``.

    Parameters
    ----------
    table : array_like, shape (nA, nB, nX, nY)
        Entries must be non-negative and every (x, y) column must sum to 1.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 4:
            raise DomainError(f"behavior table must be 4-dimensional, got shape {t.shape}")
        if np.any(t < -NEG_TOL):
            raise DomainError("behavior table has negative entries")
        sums = t.sum(axis=(0, 1))
        if np.max(np.abs(sums - 1.0)) > NORM_TOL * max(1, t.shape[0] * t.shape[1]):
            raise DomainError(f"behavior columns do not sum to 1 (max dev {np.max(np.abs(sums - 1.0)):.3g})")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.table.shape  # type: ignore[return-value]

    @property
    def nA(self) -> int:
        return self.table.shape[0]

    @property
    def nB(self) -> int:
        return self.table.shape[1]

    @property
    def nX(self) -> int:
        return self.table.shape[2]

    @property
    def nY(self) -> int:
        return self.table.shape[3]

    def correlator(self, x: int, y: int) -> float:
        """<A_x B_y> for binary outcomes."""
        _require_binary(self)
        t = self.table[:, :, x, y]
        return float(t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0])

    def correlators(self) -> np.ndarray:
        """All <A_x B_y> as an (nX, nY) array."""
        _require_binary(self)
        t = self.table
        return t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0]

    def marginal_a(self) -> np.ndarray:
        """p(a|x,y) as an (nA, nX, nY) array."""
        return self.table.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        """p(b|x,y) as an (nB, nX, nY) array."""
        return self.table.sum(axis=0)

    def mean_a(self, x: int, y: int = 0) -> float:
        """<A_x> evaluated in column (x, y)."""
        m = self.marginal_a()[:, x, y]
        return float(m[0] - m[1])

    def mean_b(self, y: int, x: int = 0) -> float:
        """<B_y> evaluated in column (x, y)."""
        m = self.marginal_b()[:, x, y]
        return float(m[0] - m[1])

    def mix(self, other: "Behavior", weight: float) -> "Behavior":
        """``weight * self + (1 - weight) * other``."""
        return Behavior(weight * self.table + (1.0 - weight) * other.table)

    def to_dict(self) -> dict:
        return {
            "nA": self.nA,
            "nB": self.nB,
            "nX": self.nX,
            "nY": self.nY,
            "table": [float(v) for v in self.table.ravel(order="C")],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Behavior":
        for key in ("nA", "nB", "nX", "nY", "table"):
            if key not in d:
                raise DomainError(f"behavior JSON is missing field '{key}'")
        dims = []
        for key in ("nA", "nB", "nX", "nY"):
            v = d[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise DomainError(f"behavior JSON field '{key}' must be a positive integer")
            dims.append(v)
        table = d["table"]
        if not isinstance(table, list) or len(table) != int(np.prod(dims)):
            raise DomainError(f"behavior JSON field 'table' must be a list of {int(np.prod(dims))} numbers")
        try:
            arr = np.array(table, dtype=float)
        except (TypeError, ValueError) as exc:
            raise DomainError("behavior JSON field 'table' must contain numbers") from exc
        return cls(arr.reshape(dims))

    @classmethod
    def from_json(cls, text: str) -> "Behavior":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"malformed behavior JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise DomainError("behavior JSON must be an object")
        return cls.from_dict(d)


def _require_binary(b: Behavior) -> None:
    if b.nA != 2 or b.nB != 2:
        raise DomainError(f"binary outcomes required, got nA={b.nA}, nB={b.nB}")


def _require_2222(b: Behavior) -> None:
    if b.shape != (2, 2, 2, 2):
        raise DomainError(f"(2,2,2,2) behavior required, got shape {b.shape}")


def from_correlators(E: np.ndarray, mA: np.ndarray, mB: np.ndarray) -> Behavior:
    """Binary-outcome behavior from correlators and local means.

    ``p(ab|xy) = (1 + s_a mA[x] + s_b mB[y] + s_a s_b E[x, y]) / 4`` with
    ``s_0 = +1`` and ``s_1 = -1``.
    """
    E = np.asarray(E, dtype=float)
    mA = np.asarray(mA, dtype=float)
    mB = np.asarray(mB, dtype=float)
    s = np.array([1.0, -1.0])
    t = (1.0 + s[:, None, None, None] * mA[None, None, :, None]
         + s[None, :, None, None] * mB[None, None, None, :]
         + s[:, None, None, None] * s[None, :, None, None] * E[None, None, :, :]) / 4.0
    return Behavior(np.clip(t, 0.0, None))


# ---------------------------------------------------------------- canonical boxes


def pr_box() -> Behavior:
    """Popescu-Rohrlich box, p(ab|xy) = 1/2 when a XOR b = x AND y."""
    return isotropic_behavior(1.0)


def isotropic_behavior(v: float) -> Behavior:
    """Isotropic mixture ``(v/2) delta(a^b, xy) + (1 - v)/4``.

    Its CHSH value is 4v; it is local for v <= 1/2 and quantum up to 1/sqrt(2).
    """
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"isotropic visibility must lie in [0, 1], got {v}")
    t = np.empty((2, 2, 2, 2))
    for a, b, x, y in product(range(2), repeat=4):
        t[a, b, x, y] = 0.5 * v * ((a ^ b) == (x & y)) + (1.0 - v) / 4.0
    return Behavior(t)


def uniform_behavior(nA: int = 2, nB: int = 2, nX: int = 2, nY: int = 2) -> Behavior:
    return Behavior(np.full((nA, nB, nX, nY), 1.0 / (nA * nB)))


def deterministic_behavior(fa: Sequence[int], fb: Sequence[int], nA: int = 2, nB: int = 2) -> Behavior:
    """Behavior with a = fa[x], b = fb[y] deterministically."""
    t = np.zeros((nA, nB, len(fa), len(fb)))
    for x, a in enumerate(fa):
        for y, b in enumerate(fb):
            t[a, b, x, y] = 1.0
    return Behavior(t)


# Response functions of one bit on one bit: 0, 1, identity, negation.
_RESPONSES = {"0": (0, 0), "1": (1, 1), "x": (0, 1), "x+1": (1, 0)}

# The eight strategies l_j^r in the order (j, r) = (1,0), (1,1), ..., (4,1).
STRATEGY_LABELS = (
    ((1, 0), ("0", "0")),
    ((1, 1), ("1", "1")),
    ((2, 0), ("x", "0")),
    ((2, 1), ("x+1", "1")),
    ((3, 0), ("0", "x")),
    ((3, 1), ("1", "x+1")),
    ((4, 0), ("x", "x+1")),
    ((4, 1), ("x+1", "x")),
)


def strategy_vertex(j: int, r: int) -> Behavior:
    """Deterministic strategy l_j^r for j in 1..4 and r in {0, 1}."""
    for (jj, rr), (fa, fb) in STRATEGY_LABELS:
        if (jj, rr) == (j, r):
            return deterministic_behavior(_RESPONSES[fa], _RESPONSES[fb])
    raise DomainError(f"no strategy l_{j}^{r}")


def deterministic_vertices() -> list[Behavior]:
    """All 16 deterministic vertices of the (2,2,2,2) local polytope.

    The first eight are l_1^0, l_1^1, ..., l_4^1; the remaining eight are
    their output relabelings in lexicographic order of the response pair.
    """
    seen = []
    out = []
    for _, (fa, fb) in STRATEGY_LABELS:
        pair = (_RESPONSES[fa], _RESPONSES[fb])
        seen.append(pair)
        out.append(deterministic_behavior(*pair))
    for fa in _RESPONSES.values():
        for fb in _RESPONSES.values():
            if (fa, fb) not in seen:
                seen.append((fa, fb))
                out.append(deterministic_behavior(fa, fb))
    return out


# ---------------------------------------------------------------- functionals


def chsh_coefficients() -> np.ndarray:
    """Coefficient table c[a, b, x, y] with beta = sum c * p."""
    c = np.empty((2, 2, 2, 2))
    for a, b, x, y in product(range(2), repeat=4):
        c[a, b, x, y] = 1.0 if (a ^ b) == (x & y) else -1.0
    return c


def chsh_upper_coefficients() -> np.ndarray:
    """Coefficients of beta_up = sum_xy p(a XOR b = xy | xy)."""
    c = np.empty((2, 2, 2, 2))
    for a, b, x, y in product(range(2), repeat=4):
        c[a, b, x, y] = 1.0 if (a ^ b) == (x & y) else 0.0
    return c


def chsh_value(b: Behavior, with_upper: bool = False):
    """CHSH value ``E00 + E01 + E10 - E11``.

    Parameters
    ----------
    b : Behavior
        A (2,2,2,2) behavior.
    with_upper : bool
        Also return the success-probability form ``beta_up`` satisfying
        ``beta = 2 beta_up - 4``.
    """
    _require_2222(b)
    beta = float(np.sum(chsh_coefficients() * b.table))
    if with_upper:
        return beta, float(np.sum(chsh_upper_coefficients() * b.table))
    return beta


def chsh_facets(b: Behavior) -> np.ndarray:
    """Values of the eight CHSH-type facet functionals (sign on each of the four terms)."""
    _require_2222(b)
    E = b.correlators()
    out = []
    for k in range(4):
        s = np.ones((2, 2))
        s[k // 2, k % 2] = -1.0
        v = float(np.sum(s * E))
        out.extend([v, -v])
    return np.array(out)


def no_signaling_check(b: Behavior) -> float:
    """Largest violation of the no-signaling conditions.

    Compares p(a|x, y) across y and p(b|x, y) across x.
    """
    pa = b.marginal_a()
    pb = b.marginal_b()
    dev = 0.0
    if b.nY > 1:
        dev = max(dev, float(np.max(np.abs(pa - pa[:, :, :1]))))
    if b.nX > 1:
        dev = max(dev, float(np.max(np.abs(pb - pb[:, :1, :]))))
    return dev


def chained_value(b: Behavior, M: int) -> float:
    """Average anticorrelation of the chained test on neighbouring settings.

    ``t = 1/(3M) sum_{c in {-1,0,1}} sum_i p(a != b | X_i, X_{i+c})`` where
    both parties share the settings X_0..X_{M-1}.  Indices wrap around and
    X_M (resp. X_{-1}) is X_0 (resp. X_{M-1}) with its outcome flipped, so a
    wrapped term counts p(a == b).  Local behaviors satisfy t <= 1 - 2/(3M).
    """
    _require_binary(b)
    if M < 2 or b.nX != M or b.nY != M:
        raise DomainError(f"chained value needs {M} settings per side, got {b.nX}x{b.nY}")
    t = b.table
    total = 0.0
    for i in range(M):
        for c in (-1, 0, 1):
            j = i + c
            flip = j < 0 or j >= M
            j %= M
            p_diff = float(t[0, 1, i, j] + t[1, 0, i, j])
            total += (1.0 - p_diff) if flip else p_diff
    return total / (3.0 * M)


def chained_bc2_value(b: Behavior) -> float:
    """Sum of disagreement probabilities along the two-sided chain.

    ``sum_{i=1}^{M} [p(a_i != b_{i-1}) + p(a_i != b_i)]`` with Alice's
    setting x = i - 1 holding a_i, Bob's setting y holding b_y, and
    ``b_M`` identified with ``b_0`` flipped.
    """
    _require_binary(b)
    M = b.nX
    if b.nY != M or M < 2:
        raise DomainError("chain sum needs M >= 2 settings on both sides")
    t = b.table
    diff = t[0, 1] + t[1, 0]
    total = 0.0
    for i in range(1, M + 1):
        x = i - 1
        total += float(diff[x, i - 1])
        if i < M:
            total += float(diff[x, i])
        else:
            total += 1.0 - float(diff[x, 0])
    return total


def monogamy_max(beta_ab: float) -> float:
    """Largest CHSH value Eve can share with Alice given beta_AB."""
    if not 0.0 <= beta_ab <= 2.0 * math.sqrt(2.0) + 1e-12:
        raise DomainError(f"beta_AB must lie in [0, 2 sqrt 2], got {beta_ab}")
    return math.sqrt(max(8.0 - beta_ab * beta_ab, 0.0))


# ---------------------------------------------------------------- Eve strategies


@dataclass(frozen=True)
class EveWeights:
    """Weights of a convex decomposition into the l_j^r and a PR box.

    ``p[j - 1, r]`` is the weight of strategy l_j^r; ``p_nl`` that of the PR box.
    """

    p: np.ndarray
    p_nl: float

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(4, 2)
        if np.any(p < -1e-15) or self.p_nl < -1e-15:
            raise DomainError("Eve weights must be non-negative")
        if abs(p.sum() + self.p_nl - 1.0) > 1e-12:
            raise DomainError(f"Eve weights sum to {p.sum() + self.p_nl}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "p_nl", float(self.p_nl))

    @property
    def p_l(self) -> float:
        return float(self.p.sum())

    @classmethod
    def isotropic(cls, p_nl: float) -> "EveWeights":
        return cls(np.full((4, 2), (1.0 - p_nl) / 8.0), p_nl)


def eve_strategy_behavior(w: EveWeights) -> Behavior:
    """Observed behavior of the mixture sum_jr p_j^r l_j^r + p_NL PR."""
    t = w.p_nl * pr_box().table
    for (j, r), _ in STRATEGY_LABELS:
        t = t + w.p[j - 1, r] * strategy_vertex(j, r).table
    return Behavior(t)


@dataclass(frozen=True)
class PseudosiftResult:
    """Output of :func:`pseudosift`.

    Attributes
    ----------
    tables : ndarray, shape (2, 2, 2)
        ``tables[x, a, b]``: joint distribution of Alice's bit and Bob's
        (possibly flipped) bit given Alice's setting x, averaged over y.
    eve : ndarray, shape (2, 2, 2, 3)
        ``eve[x, a, b, e]`` splits the same weight by Eve's knowledge class:
        e = 0 nothing known, e = 1 only a known, e = 2 both known.
    """

    tables: np.ndarray
    eve: np.ndarray

    def error_rate(self, x: int) -> float:
        t = self.tables[x]
        return float(t[0, 1] + t[1, 0])


def pseudosift(w: EveWeights, xi0: float) -> PseudosiftResult:
    """Pseudosifting: Bob flips his bit on (x, y) = (1, 1), y hidden from Eve.

    Bob picks y = 0 with probability ``xi0`` and y = 1 with ``1 - xi0``.
    """
    if not 0.0 <= xi0 <= 1.0:
        raise DomainError(f"xi0 must lie in [0, 1], got {xi0}")
    xi = (xi0, 1.0 - xi0)
    tables = np.zeros((2, 2, 2))
    eve = np.zeros((2, 2, 2, 3))
    pr = pr_box().table
    for x in range(2):
        for y in range(2):
            for a, bb in product(range(2), repeat=2):
                val = w.p_nl * xi[y] * pr[a, bb, x, y]
                tables[x, a, bb ^ (x & y)] += val
                eve[x, a, bb ^ (x & y), 0] += val
    for (j, r), (fa, fb) in STRATEGY_LABELS:
        weight = w.p[j - 1, r]
        ra, rb = _RESPONSES[fa], _RESPONSES[fb]
        for x in range(2):
            a = ra[x]
            sifted = [rb[y] ^ (x & y) for y in range(2)]
            cls = 2 if sifted[0] == sifted[1] else 1
            for y in range(2):
                tables[x, a, sifted[y]] += weight * xi[y]
                eve[x, a, sifted[y], cls] += weight * xi[y]
    return PseudosiftResult(tables, eve)


def bob_entropy_given_eve(w: EveWeights, xi0: float, x: int) -> float:
    """H(B | E, X = x) after pseudosifting, with E the label of Eve's box.

    PR rounds leave Bob's bit uniform; a strategy whose sifted bit depends
    on y contributes h(xi0); others contribute 0.
    """
    h = binary_entropy(xi0)
    total = w.p_nl * 1.0
    for (j, r), (fa, fb) in STRATEGY_LABELS:
        rb = _RESPONSES[fb]
        if (rb[0] ^ 0) != (rb[1] ^ (x & 1)):
            total += w.p[j - 1, r] * h
    return float(total)


# ---------------------------------------------------------------- prepare and measure


@dataclass(frozen=True)
class PMBehavior:
    """Prepare-and-measure table ``table[b, prep, y] = p(b | prep, y)``."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 3:
            raise DomainError("prepare-and-measure table must be 3-dimensional")
        if np.max(np.abs(t.sum(axis=0) - 1.0)) > NORM_TOL * t.shape[0]:
            raise DomainError("prepare-and-measure columns do not sum to 1")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def n_prep(self) -> int:
        return self.table.shape[1]

    @property
    def nY(self) -> int:
        return self.table.shape[2]

    def correlators(self) -> np.ndarray:
        """E[prep, y] = p(+1|prep, y) - p(-1|prep, y)."""
        if self.table.shape[0] != 2:
            raise DomainError("binary outcomes required")
        return self.table[0] - self.table[1]


def qubit_pm_behavior(state_angles: Sequence[float], meas_angles: Sequence[float]) -> PMBehavior:
    """Pure qubit states and projective measurements in the x-z Bloch plane.

    p(+1 | prep, y) = (1 + cos(phi_prep - theta_y)) / 2.
    """
    phi = np.asarray(state_angles, dtype=float)[:, None]
    th = np.asarray(meas_angles, dtype=float)[None, :]
    plus = 0.5 * (1.0 + np.cos(phi - th))
    return PMBehavior(np.stack([plus, 1.0 - plus]))


def witness_I3(pm: PMBehavior) -> float:
    """Dimension witness |E11 + E12 + E21 - E22 - E31| (classical bit <= 3)."""
    if pm.n_prep != 3 or pm.nY != 2:
        raise DomainError("I3 needs 3 preparations and 2 binary measurements")
    E = pm.correlators()
    return float(abs(E[0, 0] + E[0, 1] + E[1, 0] - E[1, 1] - E[2, 0]))


_S_PM_SIGNS = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)


def witness_S_pm(pm: PMBehavior) -> float:
    """Prepare-and-measure CHSH-type witness over preparations (a0, a1).

    Preparation index is ``2 a0 + a1``.  The signed correlator sum is halved
    so that a classical bit gives at most 2 and a qubit at most 2 sqrt 2,
    matching Bob's success probability P_B = (S + 4) / 8.
    """
    if pm.n_prep != 4 or pm.nY != 2:
        raise DomainError("S witness needs 4 preparations and 2 binary measurements")
    E = pm.correlators()
    return float(0.5 * np.sum(_S_PM_SIGNS * E))


def pm_success_probability(pm: PMBehavior) -> float:
    """Bob's average probability of guessing a_y from preparation (a0, a1)."""
    if pm.n_prep != 4 or pm.nY != 2:
        raise DomainError("needs 4 preparations and 2 binary measurements")
    t = pm.table
    total = 0.0
    for prep in range(4):
        bits = (prep >> 1, prep & 1)
        for y in range(2):
            total += t[bits[y], prep, y]
    return float(total / 8.0)

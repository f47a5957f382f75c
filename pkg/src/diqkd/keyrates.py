"""Closed-form key rates, entropy bounds and finite-key expressions.

All logarithms are base 2 unless a formula carries an explicit ln.  Threshold
solvers bisect with bracket verification and return the root itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ._numerics import DomainError, bisect, binary_entropy, binary_entropy_array, first_crossing

SQRT2 = math.sqrt(2.0)
TSIRELSON = 2.0 * SQRT2
ETA_LOC = 2.0 * (SQRT2 - 1.0)
SDI_THRESHOLD = (5.0 + math.sqrt(3.0)) / 8.0

h = binary_entropy


@dataclass
class RateReport:
    """Named scalar outputs of one formula evaluation."""

    protocol: str
    inputs: dict
    outputs: dict
    formula: str
    status: str = "ok"

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "inputs": self.inputs, "outputs": self.outputs,
                "formula": self.formula, "status": self.status}


def _check_unit(name: str, v: float, lo: float = 0.0, hi: float = 1.0) -> None:
    if not (lo <= v <= hi) or math.isnan(v):
        raise DomainError(f"{name} must lie in [{lo}, {hi}], got {v}")


def _clip_chsh(S: float) -> float:
    if S > TSIRELSON + 1e-9:
        raise DomainError(f"CHSH value {S} exceeds 2 sqrt 2")
    return min(S, TSIRELSON)


# ---------------------------------------------------------------- CHSH / Devetak-Winter


def holevo_chsh(S: float) -> float:
    """Eve's Holevo information chi0(S) = h(1/2 + sqrt(S^2 - 4)/4).

    Values S <= 2 give the unconstrained value 1.
    """
    S = _clip_chsh(S)
    if S <= 2.0:
        return 1.0
    return h(0.5 + math.sqrt(S * S - 4.0) / 4.0)


def dw_rate_chsh(S: float, Q: float) -> float:
    """One-way rate 1 - h(Q) - chi0(S) against collective attacks."""
    _check_unit("Q", Q)
    return 1.0 - h(Q) - holevo_chsh(S)


def dw_generic(I_ab: float, I_ae: float) -> float:
    """Devetak-Winter difference I(A:B) - I(A:E)."""
    return float(I_ab) - float(I_ae)


def depolarized_chsh(Q: float) -> float:
    """CHSH value of the depolarizing channel with error rate Q."""
    return TSIRELSON * (1.0 - 2.0 * Q)


def dw_qber_threshold(tol: float = 1e-10) -> float:
    """QBER at which 1 - h(Q) - chi0(2 sqrt2 (1 - 2Q)) vanishes."""
    return bisect(lambda Q: dw_rate_chsh(depolarized_chsh(Q), Q), 1e-9, 0.2, tol)


def chsh_c_stats(eta: float) -> tuple[float, float]:
    """(S, Q) of the maximally entangled CHSH protocol at symmetric efficiency eta."""
    _check_unit("eta", eta)
    return TSIRELSON * eta * eta + 2.0 * (1.0 - eta) ** 2, eta * (1.0 - eta)


def dw_eta_threshold(tol: float = 1e-10) -> float:
    """Symmetric efficiency below which the lossy CHSH protocol has no key."""
    def f(eta):
        S, Q = chsh_c_stats(eta)
        return dw_rate_chsh(S, Q)
    return bisect(f, 0.85, 1.0 - 1e-12, tol)


# ---------------------------------------------------------------- noisy preprocessing


def noisy_chi(S: float, q: float) -> float:
    """chi0(S) - h((1 + sqrt(1 - q(1 - q)(8 - S^2)))/2)."""
    _check_unit("q", q, 0.0, 0.5)
    # below S = 2 Eve's side information is capped at its S = 2 value
    S = max(_clip_chsh(S), 2.0)
    return holevo_chsh(S) - h(0.5 * (1.0 + math.sqrt(max(1.0 - q * (1.0 - q) * (8.0 - S * S), 0.0))))


def dw_rate_noisy_preproc(S: float, Q: float, q: float) -> float:
    """Rate with Alice flipping her key bit with probability q."""
    _check_unit("Q", Q)
    _check_unit("q", q, 0.0, 0.5)
    Qq = (1.0 - q) * Q + q * (1.0 - Q)
    return 1.0 - h(Qq) - noisy_chi(S, q)


def optimal_noisy_preproc(S: float, Q: float, tol: float = 1e-6) -> tuple[float, float]:
    """Best flip probability q* in [0, 1/2] and the rate it achieves.

    The q = 0 endpoint is always compared, so the result never falls below
    the plain rate.
    """
    res = minimize_scalar(lambda q: -dw_rate_noisy_preproc(S, Q, q), bounds=(0.0, 0.5),
                          method="bounded", options=dict(xatol=tol))
    q_best, r_best = float(res.x), -float(res.fun)
    r0 = dw_rate_noisy_preproc(S, Q, 0.0)
    if r0 >= r_best:
        return 0.0, r0
    return q_best, r_best


def lossy_tilted_stats(eta: float, theta: float, angles: Sequence[float]) -> tuple[float, float]:
    """(S, Q) for a lossy tilted state with no-clicks mapped to outcome 0.

    ``angles = (a0, a1, b0, b1, b2)``: Alice's two settings, Bob's two CHSH
    settings and Bob's key setting, all in the x-z plane.  Q is the error
    rate between A0 and B2.  Uses closed-form correlators of
    cos(theta)|00> + sin(theta)|11>.
    """
    a0, a1, b0, b1, b2 = angles
    s2, c2 = math.sin(2 * theta), math.cos(2 * theta)

    def E(a, b):
        e = math.cos(a) * math.cos(b) + s2 * math.sin(a) * math.sin(b)
        return eta * eta * e + eta * (1 - eta) * c2 * (math.cos(a) + math.cos(b)) + (1 - eta) ** 2

    S = E(a0, b0) + E(a0, b1) + E(a1, b0) - E(a1, b1)
    Q = 0.5 * (1.0 - E(a0, b2))
    return S, Q


_Q_GRID = np.linspace(0.0, 0.5, 65)[:-1]


def _noisy_positive(S: float, Q: float) -> bool:
    """Whether some q in [0, 1/2) gives a strictly positive noisy-preprocessing rate.

    Near q = 1/2 the rate vanishes to second order in delta = 1/2 - q with
    coefficient proportional to 4 (1 - 2Q)^2 - (8 - S^2) artanh(y) / y,
    y = sqrt(S^2 - 4)/2; its sign is tested analytically because the
    floating-point rate there is pure rounding noise.
    """
    S = abs(S)
    if S <= 2.0:
        return False
    S = min(S, TSIRELSON)
    y = math.sqrt(S * S - 4.0) / 2.0
    if y >= 1.0:
        # Eve holds no information, so q = 0 already works whenever Q < 1/2
        return Q < 0.5
    lim = 4.0 * (1.0 - 2.0 * Q) ** 2 - (8.0 - S * S) * math.atanh(y) / y
    if lim > 0.0:
        return True
    q = _Q_GRID
    Qq = (1.0 - q) * Q + q * (1.0 - Q)
    chi = h(0.5 + math.sqrt(S * S - 4.0) / 4.0) - binary_entropy_array(
        0.5 * (1.0 + np.sqrt(np.clip(1.0 - q * (1.0 - q) * (8.0 - S * S), 0.0, None))))
    r = 1.0 - binary_entropy_array(np.clip(Qq, 0.0, 1.0)) - chi
    return bool(np.max(r) > 1e-12)


@dataclass
class NoisyPreprocResult:
    eta_star: float
    theta: float
    angles: np.ndarray
    starts: int


def _noisy_eta_root(v: np.ndarray, lo: float = 0.5) -> float:
    theta, angles = v[0], v[1:]
    pos = lambda eta: _noisy_positive(*lossy_tilted_stats(eta, theta, angles))
    if not pos(1.0):
        return 1.0
    if pos(lo):
        return lo
    return first_crossing(pos, lo, 1.0, tol=1e-7)


def noisy_preproc_critical_eta(seed: int = 0, n_random: int = 2, budget: int = 3000) -> NoisyPreprocResult:
    """Lowest symmetric efficiency with positive noisy-preprocessing rate.

    Jointly optimises the tilt theta, Alice's two angles, Bob's two CHSH
    angles and key angle (Nelder-Mead on the critical efficiency) and the
    flip probability q (inside the positivity test).  The optimum sits at
    small theta with q close to 1/2.
    """
    rng = np.random.default_rng(seed)
    starts = [
        np.array([0.3, 0.0, 0.85, 0.08, -0.43, 0.0]),
        np.array([0.1, 0.0, 0.3, 0.004, -0.15, 0.0]),
        np.array([math.pi / 4, 0.0, math.pi / 2, math.pi / 4, -math.pi / 4, 0.0]),
    ]
    starts += [np.concatenate([[rng.uniform(0.05, math.pi / 4)], rng.uniform(-1.0, 1.0, 5)])
               for _ in range(n_random)]
    best_f, best_x = 2.0, starts[0]
    for x0 in starts:
        x = x0
        for _ in range(2):
            res = minimize(_noisy_eta_root, x, method="Nelder-Mead",
                           options=dict(maxfev=budget, xatol=1e-9, fatol=1e-10))
            x = res.x
        if res.fun < best_f:
            best_f, best_x = float(res.fun), res.x
    return NoisyPreprocResult(best_f, float(best_x[0]), best_x[1:], len(starts))


# ---------------------------------------------------------------- chained and no-signaling protocols


def chain_m_rate(p: float, M: int) -> float:
    """1 - h((1 + p)/2) - M (1 - p cos(pi / 2M))."""
    _check_unit("p", p)
    if int(M) != M or M < 2:
        raise DomainError(f"M must be an integer >= 2, got {M}")
    return 1.0 - h(0.5 * (1.0 + p)) - M * (1.0 - p * math.cos(math.pi / (2 * M)))


def chain_m_root(M: int, tol: float = 1e-10) -> float:
    """Visibility p at which the chained-protocol rate vanishes."""
    return bisect(lambda p: chain_m_rate(p, M), 0.5, 1.0, tol)


def ns_params(D: float) -> tuple[float, float]:
    """(p_NL, p_L) for disturbance D via p_NL = sqrt2 (1 - 2D) - 1."""
    p_nl = SQRT2 * (1.0 - 2.0 * D) - 1.0
    if not -1e-12 <= p_nl <= 1.0 + 1e-12:
        raise DomainError(f"D = {D} gives p_NL = {p_nl} outside [0, 1]")
    p_nl = min(max(p_nl, 0.0), 1.0)
    return p_nl, 1.0 - p_nl


def disturbance_from_pnl(p_nl: float) -> float:
    return 0.5 * (1.0 - (p_nl + 1.0) / SQRT2)


def ns_rate_pnl(p_nl: float, q: float) -> float:
    """One-way rate against no-signaling Eve at nonlocal weight p_NL."""
    _check_unit("p_NL", p_nl)
    _check_unit("q", q, 0.0, 0.5)
    p_l = 1.0 - p_nl
    e = p_l / 4.0
    e_q = (1.0 - q) * e + q * (1.0 - e)
    return 1.0 - h(e_q) - 0.5 * p_l * (1.0 - h(q))


def ns_chsh_rate(D: float, q: float) -> float:
    """Rate r(D) at a fixed preprocessing flip probability q."""
    p_nl, _ = ns_params(D)
    return ns_rate_pnl(p_nl, q)


def ns_optimal_rate_pnl(p_nl: float, tol: float = 1e-9) -> tuple[float, float]:
    """max over q in [0, 1/2] of :func:`ns_rate_pnl`; returns (q*, r*)."""
    res = minimize_scalar(lambda q: -ns_rate_pnl(p_nl, q), bounds=(0.0, 0.5),
                          method="bounded", options=dict(xatol=tol))
    cands = [(float(res.x), -float(res.fun)), (0.0, ns_rate_pnl(p_nl, 0.0)), (0.5, ns_rate_pnl(p_nl, 0.5))]
    return max(cands, key=lambda t: t[1])


def ns_optimal_rate(D: float) -> tuple[float, float]:
    p_nl, _ = ns_params(D)
    return ns_optimal_rate_pnl(p_nl)


def ns_threshold_pnl(optimize_q: bool, tol: float = 1e-9) -> float:
    """Smallest p_NL with a positive rate, without (q = 0) or with optimal preprocessing."""
    if not optimize_q:
        return bisect(lambda p: ns_rate_pnl(p, 0.0), 0.05, 1.0, tol)
    return first_crossing(lambda p: ns_optimal_rate_pnl(p)[1] > 1e-12, 0.05, 1.0, tol)


def ck_rate_special(p_l: float) -> float:
    """1 - h(p_L/2)/2 - p_L/2 for the l_1/l_2-only decomposition."""
    _check_unit("p_L", p_l)
    return 1.0 - 0.5 * h(0.5 * p_l) - 0.5 * p_l


def intrinsic_info_conjecture(p_l: float) -> float:
    """(1 - p_L/2)(1 - h(p_L / (4 - 2 p_L)))."""
    _check_unit("p_L", p_l)
    return (1.0 - 0.5 * p_l) * (1.0 - h(p_l / (4.0 - 2.0 * p_l)))


def ns_uncertainty(e_ab: float) -> float:
    """Lower bound 1 - 2e on H(B|E, X) for no-signaling Eve."""
    _check_unit("e_AB", e_ab, 0.0, 0.5)
    return 1.0 - 2.0 * e_ab


@dataclass
class AdvantageDistillation:
    e_tilde: float
    eve_factor_threshold: float
    secure: Optional[bool]


def ad_error_recursion(e_ab: float, N: int, f_e: Optional[float] = None) -> AdvantageDistillation:
    """Honest error after advantage distillation over blocks of N.

    ``eve_factor_threshold`` is e/(1 - e); a supplied Eve factor ``f_e``
    above it makes Eve's error grow faster than Bob's (``secure`` True).
    """
    if not 0.0 < e_ab < 0.5:
        raise DomainError(f"e_AB must lie in (0, 1/2), got {e_ab}")
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N}")
    # ratio form keeps small e^N from underflowing against (1 - e)^N
    ratio = (e_ab / (1.0 - e_ab)) ** N
    e_tilde = ratio / (1.0 + ratio)
    thr = e_ab / (1.0 - e_ab)
    return AdvantageDistillation(e_tilde, thr, None if f_e is None else bool(f_e > thr))


def chain06_bounds(p: float) -> tuple[float, float]:
    """(sqrt2 p - 1 - h((1 + p)/2), (1 + sqrt2) p - 2) for the CHSH protocol."""
    _check_unit("p", p)
    return SQRT2 * p - 1.0 - h(0.5 * (1.0 + p)), (1.0 + SQRT2) * p - 2.0


def chain06_roots(tol: float = 1e-10) -> tuple[float, float]:
    lower = bisect(lambda p: chain06_bounds(p)[0], 0.75, 1.0, tol)
    upper = bisect(lambda p: chain06_bounds(p)[1], 0.5, 1.0, tol)
    return lower, upper


def chsh_l_rate(S_tol: float, Q_tol: float, eta_tol: float) -> float:
    """1 - log2(1 + S/(4 eta) sqrt(8 - S^2)) - 2 h(Q)."""
    S = _clip_chsh(S_tol)
    _check_unit("Q", Q_tol)
    if not 0.0 < eta_tol <= 1.0:
        raise DomainError(f"eta must lie in (0, 1], got {eta_tol}")
    return 1.0 - math.log2(1.0 + S / (4.0 * eta_tol) * math.sqrt(max(8.0 - S * S, 0.0))) - 2.0 * h(Q_tol)


# ---------------------------------------------------------------- convex-combination attack


@dataclass
class CcUpper:
    q_l: float
    r1: float
    r2: float
    status: str = "ok"


def cc_error_rate(eta: float) -> float:
    """Error rate in the two-way bound, (1 - eta)/(1 - 2(1 + sqrt2)(1 - eta))."""
    return (1.0 - eta) / (1.0 - 2.0 * (1.0 + SQRT2) * (1.0 - eta))


def cc_upper_bounds(eta: float) -> CcUpper:
    """Local weight and the one-way / two-way key upper bounds at efficiency eta.

    Below eta_loc the behavior is local and every rate is 0.  The two-way
    expression is clipped to 0 where its error rate exceeds 1/2.
    """
    _check_unit("eta", eta)
    if eta < ETA_LOC:
        return CcUpper(1.0, 0.0, 0.0, "behavior local, rate 0")
    q_l = (1.0 - eta) * (1.0 + (3.0 + 2.0 * SQRT2) * eta)
    r1 = ((3.0 + 2.0 * SQRT2) * eta * eta - 2.0 * (1.0 + SQRT2) * eta
          - 0.5 * eta * h(eta) - (1.0 - eta) * h(0.5 * eta))
    e2 = cc_error_rate(eta)
    status = "ok"
    if e2 > 0.5 or e2 < 0.0:
        r2 = 0.0
        status = "domain-clipped"
    else:
        r2 = eta * (2.0 * (1.0 + SQRT2) * eta - 2.0 * SQRT2 - 1.0) * (1.0 - h(e2))
    return CcUpper(q_l, r1, r2, status)


def cc_roots(tol: float = 1e-10) -> tuple[float, float]:
    """Critical efficiencies of the one-way and two-way upper bounds.

    The two-way bound only touches zero where its error rate reaches 1/2,
    so that point is the two-way root.
    """
    r1_root = bisect(lambda e: cc_upper_bounds(e).r1, 0.85, 0.95, tol)
    r2_root = bisect(lambda e: cc_error_rate(e) - 0.5, ETA_LOC + 1e-6, 1.0, tol)
    return r1_root, r2_root


# ---------------------------------------------------------------- semi-device-independent


def sdi_rate(P_B: float) -> tuple[float, float]:
    """(r, threshold) for the prepare-and-measure qubit protocol.

    Eve's best guess is P_E = (5 + sqrt3)/4 - P_B; the rate is
    h(P_E) - h(P_B) with one bit per round.
    """
    _check_unit("P_B", P_B, 0.5, 1.0)
    P_E = min(max((5.0 + math.sqrt(3.0)) / 4.0 - P_B, 0.5), 1.0)
    return h(P_E) - h(P_B), SDI_THRESHOLD


def sdi_lossy_thresholds(eta: float) -> tuple[float, float]:
    """P_B thresholds with loss: general case and minimal characterisation."""
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    general = 0.5 * (1.0 + 1.0 / (1.0 + eta))
    t = (1.0 - eta) / (1.0 + eta)
    alpha = math.atan(t)
    minimal = 0.25 * (2.0 + math.cos(alpha) + t * math.sin(alpha))
    return general, minimal


def one_sided_rate(eta_a: float, Q1ps: float, Q2: float, q: float) -> float:
    """eta_A [1 - h(Q1ps)] - h(Q2) - (1 - q) for the one-sided protocol."""
    _check_unit("eta_A", eta_a)
    _check_unit("Q1ps", Q1ps)
    _check_unit("Q2", Q2)
    _check_unit("q", q)
    return eta_a * (1.0 - h(Q1ps)) - h(Q2) - (1.0 - q)


def one_sided_root(tol: float = 1e-10) -> float:
    """eta_A threshold with Q1ps = 0, q = 1 and lost rounds as random errors, Q2 = (1 - eta_A)/2."""
    return bisect(lambda e: one_sided_rate(e, 0.0, 0.5 * (1.0 - e), 1.0), 0.5, 1.0, tol)


# ---------------------------------------------------------------- analytic entropy bounds


def mabk_entropy(m: float) -> tuple[float, str]:
    """Conditional-entropy bound from a tripartite MABK value m."""
    if m > 4.0 + 1e-12:
        raise DomainError(f"MABK value {m} exceeds 4")
    if m <= TSIRELSON:
        return 0.0, "bound vacuous (0)"
    return 1.0 - h(0.5 + 0.5 * math.sqrt(m * m / 8.0 - 1.0)), "ok"


def holz_entropy(beta_h: float) -> tuple[float, str]:
    """Conditional-entropy bound from a Holz value beta_H.

    The formula needs beta_H >= sqrt3 and gives 1 at beta_H = 2.
    """
    if beta_h > 2.0 + 1e-12:
        raise DomainError(f"Holz value {beta_h} outside the formula's range (max 2)")
    if beta_h < math.sqrt(3.0):
        return 0.0, "bound vacuous (0)"
    arg = (beta_h + 1.0 + math.sqrt(max(beta_h * beta_h - 3.0, 0.0))) / 4.0
    return 1.0 - h(min(arg, 1.0)), "ok"


def phi(x: float) -> float:
    """h(1/2 + x/2)."""
    if not -1.0 - 1e-12 <= x <= 1.0 + 1e-12:
        raise DomainError(f"phi needs |x| <= 1, got {x}")
    return h(min(max(0.5 + 0.5 * x, 0.0), 1.0))


def f_q(q: float, x: float) -> float:
    _check_unit("q", q, 0.0, 0.5)
    return 1.0 + phi(math.sqrt((1 - 2 * q) ** 2 + 4 * q * (1 - q) * x * x)) - phi(x)


def g_q(q: float, z: float, x: float) -> float:
    _check_unit("q", q, 0.0, 0.5)
    if z * z + x * x > 1.0 + 1e-12:
        raise DomainError("g_q needs z^2 + x^2 <= 1")
    rp = math.sqrt((1 - 2 * q + z) ** 2 + 4 * q * (1 - q) * x * x)
    rm = math.sqrt((1 - 2 * q - z) ** 2 + 4 * q * (1 - q) * x * x)
    return phi(min(0.5 * (rp + rm), 1.0)) - phi(min(math.sqrt(z * z + x * x), 1.0))


def masini_bounds(kind: str, **params) -> float:
    """Qubit entropy bounds H(A|E) in terms of correlators.

    kind ``bb84``: x; ``noisy``: q, x; ``noisy_biased``: q, z, x;
    ``two_basis``: q, p, x1, x2.
    """
    if kind == "bb84":
        return 1.0 - phi(abs(params["x"]))
    if kind == "noisy":
        return f_q(params["q"], abs(params["x"]))
    if kind == "noisy_biased":
        return g_q(params["q"], abs(params["z"]), abs(params["x"]))
    if kind == "two_basis":
        p = params["p"]
        _check_unit("p", p)
        return f_q(params["q"], math.sqrt(p * params["x1"] ** 2 + (1 - p) * params["x2"] ** 2))
    raise DomainError(f"unknown entropy bound '{kind}'")


def masini_correlation(kind: str, S: float, alpha: float = 1.0) -> float:
    """Lower bound on the complementary correlator from a CHSH-type value.

    ``chsh``: sqrt(S^2/4 - 1).  ``asym_chsh``: the piecewise E_alpha(S_alpha),
    reading the printed alpha_2 as alpha squared.
    """
    if kind == "chsh":
        S = _clip_chsh(S)
        return math.sqrt(max(S * S / 4.0 - 1.0, 0.0))
    if kind == "asym_chsh":
        a = abs(alpha)
        if a == 0.0:
            raise DomainError("alpha must be nonzero")
        if S * S / 4.0 > 1.0 + a * a + 1e-12:
            raise DomainError("S_alpha exceeds its quantum maximum 2 sqrt(1 + alpha^2)")
        if a >= 1.0:
            return math.sqrt(max(S * S / 4.0 - a * a, 0.0))
        inner = 1.0 - math.sqrt(max((1.0 - a * a) * (S * S / 4.0 - 1.0), 0.0)) / a
        return math.sqrt(max(1.0 - inner * inner, 0.0))
    raise DomainError(f"unknown correlation bound '{kind}'")


# ---------------------------------------------------------------- finite-size bounds


@dataclass
class EatParams:
    n: float
    t: float
    grad_inf: float
    dim_o: int
    eps: float
    p_event: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if not 0.0 < self.eps < 1.0:
            raise DomainError("eps must lie in (0, 1)")
        if not 0.0 < self.p_event <= 1.0:
            raise DomainError("p_event must lie in (0, 1]")


def eat_nu(p: EatParams) -> float:
    return 2.0 * (math.log2(1.0 + 2.0 * p.dim_o) + math.ceil(abs(p.grad_inf))) * math.sqrt(
        1.0 - 2.0 * math.log2(p.eps * p.p_event))


def eat_bound(p: EatParams) -> float:
    """Smooth min-entropy lower bound n t - nu sqrt(n)."""
    return p.n * p.t - eat_nu(p) * math.sqrt(p.n)


def chsh_entropy(S: float) -> float:
    """Asymptotic per-round entropy 1 - chi0(S)."""
    return 1.0 - holevo_chsh(S)


def chsh_entropy_slope(S: float) -> float:
    """d/dS of 1 - chi0(S) for 2 < S < 2 sqrt 2."""
    if not 2.0 < S < TSIRELSON:
        raise DomainError("slope defined for 2 < S < 2 sqrt 2")
    r = math.sqrt(S * S - 4.0)
    u = 0.5 + r / 4.0
    return -math.log2((1.0 - u) / u) * S / (4.0 * r)


def chsh_tangent_tradeoff(S_anchor: float = 2.7) -> tuple[float, float]:
    """Tangent line of 1 - chi0 at S_anchor: returns (value, slope)."""
    return chsh_entropy(S_anchor), chsh_entropy_slope(S_anchor)


def default_chsh_eat(n: float, eps: float = 1e-10, S_anchor: float = 2.7, S_obs: Optional[float] = None) -> EatParams:
    """EAT parameters for the CHSH tangent tradeoff.

    With uniform settings S is four times a linear form in the output
    frequencies, so the gradient norm is 4 |slope|; outputs are two bits.
    """
    val, slope = chsh_tangent_tradeoff(S_anchor)
    t = val if S_obs is None else val + slope * (S_obs - S_anchor)
    return EatParams(n=n, t=t, grad_inf=4.0 * abs(slope), dim_o=4, eps=eps)


def aep_bound(n: float, H: float, c_eps: float) -> float:
    """n H - c_eps sqrt(n)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return n * H - c_eps * math.sqrt(n)


@dataclass
class GeatParams:
    n: float
    t: float
    alpha: float
    eps: float
    p_event: float
    d_a: int
    max_f: float
    min_sigma_f: float
    var_f: float

    def __post_init__(self):
        if not 1.0 < self.alpha < 1.5:
            raise DomainError(f"alpha must lie strictly inside (1, 3/2), got {self.alpha}")
        if not 0.0 < self.eps < 1.0 or not 0.0 < self.p_event <= 1.0:
            raise DomainError("eps must lie in (0, 1) and p_event in (0, 1]")
        if self.var_f < 0.0:
            raise DomainError("var_f must be non-negative")


def geat_terms(p: GeatParams) -> dict:
    a = p.alpha
    g = -math.log2(p.eps * p.eps / (1.0 + math.sqrt(1.0 - p.eps * p.eps)))
    V = math.log2(2.0 * p.d_a ** 2 + 1.0) + math.sqrt(2.0 + p.var_f)
    beta = math.log2(p.d_a) + p.max_f - p.min_sigma_f
    k = (a - 1.0) / (2.0 - a)
    K = ((2.0 - a) ** 3 * math.log(2.0 ** beta + math.e ** 2) ** 3
         / (6.0 * (3.0 - 2.0 * a) ** 3 * math.log(2.0))
         * 2.0 ** (k * (beta + math.log2(p.d_a))))
    return {"g": g, "V": V, "beta": beta, "K": K, "k": k}


def geat_bound(p: GeatParams) -> float:
    """Generalised entropy accumulation lower bound on the smooth min-entropy."""
    d = geat_terms(p)
    k = d["k"]
    per_round = p.t - k * (math.log(2.0) / 2.0) * d["V"] ** 2 - k * k * d["K"]
    return p.n * per_round - (d["g"] - p.alpha * math.log2(p.p_event)) / (p.alpha - 1.0)


def geat_best_alpha(p: GeatParams, points: int = 50) -> tuple[float, float]:
    """Best bound over an alpha grid strictly inside (1, 3/2); returns (alpha, bound)."""
    best = (float("nan"), -math.inf)
    for a in np.linspace(1.0, 1.5, points + 2)[1:-1]:
        q = GeatParams(**{**p.__dict__, "alpha": float(a)})
        v = geat_bound(q)
        if v > best[1]:
            best = (float(a), v)
    return best


def vv_bound(Q: float, n: float, eps: float, tau: float, tau_p: float) -> float:
    """Per-round min-entropy of the reconstruction-paradigm proof.

    The finite-size term is taken as log2(1/eps) / (2 Q^2 n) with unit
    constant; ``n = inf`` drops it.
    """
    if not tau + tau_p > 1.0:
        raise DomainError("need tau + tau' > 1")
    if not 0.0 <= tau < 1.0 or not 0.0 <= tau_p <= 1.0:
        raise DomainError("tau must lie in [0, 1) and tau' in [0, 1]")
    _check_unit("Q", Q)
    lead = -6.0 * (1.0 - tau_p) * math.log2(11.0 / 12.0 + 3.0 / 8.0 * math.sqrt(Q / (1.0 - tau)))
    if math.isinf(n):
        return lead
    if Q <= 0.0:
        raise DomainError("finite n needs Q > 0")
    return lead - math.log2(1.0 / eps) / (2.0 * Q * Q * n)


_VV_MARGIN = 1e-12


def vv_asymptotic_rate(Q: float) -> tuple[float, float]:
    """max over tau of vv_bound(Q, inf) - h(Q) with tau' = 1 - tau + margin; returns (tau*, r)."""
    f = lambda tau: -(vv_bound(Q, math.inf, 1e-10, tau, 1.0 - tau + _VV_MARGIN) - h(Q))
    res = minimize_scalar(f, bounds=(1e-9, 1.0 - 1e-9), method="bounded", options=dict(xatol=1e-12))
    return float(res.x), -float(res.fun)


def vv_noise_tolerance(tol: float = 1e-10) -> float:
    """QBER at which the optimised asymptotic reconstruction-paradigm rate vanishes."""
    return bisect(lambda Q: vv_asymptotic_rate(Q)[1], 1e-6, 0.05, tol)

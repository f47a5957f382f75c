"""Shared numeric helpers: error types, root bracketing and entropies."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import optimize


class DomainError(ValueError):
    """Input outside the domain of a formula or operation."""


class NoRootError(RuntimeError):
    """A bracketed root search found no sign change."""


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8) -> float:
    """Root of ``f`` on ``[lo, hi]`` by bisection.

    The bracket is verified first; a bracket without a sign change raises
    :class:`NoRootError` instead of returning an endpoint.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoRootError(f"no sign change on [{lo}, {hi}]: f={flo:.3g}, {fhi:.3g}")
    return float(optimize.bisect(f, lo, hi, xtol=tol, maxiter=500))


def first_crossing(pred: Callable[[float], bool], lo: float, hi: float, tol: float = 1e-8) -> float:
    """Smallest x in ``[lo, hi]`` with ``pred(x)`` true, assuming monotone ``pred``.

    Requires ``pred(hi)`` true and ``pred(lo)`` false.
    """
    if not pred(hi):
        raise NoRootError(f"predicate false at upper end {hi}")
    if pred(lo):
        raise NoRootError(f"predicate already true at lower end {lo}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def binary_entropy(q: float) -> float:
    """Binary Shannon entropy in bits, with h(0) = h(1) = 0."""
    q = float(q)
    if q < 0.0 or q > 1.0 or math.isnan(q):
        raise DomainError(f"binary entropy needs q in [0, 1], got {q}")
    if q == 0.0 or q == 1.0:
        return 0.0
    return -q * math.log2(q) - (1.0 - q) * math.log2(1.0 - q)


def binary_entropy_array(q: np.ndarray) -> np.ndarray:
    """Vectorised binary entropy; entries must already lie in [0, 1]."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    m = (q > 0.0) & (q < 1.0)
    qm = q[m]
    out[m] = -qm * np.log2(qm) - (1.0 - qm) * np.log2(1.0 - qm)
    return out


def shannon_entropy(p: np.ndarray) -> float:
    """Shannon entropy in bits of a probability array (any shape)."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0.0]
    return float(-np.sum(p * np.log2(p)))


def mutual_information(pab: np.ndarray) -> float:
    """I(A:B) in bits of a joint table ``pab[a, b]`` (need not be normalised)."""
    pab = np.asarray(pab, dtype=float)
    tot = pab.sum()
    if tot <= 0.0:
        return 0.0
    pab = pab / tot
    return shannon_entropy(pab.sum(axis=1)) + shannon_entropy(pab.sum(axis=0)) - shannon_entropy(pab)

"""Seeded Monte Carlo runs of the CHSH key-distribution protocol.

Alice measures x in {0, 1}; Bob measures y in {0, 1} for the Bell test and
y = 2 for the key.  Test rounds draw (x, y) uniformly from {0, 1}^2; key
rounds use (x, y) = (0, 2).  Rounds are i.i.d. and sampled in fixed-size
chunks, each from its own Philox stream keyed by the seed and jumped by
the chunk index, so thread count never changes the output.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import keyrates
from ._numerics import DomainError, binary_entropy
from .behavior import Behavior, from_correlators
from .loopholes import DetectionModel
from .qcore import born_behavior, tilted_state, werner_state

CHUNK = 1 << 16
KEY_X, KEY_Y = 0, 2
DEFAULT_ALICE = (0.0, math.pi / 2)
DEFAULT_BOB = (math.pi / 4, -math.pi / 4, 0.0)
SEED_MASK = (1 << 64) - 1


@dataclass
class SimConfig:
    """Protocol run parameters.

    Exactly one of ``p`` (Werner weight), ``theta`` (tilted state) or
    ``source`` (a behavior with two Alice settings and two or three Bob
    settings) selects the source.  A two-setting Bob source reuses y = 0 as
    the key setting.
    """

    n: int
    gamma: float
    p: Optional[float] = None
    theta: Optional[float] = None
    source: Optional[Behavior] = None
    alice_angles: Sequence[float] = DEFAULT_ALICE
    bob_angles: Sequence[float] = DEFAULT_BOB
    detection: Optional[DetectionModel] = None
    eps_sec: float = 1e-10
    eps_cor: float = 1e-12
    seed: int = 0
    f_ec: float = 1.1
    abort_S: float = 2.0
    delta: float = 0.01
    threads: Optional[int] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        self.n = int(self.n)
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must lie strictly inside (0, 1), got {self.gamma}")
        if sum(v is not None for v in (self.p, self.theta, self.source)) != 1:
            raise DomainError("give exactly one of p, theta or source")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")
        if len(self.alice_angles) != 2 or len(self.bob_angles) != 3:
            raise DomainError("need two Alice angles and three Bob angles")
        for name in ("eps_sec", "eps_cor", "delta"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise DomainError(f"{name} must lie in (0, 1)")
        if self.f_ec < 1.0:
            raise DomainError("f_ec must be >= 1")
        self.seed = int(self.seed) & SEED_MASK
        if self.detection is None:
            self.detection = DetectionModel.delta(1.0, n_y=3)

    def inputs(self) -> dict:
        d = self.detection
        return {
            "n": self.n, "gamma": self.gamma, "p": self.p, "theta": self.theta,
            "source": None if self.source is None else self.source.to_dict(),
            "alice_angles": list(map(float, self.alice_angles)),
            "bob_angles": list(map(float, self.bob_angles)),
            "eta_a": d.eta_a, "eta_b": d.eta_b,
            "eps_sec": self.eps_sec, "eps_cor": self.eps_cor, "seed": self.seed,
            "f_ec": self.f_ec, "abort_S": self.abort_S, "delta": self.delta,
        }


@dataclass
class SimResult:
    """Outcome of a protocol run.

    ``counts[a, b, x, y, flag]`` with flag 1 for test rounds; y = 2 is the
    key setting.
    """

    counts: np.ndarray
    S_est: float
    S_half_width: float
    Q_est: float
    Q_half_width: float
    rate_asymptotic: float
    key_length: int
    abort: bool
    abort_reason: str
    delta: float
    inputs: dict = field(default_factory=dict)
    trace: Optional[dict] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "counts": self.counts.tolist(),
            "S_est": self.S_est, "S_half_width": self.S_half_width,
            "Q_est": self.Q_est, "Q_half_width": self.Q_half_width,
            "rate_asymptotic": self.rate_asymptotic,
            "key_length": self.key_length,
            "abort": self.abort, "abort_reason": self.abort_reason,
            "concentration": {"bound": "hoeffding", "delta": self.delta},
        }


def _source_table(cfg: SimConfig) -> np.ndarray:
    """Ideal behavior table of shape (2, 2, 2, 3)."""
    if cfg.source is not None:
        t = cfg.source.table
        if t.shape[:3] != (2, 2, 2) or t.shape[3] not in (2, 3):
            raise DomainError("source behavior must have binary outcomes, 2 Alice and 2 or 3 Bob settings")
        if t.shape[3] == 2:
            t = np.concatenate([t, t[:, :, :, :1]], axis=3)
        return np.array(t)
    state = werner_state(cfg.p) if cfg.p is not None else tilted_state(cfg.theta)
    return born_behavior(state, cfg.alice_angles, cfg.bob_angles).table


def _pattern_tables(cfg: SimConfig) -> np.ndarray:
    """Joint outcome distributions per click pattern: shape (4, 2, 3, 4).

    Pattern index is 2 click_A + click_B; last axis is 2a + b.
    """
    t = _source_table(cfg)
    d = cfg.detection
    qa, qb = np.asarray(d.q_a), np.asarray(d.q_b)
    if qa.shape != (2, 2):
        raise DomainError("Alice's assignment table must be 2x2")
    if qb.shape == (2, 2):
        qb = np.concatenate([qb, qb[:, :1]], axis=1)
    if qb.shape != (2, 3):
        raise DomainError("Bob's assignment table must cover 2 or 3 settings")
    pa = t.sum(axis=1)  # (a, x, y)
    pb = t.sum(axis=0)  # (b, x, y)
    none = qa[:, None, :, None] * qb[None, :, None, :]
    only_a = pa[:, None, :, :] * qb[None, :, None, :]
    only_b = qa[:, None, :, None] * pb[None, :, :, :]
    out = np.stack([none * np.ones_like(t), only_b, only_a, t])  # (pattern, a, b, x, y)
    out = np.transpose(out, (0, 3, 4, 1, 2)).reshape(4, 2, 3, 4)
    return np.cumsum(out, axis=-1)


def _run_chunk(cfg: SimConfig, cdf: np.ndarray, index: int, size: int, keep: bool):
    bitgen = np.random.Philox(key=cfg.seed).jumped(index)
    rng = np.random.Generator(bitgen)
    u = rng.random((size, 5))
    flag = (u[:, 0] < cfg.gamma).astype(np.int8)
    xy = np.minimum((u[:, 1] * 4).astype(np.int64), 3)
    x = np.where(flag == 1, xy >> 1, KEY_X)
    y = np.where(flag == 1, xy & 1, KEY_Y)
    click_a = (u[:, 2] < cfg.detection.eta_a).astype(np.int8)
    click_b = (u[:, 3] < cfg.detection.eta_b).astype(np.int8)
    pattern = 2 * click_a + click_b
    c = cdf[pattern, x, y]  # (size, 4)
    ab = np.minimum((u[:, 4:5] >= c[:, :3]).sum(axis=1), 3)
    a, b = ab >> 1, ab & 1
    counts = np.zeros((2, 2, 2, 3, 2), dtype=np.int64)
    np.add.at(counts, (a, b, x, y, flag), 1)
    tr = None
    if keep:
        tr = {"x": x.astype(np.int8), "y": y.astype(np.int8), "a": a.astype(np.int8),
              "b": b.astype(np.int8), "test_flag": flag, "click_A": click_a, "click_B": click_b}
    return counts, tr


def _thread_count(cfg: SimConfig) -> int:
    if cfg.threads is not None:
        return max(1, int(cfg.threads))
    env = os.environ.get("DIQKD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(f"DIQKD_THREADS must be an integer, got {env!r}")
    return 1


def _correlator_estimates(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    test = counts[:, :, :, :2, 1]  # (a, b, x, y)
    n_xy = test.sum(axis=(0, 1))
    same = test[0, 0] + test[1, 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        E = np.where(n_xy > 0, (2.0 * same - n_xy) / np.maximum(n_xy, 1), 0.0)
    return E, n_xy


def run_protocol(cfg: SimConfig, keep_trace: bool = False) -> SimResult:
    """Sample ``cfg.n`` rounds and run estimation and key-length accounting.

    S half-width: union of Hoeffding bounds over the four correlators, each
    2 sqrt(ln(8/delta) / (2 n_xy)).  Q half-width: sqrt(ln(2/delta) / (2 n_key)).
    """
    cdf = _pattern_tables(cfg)
    sizes = [min(CHUNK, cfg.n - i * CHUNK) for i in range(-(-cfg.n // CHUNK))]
    jobs = lambda i: _run_chunk(cfg, cdf, i, sizes[i], keep_trace)
    threads = _thread_count(cfg)
    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(jobs, range(len(sizes))))
    else:
        parts = [jobs(i) for i in range(len(sizes))]
    counts = sum(p[0] for p in parts)
    trace = None
    if keep_trace:
        trace = {k: np.concatenate([p[1][k] for p in parts]) for k in parts[0][1]}
        trace["i"] = np.arange(cfg.n)
    return _summarise(cfg, counts, trace)


def _summarise(cfg: SimConfig, counts: np.ndarray, trace) -> SimResult:
    delta = cfg.delta
    E, n_xy = _correlator_estimates(counts)
    S_est = float(E[0, 0] + E[0, 1] + E[1, 0] - E[1, 1])
    if np.any(n_xy == 0):
        S_hw = math.inf
    else:
        S_hw = float(np.sum(2.0 * np.sqrt(math.log(8.0 / delta) / (2.0 * n_xy))))
    key = counts[:, :, KEY_X, KEY_Y, 0]
    n_key = int(key.sum())
    if n_key > 0:
        Q_est = float((key[0, 1] + key[1, 0]) / n_key)
        Q_hw = math.sqrt(math.log(2.0 / delta) / (2.0 * n_key))
    else:
        Q_est, Q_hw = 0.5, math.inf

    S_clip = min(S_est, keyrates.TSIRELSON)
    r_asym = keyrates.dw_rate_chsh(S_clip, min(Q_est, 1.0))

    abort, reason, ell = False, "", 0
    if S_est <= cfg.abort_S:
        abort, reason = True, "no Bell violation"
    elif n_key == 0:
        abort, reason = True, "no key rounds"
    else:
        ell = _key_length(cfg, S_est - S_hw, Q_est, n_key)
    return SimResult(counts, S_est, S_hw, Q_est, Q_hw, float(r_asym), ell, abort, reason,
                     delta, cfg.inputs(), trace)


def _key_length(cfg: SimConfig, S_low: float, Q_est: float, n_key: int) -> int:
    """max(0, floor(n_key (EAT per round - f_EC h(Q) - correction)))."""
    if S_low <= 2.0:
        return 0
    anchor = min(S_low, keyrates.TSIRELSON - 1e-9)
    params = keyrates.default_chsh_eat(cfg.n, eps=cfg.eps_sec, S_anchor=anchor)
    per_round = keyrates.eat_bound(params) / cfg.n
    correction = (2.0 * math.log2(1.0 / cfg.eps_sec) + math.log2(2.0 / cfg.eps_cor)) / n_key
    value = n_key * (per_round - cfg.f_ec * binary_entropy(min(Q_est, 1.0)) - correction)
    return max(0, int(math.floor(value)))


@dataclass
class EmpiricalBehavior:
    """Raw frequencies plus their projection onto the no-signaling subspace.

    ``projected`` keeps the empirical correlators and averages each party's
    marginal over the other party's setting; it is None if that leaves the
    probability simplex.
    """

    behavior: Behavior
    half_width: np.ndarray
    empty: np.ndarray
    projected: Optional[Behavior] = None


def estimate_behavior(result: SimResult, delta: float = 0.01) -> EmpiricalBehavior:
    """Empirical test-round behavior with per-setting Hoeffding half-widths.

    Empty setting cells are filled uniformly and flagged in ``empty``.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    test = result.counts[:, :, :, :2, 1].astype(float)
    n_xy = test.sum(axis=(0, 1))
    empty = n_xy == 0
    table = np.where(empty[None, None], 0.25, test / np.maximum(n_xy, 1.0)[None, None])
    hw = np.where(empty, math.inf, np.sqrt(math.log(2.0 / delta) / (2.0 * np.maximum(n_xy, 1.0))))
    raw = Behavior(table)
    return EmpiricalBehavior(raw, hw, empty, _ns_projection(raw))


def _ns_projection(b: Behavior) -> Optional[Behavior]:
    E = b.correlators()
    mA = np.array([np.mean([b.mean_a(x, y) for y in range(2)]) for x in range(2)])
    mB = np.array([np.mean([b.mean_b(y, x) for x in range(2)]) for y in range(2)])
    try:
        return from_correlators(E, mA, mB)
    except DomainError:
        return None


TRACE_COLUMNS = ("i", "x", "y", "a", "b", "test_flag", "click_A", "click_B")


def write_trace(result: SimResult, path) -> None:
    """Write the per-round trace as CSV; needs ``run_protocol(..., keep_trace=True)``."""
    if result.trace is None:
        raise DomainError("result carries no trace")
    cols = np.column_stack([result.trace[c] for c in TRACE_COLUMNS])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        w.writerows(cols.tolist())

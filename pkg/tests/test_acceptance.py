"""Acceptance criteria, one check per criterion.

Run ``python3 tests/test_acceptance.py`` for a PASS/FAIL line per
criterion, or collect with pytest (each check becomes a test and prints
its line).
"""

from __future__ import annotations

import itertools
import json
import math
import sys
import time

import numpy as np
import pytest

from diqkd import keyrates, loopholes, polytope
from diqkd.behavior import (
    Behavior,
    EveWeights,
    chsh_value,
    deterministic_vertices,
    from_correlators,
    isotropic_behavior,
    no_signaling_check,
    pr_box,
    pseudosift,
    qubit_pm_behavior,
    witness_S_pm,
    pm_success_probability,
)
from diqkd.qcore import born_behavior, chsh_optimal_settings, tilted_state, werner_state
from diqkd.sim import SimConfig, run_protocol

SQRT2 = math.sqrt(2.0)


def _h(p):
    return 0.0 if p in (0.0, 1.0) else -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# ---------------------------------------------------------------- criteria


def check_01():
    Q = keyrates.dw_qber_threshold()
    resid = 1 - _h(Q) - _h(0.5 + math.sqrt(8 * (1 - 2 * Q) ** 2 - 4) / 4)
    return abs(Q - 0.071) <= 0.002 and abs(resid) <= 1e-8, f"Q* = {Q:.6f}, residual {resid:.1e}"


def check_02():
    eta = keyrates.dw_eta_threshold()
    return abs(eta - 0.924) <= 0.003, f"eta* = {eta:.6f}"


def check_03():
    t0 = time.time()
    res = keyrates.noisy_preproc_critical_eta(seed=0)
    dt = time.time() - t0
    return abs(res.eta_star - 0.832) <= 0.010 and dt <= 300, f"eta* = {res.eta_star:.5f} (theta {res.theta:.3g}, {dt:.1f} s)"


def check_04():
    root = loopholes.cde_symmetric_maxent()
    return abs(root - 2 * (SQRT2 - 1)) <= 1e-6, f"root = {root:.10f}"


def check_05():
    t0 = time.time()
    scan = loopholes.eberhard_scan()
    dt = time.time() - t0
    etas = [e for _, e in scan]
    ok = scan.monotone and min(etas) <= 0.70 and min(etas) >= 2 / 3 - 1e-6 and dt <= 300
    return ok, "eta* over grid: " + ", ".join(f"{e:.4f}" for e in etas) + f" ({dt:.1f} s)"


def check_06():
    eta_loc = 2 * (SQRT2 - 1)
    q_l = keyrates.cc_upper_bounds(eta_loc).q_l
    r1, r2 = keyrates.cc_roots()
    ok = abs(q_l - 1) <= 1e-6 and abs(r1 - 0.8918) <= 0.002 and abs(r2 - 0.8536) <= 0.002
    return ok, f"q_L(eta_loc) = {q_l:.8f}, one-way root {r1:.5f}, two-way root {r2:.5f}"


def check_07():
    lo1, _ = keyrates.chain06_bounds(1.0)
    rl, ru = keyrates.chain06_roots()
    ok = abs(lo1 - (SQRT2 - 1)) <= 1e-9 and abs(rl - 0.9038) <= 0.002 and abs(ru - 0.8284) <= 0.001
    return ok, f"r(1) = {lo1:.10f}, lower root {rl:.5f}, upper root {ru:.5f}"


def check_08():
    t0 = time.time()
    a = keyrates.ns_threshold_pnl(optimize_q=False)
    b = keyrates.ns_threshold_pnl(optimize_q=True)
    dt = time.time() - t0
    ok = abs(a - 0.318) <= 0.005 and abs(b - 0.236) <= 0.010 and dt < 10
    return ok, f"p_NL thresholds {a:.5f} (q=0), {b:.5f} (optimal q); D = {keyrates.disturbance_from_pnl(b):.4f}"


def check_09():
    ps = np.linspace(0.0, 1.0, 201)
    dev = max(abs(keyrates.chain_m_rate(p, 2) - (SQRT2 * p - 1 - _h((1 + p) / 2))) for p in ps)
    r50 = keyrates.chain_m_rate(1.0, 50)
    approx = 1 - math.pi ** 2 / (8 * 50)
    roots = {M: keyrates.chain_m_root(M) for M in range(2, 6)}
    best = min(roots, key=roots.get)
    ok = dev <= 1e-12 and abs(r50 - approx) <= 0.01 * abs(approx) and best == 3
    return ok, f"M=2 deviation {dev:.1e}; r(1, 50) = {r50:.6f} vs {approx:.6f}; roots {', '.join(f'{M}:{r:.4f}' for M, r in roots.items())}"


def check_10():
    _, thr = keyrates.sdi_rate(0.9)
    pm = qubit_pm_behavior([0.0, math.pi / 2, 3 * math.pi / 2, math.pi], [math.pi / 4, -math.pi / 4])
    P_B = pm_success_probability(pm)
    r, _ = keyrates.sdi_rate(P_B)
    ok = (thr == (5 + math.sqrt(3)) / 8 and abs(P_B - (2 * SQRT2 + 4) / 8) <= 1e-12
          and abs(witness_S_pm(pm) - 2 * SQRT2) <= 1e-12 and abs(r - 0.057) <= 0.003)
    return ok, f"threshold {thr:.5f}, optimal P_B {P_B:.5f}, r = {r:.5f}"


def check_11():
    root = keyrates.one_sided_root()
    return abs(root - 0.659) <= 0.002, f"eta_A root = {root:.5f}"


def check_12():
    e_far = loopholes.routed_critical_eta("asymmetric", loopholes.RoutedParams(eta_a0=1.0)).value
    start = loopholes.routed_symmetric_threshold()
    j1 = loopholes.srq_j1_bound(2 * SQRT2)
    ok = e_far == 0.0 and abs(start - 2 / (1 + SQRT2)) <= 1e-6 and abs(j1 - SQRT2) <= 1e-12
    return ok, f"eta_A1(eta_A0=1) = {e_far}, decline starts at {start:.8f}, J1(2 sqrt2) = {j1:.10f}"


def _basic_solution_oracle():
    """Inverse of every nonsingular 9-column basis of the reduced membership system."""
    V = np.column_stack([v.table.ravel() for v in deterministic_vertices()])
    A = np.vstack([V, np.ones((1, 16))])
    U, s, _ = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10))
    U = U[:, :rank]
    Ar = U.T @ A
    subsets, invs = [], []
    for S in itertools.combinations(range(16), rank):
        M = Ar[:, S]
        if abs(np.linalg.det(M)) > 1e-9:
            subsets.append(S)
            invs.append(np.linalg.inv(M))
    return U, np.array(invs)


def _oracle_is_local(U, invs, b: Behavior, tol=1e-9) -> bool:
    rhs = np.concatenate([b.table.ravel(), [1.0]])
    red = U.T @ rhs
    if np.linalg.norm(U @ red - rhs) > tol:
        return False
    w = invs @ red
    return bool(np.any(np.all(w >= -tol, axis=1)))


def _random_behaviors(rng, count):
    V = [v.table for v in deterministic_vertices()]
    pr = pr_box().table
    out = []
    for i in range(count):
        kind = i % 4
        if kind == 0:
            w = rng.dirichlet(np.ones(16))
            t = sum(wi * v for wi, v in zip(w, V))
            lam = rng.uniform(0, 0.6)
            t = (1 - lam) * t + lam * pr
        elif kind == 1:
            t = isotropic_behavior(rng.uniform(0, 1)).table
        elif kind == 2:
            while True:
                E = rng.uniform(-1, 1, (2, 2))
                mA, mB = rng.uniform(-0.3, 0.3, 2), rng.uniform(-0.3, 0.3, 2)
                raw = (1 + np.array([1, -1])[:, None, None, None] * mA[None, None, :, None]
                       + np.array([1, -1])[None, :, None, None] * mB[None, None, None, :]
                       + np.outer([1, -1], [1, -1])[:, :, None, None] * E[None, None]) / 4
                if raw.min() >= 0:
                    t = from_correlators(E, mA, mB).table
                    break
        else:
            t = rng.dirichlet(np.ones(4), size=(2, 2)).transpose(2, 0, 1).reshape(2, 2, 2, 2)
        out.append(Behavior(t))
    return out


def check_13():
    t0 = time.time()
    U, invs = _basic_solution_oracle()
    rng = np.random.default_rng(2024)
    agree, n_local = 0, 0
    behaviors = _random_behaviors(rng, 500)
    for b in behaviors:
        mine, _ = polytope.is_local(b)
        ref = _oracle_is_local(U, invs, b)
        agree += mine == ref
        n_local += ref
    vs = np.linspace(0, 1, 50)
    dev = max(abs(polytope.cc_local_weight(isotropic_behavior(v), [pr_box()]).q_l - min(1, 2 * (1 - v))) for v in vs)
    dt = time.time() - t0
    ok = agree == 500 and dev <= 1e-8 and dt < 30
    return ok, f"{agree}/500 agree ({n_local} local); isotropic q_L max deviation {dev:.1e}; {dt:.1f} s"


def check_14():
    ok = True
    for p_nl in (0.0, 0.25, 0.5, 0.75, 1.0):
        p_l = 1 - p_nl
        ref = np.array([[p_nl / 2, p_l / 8, p_l / 4],
                        [0, p_l / 8, 0],
                        [0, p_l / 8, 0],
                        [p_nl / 2, p_l / 8, p_l / 4]])
        res = pseudosift(EveWeights.isotropic(p_nl), 0.5)
        for x in (0, 1):
            got = res.eve[x].reshape(4, 3)
            ok &= bool(np.array_equal(got, ref))
    return ok, "isotropic tables (both x) match entry by entry for p_NL in {0, 1/4, 1/2, 3/4, 1}"


def check_15():
    b = born_behavior(werner_state(1.0), *chsh_optimal_settings())
    S = chsh_value(loopholes.apply_detection(b, loopholes.DetectionModel.delta(0.85)))
    return abs(S - 2.0885) <= 5e-4, f"S = {S:.6f}"


def check_16():
    p = keyrates.default_chsh_eat(1e15)
    gap = p.t - keyrates.eat_bound(p) / p.n
    Q = keyrates.vv_noise_tolerance()
    ok = 0 <= gap < 1e-4 and abs(Q - 0.016) <= 0.003
    return ok, f"EAT per-round gap {gap:.2e} at n = 1e15; VV tolerance {Q:.5f}"


def check_17():
    t0 = time.time()
    target = 2 * SQRT2
    inside = 0
    for seed in range(100):
        r = run_protocol(SimConfig(n=10 ** 6, gamma=0.5, p=1.0, seed=seed, delta=0.01))
        inside += abs(r.S_est - target) <= r.S_half_width
    a = run_protocol(SimConfig(n=10 ** 6, gamma=0.5, p=1.0, seed=3))
    b = run_protocol(SimConfig(n=10 ** 6, gamma=0.5, p=1.0, seed=3, threads=4))
    same = json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    dt = time.time() - t0
    return inside >= 99 and same and dt <= 600, f"{inside}/100 inside the 99% interval; reruns identical: {same}; {dt:.1f} s"


def check_18():
    rng = np.random.default_rng(7)
    ns = 0.0
    for _ in range(200):
        theta = rng.uniform(0, math.pi / 2)
        state = werner_state(rng.uniform()) if rng.uniform() < 0.5 else tilted_state(theta)
        b = born_behavior(state, rng.uniform(-math.pi, math.pi, 2), rng.uniform(-math.pi, math.pi, 2))
        ns = max(ns, no_signaling_check(b))
    Ss = np.linspace(2.0 + 1e-6, 2 * SQRT2, 1000)
    chi = np.array([keyrates.holevo_chsh(s) for s in Ss])
    d1 = np.diff(chi)
    d2 = np.diff(chi, 2)
    decreasing = bool(np.all(d1 < 0))
    convex = bool(np.all(d2 >= -1e-12))
    comp = max(abs(keyrates.masini_bounds("bb84", x=keyrates.masini_correlation("chsh", s))
                   - (1 - keyrates.holevo_chsh(s))) for s in np.linspace(2.0, 2 * SQRT2, 200))
    aff = 0.0
    for _ in range(50):
        b1, b2 = _random_behaviors(rng, 2)
        lam = rng.uniform()
        d = loopholes.DetectionModel(rng.uniform(), rng.uniform(),
                                     rng.dirichlet([1, 1], 2).T, rng.dirichlet([1, 1], 2).T)
        lhs = loopholes.apply_detection(b1.mix(b2, lam), d).table
        rhs = lam * loopholes.apply_detection(b1, d).table + (1 - lam) * loopholes.apply_detection(b2, d).table
        aff = max(aff, float(np.max(np.abs(lhs - rhs))))
    ok = ns <= 1e-12 and decreasing and convex and comp <= 1e-12 and aff <= 1e-12
    return ok, f"NS violation {ns:.1e}; chi0 decreasing {decreasing}, convex {convex} (min second difference {d2.min():.1e}); composition {comp:.1e}; affinity {aff:.1e}"


CRITERIA = [
    (1, "DW noise tolerance", check_01),
    (2, "CHSH_c symmetric critical efficiency", check_02),
    (3, "noisy-preprocessing critical efficiency", check_03),
    (4, "critical detection efficiency, maximally entangled", check_04),
    (5, "Eberhard trend", check_05),
    (6, "convex-combination closed forms", check_06),
    (7, "CHSH-protocol privacy-amplification bounds", check_07),
    (8, "no-signaling adversary thresholds", check_08),
    (9, "chained-protocol rates", check_09),
    (10, "semi-device-independent thresholds", check_10),
    (11, "one-sided root", check_11),
    (12, "routed bounds", check_12),
    (13, "polytope oracle equivalence", check_13),
    (14, "pseudosifting tables", check_14),
    (15, "detection-map fidelity", check_15),
    (16, "EAT asymptotics and VV tolerance", check_16),
    (17, "simulator statistics", check_17),
    (18, "property suites", check_18),
]


def _run(num, name, fn):
    ok, detail = fn()
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} {name}: {detail}")
    return ok, detail


@pytest.mark.parametrize("num,name,fn", CRITERIA, ids=[f"c{n:02d}" for n, _, _ in CRITERIA])
def test_criterion(num, name, fn):
    ok, detail = _run(num, name, fn)
    assert ok, detail


if __name__ == "__main__":
    results = [_run(*c)[0] for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)

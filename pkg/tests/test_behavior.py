import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diqkd import DomainError
from diqkd.behavior import (
    Behavior,
    EveWeights,
    PMBehavior,
    bob_entropy_given_eve,
    chained_value,
    chsh_value,
    deterministic_behavior,
    deterministic_vertices,
    eve_strategy_behavior,
    isotropic_behavior,
    monogamy_max,
    no_signaling_check,
    pm_success_probability,
    pr_box,
    pseudosift,
    qubit_pm_behavior,
    strategy_vertex,
    uniform_behavior,
    witness_I3,
    witness_S_pm,
)
from diqkd.qcore import born_behavior, singlet_state

PI = math.pi


def _pr_oracle():
    t = np.zeros((2, 2, 2, 2))
    for a, b, x, y in itertools.product(range(2), repeat=4):
        t[a, b, x, y] = 0.5 if (a ^ b) == (x & y) else 0.0
    return t


def test_pr_box():
    pr = pr_box()
    np.testing.assert_array_equal(pr.table, _pr_oracle())
    assert pr.table[0, 0, 0, 0] == 0.5 and pr.table[1, 1, 1, 1] == 0.0
    assert chsh_value(pr) == 4.0
    assert no_signaling_check(pr) == 0.0


def test_isotropic():
    np.testing.assert_array_equal(isotropic_behavior(1.0).table, pr_box().table)
    np.testing.assert_allclose(isotropic_behavior(0.0).table, 0.25)
    for v in np.linspace(0, 1, 9):
        assert chsh_value(isotropic_behavior(v)) == pytest.approx(4 * v, abs=1e-12)
    assert chsh_value(isotropic_behavior(1 / math.sqrt(2))) == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_vertices():
    verts = deterministic_vertices()
    assert len(verts) == 16
    flat = {tuple(v.table.ravel()) for v in verts}
    assert len(flat) == 16
    l10 = strategy_vertex(1, 0).table
    assert all(l10[0, 0, x, y] == 1 for x in range(2) for y in range(2))
    values = [chsh_value(v) for v in verts]
    assert max(values) == 2.0 and min(values) == -2.0
    for v in verts:
        assert no_signaling_check(v) == 0.0


def test_vertex_enumeration_oracle():
    oracle = set()
    for fa in itertools.product(range(2), repeat=2):
        for fb in itertools.product(range(2), repeat=2):
            t = np.zeros((2, 2, 2, 2))
            for x, y in itertools.product(range(2), repeat=2):
                t[fa[x], fb[y], x, y] = 1
            oracle.add(tuple(t.ravel()))
    assert oracle == {tuple(v.table.ravel()) for v in deterministic_vertices()}


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_upper_form_identity(seed):
    rng = np.random.default_rng(seed)
    t = rng.dirichlet(np.ones(4), size=(2, 2)).transpose(2, 0, 1).reshape(2, 2, 2, 2)
    b = Behavior(t)
    beta, up = chsh_value(b, with_upper=True)
    assert up - (2 + beta / 2) == pytest.approx(0.0, abs=1e-12)


def test_signaling_detected():
    t = np.zeros((2, 2, 2, 2))
    t[0, 0, 0, 0] = 1
    t[1, 0, 0, 1] = 1
    t[0, 0, 1, 0] = 1
    t[0, 0, 1, 1] = 1
    assert no_signaling_check(Behavior(t)) == 1.0


def test_behavior_validation_and_json():
    with pytest.raises(DomainError):
        Behavior(np.full((2, 2, 2, 2), 0.3))
    b = isotropic_behavior(0.3)
    b2 = Behavior.from_json(b.to_json())
    np.testing.assert_array_equal(b.table, b2.table)
    with pytest.raises(DomainError, match="nY"):
        Behavior.from_dict({"nA": 2, "nB": 2, "nX": 2, "table": []})
    with pytest.raises(DomainError, match="table"):
        Behavior.from_dict({"nA": 2, "nB": 2, "nX": 2, "nY": 2, "table": [0.1]})


def test_chained_local_bound():
    best = max(chained_value(v, 2) for v in deterministic_vertices())
    assert best <= 1 - 2 / (3 * 2) + 1e-12
    # three settings: enumerate all deterministic strategies directly
    best3 = 0.0
    for fa in itertools.product(range(2), repeat=3):
        for fb in itertools.product(range(2), repeat=3):
            best3 = max(best3, chained_value(deterministic_behavior(fa, fb), 3))
    assert best3 <= 1 - 2 / 9 + 1e-12


@pytest.mark.parametrize("N", [2, 4, 8])
def test_chained_singlet(N):
    ang = [PI * r / N for r in range(N)]
    t = chained_value(born_behavior(singlet_state(), ang, ang), N)
    assert t >= 1 - 2 / N ** 2
    assert t == pytest.approx((1 + 2 * math.cos(PI / (2 * N)) ** 2) / 3, abs=1e-12)


def test_chained_uniform():
    assert chained_value(uniform_behavior(2, 2, 3, 3), 3) == pytest.approx(0.5, abs=1e-12)


def test_monogamy():
    assert monogamy_max(2 * math.sqrt(2)) == 0.0
    assert monogamy_max(2.0) == pytest.approx(2.0)
    assert monogamy_max(2.5) == pytest.approx(1.3229, abs=1e-4)


def test_eve_strategy_endpoints():
    pr = eve_strategy_behavior(EveWeights(np.zeros((4, 2)), 1.0))
    np.testing.assert_allclose(pr.table, pr_box().table, atol=1e-15)
    # every l_j^r saturates CHSH = 2, so their equal mixture is the isotropic point v = 1/2, not uniform
    mix = eve_strategy_behavior(EveWeights(np.full((4, 2), 1 / 8), 0.0))
    assert chsh_value(mix) == pytest.approx(2.0, abs=1e-15)
    np.testing.assert_allclose(mix.table, isotropic_behavior(0.5).table, atol=1e-15)
    for p_nl in (0.1, 0.5, 0.9):
        b = eve_strategy_behavior(EveWeights.isotropic(p_nl))
        assert b.table[0, 0, 0, 0] == pytest.approx(p_nl / 2 + 3 * (1 - p_nl) / 8, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0, 1))
def test_eve_chsh_bound(seed, xi0):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(9))
    ew = EveWeights(w[:8].reshape(4, 2), w[8])
    b = eve_strategy_behavior(ew)
    assert chsh_value(b) <= 2 + 2 * ew.p_nl + 1e-12
    assert no_signaling_check(b) <= 1e-15
    res = pseudosift(ew, xi0)
    np.testing.assert_allclose(res.tables.sum(axis=(1, 2)), 1.0, atol=1e-12)
    np.testing.assert_allclose(res.eve.sum(axis=-1), res.tables, atol=1e-15)


def test_isotropic_chsh_equality():
    for p_nl in np.linspace(0, 1, 6):
        assert chsh_value(eve_strategy_behavior(EveWeights.isotropic(p_nl))) == pytest.approx(2 + 2 * p_nl, abs=1e-12)


def test_pseudosift_pr_box_correlated():
    res = pseudosift(EveWeights(np.zeros((4, 2)), 1.0), 0.3)
    for x in range(2):
        assert res.error_rate(x) == 0.0


def test_pseudosift_l10_knowledge():
    p = np.zeros((4, 2))
    p[0, 0] = 1.0
    w = EveWeights(p, 0.0)
    assert bob_entropy_given_eve(w, 0.5, 0) == 0.0
    assert bob_entropy_given_eve(w, 0.5, 1) == pytest.approx(1.0)


def _bb84():
    return qubit_pm_behavior([PI / 2, 0.0, PI, 3 * PI / 2], [0.0, PI / 2])


def test_witness_S_pm():
    pm = _bb84()
    assert witness_S_pm(pm) == pytest.approx(2.0, abs=1e-12)
    assert pm_success_probability(pm) == pytest.approx(0.75, abs=1e-12)
    opt = qubit_pm_behavior([0.0, PI / 2, 3 * PI / 2, PI], [PI / 4, -PI / 4])
    assert witness_S_pm(opt) == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert pm_success_probability(opt) == pytest.approx((2 * math.sqrt(2) + 4) / 8, abs=1e-12)
    assert witness_S_pm(PMBehavior(np.full((2, 4, 2), 0.5))) == 0.0


def test_witness_I3():
    best = 0.0
    for m in itertools.product(range(2), repeat=3):
        for f in itertools.product(itertools.product(range(2), repeat=2), repeat=2):
            t = np.zeros((2, 3, 2))
            for i in range(3):
                for y in range(2):
                    t[f[y][m[i]], i, y] = 1
            best = max(best, witness_I3(PMBehavior(t)))
    assert best == 3.0
    q = qubit_pm_behavior([PI / 4, -PI / 4, PI], [0.0, PI / 2])
    assert witness_I3(q) == pytest.approx(1 + 2 * math.sqrt(2), abs=1e-12)
    assert witness_I3(PMBehavior(np.full((2, 3, 2), 0.5))) == 0.0

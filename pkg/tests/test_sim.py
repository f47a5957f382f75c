import csv
import math

import numpy as np
import pytest

from diqkd import DomainError
from diqkd.behavior import chsh_value, deterministic_behavior
from diqkd.loopholes import DetectionModel
from diqkd.polytope import is_local
from diqkd.qcore import born_behavior, werner_state
from diqkd.sim import (
    DEFAULT_ALICE,
    DEFAULT_BOB,
    TRACE_COLUMNS,
    SimConfig,
    estimate_behavior,
    run_protocol,
    write_trace,
)

TSIRELSON = 2 * math.sqrt(2)


def test_config_validation():
    for g in (0.0, 1.0, 1.5):
        with pytest.raises(DomainError):
            SimConfig(n=10, gamma=g, p=1.0)
    with pytest.raises(DomainError):
        SimConfig(n=0, gamma=0.5, p=1.0)
    with pytest.raises(DomainError):
        SimConfig(n=10, gamma=0.5, p=1.0, theta=0.3)
    with pytest.raises(DomainError):
        SimConfig(n=10, gamma=0.5)


def test_ideal_run():
    r = run_protocol(SimConfig(n=10 ** 6, gamma=0.5, p=1.0, seed=7))
    assert r.counts.sum() == 10 ** 6
    assert abs(r.S_est - TSIRELSON) <= 0.01
    assert r.Q_est <= 0.001
    assert not r.abort and r.key_length > 0


def test_determinism_across_threads():
    cfg = dict(n=300_000, gamma=0.3, p=0.95, seed=123)
    a = run_protocol(SimConfig(**cfg, threads=1))
    b = run_protocol(SimConfig(**cfg, threads=4))
    np.testing.assert_array_equal(a.counts, b.counts)
    assert a.to_dict() == b.to_dict()
    c = run_protocol(SimConfig(**{**cfg, "seed": 124}))
    assert not np.array_equal(a.counts, c.counts)


def test_local_werner_aborts():
    r = run_protocol(SimConfig(n=200_000, gamma=0.5, p=0.5, seed=3))
    assert r.abort and r.abort_reason == "no Bell violation" and r.key_length == 0
    emp = estimate_behavior(r)
    assert emp.projected is not None
    assert is_local(emp.projected)[0]


def test_zero_efficiency_gives_two():
    cfg = SimConfig(n=100_000, gamma=0.5, p=1.0, detection=DetectionModel.delta(0.0, n_y=3), seed=5)
    r = run_protocol(cfg)
    assert r.S_est == pytest.approx(2.0, abs=1e-12)
    assert r.abort and r.key_length == 0


def test_key_length_monotone_in_n():
    lengths = [run_protocol(SimConfig(n=n, gamma=0.05, p=0.99, seed=1)).key_length
               for n in (10 ** 4, 10 ** 5, 10 ** 6, 10 ** 7)]
    assert all(b >= a for a, b in zip(lengths, lengths[1:]))
    assert lengths[-1] > 0


def test_s_concentration():
    n, gamma, delta = 10 ** 4, 0.5, 0.01
    S_true = TSIRELSON * 0.9
    bound = 4 * math.sqrt(math.log(2 / delta) / (2 * n * gamma / 4))
    fails = 0
    for seed in range(100):
        r = run_protocol(SimConfig(n=n, gamma=gamma, p=0.9, seed=seed, delta=delta))
        fails += abs(r.S_est - S_true) > bound
    assert fails <= 1
    assert abs(r.S_est - S_true) <= r.S_half_width


def test_estimate_converges():
    exact = born_behavior(werner_state(0.8), DEFAULT_ALICE, DEFAULT_BOB[:2]).table
    scaled = []
    for n in (10 ** 4, 10 ** 5, 10 ** 6):
        r = run_protocol(SimConfig(n=n, gamma=0.5, p=0.8, seed=11))
        emp = estimate_behavior(r)
        dev = np.abs(emp.behavior.table - exact).max()
        assert dev <= emp.half_width.max()
        scaled.append(dev * math.sqrt(n))
    # sqrt(n) * deviation stays bounded rather than growing
    assert max(scaled) <= 3 * min(scaled) + 1.0


def test_empty_cell_flagged():
    r = run_protocol(SimConfig(n=2, gamma=0.5, p=1.0, seed=0))
    emp = estimate_behavior(r)
    assert emp.empty.any()
    assert np.all(np.isinf(emp.half_width[emp.empty]))
    assert np.isinf(r.S_half_width) or not emp.empty.any()


def test_deterministic_vertex_exact():
    src = deterministic_behavior((0, 1), (1, 1))
    r = run_protocol(SimConfig(n=50_000, gamma=0.5, source=src, seed=2))
    emp = estimate_behavior(r)
    assert not emp.empty.any()
    np.testing.assert_array_equal(emp.behavior.table, src.table)
    assert r.S_est == pytest.approx(chsh_value(src))


def test_trace_csv(tmp_path):
    r = run_protocol(SimConfig(n=1000, gamma=0.3, p=0.9, seed=4), keep_trace=True)
    path = tmp_path / "trace.csv"
    write_trace(r, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) == 1001
    data = np.array(rows[1:], dtype=int)
    assert np.array_equal(data[:, 0], np.arange(1000))
    assert data[:, 5].sum() == r.counts[..., 1].sum()
    with pytest.raises(DomainError):
        write_trace(run_protocol(SimConfig(n=10, gamma=0.3, p=0.9)), path)

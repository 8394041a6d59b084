import json
import math

import numpy as np
import pytest
from helpers import max_self_consistent_set

from active_stats.core import E_VALUE, P_VALUE, TrueStatOracle
from active_stats.errors import ParameterError
from active_stats.procedures import (
    DependenceRegime,
    Procedure,
    StatVector,
    active_bh,
    active_ebh,
    bh,
    e_proxy_filter,
    ebh,
    fdp,
    fdr_bound,
    is_self_consistent,
    proxy_filter,
    select_none,
    select_top_m,
    selector_from_spec,
)


def pvec(values, ids=None):
    return StatVector(np.asarray(values, dtype=float), P_VALUE, ids)


def evec(values, ids=None):
    return StatVector(np.asarray(values, dtype=float), E_VALUE, ids)


def oracles(values):
    return [TrueStatOracle.from_value(v) for v in values]


def test_bh_worked_example():
    disc = bh(pvec([0.01, 0.02, 0.5, 0.9]), alpha=0.1)
    # thresholds 0.025 / 0.05 / 0.075 / 0.1 admit the two smallest
    assert disc.rejected == {0, 1}
    assert disc.k_star == 2
    assert disc.threshold == pytest.approx(0.05)
    assert disc.rejected_ids(pvec([0.01, 0.02, 0.5, 0.9])) == ["1", "2"]


def test_bh_degenerate_vectors():
    assert bh(pvec([1.0] * 6), 0.2).rejected == frozenset()
    assert bh(pvec([0.0] * 6), 0.2).rejected == frozenset(range(6))


def test_ebh_worked_example():
    disc = ebh(evec([10.0, 0.0, 0.0, 0.0, 0.0]), alpha=0.5)
    assert disc.rejected == {0}
    assert disc.k_star == 1
    assert disc.threshold == pytest.approx(10.0)  # K / (alpha * 1)


def test_ebh_degenerate_vectors():
    k, alpha = 5, 0.25
    disc = ebh(evec([k / alpha] * k), alpha)
    assert disc.rejected == frozenset(range(k))
    empty = ebh(evec([0.0] * k), alpha)
    assert empty.rejected == frozenset()
    assert math.isinf(empty.threshold)


def test_step_up_matches_exhaustive_oracle():
    rng = np.random.default_rng(10)
    for _ in range(200):
        k = int(rng.integers(1, 13))
        alpha = float(rng.uniform(0.02, 0.4))
        p = rng.uniform(size=k) ** rng.uniform(0.5, 3.0)
        assert bh(pvec(p), alpha).rejected == \
            max_self_consistent_set(p, alpha, "p")
        e = np.exp(2.0 * rng.standard_normal(k))
        assert ebh(evec(e), alpha).rejected == \
            max_self_consistent_set(e, alpha, "e")


def test_monotonicity_of_rejections():
    rng = np.random.default_rng(11)
    for _ in range(50):
        p = rng.uniform(size=8)
        base = bh(pvec(p), 0.2).rejected
        i = int(rng.integers(8))
        lowered = p.copy()
        lowered[i] *= rng.uniform()
        assert base <= bh(pvec(lowered), 0.2).rejected
        e = np.exp(rng.standard_normal(8))
        base_e = ebh(evec(e), 0.2).rejected
        raised = e.copy()
        raised[i] *= 1.0 + rng.uniform()
        assert base_e <= ebh(evec(raised), 0.2).rejected


def test_permutation_equivariance():
    rng = np.random.default_rng(12)
    p = rng.uniform(size=9)
    perm = rng.permutation(9)
    base = bh(pvec(p), 0.3).rejected
    permuted = bh(pvec(p[perm]), 0.3).rejected
    assert permuted == {int(np.nonzero(perm == i)[0][0]) for i in base}


def test_outputs_are_self_consistent():
    rng = np.random.default_rng(13)
    for _ in range(50):
        p = rng.uniform(size=10) ** 2
        stats = pvec(p)
        disc = bh(stats, 0.15)
        assert is_self_consistent(stats, disc.rejected, 0.15)
        e = np.exp(2 * rng.standard_normal(10))
        stats_e = evec(e)
        disc_e = ebh(stats_e, 0.15)
        assert is_self_consistent(stats_e, disc_e.rejected, 0.15)


def test_is_self_consistent_examples():
    stats = pvec([0.01, 0.02, 0.5, 0.9])
    assert is_self_consistent(stats, set(), 0.1)
    assert is_self_consistent(stats, {0, 1}, 0.1)       # both <= 0.05
    assert not is_self_consistent(stats, {0, 1, 2}, 0.1)  # 0.5 > 0.075


def test_active_bh_gamma_zero_equals_bh_on_true():
    rng = np.random.default_rng(14)
    q = rng.uniform(size=40)
    p = rng.uniform(size=40) ** 2
    disc, stats, mask = active_bh(pvec(q), oracles(p), 0.0, 0.1,
                                  np.random.default_rng(0))
    assert np.all(mask)
    assert np.allclose(stats.values, p)
    assert disc.rejected == bh(pvec(p), 0.1).rejected


def test_active_bh_rare_queries_at_high_gamma():
    k = 4000
    q = np.ones(k)
    disc, _, mask = active_bh(pvec(q), oracles(np.full(k, 0.5)), 0.999, 0.1,
                              np.random.default_rng(1))
    assert np.mean(mask) == pytest.approx(0.001, abs=0.002)


def test_active_ebh_gamma_one_zeroes_queried():
    rng = np.random.default_rng(15)
    k = 50
    f = rng.exponential(3.0, size=k)
    disc, stats, mask = active_ebh(evec(f), oracles(np.full(k, 100.0)), 1.0,
                                   0.2, rng)
    assert np.all(stats.values[mask] == 0.0)
    assert np.all(stats.values[~mask] == f[~mask])


def test_active_ebh_unqueried_proxies_meet_threshold():
    k, alpha = 5, 0.5
    proxies = evec([k / alpha] * k)
    # uniforms above every query probability: nothing is queried and the
    # proxies clear the rejection cutoff on their own
    gamma = 0.999
    u = np.full(k, 0.9999)
    oracle_list = oracles([0.0] * k)

    class FixedRng:
        def __init__(self, vals):
            self.vals = np.asarray(vals)

        def uniform(self, size=None):
            return self.vals if size else float(self.vals[0])

    disc, stats, mask = active_ebh(proxies, oracle_list, gamma, alpha,
                                   FixedRng(u))
    assert not np.any(mask)
    assert disc.rejected == frozenset(range(k))


def test_proxy_filter_examples():
    p = [0.001, 0.5, 0.01]
    sel = selector_from_spec("top:2", P_VALUE)
    disc, mask = proxy_filter(pvec(p), oracles(p), sel, 0.1)
    assert list(mask) == [True, False, True]
    assert disc.rejected == {0, 2}  # bh on (0.001, 1, 0.01)

    disc_all, mask_all = proxy_filter(pvec(p), oracles(p),
                                      selector_from_spec("all", P_VALUE), 0.1)
    assert disc_all.rejected == bh(pvec(p), 0.1).rejected
    disc_none, mask_none = proxy_filter(pvec(p), oracles(p), select_none(), 0.1)
    assert disc_none.rejected == frozenset() and not any(mask_none)


def test_proxy_filter_self_consistent_vs_true_vector():
    rng = np.random.default_rng(16)
    p = rng.uniform(size=30) ** 3
    sel = select_top_m(10, P_VALUE)
    disc, _ = proxy_filter(pvec(p), oracles(p), sel, 0.1)
    assert is_self_consistent(pvec(p), disc.rejected, 0.1)


def test_proxy_filter_queries_exactly_selection():
    p = [0.2, 0.4, 0.6, 0.8]
    oracle_list = oracles(p)
    proxy_filter(pvec(p), oracle_list, select_top_m(2, P_VALUE), 0.1)
    assert [o.query_count for o in oracle_list] == [1, 1, 0, 0]


def test_e_proxy_filter_examples():
    e = [8.0, 30.0, 1.0]
    disc_all, _ = e_proxy_filter(evec(e), oracles(e),
                                 selector_from_spec("all", E_VALUE), 0.2)
    assert disc_all.rejected == ebh(evec(e), 0.2).rejected
    disc_none, mask = e_proxy_filter(evec(e), oracles(e), select_none(), 0.2)
    assert disc_none.rejected == frozenset() and not any(mask)
    # top-1 selector keeps only the largest e-value
    disc, mask = e_proxy_filter(evec(e), oracles(e),
                                selector_from_spec("top:1", E_VALUE), 0.2)
    assert list(mask) == [False, True, False]
    assert disc.rejected == {1}   # 30 >= K/(alpha*1) = 15


def test_fdr_bound_arithmetic():
    assert fdr_bound(0.05, 100, DependenceRegime.INDEPENDENT_OR_PRDN) == \
        pytest.approx(0.19979, abs=1e-5)
    assert fdr_bound(0.05, 100, DependenceRegime.WNDN) == \
        pytest.approx(0.30879, abs=1e-5)
    assert fdr_bound(0.05, 4, DependenceRegime.ARBITRARY, Procedure.PF) == \
        pytest.approx(0.05 * (1 + 0.5 + 1 / 3 + 0.25), abs=1e-12)


def test_fdp_examples():
    assert fdp(set(), {1, 2}) == 0.0
    assert fdp({1, 2, 3, 4}, {1, 2}) == 0.5
    assert fdp({3, 7}, {3, 7}) == 1.0


def test_discovery_set_json():
    disc = ebh(evec([0.0, 0.0]), 0.2)
    payload = disc.to_jsonable()
    assert payload["threshold"] == "Infinity"
    text = bh(pvec([0.01, 0.9], ids=["a", "b"]), 0.1).to_json(
        pvec([0.01, 0.9], ids=["a", "b"]))
    decoded = json.loads(text)
    assert decoded["rejected_ids"] == ["a"]
    assert decoded["k_star"] == 1


def test_stat_vector_validation():
    with pytest.raises(ParameterError):
        pvec([0.5, 1.2])
    with pytest.raises(ParameterError):
        evec([-0.1])
    with pytest.raises(ParameterError):
        StatVector(np.array([]), P_VALUE)
    with pytest.raises(ParameterError):
        bh(pvec([0.2]), 1.5)

import numpy as np
import pytest

from active_stats.core import (
    ConditionalCdf,
    E_VALUE,
    NullDensity,
    P_VALUE,
    TrueStatOracle,
    active_evalue,
    active_evalues,
    active_pvalue_arbdep,
    active_pvalue_density,
    active_pvalues_arbdep,
    active_pvalues_density,
    coupled_lowerbound_pvalue,
    coupled_lowerbound_pvalues,
    joint_corrected_mixture,
    joint_corrected_pvalue,
    query_prob_evalue,
    sr_active_evalue,
    sr_active_evalues,
)
from active_stats.errors import (
    DomainError,
    InconsistentDensityError,
    ParameterError,
)

UNIT_DENSITY = NullDensity(eval=lambda q: np.ones_like(np.asarray(q, float)),
                           lower_bound=1.0)


class CountingOracle(TrueStatOracle):
    def __init__(self, value):
        super().__init__(lambda: value)


def test_query_prob_evalue_examples():
    assert query_prob_evalue(0.5, 0.5) == 0.0      # F <= gamma
    assert query_prob_evalue(2.0, 0.5) == 0.75     # hand: 1 - 0.5/2
    assert query_prob_evalue(0.0, 0.3) == 0.0      # limit convention


@pytest.mark.parametrize("proxy,gamma", [(-0.1, 0.5), (1.0, 0.0), (1.0, 1.5)])
def test_query_prob_evalue_rejects_bad_params(proxy, gamma):
    with pytest.raises(ParameterError):
        query_prob_evalue(proxy, gamma)


def test_active_evalue_never_queries_small_proxy():
    oracle = CountingOracle(123.0)
    for u in (0.0, 0.3, 0.999):
        stat = active_evalue(0.5, oracle, 0.5, u=u)
        assert not stat.queried
        assert stat.value == 0.5
    assert oracle.query_count == 0


def test_active_evalue_queried_branch():
    oracle = CountingOracle(4.0)
    stat = active_evalue(2.0, oracle, 0.5, u=0.1)  # u < 0.75 forces a query
    assert stat.queried
    assert stat.value == 2.0                       # hand: (1 - 0.5) * 4
    assert stat.query_prob == 0.75
    assert oracle.query_count == 1


def test_active_evalue_gamma_one_annihilates():
    stat = active_evalue(3.0, CountingOracle(17.0), 1.0, u=0.1)
    assert stat.queried
    assert stat.value == 0.0


def test_active_evalue_rejects_negative_oracle():
    with pytest.raises(DomainError):
        active_evalue(5.0, CountingOracle(-1.0), 0.5, u=0.0)


def test_active_pvalue_arbdep_identity_at_gamma_zero():
    for u in (0.0, 0.5, 0.999):
        stat = active_pvalue_arbdep(0.7, CountingOracle(0.31), 0.0, u=u)
        assert stat.queried
        assert stat.value == 0.31


def test_active_pvalue_arbdep_skips_query():
    # query prob 1 - 0.5 * 1 = 0.5 and u = 0.9 lands above it
    oracle = CountingOracle(0.2)
    stat = active_pvalue_arbdep(1.0, oracle, 0.5, u=0.9)
    assert not stat.queried
    assert stat.value == 1.0
    assert oracle.query_count == 0


def test_active_pvalue_arbdep_queried_scaling():
    stat = active_pvalue_arbdep(0.0, CountingOracle(0.4), 0.5, u=0.99)
    assert stat.queried                # query prob is 1 at Q = 0
    assert stat.value == pytest.approx(0.8)   # hand: 0.4 / (1 - 0.5)


def test_active_pvalue_arbdep_caps_at_one():
    stat = active_pvalue_arbdep(0.0, CountingOracle(0.9), 0.5, u=0.0)
    assert stat.value == 1.0


def test_active_pvalue_arbdep_rejects_bad_oracle_value():
    with pytest.raises(DomainError):
        active_pvalue_arbdep(0.0, CountingOracle(1.5), 0.2, u=0.0)


def test_active_pvalue_density_flat_density_never_queries():
    oracle = CountingOracle(0.1)
    for u in (0.0, 0.999):
        stat = active_pvalue_density(0.3, oracle, UNIT_DENSITY, 1.0, u=u)
        assert not stat.queried
        assert stat.value == 0.3
    assert oracle.query_count == 0


def test_active_pvalue_density_eta_zero_always_queries():
    stat = active_pvalue_density(0.3, CountingOracle(0.11), UNIT_DENSITY,
                                 0.0, u=0.999)
    assert stat.queried
    assert stat.value == 0.11


def test_active_pvalue_density_stale_bound_errors():
    stale = NullDensity(eval=lambda q: 0.05, lower_bound=0.5)
    with pytest.raises(InconsistentDensityError):
        active_pvalue_density(0.5, CountingOracle(0.2), stale, 1.0, u=0.5)


def test_sr_active_evalue_examples():
    stat = sr_active_evalue(2.0, CountingOracle(4.0), 0.5, u=0.1)
    assert stat.queried
    assert stat.value == pytest.approx(8.0 / 3.0)  # hand: 0.5/0.75 * 4
    stat = sr_active_evalue(0.5, CountingOracle(4.0), 0.5, u=0.1)
    assert not stat.queried and stat.value == 0.5
    stat = sr_active_evalue(1e9, CountingOracle(4.0), 0.5, u=0.1)
    assert stat.value == pytest.approx(2.0, abs=1e-6)  # factor -> 1 - gamma


def test_sr_matches_plain_when_not_queried():
    for u in (0.2, 0.9):
        plain = active_evalue(0.4, CountingOracle(2.0), 0.5, u=u)
        boosted = sr_active_evalue(0.4, CountingOracle(2.0), 0.5, u=u)
        assert plain.value == boosted.value == 0.4


def test_coupled_lowerbound_examples():
    assert coupled_lowerbound_pvalue(0.4, 0.5, 0.1) == pytest.approx(0.2)
    assert coupled_lowerbound_pvalue(0.3, 1e-9, 0.5) == pytest.approx(0.3)
    assert coupled_lowerbound_pvalue(0.0, 0.7, 0.4) == 0.0
    assert coupled_lowerbound_pvalue(0.9, 0.0, 0.2) == pytest.approx(0.9)


def test_coupling_dominance_randomized_grid():
    rng = np.random.default_rng(1)
    for gamma in (0.0, 0.2, 0.5, 0.9):
        q = rng.uniform(size=500)
        p = rng.uniform(size=500)
        u = rng.uniform(size=500)
        active, _ = active_pvalues_arbdep(q, p, gamma, u=u)
        # the bound couples through the complementary uniform
        bound = coupled_lowerbound_pvalues(p, gamma, 1.0 - u)
        assert np.all(bound <= active + 1e-12)


def test_sr_dominance_shared_uniform():
    rng = np.random.default_rng(2)
    f = rng.exponential(2.0, size=2000)
    e = rng.exponential(1.0, size=2000)
    u = rng.uniform(size=2000)
    plain, _ = active_evalues(f, e, 0.5, u=u)
    boosted, _ = sr_active_evalues(f, e, 0.5, u=u)
    assert np.all(boosted >= plain - 1e-12)


def test_batch_matches_scalar_constructions():
    rng = np.random.default_rng(3)
    n = 200
    q = rng.uniform(size=n)
    p = rng.uniform(size=n)
    f = rng.exponential(2.0, size=n)
    e = rng.exponential(1.0, size=n)
    u = rng.uniform(size=n)
    arb_vals, arb_q = active_pvalues_arbdep(q, p, 0.3, u=u)
    ev_vals, ev_q = active_evalues(f, e, 0.6, u=u)
    sr_vals, _ = sr_active_evalues(f, e, 0.6, u=u)
    dens_vals, dens_q = active_pvalues_density(q, p, UNIT_DENSITY, 0.4, u=u)
    for i in range(n):
        s = active_pvalue_arbdep(q[i], CountingOracle(p[i]), 0.3, u=u[i])
        assert s.value == arb_vals[i] and s.queried == arb_q[i]
        s = active_evalue(f[i], CountingOracle(e[i]), 0.6, u=u[i])
        assert s.value == ev_vals[i] and s.queried == ev_q[i]
        s = sr_active_evalue(f[i], CountingOracle(e[i]), 0.6, u=u[i])
        assert s.value == sr_vals[i]
        s = active_pvalue_density(q[i], CountingOracle(p[i]), UNIT_DENSITY,
                                  0.4, u=u[i])
        assert s.value == dens_vals[i] and s.queried == dens_q[i]


def test_query_accounting_matches_flags():
    rng = np.random.default_rng(4)
    oracles = [CountingOracle(v) for v in rng.uniform(size=300)]
    stats = [active_pvalue_arbdep(q, o, 0.7, rng=rng)
             for q, o in zip(rng.uniform(size=300), oracles)]
    assert sum(s.queried for s in stats) == sum(o.query_count for o in oracles)
    assert all(o.query_count in (0, 1) for o in oracles)


def test_joint_corrected_pvalue_identity_and_comonotone():
    ident = ConditionalCdf.independent()
    assert joint_corrected_pvalue(0.7, ident, u=0.42) == pytest.approx(0.42)
    como = ConditionalCdf.comonotone()
    assert joint_corrected_pvalue(0.7, como, u=0.42) == pytest.approx(0.7)


def test_joint_corrected_mixture_extremes():
    ident = ConditionalCdf.independent()
    oracle = CountingOracle(0.123)
    stat = joint_corrected_mixture(0.7, oracle, ident, 0.0, u=0.5, u_correct=0.9)
    assert not stat.queried and stat.value == pytest.approx(0.9)
    stat = joint_corrected_mixture(0.7, oracle, ident, 1.0, u=0.5, u_correct=0.9)
    assert stat.queried and stat.value == pytest.approx(0.123)
    assert oracle.query_count == 1


def test_joint_corrected_mixture_query_frequency():
    rng = np.random.default_rng(5)
    ident = ConditionalCdf.independent()
    queried = [joint_corrected_mixture(q, CountingOracle(p), ident, 0.3,
                                       rng=rng).queried
               for q, p in zip(rng.uniform(size=10_000),
                               rng.uniform(size=10_000))]
    assert np.mean(queried) == pytest.approx(0.30, abs=0.015)


def test_uniform_draw_recorded():
    stat = active_pvalue_arbdep(0.5, CountingOracle(0.2), 0.4, u=0.77)
    assert stat.t_uniform == 0.77
    assert stat.gamma_or_eta == 0.4
    assert stat.kind is P_VALUE
    stat = active_evalue(2.0, CountingOracle(1.0), 0.5, u=0.9)
    assert stat.kind is E_VALUE


def test_null_density_validation():
    with pytest.raises(ParameterError):
        NullDensity(eval=lambda q: 1.0, lower_bound=0.0)
    with pytest.raises(ParameterError):
        NullDensity(eval=lambda q: 1.0, lower_bound=1.0, domain_margin=0.6)

"""Single-hypothesis active statistic constructions.

An *active* statistic randomizes between a cheap proxy statistic and an
expensive true statistic.  The true statistic is queried with a
probability that depends on the proxy, and the combination is a valid
p-value or e-value even though the proxy on its own has no guarantees.

Scalar constructors consume a :class:`TrueStatOracle` so the expensive
statistic is only computed when actually queried, and record the uniform
variate that drove the query indicator (needed by the coupling-based
validity tests).  Vectorized counterparts operating on precomputed
arrays are provided for Monte-Carlo work; they implement the same
arithmetic and are cross-checked against the scalar forms in the tests.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DomainError,
    InconsistentDensityError,
    ParameterError,
)

_CLAMP_TOL = 1e-12


class StatKind(enum.Enum):
    """Domain tag: p-values live in [0, 1], e-values in [0, inf)."""

    P_VALUE = "p"
    E_VALUE = "e"

    def contains(self, x: float) -> bool:
        if self is StatKind.P_VALUE:
            return 0.0 <= x <= 1.0
        return x >= 0.0


P_VALUE = StatKind.P_VALUE
E_VALUE = StatKind.E_VALUE


class TrueStatOracle:
    """Deferred computation of a true statistic with a query tally.

    The wrapped callable runs only when :meth:`query` is invoked, and
    ``query_count`` increments exactly once per invocation.  The counter
    is lock-protected so per-hypothesis oracles can be shared across
    worker threads.
    """

    def __init__(self, compute: Callable[[], float]):
        if not callable(compute):
            raise ParameterError("oracle requires a zero-argument callable")
        self._compute = compute
        self._count = 0
        self._lock = threading.Lock()

    @classmethod
    def from_value(cls, value: float) -> "TrueStatOracle":
        return cls(lambda: value)

    @property
    def query_count(self) -> int:
        return self._count

    def query(self) -> float:
        with self._lock:
            self._count += 1
        return float(self._compute())


@dataclass(frozen=True)
class ActiveStat:
    """Outcome of one active construction.

    ``queried`` is the realized query indicator; when it is False the
    value equals the proxy exactly.  ``t_uniform`` is the uniform
    variate compared against ``query_prob`` to decide the query, kept so
    couplings can be reproduced.
    """

    value: float
    queried: bool
    query_prob: float
    kind: StatKind
    gamma_or_eta: float
    t_uniform: float


@dataclass(frozen=True)
class NullDensity:
    """Evaluable null density of a proxy p-value with a certified floor.

    ``lower_bound`` must be a positive lower bound for ``eval`` on
    ``[domain_margin, 1 - domain_margin]``.
    """

    eval: Callable[[float], float]
    lower_bound: float
    domain_margin: float = 0.0

    def __post_init__(self):
        if not self.lower_bound > 0.0:
            raise ParameterError("density lower bound must be positive")
        if not 0.0 <= self.domain_margin < 0.5:
            raise ParameterError("domain margin must lie in [0, 0.5)")


@dataclass(frozen=True)
class ConditionalCdf:
    """Conditional CDF F(p | q) of the true given the proxy p-value.

    ``eval(p, q)`` must be nondecreasing in p from 0 to 1 for fixed q;
    ``inverse(u, q)`` is the generalized inverse in p.  Both accept
    arrays in the first argument.
    """

    eval: Callable[[float, float], float]
    inverse: Callable[[float, float], float]

    @classmethod
    def independent(cls) -> "ConditionalCdf":
        """F(p|q) = p: proxy carries no information."""
        return cls(eval=lambda p, q: np.asarray(p, dtype=float),
                   inverse=lambda u, q: np.asarray(u, dtype=float))

    @classmethod
    def comonotone(cls) -> "ConditionalCdf":
        """F(p|q) = 1{p >= q}: perfect rank dependence."""
        return cls(eval=lambda p, q: (np.asarray(p, dtype=float) >= q).astype(float),
                   inverse=lambda u, q: np.full_like(np.asarray(u, dtype=float), q))


def _draw_uniform(rng, u):
    if u is None:
        if rng is None:
            raise ParameterError("either a random generator or an explicit uniform is required")
        return float(rng.uniform())
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ParameterError(f"uniform draw {u} outside [0, 1]")
    return u


def _clamp_prob(p: float) -> float:
    """Clamp a Bernoulli parameter into [0, 1], tolerating fp slop."""
    if p < -_CLAMP_TOL or p > 1.0 + _CLAMP_TOL:
        raise ParameterError(f"Bernoulli parameter {p} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def query_prob_evalue(proxy_f: float, gamma: float) -> float:
    """Query probability (1 - gamma/F)_+ of the active e-value.

    By the limit convention a zero proxy never queries: a zero proxy
    e-value carries no evidence.
    """
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"gamma={gamma} must lie in (0, 1] for e-values")
    if proxy_f < 0.0:
        raise ParameterError(f"proxy e-value {proxy_f} must be nonnegative")
    if proxy_f == 0.0 or proxy_f <= gamma:
        return 0.0
    return 1.0 - gamma / proxy_f


def active_evalue(proxy_f: float, oracle: TrueStatOracle, gamma: float,
                  rng=None, u: float | None = None) -> ActiveStat:
    """Active e-value: the proxy, or (1 - gamma) * E when queried."""
    prob = query_prob_evalue(proxy_f, gamma)
    u = _draw_uniform(rng, u)
    if u < prob:
        true_e = oracle.query()
        if true_e < 0.0:
            raise DomainError(f"oracle returned negative e-value {true_e}")
        value = (1.0 - gamma) * true_e
        return ActiveStat(value, True, prob, E_VALUE, gamma, u)
    return ActiveStat(float(proxy_f), False, prob, E_VALUE, gamma, u)


def sr_active_evalue(proxy_f: float, oracle: TrueStatOracle, gamma: float,
                     rng=None, u: float | None = None) -> ActiveStat:
    """Stochastic-rounding boosted active e-value.

    Shares the query rule with :func:`active_evalue` but divides the
    queried branch by the query probability, so under a shared uniform
    the boosted value dominates the plain one pointwise.
    """
    prob = query_prob_evalue(proxy_f, gamma)
    u = _draw_uniform(rng, u)
    if u < prob:
        true_e = oracle.query()
        if true_e < 0.0:
            raise DomainError(f"oracle returned negative e-value {true_e}")
        value = (1.0 - gamma) / prob * true_e
        return ActiveStat(value, True, prob, E_VALUE, gamma, u)
    return ActiveStat(float(proxy_f), False, prob, E_VALUE, gamma, u)


def active_pvalue_arbdep(proxy_q: float, oracle: TrueStatOracle, gamma: float,
                         rng=None, u: float | None = None) -> ActiveStat:
    """Active p-value valid under arbitrary proxy/true dependence.

    Queries with probability 1 - gamma * Q; the queried branch is
    P / (1 - gamma), clamped at 1 to stay inside the p-value domain
    (clamping only raises values, so superuniformity is unaffected).
    """
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma={gamma} must lie in [0, 1) for p-values")
    if not 0.0 <= proxy_q <= 1.0:
        raise ParameterError(f"proxy p-value {proxy_q} outside [0, 1]")
    prob = _clamp_prob(1.0 - gamma * proxy_q)
    u = _draw_uniform(rng, u)
    if u < prob:
        true_p = oracle.query()
        if not 0.0 <= true_p <= 1.0:
            raise DomainError(f"oracle returned p-value {true_p} outside [0, 1]")
        value = min(true_p / (1.0 - gamma), 1.0)
        return ActiveStat(value, True, prob, P_VALUE, gamma, u)
    return ActiveStat(float(proxy_q), False, prob, P_VALUE, gamma, u)


def density_query_prob(proxy_q: float, density: NullDensity, eta: float) -> float:
    """Query probability 1 - eta * ell_f / f(Q) of the density method."""
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta={eta} must lie in [0, 1]")
    f_q = float(density.eval(proxy_q))
    floor = eta * density.lower_bound
    if f_q < floor * (1.0 - _CLAMP_TOL):
        raise InconsistentDensityError(
            f"f({proxy_q}) = {f_q} is below eta * ell_f = {floor}; "
            "the certified lower bound is stale for this input"
        )
    if f_q <= 0.0:
        raise InconsistentDensityError(f"density evaluated nonpositive at {proxy_q}")
    return _clamp_prob(1.0 - floor / f_q)


def active_pvalue_density(proxy_q: float, oracle: TrueStatOracle,
                          density: NullDensity, eta: float,
                          rng=None, u: float | None = None) -> ActiveStat:
    """Active p-value for an independent proxy with known null density.

    Valid when the proxy and true p-values are independent; exactly
    uniform when the true p-value is exactly uniform.  The expected
    query fraction over the null proxy law is 1 - eta * ell_f.
    """
    if not 0.0 <= proxy_q <= 1.0:
        raise ParameterError(f"proxy p-value {proxy_q} outside [0, 1]")
    prob = density_query_prob(proxy_q, density, eta)
    u = _draw_uniform(rng, u)
    if u < prob:
        true_p = oracle.query()
        if not 0.0 <= true_p <= 1.0:
            raise DomainError(f"oracle returned p-value {true_p} outside [0, 1]")
        return ActiveStat(float(true_p), True, prob, P_VALUE, eta, u)
    return ActiveStat(float(proxy_q), False, prob, P_VALUE, eta, u)


def coupled_lowerbound_pvalue(true_p: float, gamma: float, uniform_u: float) -> float:
    """Pointwise lower bound min(P / (1 - gamma), u / gamma, 1).

    Test oracle: coupled with :func:`active_pvalue_arbdep` through the
    complementary uniform (the active construction queries when
    ``u < 1 - gamma * Q``, i.e. when ``(1 - u) / gamma > Q``), this
    bound never exceeds the active p-value.
    """
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma={gamma} must lie in [0, 1)")
    if not 0.0 <= true_p <= 1.0:
        raise ParameterError(f"p-value {true_p} outside [0, 1]")
    if not 0.0 <= uniform_u <= 1.0:
        raise ParameterError(f"uniform {uniform_u} outside [0, 1]")
    scaled = true_p / (1.0 - gamma)
    if gamma > 0.0:
        scaled = min(scaled, uniform_u / gamma)
    return min(scaled, 1.0)


def joint_corrected_pvalue(proxy_q: float, cond_cdf: ConditionalCdf,
                           rng=None, u: float | None = None) -> float:
    """Correct a dependent proxy through the conditional CDF inverse.

    Draws U uniform and returns F^{-1}(U | Q); exactly uniform whenever
    the supplied conditional CDF is the truth and P is uniform.
    """
    if not 0.0 <= proxy_q <= 1.0:
        raise ParameterError(f"proxy p-value {proxy_q} outside [0, 1]")
    u = _draw_uniform(rng, u)
    return float(cond_cdf.inverse(u, proxy_q))


def joint_corrected_mixture(proxy_q: float, oracle: TrueStatOracle,
                            cond_cdf: ConditionalCdf, gamma: float,
                            rng=None, u: float | None = None,
                            u_correct: float | None = None) -> ActiveStat:
    """Bern(gamma) mixture of the true p-value and the joint correction.

    The query coin is independent of the proxy; on the no-query branch
    the value falls back to :func:`joint_corrected_pvalue`.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma={gamma} must lie in [0, 1]")
    u = _draw_uniform(rng, u)
    if u < gamma:
        true_p = oracle.query()
        if not 0.0 <= true_p <= 1.0:
            raise DomainError(f"oracle returned p-value {true_p} outside [0, 1]")
        return ActiveStat(float(true_p), True, gamma, P_VALUE, gamma, u)
    value = joint_corrected_pvalue(proxy_q, cond_cdf, rng=rng, u=u_correct)
    return ActiveStat(value, False, gamma, P_VALUE, gamma, u)


# ---------------------------------------------------------------------------
# Vectorized forms for Monte-Carlo work.  True statistics are supplied as
# precomputed arrays; query accounting is the scalar API's job.
# ---------------------------------------------------------------------------

def _uniforms(n, rng, u):
    if u is None:
        if rng is None:
            raise ParameterError("either a random generator or explicit uniforms are required")
        return rng.uniform(size=n)
    u = np.asarray(u, dtype=float)
    if u.shape != (n,):
        raise ParameterError(f"expected {n} uniforms, got shape {u.shape}")
    return u


def active_evalues(proxy_f, true_e, gamma, rng=None, u=None):
    """Vectorized :func:`active_evalue`: returns (values, queried)."""
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"gamma={gamma} must lie in (0, 1] for e-values")
    f = np.asarray(proxy_f, dtype=float)
    e = np.asarray(true_e, dtype=float)
    if np.any(f < 0.0) or np.any(e < 0.0):
        raise ParameterError("proxy and true e-values must be nonnegative")
    with np.errstate(divide="ignore"):
        prob = np.where(f > 0.0, np.clip(1.0 - gamma / f, 0.0, 1.0), 0.0)
    uu = _uniforms(f.shape[0], rng, u)
    queried = uu < prob
    values = np.where(queried, (1.0 - gamma) * e, f)
    return values, queried


def sr_active_evalues(proxy_f, true_e, gamma, rng=None, u=None):
    """Vectorized :func:`sr_active_evalue`: returns (values, queried)."""
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"gamma={gamma} must lie in (0, 1] for e-values")
    f = np.asarray(proxy_f, dtype=float)
    e = np.asarray(true_e, dtype=float)
    with np.errstate(divide="ignore"):
        prob = np.where(f > 0.0, np.clip(1.0 - gamma / f, 0.0, 1.0), 0.0)
    uu = _uniforms(f.shape[0], rng, u)
    queried = uu < prob
    boost = np.divide(1.0 - gamma, prob, out=np.zeros_like(prob), where=prob > 0.0)
    values = np.where(queried, boost * e, f)
    return values, queried


def active_pvalues_arbdep(proxy_q, true_p, gamma, rng=None, u=None):
    """Vectorized :func:`active_pvalue_arbdep`: returns (values, queried)."""
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma={gamma} must lie in [0, 1) for p-values")
    q = np.asarray(proxy_q, dtype=float)
    p = np.asarray(true_p, dtype=float)
    prob = 1.0 - gamma * q
    uu = _uniforms(q.shape[0], rng, u)
    queried = uu < prob
    values = np.where(queried, np.minimum(p / (1.0 - gamma), 1.0), q)
    return values, queried


def active_pvalues_density(proxy_q, true_p, density: NullDensity, eta,
                           rng=None, u=None):
    """Vectorized :func:`active_pvalue_density`: returns (values, queried)."""
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta={eta} must lie in [0, 1]")
    q = np.asarray(proxy_q, dtype=float)
    p = np.asarray(true_p, dtype=float)
    f_q = np.asarray(density.eval(q), dtype=float)
    floor = eta * density.lower_bound
    if np.any(f_q < floor * (1.0 - _CLAMP_TOL)):
        worst = q[np.argmin(f_q)]
        raise InconsistentDensityError(
            f"density below eta * ell_f = {floor} at proxy {worst}; "
            "the certified lower bound is stale"
        )
    prob = np.clip(1.0 - np.divide(floor, f_q, out=np.ones_like(f_q),
                                   where=f_q > 0.0), 0.0, 1.0)
    uu = _uniforms(q.shape[0], rng, u)
    queried = uu < prob
    values = np.where(queried, p, q)
    return values, queried


def coupled_lowerbound_pvalues(true_p, gamma, u):
    """Vectorized :func:`coupled_lowerbound_pvalue`."""
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma={gamma} must lie in [0, 1)")
    p = np.asarray(true_p, dtype=float)
    u = np.asarray(u, dtype=float)
    scaled = p / (1.0 - gamma)
    if gamma > 0.0:
        scaled = np.minimum(scaled, u / gamma)
    return np.minimum(scaled, 1.0)

"""Multiple-testing procedures with false discovery rate control.

Step-up procedures for p-values and e-values, their active variants
(query the true statistic per hypothesis with a proxy-dependent
probability, then run the step-up rule on the resulting active
statistics), and proxy-filter variants that query a deterministic
selection and trivialise the rest.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    E_VALUE,
    P_VALUE,
    StatKind,
    TrueStatOracle,
    active_evalue,
    active_pvalue_arbdep,
)
from .errors import ParameterError


@dataclass(frozen=True)
class StatVector:
    """An ordered collection of statistics of one kind.

    ``ids`` are stable hypothesis identifiers used in serialized
    output; they default to 1-based positions.
    """

    values: np.ndarray
    kind: StatKind
    ids: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 1:
            raise ParameterError("a statistic vector needs at least one entry")
        if self.kind is P_VALUE:
            if np.any(values < 0.0) or np.any(values > 1.0):
                raise ParameterError("p-values must lie in [0, 1]")
        elif np.any(values < 0.0):
            raise ParameterError("e-values must be nonnegative")
        ids = self.ids
        if ids is None:
            ids = tuple(str(i + 1) for i in range(values.size))
        else:
            ids = tuple(str(i) for i in ids)
            if len(ids) != values.size:
                raise ParameterError("one id per statistic required")
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return self.values.size


class DependenceRegime(enum.Enum):
    INDEPENDENT_OR_PRDN = "independent_or_prdn"
    WNDN = "wndn"
    ARBITRARY = "arbitrary"


class Procedure(enum.Enum):
    ACTIVE_BH = "active_bh"
    PF = "pf"


@dataclass(frozen=True)
class DiscoverySet:
    """Rejections of a step-up procedure.

    ``rejected`` holds 0-based positions; ``k_star`` is the critical
    index and ``threshold`` the rejection cutoff actually applied
    (0 for p-values and +inf for e-values when nothing is rejected).
    """

    rejected: frozenset
    k_star: int
    threshold: float
    alpha: float
    kind: StatKind
    query_mask: tuple | None = None

    def rejected_ids(self, stats: StatVector) -> list:
        return sorted((stats.ids[i] for i in self.rejected),
                      key=lambda s: (len(s), s))

    def to_jsonable(self, stats: StatVector | None = None) -> dict:
        thr = self.threshold
        obj = {
            "alpha": self.alpha,
            "k_star": self.k_star,
            "threshold": thr if math.isfinite(thr) else "Infinity",
            "rejected_ids": (self.rejected_ids(stats) if stats is not None
                             else sorted(self.rejected)),
        }
        if self.query_mask is not None:
            obj["query_mask"] = list(self.query_mask)
            obj["query_count"] = int(sum(self.query_mask))
        return obj

    def to_json(self, stats: StatVector | None = None) -> str:
        return json.dumps(self.to_jsonable(stats), indent=2, sort_keys=True)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha={alpha} must lie in (0, 1)")


def bh(pvals: StatVector, alpha: float) -> DiscoverySet:
    """Step-up procedure on p-values.

    Rejects every p-value at most alpha * k / K where k is the largest
    index with the k-th smallest p-value below alpha * k / K.  Ties at
    the threshold are all rejected, which keeps the output equal to the
    largest self-consistent set.
    """
    _check_alpha(alpha)
    if pvals.kind is not P_VALUE:
        raise ParameterError("bh expects p-values")
    p = pvals.values
    k = p.size
    order = np.sort(p)
    ranks = np.arange(1, k + 1)
    passing = np.nonzero(order <= alpha * ranks / k)[0]
    k_star = int(passing[-1] + 1) if passing.size else 0
    if k_star == 0:
        return DiscoverySet(frozenset(), 0, 0.0, alpha, P_VALUE)
    threshold = alpha * k_star / k
    rejected = frozenset(np.nonzero(p <= threshold)[0].tolist())
    return DiscoverySet(rejected, k_star, threshold, alpha, P_VALUE)


def ebh(evals: StatVector, alpha: float) -> DiscoverySet:
    """Step-up procedure on e-values, valid under arbitrary dependence.

    Rejects every e-value at least K / (alpha * k) where k is the
    largest index with the k-th largest e-value above K / (alpha * k).
    """
    _check_alpha(alpha)
    if evals.kind is not E_VALUE:
        raise ParameterError("ebh expects e-values")
    e = evals.values
    k = e.size
    order = np.sort(e)[::-1]
    ranks = np.arange(1, k + 1)
    passing = np.nonzero(order >= k / (alpha * ranks))[0]
    k_star = int(passing[-1] + 1) if passing.size else 0
    if k_star == 0:
        return DiscoverySet(frozenset(), 0, math.inf, alpha, E_VALUE)
    threshold = k / (alpha * k_star)
    rejected = frozenset(np.nonzero(e >= threshold)[0].tolist())
    return DiscoverySet(rejected, k_star, threshold, alpha, E_VALUE)


def is_self_consistent(stats: StatVector, rejected, alpha: float) -> bool:
    """Check the self-consistency condition of a candidate discovery set.

    Every rejected p-value must be at most alpha * |R| / K (for
    e-values: at least K / (alpha * |R|)); the empty set passes
    vacuously.
    """
    _check_alpha(alpha)
    rejected = frozenset(rejected)
    if not rejected:
        return True
    k = len(stats)
    if any(i < 0 or i >= k for i in rejected):
        raise ParameterError("rejected indices outside the hypothesis range")
    idx = np.fromiter(rejected, dtype=int)
    r = len(rejected)
    if stats.kind is P_VALUE:
        return bool(np.all(stats.values[idx] <= alpha * r / k))
    return bool(np.all(stats.values[idx] >= k / (alpha * r)))


def _spawn_uniforms(rng, n: int) -> np.ndarray:
    # One uniform per hypothesis, drawn in index order so shared seeds
    # reproduce per-hypothesis decisions regardless of how callers
    # parallelize around this function.
    return rng.uniform(size=n)


def active_bh(proxies: StatVector, oracles: Sequence[TrueStatOracle],
              gamma: float, alpha: float, rng):
    """Active step-up on p-values.

    Computes one arbitrary-dependence active p-value per hypothesis and
    applies :func:`bh`.  Returns the discovery set (carrying the query
    mask), the active p-values, and the query mask.
    """
    if proxies.kind is not P_VALUE:
        raise ParameterError("active_bh expects proxy p-values")
    if len(oracles) != len(proxies):
        raise ParameterError("one oracle per proxy required")
    u = _spawn_uniforms(rng, len(proxies))
    stats = [active_pvalue_arbdep(q, oracle, gamma, u=u_i)
             for q, oracle, u_i in zip(proxies.values, oracles, u)]
    active = StatVector(np.array([s.value for s in stats]), P_VALUE, proxies.ids)
    mask = tuple(bool(s.queried) for s in stats)
    disc = bh(active, alpha)
    disc = DiscoverySet(disc.rejected, disc.k_star, disc.threshold,
                        alpha, P_VALUE, query_mask=mask)
    return disc, active, np.array(mask, dtype=bool)


def active_ebh(proxies: StatVector, oracles: Sequence[TrueStatOracle],
               gamma: float, alpha: float, rng):
    """Active step-up on e-values; FDR <= alpha under any dependence."""
    if proxies.kind is not E_VALUE:
        raise ParameterError("active_ebh expects proxy e-values")
    if len(oracles) != len(proxies):
        raise ParameterError("one oracle per proxy required")
    u = _spawn_uniforms(rng, len(proxies))
    stats = [active_evalue(f, oracle, gamma, u=u_i)
             for f, oracle, u_i in zip(proxies.values, oracles, u)]
    active = StatVector(np.array([s.value for s in stats]), E_VALUE, proxies.ids)
    mask = tuple(bool(s.queried) for s in stats)
    disc = ebh(active, alpha)
    disc = DiscoverySet(disc.rejected, disc.k_star, disc.threshold,
                        alpha, E_VALUE, query_mask=mask)
    return disc, active, np.array(mask, dtype=bool)


@dataclass(frozen=True)
class SelectionAlgorithm:
    """Deterministic map from proxy statistics to a query set."""

    name: str
    select: Callable[[np.ndarray], frozenset] = field(repr=False)

    def __call__(self, proxies: np.ndarray) -> frozenset:
        chosen = frozenset(int(i) for i in self.select(np.asarray(proxies)))
        if any(i < 0 or i >= len(proxies) for i in chosen):
            raise ParameterError(
                f"selector {self.name} chose indices outside the panel")
        return chosen


def select_all() -> SelectionAlgorithm:
    return SelectionAlgorithm("all", lambda v: range(len(v)))


def select_none() -> SelectionAlgorithm:
    return SelectionAlgorithm("none", lambda v: ())


def select_top_m(m: int, kind: StatKind = P_VALUE) -> SelectionAlgorithm:
    """Top-m most promising proxies: smallest p-values / largest e-values."""

    def pick(values: np.ndarray):
        if m <= 0:
            return ()
        keys = values if kind is P_VALUE else -values
        return np.argsort(keys, kind="stable")[:m]

    tag = "top_m" if kind is P_VALUE else "e_top_m"
    return SelectionAlgorithm(f"{tag}:{m}", pick)


def selector_from_spec(spec: str, kind: StatKind) -> SelectionAlgorithm:
    """Parse a named selector: all | none | top:<m>."""
    if spec == "all":
        return select_all()
    if spec == "none":
        return select_none()
    if spec.startswith("top:"):
        return select_top_m(int(spec.split(":", 1)[1]), kind)
    raise ParameterError(f"unknown selector spec {spec!r}")


def proxy_filter(proxies: StatVector, oracles: Sequence[TrueStatOracle],
                 selector: SelectionAlgorithm, alpha: float):
    """Query a deterministic selection, set the rest to 1, run bh."""
    if proxies.kind is not P_VALUE:
        raise ParameterError("proxy_filter expects proxy p-values")
    if len(oracles) != len(proxies):
        raise ParameterError("one oracle per proxy required")
    chosen = selector(proxies.values)
    values = np.ones(len(proxies))
    for i in sorted(chosen):
        values[i] = oracles[i].query()
    stats = StatVector(values, P_VALUE, proxies.ids)
    mask = tuple(i in chosen for i in range(len(proxies)))
    disc = bh(stats, alpha)
    disc = DiscoverySet(disc.rejected, disc.k_star, disc.threshold,
                        alpha, P_VALUE, query_mask=mask)
    return disc, np.array(mask, dtype=bool)


def e_proxy_filter(proxies: StatVector, oracles: Sequence[TrueStatOracle],
                   selector: SelectionAlgorithm, alpha: float):
    """Query a deterministic selection, zero the rest, run ebh."""
    if proxies.kind is not E_VALUE:
        raise ParameterError("e_proxy_filter expects proxy e-values")
    if len(oracles) != len(proxies):
        raise ParameterError("one oracle per proxy required")
    chosen = selector(proxies.values)
    values = np.zeros(len(proxies))
    for i in sorted(chosen):
        values[i] = oracles[i].query()
    stats = StatVector(values, E_VALUE, proxies.ids)
    mask = tuple(i in chosen for i in range(len(proxies)))
    disc = ebh(stats, alpha)
    disc = DiscoverySet(disc.rejected, disc.k_star, disc.threshold,
                        alpha, E_VALUE, query_mask=mask)
    return disc, np.array(mask, dtype=bool)


def fdr_bound(alpha: float, n_hypotheses: int,
              regime: DependenceRegime,
              procedure: Procedure = Procedure.ACTIVE_BH) -> float:
    """FDR bound of the active/filtered p-value procedures.

    Independent or positively dependent nulls: alpha * (1 + log(1/alpha));
    weakly negatively dependent: alpha * (3.18 + log(1/alpha));
    arbitrary dependence: alpha times the K-th harmonic number.
    The bounds are the same for both p-value procedures, so
    ``procedure`` only labels the query; it is kept for call-site
    clarity.
    """
    _check_alpha(alpha)
    if procedure not in (Procedure.ACTIVE_BH, Procedure.PF):
        raise ParameterError(f"unknown procedure {procedure}")
    if regime is DependenceRegime.INDEPENDENT_OR_PRDN:
        return alpha * (1.0 + math.log(1.0 / alpha))
    if regime is DependenceRegime.WNDN:
        return alpha * (3.18 + math.log(1.0 / alpha))
    if n_hypotheses < 1:
        raise ParameterError("need at least one hypothesis")
    harmonic = float(np.sum(1.0 / np.arange(1, n_hypotheses + 1)))
    return alpha * harmonic


def fdp(rejected, null_set) -> float:
    """Realized false discovery proportion |N & R| / max(|R|, 1)."""
    rejected = frozenset(rejected)
    null_set = frozenset(null_set)
    if not rejected:
        return 0.0
    return len(null_set & rejected) / len(rejected)

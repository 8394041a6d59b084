"""Tuning of the query parameters and sequential querying strategies.

``tune_gamma`` grid-searches the e-value growth-rate objective under an
expected-query budget; ``eta_for_budget`` converts a budget into the
density method's scale parameter.  The two sequential strategies
iterate proxies to a stopping time (multilevel) or revise unprocessed
proxies after every query (interactive) before applying the standard
active e-value draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import ActiveStat, TrueStatOracle, active_evalue
from .errors import (
    ConfigurationError,
    ContractViolationError,
    InfeasibleBudgetError,
    ParameterError,
)

NEG_SENTINEL = -1e300
_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class MixtureSample:
    """Draws of (proxy, true) e-value pairs from the working mixture."""

    pairs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pairs, dtype=float)
        object.__setattr__(self, "pairs", arr)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise ParameterError("pairs must be a nonempty (N, 2) array")
        if np.any(arr < 0.0):
            raise ParameterError("proxy and true e-values must be nonnegative")

    @property
    def proxy(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def true(self) -> np.ndarray:
        return self.pairs[:, 1]

    @classmethod
    def from_pvalues(cls, proxy_q, true_p) -> "MixtureSample":
        """Reciprocal substitution F = 1/Q, E = 1/P for p-value pairs."""
        q = np.asarray(proxy_q, dtype=float)
        p = np.asarray(true_p, dtype=float)
        with np.errstate(divide="ignore"):
            return cls(np.column_stack([np.where(q > 0, 1.0 / q, np.inf),
                                        np.where(p > 0, 1.0 / p, np.inf)]))


@dataclass(frozen=True)
class BudgetConstraint:
    """Maximum allowed expected query fraction."""

    max_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.max_fraction <= 1.0:
            raise ParameterError("budget must lie in [0, 1]")


def expected_log_objective(gamma: float, samples: MixtureSample) -> float:
    """Empirical growth-rate objective of the active e-value.

    Mean over samples of (gamma/F ^ 1) log F + (1 - gamma/F)_+ log(gamma E).
    Zero-weight terms contribute nothing; positive-weight terms whose
    logarithm diverges contribute the large negative sentinel so the
    grid search stays total.
    """
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"gamma={gamma} must lie in (0, 1]")
    f, e = samples.proxy, samples.true
    with np.errstate(divide="ignore"):
        ratio = np.where(f > 0.0, gamma / f, np.inf)
    w_proxy = np.minimum(ratio, 1.0)
    w_true = np.clip(1.0 - ratio, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        log_f = np.where(f > 0.0, np.log(f), -np.inf)
        log_ge = np.where(e > 0.0, np.log(gamma * e), -np.inf)
    proxy_term = np.where(w_proxy > 0.0, w_proxy * log_f, 0.0)
    true_term = np.where(w_true > 0.0, w_true * log_ge, 0.0)
    contrib = proxy_term + true_term
    contrib = np.where(np.isfinite(contrib), contrib, NEG_SENTINEL)
    return float(np.mean(contrib))


def budget_usage(gamma: float, samples: MixtureSample) -> float:
    """Empirical expected query fraction E[(1 - gamma/F)_+]."""
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"gamma={gamma} must lie in (0, 1]")
    f = samples.proxy
    with np.errstate(divide="ignore"):
        ratio = np.where(f > 0.0, gamma / f, np.inf)
    return float(np.mean(np.clip(1.0 - ratio, 0.0, 1.0)))


@dataclass(frozen=True)
class TuneResult:
    gamma_star: float
    objective: float
    usage: float
    feasible: bool

    def to_jsonable(self) -> dict:
        return {"gamma_star": self.gamma_star, "objective": self.objective,
                "usage": self.usage, "feasible": self.feasible}


def tune_gamma(samples: MixtureSample, budget: BudgetConstraint,
               grid_step: float = 0.01) -> TuneResult:
    """Grid-search gamma maximizing the growth objective within budget.

    Ties break toward larger gamma (fewer queries).  The usage is
    nonincreasing in gamma, so when even gamma = 1 violates the budget
    the search is infeasible; gamma = 1 is returned with the
    feasibility flag cleared.
    """
    if not 0.0 < grid_step <= 0.5:
        raise ParameterError("grid_step must lie in (0, 0.5]")
    count = max(2, int(round(1.0 / grid_step)))
    grid = np.linspace(grid_step, 1.0, count)
    best = None
    for gamma in grid:
        usage = budget_usage(gamma, samples)
        if usage > budget.max_fraction + _FEAS_TOL:
            continue
        objective = expected_log_objective(gamma, samples)
        if best is None or objective >= best[1]:
            best = (float(gamma), objective, usage)
    if best is None:
        usage = budget_usage(1.0, samples)
        return TuneResult(1.0, expected_log_objective(1.0, samples),
                          usage, feasible=False)
    return TuneResult(best[0], best[1], best[2], feasible=True)


def eta_for_budget(budget_b: float, ell_f: float) -> float:
    """Scale parameter spending the full budget: eta = (1 - B) / ell_f.

    The density method queries with expected fraction 1 - eta * ell_f,
    so a budget below 1 - ell_f is unreachable (eta cannot exceed 1).
    """
    if not 0.0 <= budget_b <= 1.0:
        raise ParameterError("budget must lie in [0, 1]")
    if not 0.0 < ell_f:
        raise ParameterError("ell_f must be positive")
    required = (1.0 - budget_b) / ell_f
    if required > 1.0 + _FEAS_TOL:
        raise InfeasibleBudgetError(
            f"budget {budget_b} needs eta = {required} > 1 at ell_f = {ell_f}; "
            f"the minimum reachable query fraction is {1.0 - ell_f}")
    return min(1.0, required)


@dataclass(frozen=True)
class StoppingRule:
    """Per-hypothesis stopping times over round-robin proxy iterates.

    ``decide(t, history)`` returns the indices stopping at iteration t;
    it may inspect every hypothesis's iterates seen so far.  Once
    stopped a hypothesis never resumes.
    """

    name: str
    decide: Callable[[int, Sequence[Sequence[float]]], Iterable[int]] = field(repr=False)


def stopping_rule_from_spec(spec: str) -> StoppingRule:
    """Named rules: first | fixed:<t> | threshold:<c> | plateau:<eps>."""
    if spec == "first":
        spec = "fixed:1"
    if spec.startswith("fixed:"):
        t_stop = int(spec.split(":", 1)[1])
        if t_stop < 1:
            raise ParameterError("fixed stopping time must be >= 1")
        return StoppingRule(
            spec, lambda t, hist: range(len(hist)) if t >= t_stop else ())
    if spec.startswith("threshold:"):
        cut = float(spec.split(":", 1)[1])
        return StoppingRule(
            spec, lambda t, hist: [i for i, h in enumerate(hist)
                                   if h and h[-1] >= cut])
    if spec.startswith("plateau:"):
        eps = float(spec.split(":", 1)[1])
        return StoppingRule(
            spec, lambda t, hist: [i for i, h in enumerate(hist)
                                   if len(h) >= 2 and abs(h[-1] - h[-2]) <= eps])
    raise ParameterError(f"unknown stopping rule spec {spec!r}")


def multilevel_active_evalues(proxy_sequences: Sequence[Iterable[float]],
                              stopping: StoppingRule,
                              oracles: Sequence[TrueStatOracle],
                              gamma: float, rng,
                              max_iters: int = 100) -> list[ActiveStat]:
    """Iterate proxies round-robin, freeze at the stopping time, then draw.

    Each hypothesis's frozen proxy feeds the standard active e-value
    rule, so each output is marginally an ordinary active e-value.
    Hypotheses still running at ``max_iters`` are force-stopped there;
    a proxy sequence that ends before its stopping time is a
    configuration error.
    """
    n_hyp = len(proxy_sequences)
    if len(oracles) != n_hyp:
        raise ParameterError("one oracle per hypothesis required")
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    iterators = [iter(seq) for seq in proxy_sequences]
    history: list[list[float]] = [[] for _ in range(n_hyp)]
    active = set(range(n_hyp))
    frozen: dict[int, float] = {}
    for t in range(1, max_iters + 1):
        for i in sorted(active):
            try:
                history[i].append(float(next(iterators[i])))
            except StopIteration:
                raise ConfigurationError(
                    f"proxy sequence {i} exhausted at iteration {t} "
                    "before its stopping time") from None
        stopping_now = set(stopping.decide(t, history)) & active
        if t == max_iters:
            stopping_now = set(active)
        for i in stopping_now:
            frozen[i] = history[i][-1]
        active -= stopping_now
        if not active:
            break
    results = []
    for i in range(n_hyp):
        u = rng.uniform()
        results.append(active_evalue(frozen[i], oracles[i], gamma, u=u))
    return results


@dataclass(frozen=True)
class UpdateRule:
    """Revision of unprocessed proxies after each interactive step.

    ``update(unprocessed, proxies, queried, revealed)`` receives the
    set of unprocessed indices, the current proxy of every hypothesis,
    the query indicators of processed hypotheses and the revealed true
    e-values; it returns new proxies for (a subset of) the unprocessed
    indices.  Touching a processed hypothesis is a contract violation.
    """

    name: str
    update: Callable[[frozenset, Mapping[int, float], Mapping[int, bool],
                      Mapping[int, float]], Mapping[int, float]] = field(repr=False)


def update_rule_from_spec(spec: str) -> UpdateRule:
    """Named rules: identity | double_if_strong:<c>."""
    if spec == "identity":
        return UpdateRule("identity", lambda unproc, prox, queried, revealed: {})
    if spec.startswith("double_if_strong:"):
        cut = float(spec.split(":", 1)[1])

        def double(unproc, prox, queried, revealed, _c=cut):
            if any(v > _c for v in revealed.values()):
                return {i: 2.0 * prox[i] for i in unproc}
            return {}

        return UpdateRule(spec, double)
    raise ParameterError(f"unknown update rule spec {spec!r}")


class _RecordingOracle:
    """Pass-through oracle that remembers the last revealed value."""

    def __init__(self, inner: TrueStatOracle):
        self._inner = inner
        self.last_value: float | None = None

    def query(self) -> float:
        self.last_value = self._inner.query()
        return self.last_value


def interactive_active_evalues(initial_proxies, order,
                               update: UpdateRule,
                               oracles: Sequence[TrueStatOracle],
                               gamma: float, rng) -> list[ActiveStat]:
    """Process hypotheses one at a time, revising the remaining proxies.

    ``order`` is either a permutation of the hypothesis indices or an
    adaptive chooser ``(unprocessed, proxies) -> index``.  Outputs are
    returned in original hypothesis order.
    """
    proxies = np.asarray(getattr(initial_proxies, "values", initial_proxies),
                         dtype=float).copy()
    n_hyp = proxies.size
    if len(oracles) != n_hyp:
        raise ParameterError("one oracle per hypothesis required")
    if np.any(proxies < 0.0):
        raise ParameterError("proxy e-values must be nonnegative")
    chooser = order if callable(order) else None
    if chooser is None:
        sequence = [int(i) for i in order]
        if sorted(sequence) != list(range(n_hyp)):
            raise ParameterError("order must be a permutation of the indices")
    results: dict[int, ActiveStat] = {}
    queried: dict[int, bool] = {}
    revealed: dict[int, float] = {}
    unprocessed = set(range(n_hyp))
    for t in range(n_hyp):
        if chooser is not None:
            pick = int(chooser(frozenset(unprocessed), proxies.copy()))
        else:
            pick = sequence[t]
        if pick not in unprocessed:
            raise ContractViolationError(
                f"chooser selected already-processed hypothesis {pick}")
        u = rng.uniform()
        recorder = _RecordingOracle(oracles[pick])
        stat = active_evalue(proxies[pick], recorder, gamma, u=u)
        results[pick] = stat
        queried[pick] = stat.queried
        if stat.queried:
            revealed[pick] = recorder.last_value
        unprocessed.discard(pick)
        if unprocessed:
            revision = update.update(frozenset(unprocessed),
                                     {i: float(proxies[i]) for i in range(n_hyp)},
                                     dict(queried), dict(revealed))
            for i, value in dict(revision).items():
                if int(i) not in unprocessed:
                    raise ContractViolationError(
                        f"update rule revised processed hypothesis {i}")
                if value < 0.0:
                    raise ParameterError("revised proxies must be nonnegative")
                proxies[int(i)] = float(value)
    return [results[i] for i in range(n_hyp)]

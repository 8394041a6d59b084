"""Desk-scale simulation studies and their supporting metrics.

Three study families: a correlated-Gaussian single-hypothesis study of
the two active p-value constructions, a Beta-marginal study with
rank-correlation induced between proxy and true p-values, and
Monte-Carlo FDR/power studies over the multiple-testing procedures.
All studies are deterministic given a master seed, independent of the
worker-thread count, and serialize to JSON plus tidy CSV.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    E_VALUE,
    P_VALUE,
    TrueStatOracle,
    active_pvalues_arbdep,
    active_pvalues_density,
)
from .density import (
    beta_null_density,
    fit_null_density,
    gaussian_proxy_null_density,
)
from .errors import NumericalError, ParameterError
from .normal import normal_quantile, normal_sf
from .procedures import (
    StatVector,
    active_bh,
    active_ebh,
    bh,
    e_proxy_filter,
    ebh,
    fdp,
    proxy_filter,
    selector_from_spec,
)

# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def empirical_cdf(samples, grid) -> np.ndarray:
    """Fraction of samples at or below each grid point."""
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(grid, dtype=float),
                           side="right") / s.size


def ks_statistic(samples, reference_cdf=None, alternative: str = "two-sided") -> float:
    """Kolmogorov-Smirnov distance between samples and a reference CDF.

    ``reference_cdf`` defaults to the uniform CDF on [0, 1].  With
    ``alternative="greater"`` only the upward excursion of the
    empirical CDF is measured (the superuniformity check).
    """
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    ref = np.clip(s, 0.0, 1.0) if reference_cdf is None \
        else np.asarray(reference_cdf(s), dtype=float)
    upper = np.arange(1, n + 1) / n - ref
    if alternative == "greater":
        return float(np.max(upper))
    lower = ref - np.arange(0, n) / n
    if alternative != "two-sided":
        raise ParameterError(f"unknown alternative {alternative!r}")
    return float(max(np.max(upper), np.max(lower)))


def _midranks(values: np.ndarray) -> np.ndarray:
    uniq, counts = np.unique(values, return_counts=True)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    mid = starts + (counts - 1) / 2.0 + 1.0
    return mid[np.searchsorted(uniq, values)]


def spearman_rho(x, y) -> float:
    """Rank correlation with midranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ParameterError("need two equal-length vectors")
    rx = _midranks(x)
    ry = _midranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0.0:
        return 0.0
    return float(np.sum(rx * ry) / denom)


# ---------------------------------------------------------------------------
# Rank-correlation induction
# ---------------------------------------------------------------------------


def iman_conover(scores_matrix, target_corr, rng,
                 match_spearman: bool = True) -> np.ndarray:
    """Induce a target rank correlation while preserving marginals exactly.

    Each output column is a permutation of the corresponding input
    column, reordered to follow van der Waerden normal scores whose
    product-moment correlation is driven to the target.  With
    ``match_spearman`` the target is pre-mapped through the
    bivariate-normal rank-correlation inversion 2 sin(pi rho / 6), so
    the achieved Spearman correlation matches the request instead of
    undershooting it.
    """
    x = np.asarray(scores_matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ParameterError("scores matrix must be (n, K) with n >= 2")
    n, k = x.shape
    target = np.asarray(target_corr, dtype=float)
    if target.shape != (k, k) or not np.allclose(target, target.T):
        raise ParameterError("target correlation must be symmetric KxK")
    if not np.allclose(np.diag(target), 1.0):
        raise ParameterError("target correlation needs a unit diagonal")
    work = 2.0 * np.sin(np.pi * target / 6.0) if match_spearman else target
    try:
        chol = np.linalg.cholesky(work)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("target correlation is not positive definite") from exc
    scores = normal_quantile(np.arange(1, n + 1) / (n + 1.0))
    ranks_matrix = np.column_stack([scores[rng.permutation(n)] for _ in range(k)])
    # Remove the sampling correlation of the score columns before
    # inducing the target, so the induced correlation is exact.
    emp = np.corrcoef(ranks_matrix, rowvar=False)
    if k == 1:
        emp = np.array([[1.0]])
    emp_chol = np.linalg.cholesky(emp)
    driver = ranks_matrix @ np.linalg.inv(emp_chol).T @ chol.T
    out = np.empty_like(x)
    for j in range(k):
        order = np.argsort(driver[:, j], kind="stable")
        out[order, j] = np.sort(x[:, j])
    return out


# ---------------------------------------------------------------------------
# Report container
# ---------------------------------------------------------------------------


@dataclass
class TrialReport:
    """Aggregated study output: per-method curves plus scalar metrics."""

    study: str
    n_trials: int
    config: dict
    grid: list = field(default_factory=list)
    methods: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "study": self.study,
            "n_trials": self.n_trials,
            "config": self.config,
            "grid": list(self.grid),
            "methods": self.methods,
            "metrics": self.metrics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), indent=2, sort_keys=True)

    def csv_rows(self) -> list:
        rows = [("method", "kind", "x", "value")]
        for name in sorted(self.methods):
            entry = self.methods[name]
            for key in sorted(entry):
                value = entry[key]
                if isinstance(value, (list, tuple)):
                    for x, v in zip(self.grid, value):
                        rows.append((name, key, repr(float(x)), repr(float(v))))
                elif value is None:
                    rows.append((name, key, "", ""))
                else:
                    rows.append((name, key, "", repr(float(value))))
        for key in sorted(self.metrics):
            rows.append(("study", key, "", repr(float(self.metrics[key]))))
        return rows

    def write(self, prefix) -> tuple[Path, Path]:
        prefix = Path(prefix)
        json_path = prefix.with_suffix(".json")
        csv_path = prefix.with_suffix(".csv")
        json_path.write_text(self.to_json() + "\n", encoding="utf-8")
        with open(csv_path, "w", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerows(self.csv_rows())
        return json_path, csv_path


def parallel_map(fn, items, threads: int = 1) -> list:
    """Order-preserving map, optionally over a thread pool.

    Results are identical for any thread count because every item owns
    its own state and outputs are collected by position.
    """
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Correlated-Gaussian study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianSimConfig:
    """One-sided Gaussian pair study configuration.

    The proxy p-value comes from a unit-variance Gaussian whose null
    mean ``mu_x0`` is nonzero, so the proxy is invalid under the null;
    the true statistic's Gaussian is correlated with it at ``rho`` and
    centered at ``rho * mu`` under the alternative.  The defaults for
    ``gamma`` and ``eta`` spend comparable query budgets on the two
    active constructions across the alternative means of interest.
    """

    mu: float = 1.0
    rho: float = 0.5
    mu_x0: float = 0.3
    gamma: float = 0.4
    eta: float = 0.4
    margin_delta: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ParameterError("rho must lie in [0, 1)")
        if not 0.0 <= self.gamma < 1.0:
            raise ParameterError("gamma must lie in [0, 1)")
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError("eta must lie in [0, 1]")


def simulate_gaussian_pairs(config: GaussianSimConfig, is_null: bool,
                            n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw n (proxy, true) p-value pairs from the Gaussian model."""
    mu_x = config.mu_x0 if is_null else config.mu
    mu_z = 0.0 if is_null else config.rho * config.mu
    shared = rng.standard_normal(n)
    indep = rng.standard_normal(n)
    x = mu_x + shared
    z = mu_z + config.rho * shared + np.sqrt(1.0 - config.rho ** 2) * indep
    return normal_sf(x), normal_sf(z)


def simulate_gaussian_pair(config: GaussianSimConfig, is_null: bool,
                           rng) -> tuple[float, float]:
    q, p = simulate_gaussian_pairs(config, is_null, 1, rng)
    return float(q[0]), float(p[0])


def run_gaussian_study(config: GaussianSimConfig, n_trials: int,
                       seed: int = 0, grid_size: int = 200,
                       threads: int = 1) -> TrialReport:
    """Empirical CDFs and query rates of the two active p-values."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    density = gaussian_proxy_null_density(config.mu_x0, config.margin_delta)
    grid = np.linspace(0.0, 1.0, grid_size)
    report = TrialReport(study="gaussian", n_trials=n_trials,
                         config=asdict(config), grid=grid.tolist())
    report.metrics["ell_f"] = density.lower_bound
    for label, is_null in (("null", True), ("alt", False)):
        q, p = simulate_gaussian_pairs(config, is_null, n_trials, rng)
        dens_vals, dens_queried = active_pvalues_density(
            q, p, density, config.eta, rng=rng)
        arb_vals, arb_queried = active_pvalues_arbdep(
            q, p, config.gamma, rng=rng)
        for name, values in (("proxy", q), ("true", p),
                             ("active_density", dens_vals),
                             ("active_arbdep", arb_vals)):
            entry = report.methods.setdefault(name, {})
            entry[f"{label}_ecdf"] = empirical_cdf(values, grid).tolist()
            entry[f"{label}_reject_at_0.05"] = float(np.mean(values <= 0.05))
            entry[f"{label}_ks_vs_uniform"] = ks_statistic(values)
            entry[f"{label}_ks_above_uniform"] = ks_statistic(
                values, alternative="greater")
        report.methods["active_density"][f"{label}_query_rate"] = \
            float(np.mean(dens_queried))
        report.methods["active_arbdep"][f"{label}_query_rate"] = \
            float(np.mean(arb_queried))
    return report


# ---------------------------------------------------------------------------
# Beta-marginal rank-correlated study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BetaSimConfig:
    """Beta-marginal study: invalid Beta proxy against a uniform truth.

    Under the null the proxy is stochastically smaller than uniform
    while the true p-value is exactly uniform; under the alternative
    both carry signal.  ``rho`` is the rank correlation induced between
    proxy and true within each block.
    """

    null_q: tuple = (0.5, 1.0)
    null_p: tuple = (1.0, 1.0)
    alt_q: tuple = (2.0, 5.0)
    alt_p: tuple = (0.2, 1.0)
    n_null: int = 1000
    n_alt: int = 1000
    rho: float = 0.0
    eta: float = 1.0
    alpha: float = 0.05
    est_holdout: int = 200
    est_bins: int = 20

    def __post_init__(self):
        for pair in (self.null_q, self.null_p, self.alt_q, self.alt_p):
            if len(pair) != 2 or min(pair) <= 0.0:
                raise ParameterError("Beta shapes must be positive pairs")
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError("rho must lie in [0, 1]")


def _beta_block(rng, n, q_shape, p_shape, rho):
    q = rng.beta(*q_shape, size=n)
    p = rng.beta(*p_shape, size=n)
    if rho > 0.0:
        target = np.array([[1.0, rho], [rho, 1.0]])
        pairs = iman_conover(np.column_stack([q, p]), target, rng)
        q, p = pairs[:, 0], pairs[:, 1]
    return q, p


def run_beta_study(config: BetaSimConfig, seed: int = 0,
                   grid_size: int = 200, threads: int = 1) -> TrialReport:
    """Density-method validity and power under induced rank correlation.

    Evaluates the density-based active p-value with the known analytic
    proxy density and with a histogram estimate fitted on held-out null
    proxies, and reports false-positive rate at ``alpha``, power, query
    rates and CDFs per method.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    grid = np.linspace(0.0, 1.0, grid_size)
    n_total = config.n_null + config.n_alt
    report = TrialReport(study="beta", n_trials=n_total,
                         config=asdict(config), grid=grid.tolist())
    known = beta_null_density(*config.null_q)
    holdout = rng.beta(*config.null_q, size=config.est_holdout)
    estimated = fit_null_density(holdout, n_bins=config.est_bins).as_null_density()
    report.metrics["ell_f_known"] = known.lower_bound
    report.metrics["ell_f_estimated"] = estimated.lower_bound
    blocks = {}
    if config.n_null:
        blocks["null"] = _beta_block(rng, config.n_null, config.null_q,
                                     config.null_p, config.rho)
    if config.n_alt:
        blocks["alt"] = _beta_block(rng, config.n_alt, config.alt_q,
                                    config.alt_p, config.rho)
    for label, (q, p) in blocks.items():
        known_vals, known_queried = active_pvalues_density(
            q, p, known, config.eta, rng=rng)
        est_vals, est_queried = active_pvalues_density(
            q, p, estimated, config.eta, rng=rng)
        for name, values in (("proxy", q), ("true", p),
                             ("active_density_known", known_vals),
                             ("active_density_estimated", est_vals)):
            entry = report.methods.setdefault(name, {})
            entry[f"{label}_ecdf"] = empirical_cdf(values, grid).tolist()
            rate = float(np.mean(values <= config.alpha))
            if label == "null":
                entry["fpr"] = rate
                entry["null_ks_vs_uniform"] = ks_statistic(values)
            else:
                entry["power"] = rate
        report.methods["active_density_known"][f"{label}_query_rate"] = \
            float(np.mean(known_queried))
        report.methods["active_density_estimated"][f"{label}_query_rate"] = \
            float(np.mean(est_queried))
        if label == "null":
            report.metrics["achieved_spearman_null"] = spearman_rho(q, p)
    return report


# ---------------------------------------------------------------------------
# FDR/power Monte-Carlo studies
# ---------------------------------------------------------------------------

_DEPENDENCES = ("independent", "prdn", "wndn", "arbitrary")


@dataclass(frozen=True)
class FdrScenario:
    """Panel generator for the FDR studies.

    ``dependence`` selects the null copula: iid, equicorrelated
    Gaussian (positively dependent), antithetic pairing (negatively
    dependent), or one shared statistic duplicated across all nulls.
    """

    kind: str = "pvalue"
    dependence: str = "independent"
    n_hypotheses: int = 100
    pi_alt: float = 0.2
    effect: float = 3.0
    rho: float = 0.5
    proxy_noise: float = 0.5
    proxy_bias: float = 0.3
    evalue_tilt: float = 2.0

    def __post_init__(self):
        if self.kind not in ("pvalue", "evalue"):
            raise ParameterError("kind must be pvalue or evalue")
        if self.dependence not in _DEPENDENCES:
            raise ParameterError(
                f"dependence must be one of {_DEPENDENCES}")
        if not 0.0 <= self.pi_alt <= 1.0:
            raise ParameterError("pi_alt must lie in [0, 1]")


def _latent_draws(scenario: FdrScenario, rng) -> tuple[np.ndarray, np.ndarray]:
    k = scenario.n_hypotheses
    n_alt = int(round(scenario.pi_alt * k))
    is_alt = np.zeros(k, dtype=bool)
    if n_alt:
        is_alt[rng.permutation(k)[:n_alt]] = True
    if scenario.dependence == "independent":
        noise = rng.standard_normal(k)
    elif scenario.dependence == "prdn":
        shared = rng.standard_normal()
        noise = (np.sqrt(scenario.rho) * shared
                 + np.sqrt(1.0 - scenario.rho) * rng.standard_normal(k))
    elif scenario.dependence == "wndn":
        half = rng.standard_normal((k + 1) // 2)
        noise = np.empty(k)
        noise[0::2] = half
        noise[1::2] = -half[: k // 2]
    else:  # arbitrary: one draw duplicated across every null
        shared = rng.standard_normal()
        noise = np.full(k, shared)
        noise[is_alt] = rng.standard_normal(int(np.sum(is_alt)))
    latent = noise + scenario.effect * is_alt
    return latent, is_alt


def _generate_panel(scenario: FdrScenario, rng):
    latent, is_alt = _latent_draws(scenario, rng)
    k = scenario.n_hypotheses
    proxy_latent = (latent + scenario.proxy_bias
                    + scenario.proxy_noise * rng.standard_normal(k))
    if scenario.kind == "pvalue":
        trues = normal_sf(latent)
        proxies = normal_sf(proxy_latent)
        return StatVector(proxies, P_VALUE), trues, is_alt
    tilt = scenario.evalue_tilt
    trues = np.exp(tilt * latent - 0.5 * tilt * tilt)
    proxies = np.exp(tilt * proxy_latent - 0.5 * tilt * tilt)
    return StatVector(proxies, E_VALUE), trues, is_alt


_PROCEDURES = ("bh", "ebh", "active_bh", "active_ebh", "pf", "epf")


@dataclass(frozen=True)
class FdrStudyResult:
    procedure: str
    alpha: float
    n_trials: int
    fdr: float
    fdr_se: float
    power: float
    power_se: float
    query_fraction: float

    def to_jsonable(self) -> dict:
        return asdict(self)


def run_fdr_study(procedure: str, scenario: FdrScenario, n_trials: int,
                  alpha: float, seed: int = 0, gamma: float = 0.5,
                  selector: str = "top:30", threads: int = 1) -> FdrStudyResult:
    """Trial-averaged FDR, power and query fraction of one procedure."""
    if procedure not in _PROCEDURES:
        raise ParameterError(f"procedure must be one of {_PROCEDURES}")
    seeds = np.random.SeedSequence(seed).spawn(n_trials)
    kind = P_VALUE if scenario.kind == "pvalue" else E_VALUE
    chosen_selector = selector_from_spec(selector, kind)

    def one_trial(seq):
        rng = np.random.default_rng(seq)
        proxies, trues, is_alt = _generate_panel(scenario, rng)
        k = len(proxies)
        oracles = [TrueStatOracle.from_value(v) for v in trues]
        if procedure == "bh":
            disc = bh(StatVector(trues, P_VALUE), alpha)
            qfrac = 1.0
        elif procedure == "ebh":
            disc = ebh(StatVector(trues, E_VALUE), alpha)
            qfrac = 1.0
        elif procedure == "active_bh":
            disc, _, mask = active_bh(proxies, oracles, gamma, alpha, rng)
            qfrac = float(np.mean(mask))
        elif procedure == "active_ebh":
            disc, _, mask = active_ebh(proxies, oracles, gamma, alpha, rng)
            qfrac = float(np.mean(mask))
        elif procedure == "pf":
            disc, mask = proxy_filter(proxies, oracles, chosen_selector, alpha)
            qfrac = float(np.mean(mask))
        else:
            disc, mask = e_proxy_filter(proxies, oracles, chosen_selector, alpha)
            qfrac = float(np.mean(mask))
        nulls = frozenset(np.nonzero(~is_alt)[0].tolist())
        alts = np.nonzero(is_alt)[0]
        fdp_val = fdp(disc.rejected, nulls)
        tdp = (len(disc.rejected & frozenset(alts.tolist())) / alts.size
               if alts.size else 0.0)
        return fdp_val, tdp, qfrac

    results = parallel_map(one_trial, seeds, threads)
    arr = np.asarray(results, dtype=float)
    fdr = float(np.mean(arr[:, 0]))
    power = float(np.mean(arr[:, 1]))
    return FdrStudyResult(
        procedure=procedure, alpha=alpha, n_trials=n_trials,
        fdr=fdr, fdr_se=float(np.std(arr[:, 0], ddof=1) / np.sqrt(n_trials)),
        power=power,
        power_se=float(np.std(arr[:, 1], ddof=1) / np.sqrt(n_trials)),
        query_fraction=float(np.mean(arr[:, 2])))

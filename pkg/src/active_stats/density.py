"""Null-density and conditional-CDF estimation for proxy p-values.

The density path is a floored, renormalized histogram: simple,
dependency-free, and enough to certify the positive lower bound the
density-based active p-value needs.  The conditional CDF is a binned
empirical estimate with linear interpolation, invertible by binary
search, used by the joint-correction construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import ConditionalCdf, NullDensity
from .errors import EstimationError, NumericalError, ParameterError
from .normal import normal_logpdf, normal_quantile

_NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class GridDensity:
    """Piecewise-constant density on [0, 1].

    Bin values are positive and integrate to one within 1e-9; bins are
    right-open except the last.
    """

    bin_edges: np.ndarray
    bin_values: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        values = np.asarray(self.bin_values, dtype=float)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "bin_values", values)
        if edges.ndim != 1 or edges.size < 3 or np.any(np.diff(edges) <= 0):
            raise ParameterError("bin edges must be increasing with >= 2 bins")
        if abs(edges[0]) > 1e-12 or abs(edges[-1] - 1.0) > 1e-12:
            raise ParameterError("bin edges must span [0, 1]")
        if values.shape != (edges.size - 1,):
            raise ParameterError("one value per bin required")
        if np.any(values <= 0.0):
            raise ParameterError("bin values must be positive")
        total = float(np.sum(values * np.diff(edges)))
        if abs(total - 1.0) > _NORMALIZATION_TOL:
            raise ParameterError(f"density integrates to {total}, not 1")

    @property
    def n_bins(self) -> int:
        return self.bin_values.size

    def eval(self, q):
        q = np.asarray(q, dtype=float)
        idx = np.clip(np.searchsorted(self.bin_edges, q, side="right") - 1,
                      0, self.n_bins - 1)
        out = self.bin_values[idx]
        return float(out) if out.ndim == 0 else out

    def integral(self) -> float:
        return float(np.sum(self.bin_values * np.diff(self.bin_edges)))

    def as_null_density(self, margin_delta: float = 0.0) -> NullDensity:
        bound = density_lower_bound(self, margin_delta)
        return NullDensity(eval=self.eval, lower_bound=bound,
                           domain_margin=margin_delta)

    def to_json(self) -> str:
        return json.dumps(
            {"bin_edges": self.bin_edges.tolist(),
             "bin_values": self.bin_values.tolist()},
            indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GridDensity":
        obj = json.loads(text)
        return cls(np.asarray(obj["bin_edges"]), np.asarray(obj["bin_values"]))


def _floor_and_renormalize(raw: np.ndarray, widths: np.ndarray,
                           floor_eps: float) -> np.ndarray:
    """Solve v = max(floor, lam * raw) with integral one.

    Exact water-filling: bins pinned at the floor keep it, the rest are
    scaled by a common factor so the density still integrates to one.
    """
    pinned = raw <= 0.0
    for _ in range(raw.size + 1):
        free_mass = float(np.sum(raw[~pinned] * widths[~pinned]))
        pinned_mass = float(np.sum(widths[pinned])) * floor_eps
        if free_mass <= 0.0:
            break
        lam = (1.0 - pinned_mass) / free_mass
        newly = (~pinned) & (lam * raw < floor_eps)
        if not np.any(newly):
            values = np.where(pinned, floor_eps, lam * raw)
            return values
        pinned |= newly
    if np.all(pinned):
        # Degenerate: everything at the floor cannot integrate to one.
        raise EstimationError("all histogram mass collapsed below the floor")
    return np.where(pinned, floor_eps, raw)


def fit_null_density(samples, n_bins: int = 20,
                     floor_eps: float = 1e-3) -> GridDensity:
    """Histogram density of null proxy p-values, floored and renormalized.

    Parameters
    ----------
    samples : array_like
        Null proxy p-values in [0, 1]; at least 50 are required.
    n_bins : int
        Number of equal-width bins.
    floor_eps : float
        Positive floor applied to every bin before renormalization, so
        the certified lower bound is strictly positive.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 50:
        raise EstimationError(f"need at least 50 samples, got {x.size}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ParameterError("samples must lie in [0, 1]")
    if n_bins < 2:
        raise ParameterError("n_bins must be >= 2")
    if not 0.0 < floor_eps < 1.0:
        raise ParameterError("floor_eps must lie in (0, 1)")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    widths = np.diff(edges)
    raw = counts / (x.size * widths)
    values = _floor_and_renormalize(raw, widths, floor_eps)
    return GridDensity(edges, values)


def density_lower_bound(density, margin_delta: float = 0.0,
                        grid_size: int = 10_000) -> float:
    """Certified lower bound of a density over [delta, 1 - delta].

    For a :class:`GridDensity` this is the exact minimum over the bins
    intersecting the interval; for a callable it is the minimum over a
    uniform evaluation grid.
    """
    if not 0.0 <= margin_delta < 0.5:
        raise ParameterError("margin_delta must lie in [0, 0.5)")
    lo, hi = margin_delta, 1.0 - margin_delta
    if isinstance(density, GridDensity):
        starts = density.bin_edges[:-1]
        ends = density.bin_edges[1:]
        overlap = (ends > lo) & (starts < hi)
        overlap |= np.isclose(starts, lo) | np.isclose(ends, hi)
        bound = float(np.min(density.bin_values[overlap]))
    else:
        grid = np.linspace(lo, hi, grid_size)
        bound = float(np.min(np.asarray(density(grid), dtype=float)))
    if not bound > 0.0:
        raise NumericalError(
            f"density lower bound {bound} is not positive on "
            f"[{lo}, {hi}]; unusable for the density-based active p-value")
    return bound


def gaussian_proxy_density(q, mu0: float):
    """Null density of Q = 1 - Phi(X) when X is normal with mean mu0.

    Evaluates phi(x) / phi(x - mu0) at x = Phi^{-1}(1 - q), computed in
    log space; algebraically this equals exp(-mu0 * x + mu0^2 / 2).
    """
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr <= 0.0) or np.any(q_arr >= 1.0):
        from .errors import DomainError

        raise DomainError("gaussian proxy density is defined on (0, 1) only")
    x = normal_quantile(1.0 - q_arr)
    out = np.exp(normal_logpdf(x) - normal_logpdf(x - mu0))
    return float(out) if out.ndim == 0 else out


def gaussian_reciprocal_proxy_density(q, mu0: float):
    """Reciprocal variant phi(x - mu0) / phi(x): the change-of-variables
    density of Q = 1 - Phi(X) itself.  Exposed behind its own name so
    callers can pick either convention explicitly."""
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr <= 0.0) or np.any(q_arr >= 1.0):
        from .errors import DomainError

        raise DomainError("gaussian proxy density is defined on (0, 1) only")
    x = normal_quantile(1.0 - q_arr)
    out = np.exp(normal_logpdf(x - mu0) - normal_logpdf(x))
    return float(out) if out.ndim == 0 else out


def gaussian_proxy_null_density(mu0: float, margin_delta: float = 1e-3,
                                floor_at_bound: bool = True,
                                variant: str = "change-of-variables") -> NullDensity:
    """:class:`NullDensity` for the Gaussian proxy Q = 1 - Phi(X).

    ``variant="change-of-variables"`` (default) uses the actual null
    density of Q, which is what the query rule needs for validity;
    ``variant="as-printed"`` uses :func:`gaussian_proxy_density`, its
    reciprocal.  The infimum over the open interval is zero either way,
    so the bound is certified on [delta, 1 - delta].  With
    ``floor_at_bound`` the evaluation is floored at the certified bound
    outside the margin; this keeps the query probability in [0, 1] on
    extreme proxies at the cost of a superuniformity slack of at most
    eta * ell_f * delta, which is negligible for small delta.
    """
    if margin_delta <= 0.0:
        raise ParameterError("the analytic density needs a positive margin")
    if variant == "change-of-variables":
        base = gaussian_reciprocal_proxy_density
    elif variant == "as-printed":
        base = gaussian_proxy_density
    else:
        raise ParameterError(f"unknown density variant {variant!r}")
    bound = density_lower_bound(lambda g: base(g, mu0), margin_delta)

    if floor_at_bound:
        def evaluate(q, _b=bound, _m=mu0):
            q = np.clip(np.asarray(q, dtype=float), 1e-15, 1.0 - 1e-15)
            return np.maximum(base(q, _m), _b)
    else:
        def evaluate(q, _m=mu0):
            return base(q, _m)

    return NullDensity(eval=evaluate, lower_bound=bound,
                       domain_margin=margin_delta)


def beta_null_density(a: float, b: float,
                      margin_delta: float = 0.0) -> NullDensity:
    """Analytic Beta(a, b) proxy density with a grid-certified bound."""
    from scipy import stats

    def evaluate(q):
        return stats.beta.pdf(q, a, b)

    bound = density_lower_bound(evaluate, margin_delta)
    return NullDensity(eval=evaluate, lower_bound=bound,
                       domain_margin=margin_delta)


@dataclass(frozen=True)
class CondCdfEstimate:
    """Binned empirical conditional CDF of P given Q.

    One empirical CDF of p per q-bin, tabulated on a shared p-grid and
    linearly interpolated.  Rows are monotone from 0 to 1 by
    construction, so the generalized inverse is a binary search plus
    linear interpolation.
    """

    q_bin_edges: np.ndarray
    p_grid: np.ndarray
    cdf_table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q_bin_edges", np.asarray(self.q_bin_edges, float))
        object.__setattr__(self, "p_grid", np.asarray(self.p_grid, float))
        object.__setattr__(self, "cdf_table", np.asarray(self.cdf_table, float))
        if self.cdf_table.shape != (self.q_bin_edges.size - 1, self.p_grid.size):
            raise ParameterError("cdf table shape mismatch")

    def _bin_of(self, q):
        q = np.asarray(q, dtype=float)
        return np.clip(np.searchsorted(self.q_bin_edges, q, side="right") - 1,
                       0, self.cdf_table.shape[0] - 1)

    def eval(self, p, q):
        p = np.asarray(p, dtype=float)
        bins = self._bin_of(q)
        if bins.ndim == 0:
            out = np.interp(p, self.p_grid, self.cdf_table[int(bins)])
            return float(out) if out.ndim == 0 else out
        p_b, bins_b = np.broadcast_arrays(p, bins)
        out = np.empty(p_b.shape, dtype=float)
        for b in np.unique(bins_b):
            mask = bins_b == b
            out[mask] = np.interp(p_b[mask], self.p_grid, self.cdf_table[b])
        return out

    def inverse(self, u, q):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise ParameterError("u must lie in [0, 1]")
        bins = self._bin_of(q)
        scalar = u.ndim == 0 and bins.ndim == 0
        u_b, bins_b = np.broadcast_arrays(np.atleast_1d(u), np.atleast_1d(bins))
        out = np.empty(u_b.shape, dtype=float)
        for b in np.unique(bins_b):
            mask = bins_b == b
            out[mask] = self._inverse_row(self.cdf_table[b], u_b[mask])
        return float(out[0]) if scalar else out

    def _inverse_row(self, row, u):
        k = np.searchsorted(row, u, side="left")
        k = np.clip(k, 1, row.size - 1)
        left, right = row[k - 1], row[k]
        frac = np.divide(u - left, right - left,
                         out=np.zeros_like(u), where=right > left)
        p = self.p_grid[k - 1] + frac * (self.p_grid[k] - self.p_grid[k - 1])
        return np.where(u <= row[0], self.p_grid[0], p)

    def as_conditional_cdf(self) -> ConditionalCdf:
        return ConditionalCdf(eval=self.eval, inverse=self.inverse)

    def to_json(self) -> str:
        return json.dumps(
            {"q_bin_edges": self.q_bin_edges.tolist(),
             "p_grid": self.p_grid.tolist(),
             "cdf_table": self.cdf_table.tolist()},
            indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CondCdfEstimate":
        obj = json.loads(text)
        return cls(np.asarray(obj["q_bin_edges"]), np.asarray(obj["p_grid"]),
                   np.asarray(obj["cdf_table"]))


def fit_conditional_cdf(pairs, n_qbins: int | None = None,
                        p_grid_size: int = 201,
                        min_per_bin: int = 20) -> CondCdfEstimate:
    """Fit the binned conditional CDF of p given q.

    Bins are quantile-based in q so every bin holds at least
    ``min_per_bin`` pairs; the bin count defaults to ceil(sqrt(N))
    capped at 50 and shrunk until the minimum occupancy holds.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParameterError("pairs must be an (N, 2) array of (q, p)")
    n = arr.shape[0]
    if n < min_per_bin:
        raise EstimationError(
            f"need at least {min_per_bin} pairs, got {n}")
    q, p = arr[:, 0], arr[:, 1]
    if n_qbins is None:
        n_qbins = int(np.ceil(np.sqrt(n)))
    n_qbins = max(1, min(n_qbins, 50, n // min_per_bin))
    quantiles = np.quantile(q, np.linspace(0.0, 1.0, n_qbins + 1))
    edges = np.unique(quantiles)
    edges[0], edges[-1] = 0.0, 1.0
    if edges.size < 2:
        edges = np.array([0.0, 1.0])
    p_grid = np.linspace(0.0, 1.0, p_grid_size)
    bins = np.clip(np.searchsorted(edges, q, side="right") - 1,
                   0, edges.size - 2)
    rows = np.empty((edges.size - 1, p_grid_size), dtype=float)
    for b in range(edges.size - 1):
        p_b = np.sort(p[bins == b])
        if p_b.size < min_per_bin:
            raise EstimationError(
                f"q-bin {b} holds only {p_b.size} pairs after merging")
        rows[b] = np.searchsorted(p_b, p_grid, side="right") / p_b.size
        rows[b, 0] = 0.0
        rows[b, -1] = 1.0
    return CondCdfEstimate(edges, p_grid, rows)


def inverse_conditional_cdf(estimate: CondCdfEstimate, q, u):
    """Generalized inverse of the fitted conditional CDF at (u, q)."""
    return estimate.inverse(u, q)

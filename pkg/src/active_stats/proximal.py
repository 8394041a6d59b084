"""Negative-control two-stage least squares: the expensive true statistic.

The cheap proxy is the classical two-sample OLS p-value, which is
biased under unmeasured confounding.  The true statistic regresses each
negative control outcome on the treatment and the negative control
exposures, then the outcome on the treatment and the fitted controls;
its standard error comes from the sandwich of the stacked estimating
equations, whose Jacobian is block diagonal (one block per first-stage
regression plus one for the second stage).  That stacked Gram
accumulation is the hot kernel and lives in ``_kernels``.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import special

from . import _kernels
from .core import ActiveStat, TrueStatOracle, active_pvalue_arbdep
from .errors import (
    DataError,
    ParameterError,
    SingularDesignError,
    VarianceError,
)
from .normal import normal_cdf

_P_FLOOR = np.nextafter(0.0, 1.0)
_SE_FLOOR = 1e-300
_CONDITION_WARN = 1e10


@dataclass(frozen=True)
class PanelData:
    """One hypothesis's data: outcome, binary treatment, and d negative
    control exposure/outcome columns."""

    y: np.ndarray
    a: np.ndarray
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        a = np.asarray(self.a, dtype=float).ravel()
        z = np.atleast_2d(np.asarray(self.z, dtype=float))
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        if z.shape[0] == 1 and y.size > 1:
            z = z.T
        if w.shape[0] == 1 and y.size > 1:
            w = w.T
        for name, arr in (("y", y), ("a", a), ("z", z), ("w", w)):
            object.__setattr__(self, name, arr)
        n = y.size
        if a.size != n or z.shape[0] != n or w.shape[0] != n:
            raise ParameterError("y, a, z, w must share the sample dimension")
        if z.shape[1] != w.shape[1]:
            raise ParameterError("need matching counts of exposures and outcomes")
        if not np.all(np.isin(a, (0.0, 1.0))):
            raise ParameterError("treatment must be binary")
        if not (np.any(a == 0.0) and np.any(a == 1.0)):
            raise SingularDesignError("treatment takes a single level")
        if n <= 2 * z.shape[1] + 2:
            raise ParameterError(
                f"n = {n} must exceed 2d + 2 = {2 * z.shape[1] + 2} "
                f"for d = {z.shape[1]} negative controls")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class OlsFit:
    psi_hat: float
    se: float
    pvalue: float


@dataclass(frozen=True)
class TslsFit:
    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    psi_hat: float
    se: float | None = None
    pvalue: float | None = None


def ols_proxy(data: PanelData) -> OlsFit:
    """Two-column OLS of the outcome on the treatment; O(n).

    Classical standard error and a two-sided t p-value with n - 2
    degrees of freedom.  Degenerate (zero-residual) fits floor the
    standard error so the p-value underflows to the minimum positive
    float instead of dividing by zero.
    """
    n = data.n
    a = data.a
    n1 = float(np.sum(a))
    det = n * n1 - n1 * n1
    if det <= 0.0:
        raise SingularDesignError("treatment takes a single level")
    sum_y = float(np.sum(data.y))
    sum_ay = float(np.dot(a, data.y))
    psi = (n * sum_ay - n1 * sum_y) / det
    intercept = (sum_y - psi * n1) / n
    resid = data.y - intercept - psi * a
    sigma2 = float(np.dot(resid, resid)) / (n - 2)
    se = float(np.sqrt(max(sigma2 * n / det, 0.0)))
    se = max(se, _SE_FLOOR)
    t_stat = abs(psi) / se
    pvalue = float(max(2.0 * special.stdtr(n - 2, -t_stat), _P_FLOOR))
    return OlsFit(psi_hat=float(psi), se=se, pvalue=min(pvalue, 1.0))


def _solve_stage(design: np.ndarray, response: np.ndarray, stage: str):
    coef, _, rank, _ = np.linalg.lstsq(design, response, rcond=None)
    if rank < design.shape[1]:
        raise SingularDesignError(
            f"{stage} design is rank deficient "
            f"({rank} < {design.shape[1]})")
    cond = np.linalg.cond(design)
    if cond > _CONDITION_WARN:
        warnings.warn(
            f"{stage} design is near-singular (condition number {cond:.3g})",
            RuntimeWarning, stacklevel=3)
    return coef


def tsls_fit(data: PanelData) -> TslsFit:
    """Two-stage least squares point estimates.

    First stage: each negative control outcome on [1, A, Z]; second
    stage: the outcome on [1, A, fitted controls].  The treatment
    coefficient of the second stage estimates the treatment effect.
    ``alpha_hat`` stacks the d first-stage coefficient vectors
    (intercept, treatment, exposures) in order.
    """
    n, d = data.n, data.d
    x = np.column_stack([np.ones(n), data.a, data.z])
    alpha = _solve_stage(x, data.w, "first stage")
    s_hat = x @ alpha
    s_design = np.column_stack([np.ones(n), data.a, s_hat])
    beta = _solve_stage(s_design, data.y, "second stage")
    return TslsFit(alpha_hat=alpha.T.ravel().copy(),
                   beta_hat=beta.copy(),
                   psi_hat=float(beta[1]))


def sandwich_variance(data: PanelData, fit: TslsFit) -> float:
    """Standard error of the treatment coefficient from the stacked sandwich.

    Builds the per-sample stacked estimating equations, their empirical
    Jacobian (block diagonal, one (d+2)-block per regression) and
    outer-product matrix, forms A^{-1} B A^{-T}, and returns the
    square root of the treatment entry scaled for the plain (not
    root-n) estimator, so the test statistic is psi_hat / se.
    """
    n, d = data.n, data.d
    p = d + 2
    x = np.column_stack([np.ones(n), data.a, data.z])
    alpha = fit.alpha_hat.reshape(d, p).T
    s_hat = x @ alpha
    s_design = np.column_stack([np.ones(n), data.a, s_hat])
    resid_first = data.w - s_hat
    resid_second = data.y - s_design @ fit.beta_hat
    xtx, sts, bsum = _kernels.psi_gram(x, s_design, resid_first, resid_second)
    m = (d + 1) * p
    a_inv = np.zeros((m, m))
    try:
        x_block_inv = np.linalg.inv(xtx / n)
    except np.linalg.LinAlgError as exc:
        raise VarianceError("first-stage Jacobian block is singular") from exc
    try:
        s_block_inv = np.linalg.inv(sts / n)
    except np.linalg.LinAlgError as exc:
        raise VarianceError("second-stage Jacobian block is singular") from exc
    for j in range(d):
        a_inv[j * p:(j + 1) * p, j * p:(j + 1) * p] = x_block_inv
    a_inv[d * p:, d * p:] = s_block_inv
    v_mat = a_inv @ (bsum / n) @ a_inv.T
    idx = d * p + 1
    var = v_mat[idx, idx] / n
    if not np.isfinite(var) or var < 0.0:
        raise VarianceError(f"variance of the treatment coefficient is {var}")
    return float(max(np.sqrt(var), _SE_FLOOR))


def tsls_pvalue(psi_hat: float, sigma: float) -> float:
    """Two-sided normal p-value of the treatment estimate."""
    if sigma <= 0.0:
        raise ParameterError("sigma must be positive")
    p = 2.0 * float(normal_cdf(-abs(psi_hat) / sigma))
    return min(max(p, _P_FLOOR), 1.0)


def tsls_pipeline(data: PanelData) -> TslsFit:
    """Point estimates, sandwich standard error and p-value in one call."""
    fit = tsls_fit(data)
    se = sandwich_variance(data, fit)
    return replace(fit, se=se, pvalue=tsls_pvalue(fit.psi_hat, se))


@dataclass(frozen=True)
class Active2slsResult:
    """Outcome of the active pipeline on one hypothesis."""

    ols: OlsFit
    stat: ActiveStat
    tsls: TslsFit | None
    elapsed_proxy_s: float
    elapsed_true_s: float | None

    def to_jsonable(self, hypothesis_id: str) -> dict:
        return {
            "id": hypothesis_id,
            "Q": self.ols.pvalue,
            "queried": self.stat.queried,
            "P_or_null": self.tsls.pvalue if self.tsls is not None else None,
            "psi_ols": self.ols.psi_hat,
            "psi_tsls_or_null": self.tsls.psi_hat if self.tsls is not None else None,
            "elapsed_proxy_s": self.elapsed_proxy_s,
            "elapsed_true_s": self.elapsed_true_s,
        }


def active_2sls(data: PanelData, gamma: float, rng,
                u: float | None = None) -> Active2slsResult:
    """Active p-value pipeline: OLS proxy always, 2SLS only when queried."""
    start = time.perf_counter()
    ols = ols_proxy(data)
    elapsed_proxy = time.perf_counter() - start
    holder: dict = {}

    def compute_true() -> float:
        t0 = time.perf_counter()
        fit = tsls_pipeline(data)
        holder["fit"] = fit
        holder["elapsed"] = time.perf_counter() - t0
        return fit.pvalue

    oracle = TrueStatOracle(compute_true)
    stat = active_pvalue_arbdep(ols.pvalue, oracle, gamma, rng=rng, u=u)
    return Active2slsResult(ols=ols, stat=stat,
                            tsls=holder.get("fit"),
                            elapsed_proxy_s=elapsed_proxy,
                            elapsed_true_s=holder.get("elapsed"))


@dataclass(frozen=True)
class SemConfig:
    """Linear structural equation model for validating the engine.

    The latent confounder U (one coordinate per negative control)
    drives the exposures Z, the outcomes W and the response Y; the
    treatment propensity acts through Z, so both regression stages are
    exactly linear and the treatment is confounded through U.  The
    default noise scales balance the second-stage residual variance
    against the structural one, which makes the block-diagonal sandwich
    asymptotically exact for the treatment coefficient.
    """

    n: int
    d: int
    beta_a: float
    confounding: float = 1.0
    noise_y: float = 1.0
    noise_w: float = 0.7071067811865476
    noise_z: float = 1.0
    propensity_scale: float = 0.8
    beta0: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError("need at least one negative control")
        if self.n <= 2 * self.d + 2:
            raise ParameterError(
                f"n = {self.n} must exceed 2d + 2 = {2 * self.d + 2}")


def simulate_sem(config: SemConfig) -> PanelData:
    """Draw one panel from the linear SEM; deterministic given the seed."""
    rng = np.random.default_rng(config.seed)
    n, d = config.n, config.d
    u = rng.standard_normal((n, d))
    z = u + config.noise_z * rng.standard_normal((n, d))
    weights = np.full(d, 1.0 / np.sqrt(d))
    propensity = normal_cdf(config.propensity_scale * (z @ weights))
    a = (rng.uniform(size=n) < propensity).astype(float)
    w = u + config.noise_w * rng.standard_normal((n, d))
    beta_u = np.full(d, 0.7 * config.confounding / np.sqrt(d))
    y = (config.beta0 + config.beta_a * a + u @ beta_u
         + config.noise_y * rng.standard_normal(n))
    return PanelData(y=y, a=a, z=z, w=w)


# ---------------------------------------------------------------------------
# CSV ingestion: a single wide file (y, a, z1..zd, w1..wd) or one file
# per block inside a directory (y.csv, a.csv, z.csv, w.csv).
# ---------------------------------------------------------------------------

def _read_csv_columns(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line_no}: expected {len(header)} "
                    f"fields, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise DataError(f"{path}: line {line_no}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float)


def panel_from_wide_csv(path) -> PanelData:
    """Load one panel from a wide CSV with columns y, a, z1..zd, w1..wd."""
    path = Path(path)
    header, values = _read_csv_columns(path)
    cols = {name: values[:, i] for i, name in enumerate(header)}
    if "y" not in cols or "a" not in cols:
        raise DataError(f"{path}: need 'y' and 'a' columns")
    z_names = sorted((h for h in header if h.startswith("z")),
                     key=lambda s: int(s[1:]) if s[1:].isdigit() else 0)
    w_names = sorted((h for h in header if h.startswith("w")),
                     key=lambda s: int(s[1:]) if s[1:].isdigit() else 0)
    if not z_names or len(z_names) != len(w_names):
        raise DataError(f"{path}: need matching z1..zd and w1..wd columns")
    z = np.column_stack([cols[h] for h in z_names])
    w = np.column_stack([cols[h] for h in w_names])
    try:
        return PanelData(y=cols["y"], a=cols["a"], z=z, w=w)
    except (ParameterError, SingularDesignError) as exc:
        raise type(exc)(f"{path}: {exc}") from None


def panel_from_block_dir(path) -> PanelData:
    """Load one panel from y.csv, a.csv, z.csv, w.csv inside a directory."""
    path = Path(path)
    blocks = {}
    for name in ("y", "a", "z", "w"):
        block_path = path / f"{name}.csv"
        if not block_path.exists():
            raise DataError(f"{path}: missing block file {name}.csv")
        _, values = _read_csv_columns(block_path)
        blocks[name] = values
    try:
        return PanelData(y=blocks["y"][:, 0], a=blocks["a"][:, 0],
                         z=blocks["z"], w=blocks["w"])
    except (ParameterError, SingularDesignError) as exc:
        raise type(exc)(f"{path}: {exc}") from None


def panel_to_wide_csv(data: PanelData, path) -> None:
    path = Path(path)
    d = data.d
    header = ["y", "a"] + [f"z{j + 1}" for j in range(d)] \
        + [f"w{j + 1}" for j in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.y[i])), repr(float(data.a[i]))]
            row += [repr(float(v)) for v in data.z[i]]
            row += [repr(float(v)) for v in data.w[i]]
            writer.writerow(row)

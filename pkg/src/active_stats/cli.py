"""Command-line interface.

Subcommands: ``simulate`` (gaussian | beta studies), ``test`` (run a
multiple-testing procedure on a CSV of statistics), ``2sls`` (batch
active proximal pipeline), ``tune`` (query-budget grid search),
``fit-density`` (histogram null density) and ``correct-joint`` (apply
the conditional-CDF correction to proxy p-values).

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 numerical failure.  ``ACTIVE_STATS_SEED`` supplies the seed when
``--seed`` is omitted.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .core import E_VALUE, P_VALUE, TrueStatOracle
from .density import CondCdfEstimate, fit_null_density
from .errors import (
    ActiveStatsError,
    DataError,
    NumericalError,
    OracleUnavailableError,
    ParameterError,
)
from .harness import (
    BetaSimConfig,
    GaussianSimConfig,
    run_beta_study,
    run_gaussian_study,
)
from .procedures import (
    StatVector,
    active_bh,
    active_ebh,
    bh,
    e_proxy_filter,
    ebh,
    proxy_filter,
    selector_from_spec,
)
from .proximal import (
    active_2sls,
    panel_from_block_dir,
    panel_from_wide_csv,
)
from .strategies import BudgetConstraint, MixtureSample, tune_gamma


def _resolve_seed(seed):
    if seed is not None:
        return int(seed)
    env = os.environ.get("ACTIVE_STATS_SEED")
    if env is None:
        raise click.UsageError(
            "a seed is required: pass --seed or set ACTIVE_STATS_SEED")
    try:
        return int(env)
    except ValueError:
        raise click.UsageError(
            f"ACTIVE_STATS_SEED={env!r} is not an integer") from None


def _read_table(path, required, optional=()):
    """CSV with a header; returns {column: list of floats except id}."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in required:
            if col not in header:
                raise DataError(f"{path}: missing required column {col!r}")
        table = {col: [] for col in header}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line_no}: expected {len(header)} fields, "
                    f"got {len(row)}")
            for col, cell in zip(header, row):
                if col == "id":
                    table[col].append(cell.strip())
                    continue
                try:
                    table[col].append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: line {line_no}: invalid number "
                        f"{cell.strip()!r} in column {col!r}") from None
    if not any(table.values()):
        raise DataError(f"{path}: no data rows")
    return table


def _write_text(out, text):
    if out is None:
        click.echo(text)
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


@click.group()
@click.version_option(version=__version__, prog_name="active-stats")
def cli():
    """Active hypothesis testing with proxy statistics."""


@cli.command()
@click.argument("family", type=click.Choice(["gaussian", "beta"]))
@click.option("--mu", type=float, default=1.0, show_default=True,
              help="Alternative mean of the Gaussian study.")
@click.option("--rho", type=float, default=None,
              help="Correlation (Gaussian) or target rank correlation (beta).")
@click.option("--mu-x0", type=float, default=0.3, show_default=True)
@click.option("--gamma", type=float, default=0.36, show_default=True)
@click.option("--eta", type=float, default=None,
              help="Density-method scale (defaults: 0.29 gaussian, 1.0 beta).")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--trials", type=int, default=1000, show_default=True,
              help="Trial count for the Gaussian study.")
@click.option("--n-null", type=int, default=1000, show_default=True)
@click.option("--n-alt", type=int, default=1000, show_default=True)
@click.option("--holdout", type=int, default=200, show_default=True,
              help="Held-out nulls for the estimated-density variant.")
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None,
              help="Worker threads; the results do not depend on it.")
@click.option("--out", type=click.Path(), default=None,
              help="Report path prefix (writes .json and .csv).")
def simulate(family, mu, rho, mu_x0, gamma, eta, alpha, trials,
             n_null, n_alt, holdout, seed, threads, out):
    """Run a study and write its report."""
    seed = _resolve_seed(seed)
    threads = threads or 1
    if family == "gaussian":
        config = GaussianSimConfig(mu=mu, rho=0.5 if rho is None else rho,
                                   mu_x0=mu_x0, gamma=gamma,
                                   eta=0.29 if eta is None else eta)
        report = run_gaussian_study(config, trials, seed=seed, threads=threads)
        prefix = Path(out) if out else Path("report_gaussian")
    else:
        config = BetaSimConfig(rho=0.0 if rho is None else rho,
                               eta=1.0 if eta is None else eta,
                               alpha=alpha, n_null=n_null, n_alt=n_alt,
                               est_holdout=holdout)
        report = run_beta_study(config, seed=seed, threads=threads)
        prefix = Path(out) if out else Path("report_beta")
    json_path, csv_path = report.write(prefix)
    click.echo(f"wrote {json_path} and {csv_path}")


_PROCEDURE_KINDS = {
    "bh": P_VALUE, "active-bh": P_VALUE, "pf": P_VALUE,
    "ebh": E_VALUE, "active-ebh": E_VALUE, "epf": E_VALUE,
}


def _unavailable_oracle(hyp_id):
    def fail():
        raise OracleUnavailableError(
            f"hypothesis {hyp_id}: a true statistic is required but the "
            "input has no 'true' column")
    return TrueStatOracle(fail)


@cli.command("test")
@click.argument("procedure",
                type=click.Choice(sorted(_PROCEDURE_KINDS)))
@click.option("--input", "input_path", type=click.Path(exists=True),
              required=True, help="CSV with columns id,proxy[,true].")
@click.option("--alpha", type=float, required=True)
@click.option("--gamma", type=float, default=0.5, show_default=True,
              help="Query tuning for the active procedures.")
@click.option("--selector", type=str, default="all", show_default=True,
              help="Query selection for pf/epf: all | none | top:<m>.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def test_command(procedure, input_path, alpha, gamma, selector, seed, out):
    """Run a multiple-testing procedure on a statistics file."""
    table = _read_table(input_path, required=("proxy",), optional=("id", "true"))
    n = len(table["proxy"])
    ids = table.get("id") or [str(i + 1) for i in range(n)]
    kind = _PROCEDURE_KINDS[procedure]
    proxies = StatVector(np.asarray(table["proxy"]), kind, ids)
    has_true = "true" in table
    if has_true:
        trues = np.asarray(table["true"], dtype=float)
        oracles = [TrueStatOracle.from_value(v) for v in trues]
    else:
        trues = None
        oracles = [_unavailable_oracle(i) for i in ids]

    if procedure in ("bh", "ebh"):
        stats = StatVector(trues, kind, ids) if has_true else proxies
        disc = bh(stats, alpha) if procedure == "bh" else ebh(stats, alpha)
        payload = disc.to_jsonable(stats)
    elif procedure in ("active-bh", "active-ebh"):
        rng = np.random.default_rng(_resolve_seed(seed))
        runner = active_bh if procedure == "active-bh" else active_ebh
        disc, stats, _ = runner(proxies, oracles, gamma, alpha, rng)
        payload = disc.to_jsonable(stats)
    else:
        chosen = selector_from_spec(selector, kind)
        runner = proxy_filter if procedure == "pf" else e_proxy_filter
        disc, _ = runner(proxies, oracles, chosen, alpha)
        payload = disc.to_jsonable(proxies)
    payload["query_count"] = int(sum(o.query_count for o in oracles))
    _write_text(out, json.dumps(payload, indent=2, sort_keys=True))


@cli.command("2sls")
@click.option("--data", "data_path", type=click.Path(exists=True),
              required=True,
              help="Wide CSV, a block directory (y/a/z/w.csv), or a "
                   "directory of wide CSVs (one hypothesis each).")
@click.option("--gamma", type=float, required=True)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="JSON-lines output path (default: stdout).")
def tsls_command(data_path, gamma, seed, threads, out):
    """Active proximal pipeline over one or many hypotheses."""
    from .harness import parallel_map

    seed = _resolve_seed(seed)
    path = Path(data_path)
    if path.is_file():
        panels = [(path.stem, lambda p=path: panel_from_wide_csv(p))]
    elif (path / "y.csv").exists():
        panels = [(path.name, lambda p=path: panel_from_block_dir(p))]
    else:
        files = sorted(path.glob("*.csv"))
        if not files:
            raise DataError(f"{path}: no CSV files found")
        panels = [(f.stem, lambda p=f: panel_from_wide_csv(p)) for f in files]
    seeds = np.random.SeedSequence(seed).spawn(len(panels))

    def run_one(arg):
        (name, loader), seq = arg
        rng = np.random.default_rng(seq)
        result = active_2sls(loader(), gamma, rng)
        return json.dumps(result.to_jsonable(name), sort_keys=True)

    lines = parallel_map(run_one, list(zip(panels, seeds)), threads)
    text = "\n".join(lines)
    _write_text(out, text)


@cli.command()
@click.option("--samples", "samples_path", type=click.Path(exists=True),
              required=True, help="CSV with columns f,e (proxy, true).")
@click.option("--budget", type=float, required=True,
              help="Maximum expected query fraction in [0, 1].")
@click.option("--grid-step", type=float, default=0.01, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def tune(samples_path, budget, grid_step, out):
    """Grid-search the e-value query parameter under a budget."""
    table = _read_table(samples_path, required=("f", "e"))
    sample = MixtureSample(np.column_stack([table["f"], table["e"]]))
    result = tune_gamma(sample, BudgetConstraint(budget), grid_step)
    _write_text(out, json.dumps(result.to_jsonable(), indent=2, sort_keys=True))


@cli.command("fit-density")
@click.option("--input", "input_path", type=click.Path(exists=True),
              required=True, help="CSV with a column q of null proxies.")
@click.option("--bins", type=int, default=20, show_default=True)
@click.option("--floor", type=float, default=1e-3, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def fit_density(input_path, bins, floor, out):
    """Fit the floored histogram null density and emit it as JSON."""
    table = _read_table(input_path, required=("q",))
    density = fit_null_density(np.asarray(table["q"]), n_bins=bins,
                               floor_eps=floor)
    _write_text(out, density.to_json())


@cli.command("correct-joint")
@click.option("--input", "input_path", type=click.Path(exists=True),
              required=True, help="CSV with columns id,proxy.")
@click.option("--cdf", "cdf_path", type=click.Path(exists=True),
              required=True, help="Fitted conditional CDF JSON.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def correct_joint(input_path, cdf_path, seed, out):
    """Apply the conditional-CDF correction to a file of proxies."""
    table = _read_table(input_path, required=("proxy",))
    estimate = CondCdfEstimate.from_json(
        Path(cdf_path).read_text(encoding="utf-8"))
    rng = np.random.default_rng(_resolve_seed(seed))
    proxies = np.asarray(table["proxy"], dtype=float)
    ids = table.get("id") or [str(i + 1) for i in range(proxies.size)]
    uniforms = rng.uniform(size=proxies.size)
    corrected = estimate.inverse(uniforms, proxies)
    lines = ["id,corrected"]
    lines += [f"{hyp_id},{value!r}" for hyp_id, value in zip(ids, corrected)]
    _write_text(out, "\n".join(lines))


def main(argv=None) -> int:
    """Entry point translating library errors into exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 2
    except ParameterError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3
    except NumericalError as exc:
        click.echo(f"numerical error: {exc}", err=True)
        return 4
    except ActiveStatsError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Report writers: raw replication CSVs, summary tables, figures, manifest.

Raw tables are written with repr() floats so reruns with the same seed are
byte-identical.  Summary text tables apply the display unit conventions
(bias in 1e-2, variance and MSE in 1e-4); stored values stay in raw units.
Figures render the Monte Carlo error spread per estimator to PNG files next
to the delimited output.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .simulation import MetricsTable, MonteCarloOutput  # noqa: E402

__all__ = [
    "write_raw_results",
    "write_domain_results",
    "write_summary",
    "write_domain_summary",
    "render_error_figure",
    "render_domain_figure",
    "write_manifest",
    "format_summary_text",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_raw_results(out_dir: Path, output: MonteCarloOutput,
                      name: str = "results_raw.csv") -> str:
    path = Path(out_dir) / name
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "method", "estimate", "theta_true", "var_hat",
                         "ci_lower", "ci_upper", "ci_hit", "residual", "error"])
        for r in output.results:
            writer.writerow([r.rep, r.method, _cell(r.estimate), _cell(r.theta_true),
                             _cell(r.var_hat), _cell(r.ci_lower), _cell(r.ci_upper),
                             _cell(r.ci_hit), _cell(r.residual), r.error])
    return name


def write_domain_results(out_dir: Path, output: MonteCarloOutput,
                         name: str = "domains_raw.csv") -> str:
    path = Path(out_dir) / name
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "method", "domain", "estimate", "true_value", "error"])
        for r in output.domain_results:
            writer.writerow([r.rep, r.method, r.domain, _cell(r.estimate),
                             _cell(r.true_value), r.error])
    return name


_SUMMARY_COLUMNS = ["method", "domain", "n_ok", "n_failed", "bias", "variance",
                    "mse", "mean_var_hat", "rel_bias_var", "coverage"]


def _write_metrics_csv(path: Path, table: MetricsTable) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SUMMARY_COLUMNS)
        for row in table.rows:
            writer.writerow([row.method, _cell(row.domain), row.n_ok, row.n_failed,
                             _cell(row.bias), _cell(row.variance), _cell(row.mse),
                             _cell(row.mean_var_hat), _cell(row.rel_bias_var),
                             _cell(row.coverage)])


def format_summary_text(table: MetricsTable) -> str:
    """Aligned text summary in display units: bias x 1e-2, var and MSE x 1e-4."""
    header = f"{'Method':<10s} {'Dom':>3s} {'Bias(1e-2)':>11s} {'Var(1e-4)':>10s} " \
             f"{'MSE(1e-4)':>10s} {'RelBiasVar':>11s} {'Coverage':>9s} {'Fail':>5s}"
    lines = []
    if table.meta:
        meta = ", ".join(f"{k}={v}" for k, v in sorted(table.meta.items()))
        lines.append(f"# {meta}")
    lines.append(header)
    lines.append("-" * len(header))
    for r in table.rows:
        dom = "" if r.domain is None else str(r.domain)
        rel = "" if r.rel_bias_var is None else f"{r.rel_bias_var:11.3f}"
        cov = "" if r.coverage is None else f"{r.coverage:9.3f}"
        lines.append(f"{r.method:<10s} {dom:>3s} {r.bias / 1e-2:11.2f} "
                     f"{r.variance / 1e-4:10.1f} {r.mse / 1e-4:10.1f} "
                     f"{rel:>11s} {cov:>9s} {r.n_failed:>5d}")
    return "\n".join(lines) + "\n"


def write_summary(out_dir: Path, table: MetricsTable,
                  stem: str = "summary") -> list[str]:
    out_dir = Path(out_dir)
    _write_metrics_csv(out_dir / f"{stem}.csv", table)
    (out_dir / f"{stem}.txt").write_text(format_summary_text(table), encoding="utf-8")
    return [f"{stem}.csv", f"{stem}.txt"]


def write_domain_summary(out_dir: Path, table: MetricsTable) -> list[str]:
    return write_summary(out_dir, table, stem="domains_summary")


def _error_boxplot(ax, labels, samples, title):
    ax.axhline(0.0, color="grey", lw=0.8, zorder=0)
    ax.boxplot(samples, tick_labels=labels, showfliers=False)
    ax.set_ylabel("estimate - population mean")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=45)


def render_error_figure(out_dir: Path, output: MonteCarloOutput,
                        name: str = "errors_boxplot.png") -> str:
    """Box plots of the per-replication errors for every estimator."""
    methods = []
    samples = []
    for row in output.metrics.rows:
        errs = [r.estimate - r.theta_true for r in output.results
                if r.method == row.method and r.ok]
        if errs:
            methods.append(row.method)
            samples.append(errs)
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * max(1, len(methods)), 4.5))
    meta = output.metrics.meta
    title = ", ".join(f"{k}={meta[k]}" for k in ("scenario", "population_size",
                                                 "n_probability") if k in meta)
    _error_boxplot(ax, methods, samples, title)
    fig.tight_layout()
    fig.savefig(Path(out_dir) / name, dpi=120)
    plt.close(fig)
    return name


def render_domain_figure(out_dir: Path, output: MonteCarloOutput, domain: int,
                         name: str | None = None) -> str:
    name = name or f"domain_{domain}_boxplot.png"
    methods = []
    samples = []
    seen = []
    for r in output.domain_results:
        if r.domain == domain and r.method not in seen:
            seen.append(r.method)
    for method in seen:
        errs = [r.estimate - r.true_value for r in output.domain_results
                if r.domain == domain and r.method == method and r.error == ""]
        if errs:
            methods.append(method)
            samples.append(errs)
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * max(1, len(methods)), 4.5))
    _error_boxplot(ax, methods, samples, f"domain {domain}")
    fig.tight_layout()
    fig.savefig(Path(out_dir) / name, dpi=120)
    plt.close(fig)
    return name


def write_manifest(out_dir: Path, config_echo: dict, seed: int, version: str,
                   artifacts: list[str]) -> str:
    """Machine-readable run record; deterministic (no timestamps)."""
    manifest = {
        "config": config_echo,
        "seed": seed,
        "library_version": version,
        "artifacts": sorted(set(artifacts) | {"manifest.json"}),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return "manifest.json"

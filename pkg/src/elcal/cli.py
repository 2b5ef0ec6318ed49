"""Batch command-line front end: simulate, plasmode, estimate.

All numerics live in the library; this module only parses arguments, wires
configuration to the drivers, and writes report artifacts.  Exit codes:
0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._newton import NumericalError
from .config import ConfigError, RunConfig, load_config
from .data import (EstimateWithSE, SchemaError, read_nonprobability_sample_csv,
                   read_population_csv, read_probability_sample_csv,
                   validate_sample_against_population)
from .el import CandidateSet, estimate_mel
from .propensity import parse_propensity_formula
from .report import (render_domain_figure, render_error_figure,
                     write_domain_results, write_domain_summary, write_manifest,
                     write_raw_results, write_summary)
from .simulation import run_monte_carlo, run_plasmode
from .variance import build_stacked_system, theta_variance, wald_interval

ENV_OUT_DIR = "ELCAL_OUT_DIR"


class DataError(ValueError):
    pass


def _fail(kind: str, code: int, message: str) -> int:
    message = " ".join(str(message).split())
    print(f'elcal-error code={code} kind={kind} message="{message}"', file=sys.stderr)
    return code


def _resolve_out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.output_dir or os.environ.get(ENV_OUT_DIR) or "elcal_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _threads(args, cfg: RunConfig) -> int:
    return args.threads or cfg.threads or os.cpu_count() or 1


def _cmd_monte_carlo(args, mode: str) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    if cfg.mode != mode:
        raise ConfigError(f"config: mode is {cfg.mode!r} but the {mode!r} "
                          "subcommand was invoked")
    out_dir = _resolve_out_dir(args, cfg)
    workers = _threads(args, cfg)
    if mode == "simulate":
        output = run_monte_carlo(cfg.payload, workers=workers)
    else:
        output = run_plasmode(cfg.payload, workers=workers)
    artifacts = [write_raw_results(out_dir, output)]
    artifacts += write_summary(out_dir, output.metrics)
    if output.domain_results:
        artifacts.append(write_domain_results(out_dir, output))
        if output.domain_metrics is not None:
            artifacts += write_domain_summary(out_dir, output.domain_metrics)
    if cfg.figures:
        artifacts.append(render_error_figure(out_dir, output))
        for domain in sorted({r.domain for r in output.domain_results}):
            artifacts.append(render_domain_figure(out_dir, output, domain))
    artifacts.append(write_manifest(out_dir, cfg.raw, cfg.payload.seed,
                                    __version__, artifacts))
    if not args.quiet:
        print((out_dir / "summary.txt").read_text(encoding="utf-8"), end="")
        print(f"wrote {len(artifacts)} artifact(s) to {out_dir}")
    return 0


def _cmd_estimate(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    if cfg.mode != "estimate":
        raise ConfigError("config: mode is not 'estimate'")
    payload = cfg.payload
    pop_csv = args.population or payload["population_csv"]
    prob_csv = args.prob_sample or payload["probability_csv"]
    nonprob_csv = args.nonprob_sample or payload["nonprobability_csv"]
    for label, value in (("population", pop_csv), ("probability sample", prob_csv),
                         ("non-probability sample", nonprob_csv)):
        if not value:
            raise ConfigError(f"config: no {label} CSV given (config field or flag)")

    pop, _ = read_population_csv(pop_csv,
                                 covariate_columns=payload["covariate_columns"],
                                 outcome_column=None,
                                 stratum_column=payload["stratum_column"])
    a = read_probability_sample_csv(prob_csv, pop)
    b = read_nonprobability_sample_csv(nonprob_csv, pop)
    issues = validate_sample_against_population(a, pop) + \
        validate_sample_against_population(b, pop)
    if issues:
        raise DataError("; ".join(f"{i.code}: {i.message}" for i in issues))

    specs = [parse_propensity_formula(f, pop.n_covariates)
             for f in payload["candidates"]]
    candidates = CandidateSet(pop, a, b, specs, payload["density_family"])
    est = estimate_mel(pop, a, b, [], include_greg=payload["include_greg"],
                       candidates=candidates)
    system = build_stacked_system(est)
    var = theta_variance(system)
    level = payload["confidence_level"]
    lo, hi = wald_interval(est.theta_hat, var, level)
    result = EstimateWithSE(estimate=float(est.theta_hat),
                            std_error=float(np.sqrt(var)),
                            ci_lower=lo, ci_upper=hi, method=est.method)

    out_dir = _resolve_out_dir(args, cfg)
    with (out_dir / "estimate.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "estimate", "std_error", "ci_lower", "ci_upper",
                         "confidence_level"])
        writer.writerow([result.method, repr(result.estimate),
                         repr(result.std_error), repr(result.ci_lower),
                         repr(result.ci_upper), repr(float(level))])
    with (out_dir / "constraints.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "calibrated_value", "target", "residual"])
        values = est.solution.p @ est.system.u
        for j, label in enumerate(est.system.labels):
            writer.writerow([label, repr(float(values[j])),
                             repr(float(est.system.targets[j])),
                             repr(float(values[j] - est.system.targets[j]))])
    with (out_dir / "weights.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "p"])
        for idx, p in zip(b.indices, est.solution.p):
            writer.writerow([int(idx) + 1, repr(float(p))])
    artifacts = ["estimate.csv", "constraints.csv", "weights.csv"]
    artifacts.append(write_manifest(out_dir, cfg.raw, int(cfg.raw.get("seed", 0)),
                                    __version__, artifacts))
    if not args.quiet:
        print(f"{result.method}: estimate={result.estimate:.6g} "
              f"se={result.std_error:.6g} ci=({result.ci_lower:.6g}, "
              f"{result.ci_upper:.6g})")
        print(f"wrote {len(artifacts)} artifact(s) to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elcal",
        description="Estimate population means by combining a probability sample, "
                    "a non-probability sample and full-population covariates.")
    parser.add_argument("--version", action="version", version=f"elcal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run-config path")
        p.add_argument("--out", help=f"output directory (default: config, then ${ENV_OUT_DIR})")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker processes (default: all cores)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    common(sub.add_parser("simulate", help="run a scenario benchmark"))
    common(sub.add_parser("plasmode", help="run a plasmode study on a fixed population CSV"))
    est = sub.add_parser("estimate", help="one-shot estimation on user data")
    common(est)
    est.add_argument("--population", help="population CSV (overrides config)")
    est.add_argument("--prob-sample", help="probability sample CSV (overrides config)")
    est.add_argument("--nonprob-sample", help="non-probability sample CSV (overrides config)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_monte_carlo(args, "simulate")
        if args.command == "plasmode":
            return _cmd_monte_carlo(args, "plasmode")
        return _cmd_estimate(args)
    except ConfigError as exc:
        return _fail("config", 2, exc)
    except (SchemaError, DataError) as exc:
        return _fail("data", 3, exc)
    except NumericalError as exc:
        return _fail("numerical", 4, exc)
    except ValueError as exc:
        return _fail("data", 3, exc)


if __name__ == "__main__":
    sys.exit(main())

"""Run-configuration parsing and validation.

Configs are JSON files with a ``mode`` key (simulate | plasmode | estimate).
Validation happens before any computation; errors name the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import read_population_csv
from .simulation import (DEFAULT_CANDIDATES, PlasmodeConfig, ScenarioSpec,
                         SimulateConfig)

__all__ = ["ConfigError", "RunConfig", "load_config"]

ALL_ESTIMATORS = ("HT", "GREG", "RDW", "CLW", "ALP", "FDW", "ALP_s",
                  "EL_0", "EL_1", "EL_2", "EL_3", "MEL", "MEL_GREG")


class ConfigError(ValueError):
    """A run configuration is malformed; the message names the field."""


@dataclass(frozen=True)
class RunConfig:
    """A validated run: mode, the mode-specific payload, and output options."""

    mode: str
    payload: SimulateConfig | PlasmodeConfig | dict
    output_dir: str | None
    figures: bool
    threads: int | None
    raw: dict


def _need(raw: dict, key: str, kind, where: str = "config"):
    if key not in raw:
        raise ConfigError(f"{where}: missing required field {key!r}")
    value = raw[key]
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"{where}: field {key!r} must be an integer")
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{where}: field {key!r} must be of type {kind.__name__}")
    return value


def _estimator_list(raw: dict) -> tuple[str, ...]:
    names = raw.get("estimators")
    if names is None:
        raise ConfigError("config: missing required field 'estimators'")
    if not isinstance(names, list) or not names:
        raise ConfigError("config: field 'estimators' must be a non-empty list")
    n_cands = len(raw.get("candidates", DEFAULT_CANDIDATES))
    for name in names:
        if name in ("HT", "GREG", "RDW", "CLW", "ALP", "FDW", "ALP_s",
                    "EL_0", "MEL", "MEL_GREG"):
            continue
        if name.startswith("EL_") and name[3:].isdigit() and 1 <= int(name[3:]) <= n_cands:
            continue
        raise ConfigError(f"config: unknown estimator {name!r} "
                          f"(known: {', '.join(ALL_ESTIMATORS)})")
    return tuple(names)


def _selection_coefficients(raw, where: str) -> dict[str, float]:
    if not isinstance(raw, dict) or not raw:
        raise ConfigError(f"{where}: 'selection_logit' must be a non-empty object "
                          "of term -> coefficient, e.g. {\"1\": -2.0, \"x2\": 0.2, \"y\": 0.3}")
    out = {}
    for term, coef in raw.items():
        if term != "1" and term != "y" and not (term.startswith("x") and term[1:].isdigit()):
            raise ConfigError(f"{where}: selection_logit term {term!r} is not "
                              "'1', 'x<j>' or 'y'")
        out[term] = float(coef)
    return out


def _scenario(raw: dict) -> ScenarioSpec:
    value = raw.get("scenario")
    n = _need(raw, "population_size", int)
    if n < 1:
        raise ConfigError("config: 'population_size' must be positive")
    if isinstance(value, str):
        if value not in ("S1", "S2", "S3"):
            raise ConfigError(f"config: unknown scenario {value!r} (S1 | S2 | S3 "
                              "or a custom object)")
        return ScenarioSpec(name=value, population_size=n)
    if isinstance(value, dict):
        coefs = value.get("outcome_coefficients", [1.0, 1.0])
        return ScenarioSpec(
            name="custom",
            population_size=n,
            covariate_dim=int(value.get("covariate_dim", len(coefs))),
            outcome_intercept=float(value.get("outcome_intercept", 0.0)),
            outcome_coefficients=tuple(float(c) for c in coefs),
            error_variance=float(value.get("error_variance", 4.0)),
            selection_coefficients=_selection_coefficients(
                value.get("selection_logit"), "config.scenario"))
    raise ConfigError("config: missing required field 'scenario'")


def _common(raw: dict):
    reps = _need(raw, "replications", int)
    seed = _need(raw, "seed", int)
    if reps < 1:
        raise ConfigError("config: 'replications' must be positive")
    if seed < 0:
        raise ConfigError("config: 'seed' must be a nonnegative integer")
    candidates = raw.get("candidates", list(DEFAULT_CANDIDATES))
    if not isinstance(candidates, list):
        raise ConfigError("config: 'candidates' must be a list of model formulas")
    level = float(raw.get("confidence_level", 0.95))
    if not 0.0 < level < 1.0:
        raise ConfigError("config: 'confidence_level' must lie in (0, 1)")
    variance_for = tuple(raw.get("variance_for", ["MEL", "MEL_GREG"]))
    return reps, seed, tuple(candidates), level, variance_for


def _parse_simulate(raw: dict) -> SimulateConfig:
    reps, seed, candidates, level, variance_for = _common(raw)
    n_a = _need(raw, "n_probability", int)
    scen = _scenario(raw)
    if not 1 <= n_a <= scen.population_size:
        raise ConfigError("config: 'n_probability' must lie in 1..population_size")
    return SimulateConfig(
        scenario=scen, n_probability=n_a, replications=reps, seed=seed,
        estimators=_estimator_list(raw), candidates=candidates,
        density_family=raw.get("density_family", "normal"),
        variance_for=variance_for, confidence_level=level)


def _parse_plasmode(raw: dict, base_dir: Path) -> PlasmodeConfig:
    reps, seed, candidates, level, variance_for = _common(raw)
    n_a = _need(raw, "n_probability", int)
    csv_path = Path(_need(raw, "population_csv", str))
    if not csv_path.is_absolute():
        csv_path = base_dir / csv_path
    cov_cols = raw.get("covariate_columns")
    outcome_col = raw.get("outcome_column")
    stratum_col = raw.get("stratum_column")
    domain_col = raw.get("domain_column")
    pop, extras = read_population_csv(
        csv_path, covariate_columns=cov_cols, outcome_column=outcome_col,
        stratum_column=stratum_col,
        extra_columns=[domain_col] if domain_col else None)
    if pop.strata is None:
        raise ConfigError("config: plasmode population needs a stratum column")
    domains = extras[domain_col].astype(int) if domain_col else None
    return PlasmodeConfig(
        population=pop, domains=domains,
        selection_coefficients=_selection_coefficients(
            raw.get("selection_logit"), "config"),
        n_probability=n_a, replications=reps, seed=seed,
        estimators=_estimator_list(raw), candidates=candidates,
        density_family=raw.get("density_family", "multinomial"),
        variance_for=variance_for, confidence_level=level,
        min_stratum_allocation=int(raw.get("min_stratum_allocation", 40)))


def _parse_estimate(raw: dict) -> dict:
    candidates = raw.get("candidates", list(DEFAULT_CANDIDATES))
    level = float(raw.get("confidence_level", 0.95))
    if not 0.0 < level < 1.0:
        raise ConfigError("config: 'confidence_level' must lie in (0, 1)")
    return {
        "covariate_columns": raw.get("covariate_columns"),
        "outcome_column": raw.get("outcome_column"),
        "stratum_column": raw.get("stratum_column"),
        "candidates": tuple(candidates),
        "density_family": raw.get("density_family", "normal"),
        "include_greg": bool(raw.get("include_greg", False)),
        "confidence_level": level,
        "population_csv": raw.get("population_csv"),
        "probability_csv": raw.get("probability_csv"),
        "nonprobability_csv": raw.get("nonprobability_csv"),
    }


def load_config(path, seed_override: int | None = None) -> RunConfig:
    """Load and validate a JSON run-config file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    mode = raw.get("mode")
    if mode not in ("simulate", "plasmode", "estimate"):
        raise ConfigError("config: field 'mode' must be simulate, plasmode or estimate")
    if seed_override is not None:
        raw = {**raw, "seed": int(seed_override)}
    if mode == "simulate":
        payload = _parse_simulate(raw)
    elif mode == "plasmode":
        payload = _parse_plasmode(raw, path.parent)
    else:
        payload = _parse_estimate(raw)
    threads = raw.get("threads")
    if threads is not None and (not isinstance(threads, int) or threads < 1):
        raise ConfigError("config: 'threads' must be a positive integer")
    return RunConfig(mode=mode, payload=payload,
                     output_dir=raw.get("output_dir"),
                     figures=bool(raw.get("figures", True)),
                     threads=threads, raw=raw)

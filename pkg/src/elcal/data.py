"""Core data containers: finite population, probability and non-probability samples.

Units are addressed by stable population index (0-based internally; CSV files
carry 1-based ``unit_id`` columns).  All containers are frozen dataclasses
wrapping numpy arrays and are treated as immutable after construction, so they
can be shared freely across parallel replications.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SamplingDesign",
    "FinitePopulation",
    "ProbabilitySample",
    "NonProbabilitySample",
    "EstimateWithSE",
    "ValidationIssue",
    "population_mean",
    "validate_sample_against_population",
    "read_population_csv",
    "write_population_csv",
    "read_probability_sample_csv",
    "read_nonprobability_sample_csv",
]


@dataclass(frozen=True)
class SamplingDesign:
    """Design metadata for a probability sample.

    ``kind`` is ``"srswor"`` or ``"stratified_srswor"``.  For the stratified
    case ``strata`` maps each stratum label to its population size ``N_h`` and
    sample allocation ``n_h``; for plain SRSWOR it holds a single pseudo
    stratum covering the whole population.
    """

    kind: str
    population_size: int
    sample_size: int
    strata: dict[int, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("srswor", "stratified_srswor"):
            raise ValueError(f"unknown design kind {self.kind!r}")

    @staticmethod
    def srswor(population_size: int, sample_size: int) -> "SamplingDesign":
        return SamplingDesign(
            kind="srswor",
            population_size=population_size,
            sample_size=sample_size,
            strata={0: (population_size, sample_size)},
        )


@dataclass(frozen=True)
class FinitePopulation:
    """A finite population of N units with p covariates each.

    ``outcomes`` and ``selection_probs_true`` are only available in simulation
    or plasmode settings where the full truth is known; estimators never read
    them except through a drawn sample.
    """

    covariates: np.ndarray
    outcomes: np.ndarray | None = None
    selection_probs_true: np.ndarray | None = None
    strata: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("covariates must be an N x p matrix with N, p >= 1")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariate rows must be finite")
        object.__setattr__(self, "covariates", x)
        if self.outcomes is not None:
            y = np.asarray(self.outcomes, dtype=float)
            if y.shape != (x.shape[0],):
                raise ValueError("outcomes must be a length-N vector")
            object.__setattr__(self, "outcomes", y)
        if self.selection_probs_true is not None:
            pi = np.asarray(self.selection_probs_true, dtype=float)
            if pi.shape != (x.shape[0],):
                raise ValueError("selection_probs_true must be a length-N vector")
            if np.any(pi <= 0.0) or np.any(pi >= 1.0):
                raise ValueError("selection_probs_true must lie strictly in (0, 1)")
            object.__setattr__(self, "selection_probs_true", pi)
        if self.strata is not None:
            s = np.asarray(self.strata, dtype=int)
            if s.shape != (x.shape[0],):
                raise ValueError("strata must be a length-N integer vector")
            object.__setattr__(self, "strata", s)

    @property
    def size(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class ProbabilitySample:
    """A probability sample: indices into the population with known inclusion probabilities."""

    indices: np.ndarray
    inclusion_probs: np.ndarray
    outcomes: np.ndarray
    design: SamplingDesign

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        pi = np.asarray(self.inclusion_probs, dtype=float)
        y = np.asarray(self.outcomes, dtype=float)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("a probability sample needs at least one unit")
        if pi.shape != idx.shape or y.shape != idx.shape:
            raise ValueError("indices, inclusion_probs and outcomes must align")
        if np.unique(idx).size != idx.size:
            raise ValueError("sample indices must be distinct")
        if np.any(pi <= 0.0) or np.any(pi > 1.0):
            raise ValueError("inclusion probabilities must lie in (0, 1]")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "inclusion_probs", pi)
        object.__setattr__(self, "outcomes", y)

    @property
    def size(self) -> int:
        return self.indices.size

    def design_weights(self) -> np.ndarray:
        return 1.0 / self.inclusion_probs


@dataclass(frozen=True)
class NonProbabilitySample:
    """A self-selected sample: indices and outcomes, selection probabilities unknown."""

    indices: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        y = np.asarray(self.outcomes, dtype=float)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("a non-probability sample needs at least one unit")
        if y.shape != idx.shape:
            raise ValueError("indices and outcomes must align")
        if np.unique(idx).size != idx.size:
            raise ValueError("sample indices must be distinct")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "outcomes", y)

    @property
    def size(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class EstimateWithSE:
    """A point estimate with its standard error and two-sided Wald interval."""

    estimate: float
    std_error: float
    ci_lower: float
    ci_upper: float
    method: str

    def __post_init__(self):
        if self.std_error < 0.0:
            raise ValueError("std_error must be nonnegative")


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str


def population_mean(pop: FinitePopulation) -> float:
    """Mean outcome over the whole finite population (requires observed outcomes)."""
    if pop.outcomes is None:
        raise ValueError("population outcomes are not available")
    return float(np.mean(pop.outcomes))


def validate_sample_against_population(sample, pop: FinitePopulation) -> list[ValidationIssue]:
    """Check a sample's indices and probabilities against its population.

    Returns a list of diagnostics; an empty list means the sample is
    well-formed.  Never raises on bad data.
    """
    issues: list[ValidationIssue] = []
    idx = np.asarray(sample.indices)
    n = pop.size
    out_of_range = idx[(idx < 0) | (idx >= n)]
    if out_of_range.size:
        issues.append(ValidationIssue(
            "index-out-of-range",
            f"indices outside 0..{n - 1}: {out_of_range[:5].tolist()}",
        ))
    if np.unique(idx).size != idx.size:
        issues.append(ValidationIssue("duplicate-index", "sample indices are not distinct"))
    probs = getattr(sample, "inclusion_probs", None)
    if probs is not None:
        probs = np.asarray(probs, dtype=float)
        bad = probs[(probs <= 0.0) | (probs > 1.0)]
        if bad.size:
            issues.append(ValidationIssue(
                "invalid-probability",
                f"inclusion probabilities outside (0, 1]: {bad[:5].tolist()}",
            ))
    return issues


# ---------------------------------------------------------------------------
# CSV interchange
#
# Population CSV: header row required, one row per unit, columns = covariates,
# optional outcome, optional stratum, UTF-8, missing fields empty.  Floats are
# written with repr() so a write/read round trip is bit exact.
# ---------------------------------------------------------------------------

class SchemaError(ValueError):
    """A CSV file does not match the expected column layout."""


def _require_columns(header: list[str], needed: list[str], path) -> None:
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")


def read_population_csv(
    path,
    covariate_columns: list[str] | None = None,
    outcome_column: str | None = None,
    stratum_column: str | None = None,
    extra_columns: list[str] | None = None,
) -> tuple[FinitePopulation, dict[str, np.ndarray]]:
    """Read a population CSV.

    When ``covariate_columns`` is None, every column named ``x1``, ``x2``, ...
    is taken as a covariate, a column named ``y`` as the outcome, and a column
    named ``stratum`` as the stratum label.  ``extra_columns`` are returned as
    raw float arrays (e.g. domain labels for plasmode studies).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = list(reader)
    if covariate_columns is None:
        covariate_columns = sorted(
            (c for c in header if c.startswith("x") and c[1:].isdigit()),
            key=lambda c: int(c[1:]),
        )
        if not covariate_columns:
            raise SchemaError(f"{path}: no covariate columns found (expected x1, x2, ...)")
        if outcome_column is None and "y" in header:
            outcome_column = "y"
        if stratum_column is None and "stratum" in header:
            stratum_column = "stratum"
    _require_columns(header, covariate_columns, path)
    if outcome_column is not None:
        _require_columns(header, [outcome_column], path)
    if stratum_column is not None:
        _require_columns(header, [stratum_column], path)
    for col in extra_columns or []:
        _require_columns(header, [col], path)

    col_idx = {c: header.index(c) for c in header}

    def column(name, dtype=float):
        pos = col_idx[name]
        vals = []
        for r, row in enumerate(rows):
            cell = row[pos] if pos < len(row) else ""
            if cell == "":
                raise SchemaError(f"{path}: row {r + 2}: empty value in column {name!r}")
            vals.append(cell)
        return np.asarray(vals, dtype=dtype)

    x = np.column_stack([column(c) for c in covariate_columns])
    y = column(outcome_column) if outcome_column is not None else None
    strata = column(stratum_column, dtype=int) if stratum_column is not None else None
    extras = {c: column(c) for c in (extra_columns or [])}
    return FinitePopulation(covariates=x, outcomes=y, strata=strata), extras


def write_population_csv(path, pop: FinitePopulation) -> None:
    path = Path(path)
    header = [f"x{j + 1}" for j in range(pop.n_covariates)]
    if pop.outcomes is not None:
        header.append("y")
    if pop.strata is not None:
        header.append("stratum")
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(pop.size):
            row = [repr(float(v)) for v in pop.covariates[i]]
            if pop.outcomes is not None:
                row.append(repr(float(pop.outcomes[i])))
            if pop.strata is not None:
                row.append(str(int(pop.strata[i])))
            writer.writerow(row)


def read_probability_sample_csv(path, pop: FinitePopulation) -> ProbabilitySample:
    """Read a probability sample CSV with columns unit_id, inclusion_prob, y.

    ``unit_id`` is 1-based.  The design is reconstructed from the population
    strata when present (per-stratum counts), otherwise tagged SRSWOR; a
    mismatch between stated probabilities and the reconstructed design is a
    data error surfaced by validation, not here.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, header row required")
        _require_columns(list(reader.fieldnames), ["unit_id", "inclusion_prob", "y"], path)
        ids, probs, ys = [], [], []
        for row in reader:
            ids.append(int(row["unit_id"]))
            probs.append(float(row["inclusion_prob"]))
            ys.append(float(row["y"]))
    idx = np.asarray(ids, dtype=int) - 1
    if np.any(idx < 0) or np.any(idx >= pop.size):
        raise SchemaError(f"{path}: unit_id values must lie in 1..{pop.size}")
    if pop.strata is not None:
        labels = pop.strata[idx]
        strata = {}
        for h in np.unique(pop.strata):
            strata[int(h)] = (int(np.sum(pop.strata == h)), int(np.sum(labels == h)))
        design = SamplingDesign("stratified_srswor", pop.size, idx.size, strata)
    else:
        design = SamplingDesign.srswor(pop.size, idx.size)
    return ProbabilitySample(indices=idx, inclusion_probs=np.asarray(probs),
                             outcomes=np.asarray(ys), design=design)


def read_nonprobability_sample_csv(path, pop: FinitePopulation) -> NonProbabilitySample:
    """Read a non-probability sample CSV with columns unit_id, y (unit_id 1-based)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, header row required")
        _require_columns(list(reader.fieldnames), ["unit_id", "y"], path)
        ids, ys = [], []
        for row in reader:
            ids.append(int(row["unit_id"]))
            ys.append(float(row["y"]))
    idx = np.asarray(ids, dtype=int) - 1
    if np.any(idx < 0) or np.any(idx >= pop.size):
        raise SchemaError(f"{path}: unit_id values must lie in 1..{pop.size}")
    return NonProbabilitySample(indices=idx, outcomes=np.asarray(ys))

"""Scenario generation, sampling mechanisms, and the Monte Carlo driver.

Replications follow the super-population view: each draw generates a fresh
finite population, samples it, runs every requested estimator, and records the
error against that population's own mean.  Replications get independent RNG
substreams keyed by replication index, so results are identical no matter how
work is distributed across processes.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from ._newton import NumericalError
from . import baselines
from .data import (FinitePopulation, NonProbabilitySample, ProbabilitySample,
                   SamplingDesign, population_mean)
from .density import DEFAULT_GH_NODES
from .el import (CandidateSet, ELEstimate, ELSolution, estimate_el0,
                 estimate_mel, solve_profiled, single_candidate_system)
from .propensity import PropensityModelSpec, parse_propensity_formula
from .variance import build_stacked_system, theta_variance, wald_interval

__all__ = [
    "ScenarioSpec",
    "scenario",
    "generate_population",
    "draw_srswor",
    "draw_stratified_srswor",
    "compute_allocation",
    "draw_nonprob",
    "estimate_domain_mean",
    "SimulateConfig",
    "PlasmodeConfig",
    "ReplicationResult",
    "DomainResult",
    "FitDiagnostics",
    "MethodMetrics",
    "MetricsTable",
    "MonteCarloOutput",
    "run_monte_carlo",
    "run_plasmode",
    "DEFAULT_CANDIDATES",
]

DEFAULT_CANDIDATES = (
    "logit ~ 1 + x1 + x2",
    "logit ~ 1 + x1 + y",
    "logit ~ 1 + x2 + y",
)



# ---------------------------------------------------------------------------
# Scenarios and population generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    """A data-generating configuration for the simulation benchmark.

    The named presets S1-S3 pin the benchmark formulas: two standard-normal
    covariates, outcome x1 + x2 + noise with variance 4, and selection logits
    that are covariate-only (S1), covariate-plus-outcome (S2), or piecewise in
    the outcome (S3).  Custom scenarios supply linear coefficients keyed by
    term ("1", "x<j>", "y").
    """

    name: str
    population_size: int
    covariate_dim: int = 2
    outcome_intercept: float = 0.0
    outcome_coefficients: tuple[float, ...] = (1.0, 1.0)
    error_variance: float = 4.0
    selection_coefficients: dict[str, float] | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.name not in ("S1", "S2", "S3", "custom"):
            raise ValueError(f"unknown scenario {self.name!r}")
        if self.name == "custom" and self.selection_coefficients is None:
            raise ValueError("custom scenarios need selection_coefficients")
        if len(self.outcome_coefficients) != self.covariate_dim:
            raise ValueError("outcome_coefficients must match covariate_dim")


def scenario(name: str, population_size: int, seed: int | None = None) -> ScenarioSpec:
    return ScenarioSpec(name=name, population_size=population_size, seed=seed)


def selection_logit(spec: ScenarioSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if spec.name == "S1":
        return -0.5 + 0.5 * x[:, 0] + 0.5 * x[:, 1]
    if spec.name == "S2":
        return -0.5 + 0.5 * x[:, 0] + 0.5 * x[:, 1] + 0.2 * y
    if spec.name == "S3":
        neg = (y < 0).astype(float)
        return (-0.5 + 0.5 * x[:, 0]
                + (0.5 * x[:, 1] + 0.2 * y) * neg
                + 0.3 * y * (1.0 - neg))
    return linear_logit(spec.selection_coefficients, x, y)


def linear_logit(coefficients: dict[str, float], x: np.ndarray,
                 y: np.ndarray | None) -> np.ndarray:
    out = np.zeros(x.shape[0])
    for term, coef in coefficients.items():
        if term == "1":
            out += coef
        elif term == "y":
            if y is None:
                raise ValueError("selection logit uses y but outcomes are missing")
            out += coef * y
        else:
            out += coef * x[:, int(term[1:]) - 1]
    return out


def generate_population(spec: ScenarioSpec, rng: np.random.Generator | None = None
                        ) -> FinitePopulation:
    """Draw a finite population with outcomes and true selection probabilities."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n = spec.population_size
    x = rng.standard_normal((n, spec.covariate_dim))
    eps = rng.normal(0.0, np.sqrt(spec.error_variance), size=n)
    y = spec.outcome_intercept + x @ np.asarray(spec.outcome_coefficients) + eps
    probs = expit(selection_logit(spec, x, y))
    return FinitePopulation(covariates=x, outcomes=y, selection_probs_true=probs)


# ---------------------------------------------------------------------------
# Sampling mechanisms
# ---------------------------------------------------------------------------

def draw_srswor(pop: FinitePopulation, n_a: int,
                rng: np.random.Generator) -> ProbabilitySample:
    """Simple random sample without replacement, inclusion probability n_a / N."""
    if not 1 <= n_a <= pop.size:
        raise ValueError(f"n_a must lie in 1..{pop.size}")
    if pop.outcomes is None:
        raise ValueError("population outcomes required to draw a sample")
    idx = np.sort(rng.choice(pop.size, size=n_a, replace=False))
    return ProbabilitySample(
        indices=idx,
        inclusion_probs=np.full(n_a, n_a / pop.size),
        outcomes=pop.outcomes[idx],
        design=SamplingDesign.srswor(pop.size, n_a))


def compute_allocation(sizes: dict[int, int], n_total: int,
                       floor: int = 40) -> dict[int, int]:
    """Allocate a stratified sample proportionally with a per-stratum minimum.

    Strata whose proportional share falls below the floor are pinned at
    min(floor, N_h), strata whose share exceeds their size are pinned at N_h,
    and the remaining budget is re-spread proportionally over the others with
    largest-remainder rounding, iterating until stable.
    """
    if n_total < 1:
        raise ValueError("total sample size must be positive")
    labels = sorted(sizes)
    pinned: dict[int, int] = {}
    allocation: dict[int, int] | None = None
    while allocation is None:
        free = [h for h in labels if h not in pinned]
        budget = n_total - sum(pinned.values())
        if budget < 0 or (not free and budget != 0):
            raise ValueError("stratified allocation infeasible for the requested size")
        if not free:
            allocation = dict(pinned)
            break
        total_free = sum(sizes[h] for h in free)
        shares = {h: budget * sizes[h] / total_free for h in free}
        to_pin = {}
        for h in free:
            if shares[h] < floor:
                to_pin[h] = min(floor, sizes[h])
            elif shares[h] > sizes[h]:
                to_pin[h] = sizes[h]
        if to_pin:
            pinned.update(to_pin)
            continue
        base = {h: int(np.floor(shares[h])) for h in free}
        leftover = budget - sum(base.values())
        order = sorted(free, key=lambda h: (-(shares[h] - base[h]), h))
        for h in order[:leftover]:
            base[h] += 1
        allocation = {**pinned, **base}
    for h in labels:
        n_h = allocation.get(h, 0)
        if n_h < 1:
            raise ValueError(f"stratum {h} received an empty allocation")
        if n_h > sizes[h]:
            raise ValueError(f"stratum {h} smaller than its allocation "
                             f"({sizes[h]} < {n_h})")
    return allocation


def draw_stratified_srswor(pop: FinitePopulation, allocation: int | dict[int, int],
                           rng: np.random.Generator,
                           floor: int = 40) -> ProbabilitySample:
    """Per-stratum SRSWOR; an integer allocation applies the proportional rule."""
    if pop.strata is None:
        raise ValueError("population has no strata")
    if pop.outcomes is None:
        raise ValueError("population outcomes required to draw a sample")
    labels, counts = np.unique(pop.strata, return_counts=True)
    sizes = {int(h): int(c) for h, c in zip(labels, counts)}
    if isinstance(allocation, dict):
        alloc = {int(h): int(n) for h, n in allocation.items()}
        unknown = set(alloc) - set(sizes)
        if unknown:
            raise ValueError(f"allocation names unknown strata {sorted(unknown)}")
    else:
        alloc = compute_allocation(sizes, int(allocation), floor=floor)
    idx_parts, prob_parts = [], []
    strata_meta = {}
    for h in sorted(alloc):
        n_h, count = alloc[h], sizes[h]
        if n_h > count:
            raise ValueError(f"stratum {h} smaller than its allocation")
        members = np.flatnonzero(pop.strata == h)
        chosen = np.sort(rng.choice(members, size=n_h, replace=False))
        idx_parts.append(chosen)
        prob_parts.append(np.full(n_h, n_h / count))
        strata_meta[h] = (count, n_h)
    idx = np.concatenate(idx_parts)
    probs = np.concatenate(prob_parts)
    order = np.argsort(idx)
    design = SamplingDesign("stratified_srswor", pop.size, idx.size, strata_meta)
    return ProbabilitySample(indices=idx[order], inclusion_probs=probs[order],
                             outcomes=pop.outcomes[idx[order]], design=design)


def draw_nonprob(pop: FinitePopulation,
                 rng: np.random.Generator) -> NonProbabilitySample:
    """Independent Bernoulli selection with the population's true probabilities."""
    if pop.selection_probs_true is None:
        raise ValueError("population has no true selection probabilities")
    if pop.outcomes is None:
        raise ValueError("population outcomes required to draw a sample")
    mask = rng.random(pop.size) < pop.selection_probs_true
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise NumericalError("non-probability sample came out empty")
    return NonProbabilitySample(indices=idx, outcomes=pop.outcomes[idx])


def estimate_domain_mean(solution: ELSolution, b: NonProbabilitySample,
                         domain_indicator: np.ndarray) -> float:
    """Calibrated domain mean: re-normalized weighted mean over the domain units."""
    return weighted_domain_mean(solution.p, b, domain_indicator)


def weighted_domain_mean(weights: np.ndarray, b: NonProbabilitySample,
                         domain_indicator: np.ndarray) -> float:
    mask = np.asarray(domain_indicator, dtype=bool)
    if mask.size != b.size:
        mask = mask[b.indices]
    if not mask.any():
        raise NumericalError("domain is empty in the selected sample")
    w = weights[mask]
    return float(np.sum(w * b.outcomes[mask]) / np.sum(w))


# ---------------------------------------------------------------------------
# Run configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulateConfig:
    scenario: ScenarioSpec
    n_probability: int
    replications: int
    seed: int
    estimators: tuple[str, ...]
    candidates: tuple[str, ...] = DEFAULT_CANDIDATES
    density_family: str = "normal"
    variance_for: tuple[str, ...] = ("MEL", "MEL_GREG")
    confidence_level: float = 0.95
    gh_nodes: int = DEFAULT_GH_NODES


@dataclass(frozen=True)
class PlasmodeConfig:
    population: FinitePopulation
    domains: np.ndarray | None
    selection_coefficients: dict[str, float]
    n_probability: int
    replications: int
    seed: int
    estimators: tuple[str, ...]
    candidates: tuple[str, ...] = DEFAULT_CANDIDATES
    density_family: str = "multinomial"
    variance_for: tuple[str, ...] = ()
    confidence_level: float = 0.95
    min_stratum_allocation: int = 40
    gh_nodes: int = DEFAULT_GH_NODES


# ---------------------------------------------------------------------------
# Replication records and aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicationResult:
    rep: int
    method: str
    estimate: float | None
    theta_true: float
    var_hat: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    ci_hit: bool | None = None
    residual: float | None = None
    error: str = ""
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error == ""


@dataclass(frozen=True)
class DomainResult:
    rep: int
    method: str
    domain: int
    estimate: float | None
    true_value: float
    error: str = ""


@dataclass(frozen=True)
class FitDiagnostics:
    """First-order-condition residuals of the shared fits in one replication."""

    rep: int
    propensity_residual: float | None = None
    density_score: float | None = None


@dataclass(frozen=True)
class MethodMetrics:
    method: str
    n_ok: int
    n_failed: int
    bias: float
    variance: float
    mse: float
    mean_var_hat: float | None = None
    rel_bias_var: float | None = None
    coverage: float | None = None
    domain: int | None = None


@dataclass(frozen=True)
class MetricsTable:
    rows: tuple[MethodMetrics, ...]
    meta: dict = field(default_factory=dict)

    def row(self, method: str, domain: int | None = None) -> MethodMetrics:
        for r in self.rows:
            if r.method == method and r.domain == domain:
                return r
        raise KeyError(f"no metrics row for {method!r} (domain={domain})")


@dataclass(frozen=True)
class MonteCarloOutput:
    results: tuple[ReplicationResult, ...]
    domain_results: tuple[DomainResult, ...]
    metrics: MetricsTable
    domain_metrics: MetricsTable | None
    fit_diagnostics: tuple[FitDiagnostics, ...] = ()


def summarize(results, meta=None) -> MetricsTable:
    """Aggregate replication results into bias / variance / MSE metrics.

    Failed replications are excluded from the aggregates and surfaced through
    the failure count; the Monte Carlo variance of the errors is the reference
    for the variance estimator's relative bias.
    """
    by_method: dict[str, list[ReplicationResult]] = {}
    order: list[str] = []
    for r in results:
        if r.method not in by_method:
            by_method[r.method] = []
            order.append(r.method)
        by_method[r.method].append(r)
    rows = []
    for method in order:
        recs = by_method[method]
        ok = [r for r in recs if r.ok]
        errors = np.array([r.estimate - r.theta_true for r in ok])
        bias = float(np.mean(errors)) if ok else float("nan")
        var = float(np.var(errors, ddof=1)) if len(ok) > 1 else float("nan")
        mse = bias**2 + var
        var_hats = [r.var_hat for r in ok if r.var_hat is not None]
        hits = [r.ci_hit for r in ok if r.ci_hit is not None]
        mean_v = float(np.mean(var_hats)) if var_hats else None
        rel = (mean_v - var) / var if (mean_v is not None and var > 0) else None
        cov = float(np.mean(hits)) if hits else None
        rows.append(MethodMetrics(method=method, n_ok=len(ok),
                                  n_failed=len(recs) - len(ok), bias=bias,
                                  variance=var, mse=mse, mean_var_hat=mean_v,
                                  rel_bias_var=rel, coverage=cov))
    return MetricsTable(rows=tuple(rows), meta=dict(meta or {}))


def summarize_domains(domain_results, meta=None) -> MetricsTable:
    keyed: dict[tuple[str, int], list[DomainResult]] = {}
    order: list[tuple[str, int]] = []
    for r in domain_results:
        key = (r.method, r.domain)
        if key not in keyed:
            keyed[key] = []
            order.append(key)
        keyed[key].append(r)
    rows = []
    for method, domain in order:
        recs = keyed[(method, domain)]
        ok = [r for r in recs if r.error == ""]
        errors = np.array([r.estimate - r.true_value for r in ok])
        bias = float(np.mean(errors)) if ok else float("nan")
        var = float(np.var(errors, ddof=1)) if len(ok) > 1 else float("nan")
        rows.append(MethodMetrics(method=method, n_ok=len(ok),
                                  n_failed=len(recs) - len(ok), bias=bias,
                                  variance=var, mse=bias**2 + var, domain=domain))
    return MetricsTable(rows=tuple(rows), meta=dict(meta or {}))


# ---------------------------------------------------------------------------
# Single-replication estimation pipeline
# ---------------------------------------------------------------------------

def _candidate_specs(cfg, n_covariates) -> list[PropensityModelSpec]:
    return [parse_propensity_formula(f, n_covariates) for f in cfg.candidates]


def _needed_candidates(estimators, n_candidates) -> list[int]:
    needed: set[int] = set()
    for name in estimators:
        if name in ("MEL", "MEL_GREG"):
            needed.update(range(n_candidates))
        elif name.startswith("EL_") and name != "EL_0":
            k = int(name.split("_")[1])
            if not 1 <= k <= n_candidates:
                raise ValueError(f"{name} refers to candidate {k} but only "
                                 f"{n_candidates} candidate model(s) are configured")
            needed.add(k - 1)
    return sorted(needed)


def _wald_fields(est: ELEstimate, theta_true: float, level: float):
    system = build_stacked_system(est)
    var = theta_variance(system)
    lo, hi = wald_interval(est.theta_hat, var, level)
    return var, lo, hi, bool(lo <= theta_true <= hi)


def run_replication(rep: int, pop: FinitePopulation, a: ProbabilitySample,
                    b: NonProbabilitySample, cfg,
                    domains: np.ndarray | None = None,
                    domain_true: dict[int, float] | None = None,
                    ) -> tuple[list[ReplicationResult], list[DomainResult], FitDiagnostics]:
    """Run every configured estimator on one draw, recording failures per method."""
    theta_true = population_mean(pop)
    specs = _candidate_specs(cfg, pop.n_covariates)
    needed = _needed_candidates(cfg.estimators, len(specs))
    pos_of = {k: i for i, k in enumerate(needed)}

    candidate_set: CandidateSet | None = None
    candidate_error: str = ""
    diag = FitDiagnostics(rep=rep)
    if needed:
        try:
            candidate_set = CandidateSet(pop, a, b, [specs[k] for k in needed],
                                         cfg.density_family, n_nodes=cfg.gh_nodes)
            diag = FitDiagnostics(
                rep=rep,
                propensity_residual=max(f.residual_norm for f in candidate_set.fits),
                density_score=(candidate_set.density.score_norm
                               if candidate_set.density is not None else None))
        except (NumericalError, ValueError) as exc:
            candidate_error = str(exc)

    results: list[ReplicationResult] = []
    domain_rows: list[DomainResult] = []

    def record_domains(method: str, weights: np.ndarray | None,
                       sample, error: str = ""):
        if domains is None or domain_true is None or method == "GREG":
            return
        for d, truth in domain_true.items():
            if error or weights is None:
                domain_rows.append(DomainResult(rep, method, d, None, truth, error))
                continue
            try:
                est_d = weighted_domain_mean(weights, sample, domains == d)
                domain_rows.append(DomainResult(rep, method, d, est_d, truth))
            except NumericalError as exc:
                domain_rows.append(DomainResult(rep, method, d, None, truth, str(exc)))

    for method in cfg.estimators:
        start = time.perf_counter()
        estimate = var_hat = lo = hi = None
        hit = None
        residual = None
        error = ""
        try:
            if method == "HT":
                estimate = baselines.estimate_ht(a)
                if domains is not None and domain_true is not None:
                    fake = NonProbabilitySample(indices=a.indices, outcomes=a.outcomes)
                    record_domains("HT", a.design_weights(), fake)
            elif method == "GREG":
                estimate = baselines.estimate_greg(pop, a)
            elif method in ("RDW", "CLW", "ALP", "FDW", "ALP_s"):
                fn = {"RDW": baselines.estimate_rdw, "CLW": baselines.estimate_clw,
                      "ALP": baselines.estimate_alp, "FDW": baselines.estimate_fdw,
                      "ALP_s": baselines.estimate_alp_s}[method]
                we = fn(pop, a, b)
                estimate, residual = we.estimate, we.score_norm
                record_domains(method, we.weights, b)
            elif method == "EL_0":
                est = estimate_el0(pop, b)
                estimate, residual = est.theta_hat, est.solution.constraint_residual
                record_domains(method, est.solution.p, b)
            elif method in ("MEL", "MEL_GREG") or method.startswith("EL_"):
                if candidate_error:
                    raise NumericalError(candidate_error)
                if method in ("MEL", "MEL_GREG"):
                    est = estimate_mel(pop, a, b, [], include_greg=(method == "MEL_GREG"),
                                       candidates=candidate_set)
                    if method in cfg.variance_for:
                        var_hat, lo, hi, hit = _wald_fields(est, theta_true,
                                                            cfg.confidence_level)
                    solution = est.solution
                else:
                    k = int(method.split("_")[1])
                    system = single_candidate_system(candidate_set, pos_of[k - 1], k)
                    solution = solve_profiled(system, b)
                estimate = solution.theta_hat
                residual = solution.constraint_residual
                record_domains(method, solution.p, b)
            else:
                raise ValueError(f"unknown estimator {method!r}")
        except (NumericalError, ValueError) as exc:
            error = str(exc)
            record_domains(method, None, b, error=error)
        results.append(ReplicationResult(
            rep=rep, method=method, estimate=estimate, theta_true=theta_true,
            var_hat=var_hat, ci_lower=lo, ci_upper=hi, ci_hit=hit,
            residual=residual, error=error,
            elapsed=time.perf_counter() - start))
    return results, domain_rows, diag


# ---------------------------------------------------------------------------
# Monte Carlo drivers
# ---------------------------------------------------------------------------

def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def _simulate_chunk(args):
    cfg, reps = args
    out: list[ReplicationResult] = []
    diags: list[FitDiagnostics] = []
    for rep in reps:
        rng = _rep_rng(cfg.seed, rep)
        pop = generate_population(cfg.scenario, rng)
        a = draw_srswor(pop, cfg.n_probability, rng)
        b = draw_nonprob(pop, rng)
        results, _, diag = run_replication(rep, pop, a, b, cfg)
        out.extend(results)
        diags.append(diag)
    return out, diags


def _plasmode_chunk(args):
    cfg, reps = args
    pop = cfg.population
    domain_true = None
    if cfg.domains is not None:
        domain_true = {int(d): float(np.mean(pop.outcomes[cfg.domains == d]))
                       for d in np.unique(cfg.domains)}
    out: list[ReplicationResult] = []
    dom_out: list[DomainResult] = []
    diags: list[FitDiagnostics] = []
    for rep in reps:
        rng = _rep_rng(cfg.seed, rep)
        a = draw_stratified_srswor(pop, cfg.n_probability, rng,
                                   floor=cfg.min_stratum_allocation)
        b = draw_nonprob(pop, rng)
        results, dom, diag = run_replication(rep, pop, a, b, cfg,
                                             domains=cfg.domains,
                                             domain_true=domain_true)
        out.extend(results)
        dom_out.extend(dom)
        diags.append(diag)
    return out, dom_out, diags


def _chunks(n_reps: int, workers: int) -> list[list[int]]:
    n_chunks = max(1, min(n_reps, workers * 4))
    return [list(range(n_reps))[i::n_chunks] for i in range(n_chunks)]


def run_monte_carlo(cfg: SimulateConfig, workers: int = 1) -> MonteCarloOutput:
    """Run the simulation benchmark: fresh population, samples and estimates per
    replication, aggregated into the summary metrics."""
    meta = {"mode": "simulate", "scenario": cfg.scenario.name,
            "population_size": cfg.scenario.population_size,
            "n_probability": cfg.n_probability,
            "replications": cfg.replications, "seed": cfg.seed}
    tasks = [(cfg, chunk) for chunk in _chunks(cfg.replications, workers)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, tasks))
    else:
        parts = [_simulate_chunk(t) for t in tasks]
    results = [r for part in parts for r in part[0]]
    diags = [d for part in parts for d in part[1]]
    results.sort(key=lambda r: (r.rep, cfg.estimators.index(r.method)))
    diags.sort(key=lambda d: d.rep)
    metrics = summarize(results, meta)
    return MonteCarloOutput(results=tuple(results), domain_results=(),
                            metrics=metrics, domain_metrics=None,
                            fit_diagnostics=tuple(diags))


def run_plasmode(cfg: PlasmodeConfig, workers: int = 1) -> MonteCarloOutput:
    """Plasmode study: the supplied population is fixed; only sampling and the
    configured selection mechanism are simulated."""
    pop = cfg.population
    if pop.outcomes is None:
        raise ValueError("plasmode population needs an outcome column")
    probs = expit(linear_logit(cfg.selection_coefficients, pop.covariates,
                               pop.outcomes))
    pop = replace(pop, selection_probs_true=np.clip(probs, 1e-12, 1 - 1e-12))
    cfg = replace(cfg, population=pop)
    meta = {"mode": "plasmode", "population_size": pop.size,
            "n_probability": cfg.n_probability,
            "replications": cfg.replications, "seed": cfg.seed,
            "mean_selection_prob": float(np.mean(probs))}
    tasks = [(cfg, chunk) for chunk in _chunks(cfg.replications, workers)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_plasmode_chunk, tasks))
    else:
        parts = [_plasmode_chunk(t) for t in tasks]
    results = [r for part in parts for r in part[0]]
    dom_results = [r for part in parts for r in part[1]]
    diags = [d for part in parts for d in part[2]]
    results.sort(key=lambda r: (r.rep, cfg.estimators.index(r.method)))
    dom_results.sort(key=lambda r: (r.rep, cfg.estimators.index(r.method), r.domain))
    diags.sort(key=lambda d: d.rep)
    metrics = summarize(results, meta)
    domain_metrics = summarize_domains(dom_results, meta) if dom_results else None
    return MonteCarloOutput(results=tuple(results), domain_results=tuple(dom_results),
                            metrics=metrics, domain_metrics=domain_metrics,
                            fit_diagnostics=tuple(diags))

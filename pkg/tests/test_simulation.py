import numpy as np
import pytest
from scipy.special import expit

from elcal._newton import NumericalError
from elcal.data import FinitePopulation
from elcal.el import el_dual_solve, CalibrationSystem
from elcal.simulation import (DEFAULT_CANDIDATES, PlasmodeConfig, SimulateConfig,
                              compute_allocation, draw_nonprob, draw_srswor,
                              draw_stratified_srswor, estimate_domain_mean,
                              generate_population, run_monte_carlo, run_plasmode,
                              scenario, selection_logit, summarize)
from conftest import make_population


def test_scenario_logits_at_origin():
    spec = scenario("S1", 10)
    x = np.zeros((1, 2))
    y = np.zeros(1)
    assert selection_logit(spec, x, y)[0] == -0.5
    assert expit(selection_logit(spec, x, y))[0] == pytest.approx(0.3775, abs=5e-5)
    s2 = scenario("S2", 10)
    assert selection_logit(s2, x, np.array([1.0]))[0] == pytest.approx(-0.3)
    s3 = scenario("S3", 10)
    assert selection_logit(s3, x, np.array([-1.0]))[0] == pytest.approx(-0.7)
    assert selection_logit(s3, x, np.array([1.0]))[0] == pytest.approx(-0.2)


def test_generated_population_moments():
    rng = np.random.default_rng(0)
    pop = generate_population(scenario("S1", 100_000), rng)
    assert np.var(pop.outcomes) == pytest.approx(6.0, abs=0.3)
    assert np.mean(pop.outcomes) == pytest.approx(0.0, abs=0.05)


@pytest.mark.parametrize("name", ["S1", "S2", "S3"])
def test_average_response_rate_near_forty_percent(name):
    rng = np.random.default_rng(1)
    pop = generate_population(scenario(name, 100_000), rng)
    assert np.mean(pop.selection_probs_true) == pytest.approx(0.4, abs=0.02)


def test_srswor_census_and_single_unit(small_population):
    rng = np.random.default_rng(2)
    census = draw_srswor(small_population, small_population.size, rng)
    assert np.array_equal(census.indices, np.arange(small_population.size))
    assert np.all(census.inclusion_probs == 1.0)
    single = draw_srswor(small_population, 1, rng)
    assert single.size == 1
    assert single.inclusion_probs[0] == pytest.approx(1 / small_population.size)
    with pytest.raises(ValueError):
        draw_srswor(small_population, small_population.size + 1, rng)


def test_srswor_empirical_inclusion_probabilities():
    pop = FinitePopulation(covariates=np.zeros((10, 1)), outcomes=np.arange(10.0))
    rng = np.random.default_rng(3)
    counts = np.zeros(10)
    draws = 100_000
    for _ in range(draws):
        counts[rng.choice(10, size=3, replace=False)] += 1
    assert np.max(np.abs(counts / draws - 0.3)) < 0.01


def test_allocation_proportional():
    assert compute_allocation({1: 1000, 2: 9000}, 1000) == {1: 100, 2: 900}


def test_allocation_floor():
    alloc = compute_allocation({1: 50, 2: 9950}, 1000)
    assert alloc[1] == 40
    assert alloc[1] + alloc[2] == 1000


def test_allocation_infeasible():
    # both strata pin below the floor at their full size, leaving budget over
    with pytest.raises(ValueError):
        compute_allocation({1: 30, 2: 35}, 70)
    with pytest.raises(ValueError):
        compute_allocation({1: 100}, 0)


def test_stratified_single_stratum_reduces_to_srswor(small_population):
    pop = FinitePopulation(covariates=small_population.covariates,
                           outcomes=small_population.outcomes,
                           strata=np.zeros(small_population.size, dtype=int))
    rng = np.random.default_rng(4)
    sample = draw_stratified_srswor(pop, {0: 60}, rng)
    assert sample.size == 60
    assert np.all(sample.inclusion_probs == 60 / pop.size)


def test_stratified_allocation_and_probs():
    rng = np.random.default_rng(5)
    strata = np.r_[np.zeros(200, dtype=int), np.ones(800, dtype=int)]
    pop = FinitePopulation(covariates=np.zeros((1000, 1)),
                           outcomes=np.zeros(1000), strata=strata)
    sample = draw_stratified_srswor(pop, 100, rng, floor=10)
    labels = strata[sample.indices]
    assert np.sum(labels == 0) == 20
    assert np.sum(labels == 1) == 80
    assert np.all(sample.inclusion_probs[labels == 0] == pytest.approx(0.1))
    assert np.all(sample.inclusion_probs[labels == 1] == pytest.approx(0.1))


def test_nonprob_extremes():
    base = make_population(n=200, seed=6)
    rng = np.random.default_rng(7)
    nearly_one = FinitePopulation(covariates=base.covariates, outcomes=base.outcomes,
                                  selection_probs_true=np.full(200, 1 - 1e-12))
    assert draw_nonprob(nearly_one, rng).size == 200
    nearly_zero = FinitePopulation(covariates=base.covariates, outcomes=base.outcomes,
                                   selection_probs_true=np.full(200, 1e-12))
    with pytest.raises(NumericalError):
        draw_nonprob(nearly_zero, rng)


def test_domain_mean_identities(small_population, small_samples):
    _, b = small_samples
    system = CalibrationSystem(
        u=small_population.covariates[b.indices],
        targets=small_population.covariates[b.indices].mean(axis=0) + 0.01,
        labels=("covariate-1", "covariate-2"))
    sol = el_dual_solve(system)
    from dataclasses import replace
    sol = replace(sol, theta_hat=float(sol.p @ b.outcomes))
    everything = np.ones(small_population.size, dtype=bool)
    assert estimate_domain_mean(sol, b, everything) == pytest.approx(sol.theta_hat,
                                                                     abs=1e-12)
    domain = small_population.covariates[:, 0] > 0
    w1 = sol.p[domain[b.indices]].sum()
    w2 = sol.p[~domain[b.indices]].sum()
    d1 = estimate_domain_mean(sol, b, domain)
    d2 = estimate_domain_mean(sol, b, ~domain)
    assert w1 * d1 + w2 * d2 == pytest.approx(sol.theta_hat, abs=1e-12)
    with pytest.raises(NumericalError):
        estimate_domain_mean(sol, b, np.zeros(small_population.size, dtype=bool))


def test_domain_mean_uniform_weights_is_sample_mean(small_samples, small_population):
    _, b = small_samples
    from elcal.simulation import weighted_domain_mean
    domain = small_population.covariates[:, 0] > 0
    mask = domain[b.indices]
    got = weighted_domain_mean(np.full(b.size, 1 / b.size), b, domain)
    assert got == pytest.approx(np.mean(b.outcomes[mask]), abs=1e-12)


def _tiny_cfg(**kw):
    defaults = dict(scenario=scenario("S1", 800), n_probability=60,
                    replications=3, seed=22, estimators=("HT", "GREG"),
                    variance_for=())
    defaults.update(kw)
    return SimulateConfig(**defaults)


def test_monte_carlo_row_count_contract():
    out = run_monte_carlo(_tiny_cfg(replications=2))
    for method in ("HT", "GREG"):
        assert sum(1 for r in out.results if r.method == method) == 2


def test_monte_carlo_seeded_determinism_across_workers():
    cfg = _tiny_cfg(estimators=("HT", "GREG", "MEL"), replications=4)
    from dataclasses import replace
    out1 = run_monte_carlo(cfg, workers=1)
    out2 = run_monte_carlo(cfg, workers=2)
    assert len(out1.results) == len(out2.results)
    for r1, r2 in zip(out1.results, out2.results):
        # wall-clock timing is the only field allowed to differ
        assert replace(r1, elapsed=0.0) == replace(r2, elapsed=0.0)
    assert out1.metrics.rows == out2.metrics.rows


def test_mse_identity_exact():
    out = run_monte_carlo(_tiny_cfg(replications=5))
    for row in out.metrics.rows:
        assert row.mse == row.bias**2 + row.variance


def test_failures_recorded_not_fatal():
    from elcal.simulation import ReplicationResult
    rows = [ReplicationResult(rep=0, method="X", estimate=1.0, theta_true=0.5),
            ReplicationResult(rep=1, method="X", estimate=None, theta_true=0.5,
                              error="boom"),
            ReplicationResult(rep=2, method="X", estimate=2.0, theta_true=0.5)]
    table = summarize(rows)
    row = table.row("X")
    assert row.n_ok == 2 and row.n_failed == 1
    assert row.bias == pytest.approx(np.mean([0.5, 1.5]))


def test_unknown_estimator_rejected():
    cfg = _tiny_cfg(estimators=("HT", "EL_9"))
    with pytest.raises(ValueError):
        run_monte_carlo(cfg)


def test_plasmode_fixed_population_and_domains(tmp_path):
    pop = make_population(n=2000, seed=33)
    strata = (pop.covariates[:, 0] > 0).astype(int)
    pop = FinitePopulation(covariates=pop.covariates,
                           outcomes=np.round(np.clip(pop.outcomes, 1, 5)),
                           strata=strata)
    domains = 1 + (pop.covariates[:, 1] > 0).astype(int)
    cfg = PlasmodeConfig(
        population=pop, domains=domains,
        selection_coefficients={"1": -1.0, "x2": 0.2, "y": 0.3},
        n_probability=200, replications=3, seed=44,
        estimators=("HT", "ALP", "EL_0"), density_family="multinomial",
        min_stratum_allocation=20)
    out = run_plasmode(cfg, workers=1)
    assert out.metrics.row("ALP").n_ok == 3
    assert out.domain_metrics is not None
    methods = {r.method for r in out.domain_results}
    assert methods == {"HT", "ALP", "EL_0"}
    truth = {d: float(np.mean(pop.outcomes[domains == d])) for d in (1, 2)}
    for r in out.domain_results:
        assert r.true_value == pytest.approx(truth[r.domain])

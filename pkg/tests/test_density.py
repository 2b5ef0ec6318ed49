import numpy as np
import pytest
from scipy.special import expit

from elcal._newton import NumericalError
from elcal.data import FinitePopulation, ProbabilitySample, SamplingDesign
from elcal.density import (OutcomeDensityFit, fit_outcome_density,
                           smoothed_propensity,
                           smoothed_propensity_population_mean)
from elcal.propensity import FittedPropensity, PropensityModelSpec
from conftest import draw_samples, make_population


def _sample(x, y, weights):
    n = len(y)
    return ProbabilitySample(indices=np.arange(n),
                             inclusion_probs=1.0 / np.asarray(weights),
                             outcomes=y, design=SamplingDesign.srswor(n, n))


def test_exact_linear_outcome_is_degenerate():
    x = np.linspace(-2, 2, 30).reshape(-1, 1)
    y = 1.5 + 2.0 * x[:, 0]
    pop = FinitePopulation(covariates=x, outcomes=y)
    fit = fit_outcome_density(pop, _sample(x, y, np.ones(30)), "normal")
    assert fit.coef == pytest.approx([1.5, 2.0], abs=1e-10)
    assert fit.sigma2 == pytest.approx(0.0, abs=1e-12)
    assert fit.degenerate


def test_intercept_estimate_is_weighted_mean():
    # with the covariate centered under the design weights the normal
    # equations decouple and the intercept is exactly the Hajek mean
    rng = np.random.default_rng(5)
    y = rng.normal(size=40)
    weights = rng.uniform(1.0, 3.0, size=40)
    x = rng.standard_normal(40)
    x = (x - np.sum(weights * x) / np.sum(weights)).reshape(-1, 1)
    pop = FinitePopulation(covariates=x, outcomes=y)
    fit = fit_outcome_density(pop, _sample(x, y, weights), "normal")
    hajek = np.sum(weights * y) / np.sum(weights)
    assert fit.coef[0] == pytest.approx(hajek, abs=1e-10)


def test_normal_fit_matches_wls_oracle():
    pop = make_population(n=400, seed=9)
    a, _ = draw_samples(pop, n_a=80, seed=10)
    fit = fit_outcome_density(pop, a, "normal")
    x = pop.covariates[a.indices]
    z = np.column_stack([np.ones(a.size), x])
    w = a.design_weights()
    coef_oracle = np.linalg.solve((z * w[:, None]).T @ z, (z * w[:, None]).T @ a.outcomes)
    assert fit.coef == pytest.approx(coef_oracle, abs=1e-10)
    resid = a.outcomes - z @ coef_oracle
    assert fit.sigma2 == pytest.approx(np.sum(w * resid**2) / np.sum(w), rel=1e-12)
    assert fit.score_norm <= 1e-8


def test_rank_deficient_design_raises():
    x = np.ones((20, 2))  # duplicate constant columns
    y = np.arange(20.0)
    pop = FinitePopulation(covariates=x, outcomes=y)
    with pytest.raises(NumericalError):
        fit_outcome_density(pop, _sample(x, y, np.ones(20)), "normal")


def test_multinomial_binomial_closed_form():
    # covariate sums to zero within each category, so the slope MLE is exactly
    # zero and the fitted probabilities are the category frequencies
    y = np.array([1.0] * 3 + [2.0] * 7)
    x = np.array([-1.0, 0.0, 1.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]).reshape(-1, 1)
    pop = FinitePopulation(covariates=x, outcomes=y)
    fit = fit_outcome_density(pop, _sample(x, y, np.ones(10)), "multinomial")
    probs = fit.category_probs(np.zeros((1, 1)))[0]
    assert probs == pytest.approx([0.3, 0.7], abs=1e-9)
    assert abs(fit.scores[1, 1]) < 1e-9
    assert fit.score_norm <= 1e-8


def test_multinomial_probabilities_sum_to_one():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((300, 2))
    scores = np.column_stack([np.zeros(300), 0.5 + 0.3 * x[:, 0],
                              -0.2 + 0.4 * x[:, 1]])
    p = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
    y = np.array([rng.choice([1.0, 2.0, 3.0], p=pi) for pi in p])
    pop = FinitePopulation(covariates=x, outcomes=y)
    fit = fit_outcome_density(pop, _sample(x, y, rng.uniform(1, 4, 300)), "multinomial")
    probs = fit.category_probs(x)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) <= 1e-12
    assert fit.score_norm <= 1e-8


def _prop_fit(phi, predictors):
    instruments = tuple(["1"] + ["x1"] * (len(predictors) - 1))
    return FittedPropensity(
        spec=PropensityModelSpec(predictors=tuple(predictors), instruments=instruments),
        phi_hat=np.asarray(phi, dtype=float), converged=True,
        residual_norm=0.0, iterations=0)


def _normal_fit(coef, sigma2):
    return OutcomeDensityFit(family="normal", coef=np.asarray(coef, dtype=float),
                             sigma2=float(sigma2))


def test_smoothing_outcome_free_candidate_is_exact():
    fit = _normal_fit([0.0, 1.0, 1.0], 4.0)
    prop = _prop_fit([-0.5, 0.5, 0.5], ("1", "x1", "x2"))
    x = np.array([[0.3, -0.7]])
    assert smoothed_propensity(fit, prop, x) == pytest.approx(
        expit(-0.5 + 0.5 * 0.3 - 0.5 * 0.7), abs=1e-15)


def test_smoothing_point_mass_multinomial():
    fit = OutcomeDensityFit(family="multinomial",
                            scores=np.array([[0.0, 0.0], [-40.0, 0.0]]),
                            categories=np.array([2.0, 5.0]))
    prop = _prop_fit([-0.2, 0.4], ("1", "y"))
    x = np.array([[0.0]])
    # all mass on the first category
    assert smoothed_propensity(fit, prop, x) == pytest.approx(
        expit(-0.2 + 0.4 * 2.0), abs=1e-12)


def trapezoid_oracle(fit, prop, x_row, n_points=1_000_000, half_width=10.0):
    mu = float(fit.conditional_mean(np.atleast_2d(x_row))[0])
    sd = np.sqrt(fit.sigma2)
    ys = np.linspace(mu - half_width * sd, mu + half_width * sd, n_points)
    dens = np.exp(-0.5 * ((ys - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
    terms = prop.phi_hat[0] + prop.phi_hat[1] * x_row[0] + prop.phi_hat[2] * ys
    vals = expit(terms) * dens
    return np.trapezoid(vals, ys)


def test_smoothing_matches_dense_trapezoid_oracle():
    fit = _normal_fit([0.1, 0.9, 1.1], 3.5)
    prop = _prop_fit([-0.5, 0.4, 0.2], ("1", "x1", "y"))
    x_row = np.array([0.6, -0.4])
    gh = smoothed_propensity(fit, prop, x_row[None, :])
    oracle = trapezoid_oracle(fit, prop, x_row)
    assert gh == pytest.approx(oracle, abs=1e-8)


def test_quadrature_node_doubling():
    fit = _normal_fit([0.0, 1.0, 1.0], 4.0)
    prop = _prop_fit([-0.5, 0.5, 0.2], ("1", "x1", "y"))
    x = np.array([[0.25, -1.4], [1.2, 0.3]])
    v40 = smoothed_propensity(fit, prop, x, n_nodes=40)
    v80 = smoothed_propensity(fit, prop, x, n_nodes=80)
    assert np.max(np.abs(v40 - v80)) < 1e-9


def test_quadrature_requires_two_nodes():
    fit = _normal_fit([0.0, 1.0, 1.0], 4.0)
    prop = _prop_fit([-0.5, 0.5, 0.2], ("1", "x1", "y"))
    with pytest.raises(ValueError):
        smoothed_propensity(fit, prop, np.zeros((1, 2)), n_nodes=1)


def test_population_mean_single_row():
    fit = _normal_fit([0.0, 1.0, 1.0], 4.0)
    prop = _prop_fit([-0.5, 0.5, 0.2], ("1", "x1", "y"))
    pop = FinitePopulation(covariates=np.array([[0.4, 0.9]]))
    assert smoothed_propensity_population_mean(fit, prop, pop) == pytest.approx(
        float(smoothed_propensity(fit, prop, pop.covariates)), abs=1e-15)


def test_population_smoothed_mean_near_average_response_rate():
    # at the true S2 parameters the smoothed mean estimates the mean selection
    # probability, about 0.4
    rng = np.random.default_rng(77)
    n = 100_000
    x = rng.standard_normal((n, 2))
    pop = FinitePopulation(covariates=x)
    fit = _normal_fit([0.0, 1.0, 1.0], 4.0)
    prop = _prop_fit([-0.5, 0.5, 0.5, 0.2], ("1", "x1", "x2", "y"))
    mean = smoothed_propensity_population_mean(fit, prop, pop)
    assert mean == pytest.approx(0.4, abs=0.02)


def test_bounds_strictly_inside_unit_interval():
    fit = _normal_fit([0.0, 1.0, 1.0], 4.0)
    prop = _prop_fit([-0.5, 0.5, 0.2], ("1", "x1", "y"))
    rng = np.random.default_rng(3)
    values = smoothed_propensity(fit, prop, rng.standard_normal((50, 2)))
    assert np.all(values > 0.0) and np.all(values < 1.0)

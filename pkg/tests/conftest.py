import numpy as np
import pytest
from scipy.special import expit

from elcal.data import FinitePopulation, NonProbabilitySample, ProbabilitySample, SamplingDesign


def make_population(n=500, seed=0, mnar=0.2, noise_sd=2.0):
    """A small S2-flavored population: two standard-normal covariates,
    y = x1 + x2 + noise, selection logit -0.5 + 0.5 x1 + 0.5 x2 + mnar * y."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    y = x[:, 0] + x[:, 1] + rng.normal(0, noise_sd, size=n)
    probs = expit(-0.5 + 0.5 * x[:, 0] + 0.5 * x[:, 1] + mnar * y)
    return FinitePopulation(covariates=x, outcomes=y, selection_probs_true=probs)


def draw_samples(pop, n_a=60, seed=1):
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(pop.size, size=n_a, replace=False))
    a = ProbabilitySample(indices=idx,
                          inclusion_probs=np.full(n_a, n_a / pop.size),
                          outcomes=pop.outcomes[idx],
                          design=SamplingDesign.srswor(pop.size, n_a))
    mask = rng.random(pop.size) < pop.selection_probs_true
    b_idx = np.flatnonzero(mask)
    b = NonProbabilitySample(indices=b_idx, outcomes=pop.outcomes[b_idx])
    return a, b


@pytest.fixture
def small_population():
    return make_population()


@pytest.fixture
def small_samples(small_population):
    return draw_samples(small_population)

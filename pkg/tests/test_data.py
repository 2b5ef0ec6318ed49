from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elcal.data import (FinitePopulation, NonProbabilitySample, ProbabilitySample,
                        SamplingDesign, SchemaError, population_mean,
                        read_nonprobability_sample_csv, read_population_csv,
                        read_probability_sample_csv,
                        validate_sample_against_population, write_population_csv)


def test_population_mean_simple():
    pop = FinitePopulation(covariates=np.zeros((3, 1)), outcomes=[1.0, 2.0, 3.0])
    assert population_mean(pop) == 2.0


def test_population_mean_constant():
    pop = FinitePopulation(covariates=np.zeros((5, 1)), outcomes=np.full(5, 4.2))
    assert population_mean(pop) == 4.2


def test_population_mean_requires_outcomes():
    pop = FinitePopulation(covariates=np.zeros((3, 1)))
    with pytest.raises(ValueError):
        population_mean(pop)


def test_population_invariants():
    with pytest.raises(ValueError):
        FinitePopulation(covariates=np.array([[np.inf, 1.0]]))
    with pytest.raises(ValueError):
        FinitePopulation(covariates=np.zeros((2, 1)),
                         selection_probs_true=[0.0, 0.5])
    with pytest.raises(ValueError):
        FinitePopulation(covariates=np.zeros((2, 1)),
                         selection_probs_true=[0.5, 1.0])


def test_probability_sample_invariants():
    with pytest.raises(ValueError):
        ProbabilitySample(indices=[0, 0], inclusion_probs=[0.5, 0.5],
                          outcomes=[1.0, 2.0], design=SamplingDesign.srswor(10, 2))
    with pytest.raises(ValueError):
        ProbabilitySample(indices=[0, 1], inclusion_probs=[0.5, 1.5],
                          outcomes=[1.0, 2.0], design=SamplingDesign.srswor(10, 2))
    with pytest.raises(ValueError):
        ProbabilitySample(indices=[], inclusion_probs=[], outcomes=[],
                          design=SamplingDesign.srswor(10, 0))


def test_validation_out_of_range(small_population):
    sample = SimpleNamespace(indices=np.array([0, small_population.size]),
                             inclusion_probs=np.array([0.5, 0.5]))
    issues = validate_sample_against_population(sample, small_population)
    assert any(i.code == "index-out-of-range" for i in issues)


def test_validation_bad_probability(small_population):
    sample = SimpleNamespace(indices=np.array([0, 1]),
                             inclusion_probs=np.array([0.0, 0.5]))
    issues = validate_sample_against_population(sample, small_population)
    assert any(i.code == "invalid-probability" for i in issues)


def test_validation_clean(small_population, small_samples):
    a, b = small_samples
    assert validate_sample_against_population(a, small_population) == []
    assert validate_sample_against_population(b, small_population) == []


def test_srswor_weights_sum_to_population_size(small_samples, small_population):
    a, _ = small_samples
    assert np.sum(1.0 / a.inclusion_probs) == pytest.approx(small_population.size,
                                                            abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False,
                          width=64), min_size=2, max_size=12))
def test_population_csv_round_trip(tmp_path_factory, values):
    tmp = tmp_path_factory.mktemp("csv")
    x = np.array(values).reshape(-1, 1)
    y = np.array(values[::-1], dtype=float)
    pop = FinitePopulation(covariates=x, outcomes=y,
                           strata=np.arange(len(values)) % 3)
    path = tmp / "pop.csv"
    write_population_csv(path, pop)
    back, _ = read_population_csv(path)
    assert back.covariates.tobytes() == pop.covariates.tobytes()
    assert back.outcomes.tobytes() == pop.outcomes.tobytes()
    assert np.array_equal(back.strata, pop.strata)


def test_population_csv_schema_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_population_csv(path)
    path.write_text("x1,y\n1,\n")
    with pytest.raises(SchemaError, match="empty value"):
        read_population_csv(path)


def test_sample_csv_round_trip(tmp_path, small_population):
    pop = small_population
    prob_path = tmp_path / "a.csv"
    prob_path.write_text("unit_id,inclusion_prob,y\n1,0.12,3.5\n4,0.12,-1.0\n")
    a = read_probability_sample_csv(prob_path, pop)
    assert a.indices.tolist() == [0, 3]
    assert a.design.kind == "srswor"
    nonprob_path = tmp_path / "b.csv"
    nonprob_path.write_text("unit_id,y\n2,0.5\n3,1.5\n")
    b = read_nonprobability_sample_csv(nonprob_path, pop)
    assert b.indices.tolist() == [1, 2]
    bad = tmp_path / "bad.csv"
    bad.write_text("unit_id,y\n9999,1.0\n")
    with pytest.raises(SchemaError):
        read_nonprobability_sample_csv(bad, pop)

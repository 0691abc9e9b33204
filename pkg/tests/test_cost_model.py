import json

import numpy as np
import pytest

from src.cost_model import (CostConfig, FailureCostMixture, expected_failure_cost, failure_cost_for,
                            failure_cost_histogram, failure_cost_variance, sample_failure_cost)
from utils.custom_exception import InputError


def test_default_costs(costs):
    assert costs.manual_evaluation_cost == 350
    assert costs.repair("cracking") == 1000
    assert costs.repair("lack_of_penetration") == 3000
    assert costs.repair("porosity") == 500
    assert costs.repair("none") == 0
    assert costs.labels == ("none", "cracking", "lack_of_penetration", "porosity")


def test_analytic_mixture_mean():
    mix = FailureCostMixture()
    assert mix.mean_weights == pytest.approx((0.75, 0.25))
    assert mix.major_mean() == pytest.approx(240_000)
    assert mix.minor_mean() == pytest.approx(50_000, rel=1e-9)
    assert expected_failure_cost(mix) == pytest.approx(97_500, rel=1e-6)


@pytest.mark.slow
def test_sampled_mixture_mean_and_variance():
    mix = FailureCostMixture()
    draws = sample_failure_cost(mix, 1_000_000, seed=2024)
    assert np.all(draws >= 0)
    assert abs(draws.mean() - 97_500) < 500
    assert draws.var() == pytest.approx(failure_cost_variance(mix), rel=0.02)


def test_three_quarters_of_draws_below_sixty_thousand():
    # minor mode sits almost entirely below 60k, the gamma mode almost entirely above
    draws = sample_failure_cost(FailureCostMixture(), 200_000, seed=12)
    assert np.mean(draws < 60_000) == pytest.approx(0.75, abs=0.005)


def test_degenerate_weights_collapse_to_minor_mode():
    mix = FailureCostMixture(dirichlet_weights=(1e9, 1.0))
    assert expected_failure_cost(mix) == pytest.approx(50_000, rel=1e-6)
    draws = sample_failure_cost(mix, 200_000, seed=13)
    assert draws.mean() == pytest.approx(50_000, abs=50)


def test_pi_resampled_per_draw():
    costs, pi = sample_failure_cost(FailureCostMixture(), 20_000, seed=1, return_weights=True)
    assert len(np.unique(pi)) == len(pi)
    assert pi.mean() == pytest.approx(0.75, abs=0.01)
    assert costs.shape == pi.shape


def test_truncation_keeps_draws_non_negative():
    mix = FailureCostMixture(minor_location=0.0, minor_scale=1000.0)
    assert np.all(sample_failure_cost(mix, 50_000, seed=9) >= 0)


def test_samples_independent_of_threads():
    mix = FailureCostMixture()
    serial = sample_failure_cost(mix, 5000, seed=4, threads=1, chunk_size=512)
    threaded = sample_failure_cost(mix, 5000, seed=4, threads=3, chunk_size=512)
    np.testing.assert_array_equal(serial, threaded)


def test_failure_cost_for_applies_multiplier(costs):
    assert failure_cost_for("lack_of_penetration", 100_000.0, costs) == 100_000.0
    assert failure_cost_for("cracking", 100_000.0, costs) == 50_000.0
    assert failure_cost_for("porosity", 100_000.0, costs) == pytest.approx(10_000.0)
    with pytest.raises(InputError):
        failure_cost_for("none", 1.0, costs)
    with pytest.raises(InputError):
        failure_cost_for("slag", 1.0, costs)


@pytest.mark.parametrize("kwargs", [
    {"manual_evaluation_cost": -1},
    {"repair_cost": {"cracking": 1.0}},
    {"escalation_set": ("slag",)},
    {"repair_cost": {"none": 1.0, "cracking": 1.0, "porosity": 1.0, "lack_of_penetration": 1.0}},
])
def test_invalid_cost_config(kwargs):
    with pytest.raises(InputError):
        CostConfig(**kwargs)


@pytest.mark.parametrize("kwargs", [
    {"dirichlet_weights": (1.0,)},
    {"dirichlet_weights": (0.0, 1.0)},
    {"minor_scale": 0.0},
    {"major_shape": -2.0},
])
def test_invalid_mixture(kwargs):
    with pytest.raises(InputError):
        FailureCostMixture(**kwargs)


def test_scaled_config(costs):
    doubled = costs.scaled(2.0)
    assert doubled.manual_evaluation_cost == 700
    assert doubled.repair("porosity") == 1000
    assert doubled.failure_multiplier == costs.failure_multiplier
    assert expected_failure_cost(doubled.mixture) == pytest.approx(2 * expected_failure_cost(costs.mixture))
    with pytest.raises(InputError):
        costs.scaled(0.0)


def test_config_hash_is_canonical(costs):
    same = CostConfig(repair_cost={"porosity": 500, "lack_of_penetration": 3000, "cracking": 1000})
    assert costs.config_hash() == same.config_hash()
    assert costs.config_hash() != costs.scaled(2.0).config_hash()
    json.dumps(costs.to_dict())


def test_histogram_counts_every_sample():
    draws = sample_failure_cost(FailureCostMixture(), 10_000, seed=2)
    hist = failure_cost_histogram(draws, bins=30)
    assert len(hist) == 30
    assert hist["count"].sum() == 10_000

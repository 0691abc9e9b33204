import numpy as np
import pytest

from config.config import CLASS_LABELS
from src.decision import ScenarioMix, default_strategies, scenario_cost_samples
from src.reliability import ConfusionMatrix, fit_posterior
from src.voi import preposterior_cost, prior_cost, vopi, vopi_from_samples, vopi_report
from utils.custom_exception import InputError

N = 20_000


@pytest.fixture
def strategies(costs):
    return default_strategies(costs)


@pytest.mark.slow
def test_lack_of_penetration_value(posterior, costs, strategies):
    entry, _ = vopi("lack_of_penetration", strategies, posterior, costs, 100_000, seed=2024)
    assert entry.vopi == pytest.approx(51.07, rel=0.10)
    assert entry.prior_optimal == "manual"


def test_no_anomaly_value_is_zero(posterior, costs, strategies):
    entry, _ = vopi("none", strategies, posterior, costs, N, seed=1)
    assert abs(entry.vopi) <= 3 * entry.stderr + 1e-9
    assert entry.prior_optimal == "hybrid"


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_preposterior_never_exceeds_prior(posterior, costs, strategies, seed):
    result = vopi_report(None, strategies, posterior, costs, N, seed)
    for entry in result.entries.values():
        assert entry.preposterior_cost <= entry.prior_cost + 1e-9
        assert entry.vopi >= -1e-9


def test_degenerate_posterior_has_no_value(costs, strategies):
    p = fit_posterior(ConfusionMatrix(CLASS_LABELS, np.diag([10**7] * 4)))
    entry, _ = vopi("lack_of_penetration", strategies, p, costs, N, seed=1)
    assert entry.vopi == pytest.approx(0.0, abs=1e-9)
    assert entry.switch_rate == 0.0


def test_single_strategy_has_no_value(posterior, costs, strategies):
    entry, _ = vopi("cracking", strategies[1:2], posterior, costs, N, seed=1)
    assert entry.vopi == 0.0


def test_helpers_agree_with_entry(posterior, costs, strategies):
    entry, _ = vopi("porosity", strategies, posterior, costs, N, seed=6)
    assert prior_cost("porosity", strategies, posterior, costs, N, seed=6) == pytest.approx(entry.prior_cost)
    assert preposterior_cost("porosity", strategies, posterior, costs, N, seed=6) == pytest.approx(
        entry.preposterior_cost)


def test_expected_mode_is_smaller_for_lack_of_penetration(posterior, costs, strategies):
    sampled, _ = vopi("lack_of_penetration", strategies, posterior, costs, N, seed=2)
    expected, _ = vopi("lack_of_penetration", strategies, posterior, costs, N, seed=2,
                       failure_cost_mode="expected")
    assert expected.vopi < sampled.vopi


def test_too_few_outer_samples(posterior, costs, strategies):
    with pytest.raises(InputError):
        vopi("none", strategies, posterior, costs, 500, seed=1)


def test_report_aggregate_and_scaling(posterior, costs, strategies):
    mix = ScenarioMix({"none": 0.85, "cracking": 0.05, "porosity": 0.05, "lack_of_penetration": 0.05})
    result = vopi_report(mix, strategies, posterior, costs, N, seed=3, keep_samples=True)
    expected = sum(mix.weight(s) * e.vopi for s, e in result.entries.items())
    assert result.aggregate["vopi"] == pytest.approx(expected)
    payload = result.to_dict(per=100)
    assert payload["scaled"]["cracking"]["vopi"] == pytest.approx(100 * result.entries["cracking"].vopi)
    assert len(result.inner_samples["porosity"]) == N
    assert list(result.bar_frame(100)["scenario"]) == list(CLASS_LABELS)


def test_report_rejects_mismatched_mix(posterior, costs, strategies):
    with pytest.raises(InputError):
        vopi_report(ScenarioMix({"none": 1.0}), strategies, posterior, costs, N, seed=1)


def test_report_independent_of_threads(posterior, costs, strategies):
    a = vopi_report(None, strategies, posterior, costs, N, seed=9, threads=1)
    b = vopi_report(None, strategies, posterior, costs, N, seed=9, threads=3)
    assert a.to_dict() == b.to_dict()


def test_value_unchanged_by_constant_cost_offset(posterior, costs, strategies):
    names = [s.name for s in strategies]
    samples = scenario_cost_samples("cracking", strategies, posterior, costs, N, seed=7)
    base, _ = vopi_from_samples("cracking", names, samples)
    shifted, _ = vopi_from_samples("cracking", names, samples + 1234.5)
    assert shifted.vopi == pytest.approx(base.vopi, abs=1e-6)
    assert shifted.prior_cost == pytest.approx(base.prior_cost + 1234.5)
    assert shifted.prior_optimal == base.prior_optimal


def test_value_scales_with_costs(posterior, costs, strategies):
    base, _ = vopi("lack_of_penetration", strategies, posterior, costs, N, seed=8)
    scaled_costs = costs.scaled(4.0)
    scaled, _ = vopi("lack_of_penetration", default_strategies(scaled_costs), posterior, scaled_costs, N, seed=8)
    assert scaled.vopi == pytest.approx(4.0 * base.vopi, rel=1e-9)
    assert scaled.prior_optimal == base.prior_optimal


def test_samples_level_value_matches_scenario_value(posterior, costs, strategies):
    entry, frame = vopi("porosity", strategies, posterior, costs, N, seed=6, keep_samples=True)
    samples = scenario_cost_samples("porosity", strategies, posterior, costs, N, seed=6)
    direct, _ = vopi_from_samples("porosity", [s.name for s in strategies], samples)
    assert direct.vopi == pytest.approx(entry.vopi)
    assert list(frame.columns) == ["scenario", "inner_min", "gain", "inner_optimal"]
    with pytest.raises(InputError):
        vopi_from_samples("porosity", ["manual"], samples)

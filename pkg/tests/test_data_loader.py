import numpy as np
import pytest

from config.config import PACKAGED_COSTS_FILE
from src.cost_model import CostConfig
from src.data_loader import ConfusionMatrixLoader, CostConfigLoader, resolve_costs_path
from utils.custom_exception import InputError

from tests.conftest import CASE_STUDY_COUNTS, CONFUSION_CSV


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_case_study_matrix_loads():
    cm = ConfusionMatrixLoader(CONFUSION_CSV).load()
    assert cm.classes == ("none", "cracking", "porosity", "lack_of_penetration")
    np.testing.assert_array_equal(cm.counts, CASE_STUDY_COUNTS)


def test_rows_may_come_in_any_order(tmp_path):
    path = write(tmp_path, "cm.csv", "true_class,a,b\nb,1,2\na,3,4\n")
    cm = ConfusionMatrixLoader(path).load()
    np.testing.assert_array_equal(cm.counts, [[3, 4], [1, 2]])


@pytest.mark.parametrize("text, line, column", [
    ("label,a,b\na,1,2\nb,3,4\n", 1, 1),
    ("true_class,a,b\na,1,2\nc,3,4\n", 3, 1),
    ("true_class,a,b\na,1,x\nb,3,4\n", 2, 3),
    ("true_class,a,b\na,1,-2\nb,3,4\n", 2, 3),
    ("true_class,a,b\na,1,2.5\nb,3,4\n", 2, 3),
])
def test_malformed_matrix_reports_location(tmp_path, text, line, column):
    path = write(tmp_path, "cm.csv", text)
    with pytest.raises(InputError) as info:
        ConfusionMatrixLoader(path).load()
    assert info.value.line == line
    assert info.value.column == column
    assert str(info.value).startswith(f"{path}:{line}:{column}: ")


def test_missing_row_and_duplicate_row(tmp_path):
    with pytest.raises(InputError):
        ConfusionMatrixLoader(write(tmp_path, "a.csv", "true_class,a,b\na,1,2\n")).load()
    with pytest.raises(InputError):
        ConfusionMatrixLoader(write(tmp_path, "b.csv", "true_class,a,b\na,1,2\na,1,2\nb,0,1\n")).load()


def test_missing_file():
    with pytest.raises(InputError):
        ConfusionMatrixLoader("no/such/file.csv").load()


def test_packaged_costs_match_defaults():
    assert CostConfigLoader(PACKAGED_COSTS_FILE).load().config_hash() == CostConfig().config_hash()


def test_costs_search_order(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert resolve_costs_path() == PACKAGED_COSTS_FILE
    (tmp_path / "costs.yaml").write_text("x: 1\n")
    assert resolve_costs_path() == str(tmp_path / "costs.yaml")
    assert resolve_costs_path("explicit.yaml") == "explicit.yaml"


def test_malformed_yaml_reports_location(tmp_path):
    path = write(tmp_path, "costs.yaml", "manual_evaluation_cost: 350\nrepair_cost: [1, 2\n")
    with pytest.raises(InputError) as info:
        CostConfigLoader(path).load()
    assert info.value.source == path
    assert info.value.line is not None


def test_bad_value_points_at_key(tmp_path):
    text = open(PACKAGED_COSTS_FILE).read().replace("manual_evaluation_cost: 350", "manual_evaluation_cost: lots")
    path = write(tmp_path, "costs.yaml", text)
    with pytest.raises(InputError) as info:
        CostConfigLoader(path).load()
    assert "manual_evaluation_cost" in str(info.value)
    assert info.value.line == text.splitlines().index("manual_evaluation_cost: lots") + 1


def test_unknown_section_rejected(tmp_path):
    text = open(PACKAGED_COSTS_FILE).read() + "\nsurcharge: 10\n"
    with pytest.raises(InputError):
        CostConfigLoader(write(tmp_path, "costs.yaml", text)).load()


def test_custom_escalation_set(tmp_path):
    text = open(PACKAGED_COSTS_FILE).read().replace(
        "escalation_set: [cracking, lack_of_penetration]", "escalation_set: [cracking]")
    cfg = CostConfigLoader(write(tmp_path, "costs.yaml", text)).load()
    assert cfg.escalation_set == ("cracking",)


def test_non_mapping_mixture_component_points_at_key(tmp_path):
    text = open(PACKAGED_COSTS_FILE).read().replace(
        "  minor:\n    location: 50000\n    scale: 3000\n", "  minor: 5\n")
    path = write(tmp_path, "costs.yaml", text)
    with pytest.raises(InputError) as info:
        CostConfigLoader(path).load()
    assert "failure_cost_mixture.minor" in str(info.value)
    assert info.value.source == path
    assert info.value.line == text.splitlines().index("  minor: 5") + 1
    assert info.value.column == 10

import json

import pandas as pd
import pytest

from app.cli import EXIT_INPUT, EXIT_OK, main
from config.config import TOOL_VERSION
from src.reporting import VOLATILE_FIELDS, to_pgm_bytes

from tests.conftest import CONFUSION_CSV

RISK_N = "20000"
VOPI_N = "20000"


def stable_json(path):
    data = json.loads(path.read_text())
    for key in VOLATILE_FIELDS:
        data["manifest"].pop(key)
    return data


def run(*argv):
    return main([str(a) for a in argv])


def test_version(capsys):
    assert run("--version") == EXIT_OK
    assert TOOL_VERSION in capsys.readouterr().out


def test_usage_error_is_input_error():
    assert run("risk") == EXIT_INPUT


def test_fit_writes_posterior_and_marginals(tmp_path):
    assert run("fit", CONFUSION_CSV, "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "posterior.json").read_text())
    assert report["posterior"]["posterior_alpha"][0] == [73, 2, 5, 1]
    assert report["manifest"]["command"] == "fit"
    assert report["manifest"]["labels"] == ["none", "cracking", "porosity", "lack_of_penetration"]
    marginals = pd.read_csv(tmp_path / "posterior_marginals.csv")
    assert set(marginals["true_class"]) == {"none", "cracking", "porosity", "lack_of_penetration"}
    assert (tmp_path / "posterior_quantiles.csv").exists()


def test_malformed_csv_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("true_class,a,b\na,1,x\nb,0,1\n")
    assert run("fit", bad, "--out", tmp_path / "out") == EXIT_INPUT
    assert f"{bad}:2:3:" in capsys.readouterr().err


def test_risk_report_and_plot_data(tmp_path):
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--seed", 3, "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "risk.json").read_text())
    assert report["cells"]["porosity"]["manual"]["mean"] == 850
    assert report["optimal"]["none"] == "hybrid"
    assert report["manifest"]["samples"] == {"risk": 20000}
    assert len(report["manifest"]["config_hash"]) == 64
    hist = pd.read_csv(tmp_path / "failure_cost_hist.csv")
    assert hist["count"].sum() == 20000
    assert set(pd.read_csv(tmp_path / "risk_histograms.csv")["strategy"]) == {"manual", "automated", "hybrid"}


def test_risk_is_reproducible_across_threads(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--out", a, "--threads", 1) == EXIT_OK
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--out", b, "--threads", 4) == EXIT_OK
    assert stable_json(a / "risk.json") == stable_json(b / "risk.json")
    for name in ("risk_histograms.csv", "failure_cost_hist.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_risk_with_prevalence_ranks_strategies(tmp_path):
    prevalence = json.dumps({"none": 0.9, "cracking": 0.04, "porosity": 0.03, "lack_of_penetration": 0.03})
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--prevalence", prevalence, "--out", tmp_path) == EXIT_OK
    ranking = json.loads((tmp_path / "risk.json").read_text())["ranking"]
    assert ranking[0]["rank"] == 1
    assert {r["strategy"] for r in ranking} == {"manual", "automated", "hybrid"}


def test_bad_prevalence_is_input_error(tmp_path):
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--prevalence", "{not json", "--out", tmp_path) == EXIT_INPUT
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--prevalence", '{"none": 0.5}', "--out", tmp_path) == EXIT_INPUT


def test_too_few_samples_is_input_error(tmp_path):
    assert run("risk", CONFUSION_CSV, "--n", 10, "--out", tmp_path) == EXIT_INPUT


def test_threshold_from_risk_report(tmp_path):
    assert run("risk", CONFUSION_CSV, "--n", "200000", "--seed", 2024, "--out", tmp_path) == EXIT_OK
    assert run("threshold", tmp_path / "risk.json", "--profile", "cracking") == EXIT_OK
    result = json.loads((tmp_path / "threshold.json").read_text())
    assert result["break_even"]["status"] == "crossing"
    assert result["break_even"]["threshold"] == pytest.approx(0.872, abs=0.005)
    assert result["manifest"]["seed"] == 2024


def test_threshold_invariant_to_cost_scale(tmp_path):
    base, scaled = tmp_path / "base", tmp_path / "scaled"
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--out", base) == EXIT_OK
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--cost-scale", 10, "--out", scaled) == EXIT_OK
    for directory in (base, scaled):
        assert run("threshold", directory / "risk.json", "--profile", "uniform") == EXIT_OK
    a = json.loads((base / "threshold.json").read_text())["break_even"]["threshold"]
    b = json.loads((scaled / "threshold.json").read_text())["break_even"]["threshold"]
    assert a == pytest.approx(b, rel=1e-9)


def test_threshold_bad_report(tmp_path):
    bad = tmp_path / "risk.json"
    bad.write_text("{\n  \"cells\": ")
    assert run("threshold", bad) == EXIT_INPUT


def test_vopi_report(tmp_path):
    assert run("vopi", CONFUSION_CSV, "--n", VOPI_N, "--per", 100, "--out", tmp_path) == EXIT_OK
    report = json.loads((tmp_path / "vopi.json").read_text())
    assert report["failure_cost_mode"] == "sampled"
    assert report["scaled"]["none"]["vopi"] == pytest.approx(0.0, abs=1e-6)
    assert report["scaled"]["lack_of_penetration"]["vopi"] > 0
    bars = pd.read_csv(tmp_path / "vopi_bars.csv")
    assert list(bars["scenario"]) == ["none", "cracking", "porosity", "lack_of_penetration"]


def test_vopi_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, threads in ((a, 1), (b, 2)):
        assert run("vopi", CONFUSION_CSV, "--n", VOPI_N, "--out", out, "--threads", threads) == EXIT_OK
    assert (a / "vopi_bars.csv").read_bytes() == (b / "vopi_bars.csv").read_bytes()
    assert stable_json(a / "vopi.json") == stable_json(b / "vopi.json")


def test_toy_train_and_explain(tmp_path):
    model_dir = tmp_path / "model"
    assert run("toy", "train", "--out", model_dir, "--n-per-class", 10, "--epochs", 2, "--seed", 1) == EXIT_OK
    history = pd.read_csv(model_dir / "training_history.csv")
    assert list(history["epoch"]) == [1, 2]
    model = model_dir / "model.toyclf"
    for method in ("saliency", "cam"):
        out = tmp_path / method
        assert run("toy", method, "--model", model, "--out", out) == EXIT_OK
        grid = pd.read_csv(out / f"{method}.csv")
        assert len(grid) == 32 * 32 and (grid["value"] >= 0).all()
        assert (out / f"{method}.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")


def test_toy_counterfactual_exit_code_reports_convergence(tmp_path):
    model_dir = tmp_path / "model"
    assert run("toy", "train", "--out", model_dir, "--n-per-class", 10, "--epochs", 1, "--seed", 1) == EXIT_OK
    out = tmp_path / "cf"
    code = run("toy", "counterfactual", "--model", model_dir / "model.toyclf", "--eta", 0, "--max-iters", 3,
               "--out", out)
    report = json.loads((out / "counterfactual.json").read_text())
    assert code == (EXIT_OK if report["converged"] else 2)
    losses = pd.read_csv(out / "counterfactual_losses.csv")
    assert len(losses) == report["iterations"] + 1


def test_toy_missing_model_is_input_error(tmp_path):
    assert run("toy", "saliency", "--model", tmp_path / "none.toyclf", "--out", tmp_path) == EXIT_INPUT


def test_pgm_encoding():
    data = to_pgm_bytes(pd.DataFrame([[0.0, 1.0]]).to_numpy())
    assert data == b"P5\n2 1\n255\n" + bytes([0, 255])


def test_non_numeric_prevalence_is_input_error(tmp_path, capsys):
    prevalence = json.dumps({"none": "x", "cracking": 0.5, "porosity": 0.25, "lack_of_penetration": 0.25})
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--prevalence", prevalence, "--out", tmp_path) == EXIT_INPUT
    assert "error:" in capsys.readouterr().err


def test_non_numeric_profile_is_input_error(tmp_path):
    assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--out", tmp_path) == EXIT_OK
    profile = json.dumps({"cracking": "half", "porosity": 0.5})
    assert run("threshold", tmp_path / "risk.json", "--profile", profile) == EXIT_INPUT


def test_unwritable_output_is_input_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert run("fit", CONFUSION_CSV, "--out", blocker / "out") == EXIT_INPUT


def test_vopi_writes_inner_samples(tmp_path):
    assert run("vopi", CONFUSION_CSV, "--n", VOPI_N, "--out", tmp_path) == EXIT_OK
    inner = pd.read_csv(tmp_path / "vopi_inner_samples.csv")
    assert list(inner.columns) == ["scenario", "inner_min", "gain", "inner_optimal"]
    assert len(inner) == 4 * int(VOPI_N)
    assert (inner["gain"] >= 0).all()
    assert set(inner["inner_optimal"]) <= {"manual", "automated", "hybrid"}


def test_fit_and_threshold_reruns_are_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("fit", CONFUSION_CSV, "--out", out) == EXIT_OK
        assert run("risk", CONFUSION_CSV, "--n", RISK_N, "--seed", 5, "--out", out) == EXIT_OK
        assert run("threshold", out / "risk.json", "--profile", "porosity") == EXIT_OK
    for name in ("posterior_marginals.csv", "posterior_quantiles.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    for name in ("posterior.json", "threshold.json"):
        assert stable_json(a / name) == stable_json(b / name)


def test_toy_reruns_are_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("toy", "train", "--out", out, "--n-per-class", 10, "--epochs", 2, "--seed", 4) == EXIT_OK
        assert run("toy", "saliency", "--model", out / "model.toyclf", "--seed", 4, "--out", out / "map") == EXIT_OK
    for name in ("model.toyclf", "training_history.csv", "map/saliency.csv", "map/saliency.pgm"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert stable_json(a / "training.json") == stable_json(b / "training.json")


def test_toy_counterfactual_calibrates_learning_rate(tmp_path):
    model_dir = tmp_path / "model"
    assert run("toy", "train", "--out", model_dir, "--n-per-class", 10, "--epochs", 1, "--seed", 1) == EXIT_OK
    out = tmp_path / "cf"
    run("toy", "counterfactual", "--model", model_dir / "model.toyclf", "--max-step", 0.02, "--max-iters", 3,
        "--out", out)
    report = json.loads((out / "counterfactual.json").read_text())
    assert report["eta"] >= 0
    grid = pd.read_csv(out / "counterfactual_grid.csv")
    assert grid["value"].between(0, 1).all()

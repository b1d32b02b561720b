import json
import shutil

import pytest

from conftest import FIXTURE_DIR
from wsexplore import io_formats as io
from wsexplore.cli import main


def inputs(src=FIXTURE_DIR):
    return ["--model", str(src / "model.json"), "--blob", str(src / "model.bin"),
            "--images", str(src / "images.idx"), "--labels", str(src / "labels.idx")]


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    """baseline -> sweep -> both explore modes on a narrow k range."""
    out = tmp_path_factory.mktemp("run")
    common = ["--out-dir", str(out), "--budget-pp", "2"]
    codes = [
        main(["baseline", *inputs(), "--out-dir", str(out)]),
        main(["sweep", *common, "--k-max", "8", "--layer-budget-pp", "8"]),
        main(["explore", *common, "--mode", "exhaustive"]),
        main(["explore", *common, "--mode", "predicted", "--sample-fraction", "0.2", "--seed", "3"]),
        main(["fit", *common, "--seed", "1"]),
        main(["report", *common]),
    ]
    return out, codes


def test_pipeline_succeeds_and_writes_outputs(small_run):
    out, codes = small_run
    assert codes == [0] * 6
    expected = ["baseline.json", "candidates.json", "layer_1_curve.csv", "layer_4_curve.csv",
                "results_exhaustive.csv", "front_exhaustive.csv", "results_predicted.csv",
                "front_predicted.csv", "front_rescored.csv", "predictor.json", "front_comparison.json",
                "fit_validation.json", "run_log.json", "plot_sensitivity.csv", "plot_fronts.csv"]
    assert [name for name in expected if not (out / name).exists()] == []


def test_baseline_and_log_contents(small_run):
    out, _ = small_run
    base = io.read_json(out / "baseline.json")
    assert base["accuracy"] == 1.0 and base["n_samples"] == 512
    log = io.read_json(out / "run_log.json")
    assert log["sweep"]["scorings"] == 4 * 8
    ex = log["explore_exhaustive"]
    assert ex["scorings"] == ex["combinations"]
    pr = log["explore_predicted"]
    assert pr["subsample_size"] <= pr["scorings"] <= pr["subsample_size"] + pr["rescored"]
    assert "seconds" not in json.dumps(log)


def test_predicted_outputs_are_labelled(small_run):
    out, _ = small_run
    assert {r.al_source for r in io.load_records(out / "results_predicted.csv")} == {"predicted"}
    assert {r.al_source for r in io.load_front(out / "front_rescored.csv", 2.0).points} <= {"measured"}
    assert io.load_predictor(out / "predictor.json").meta["seed"] == 3


def test_compare_subcommand(small_run, capsys):
    out, _ = small_run
    assert main(["compare", "--out-dir", str(out), "--budget-pp", "2"]) == 0
    assert "hypervolume ratio" in capsys.readouterr().out


def test_missing_input_is_exit_2(tmp_path, capsys):
    args = inputs()
    args[args.index("--blob") + 1] = str(tmp_path / "nope.bin")
    assert main(["baseline", *args, "--out-dir", str(tmp_path)]) == 2
    assert "nope.bin" in capsys.readouterr().err


def test_later_step_without_baseline_is_exit_2(tmp_path, capsys):
    assert main(["sweep", "--out-dir", str(tmp_path)]) == 2
    assert "baseline.json" in capsys.readouterr().err


def test_bad_option_values_are_exit_2(tmp_path):
    assert main(["baseline", *inputs(), "--out-dir", str(tmp_path), "--budget-pp", "0"]) == 2
    assert main(["baseline", "--out-dir", str(tmp_path)]) == 2


def test_infeasible_budget_is_exit_1(small_run, tmp_path, capsys):
    out, _ = small_run
    shutil.copy(out / "baseline.json", tmp_path / "baseline.json")
    code = main(["sweep", "--out-dir", str(tmp_path), "--k-max", "3", "--layer-budget-pp", "0.001"])
    assert code == 1
    assert "cannot meet budget" in capsys.readouterr().err


def test_cap_is_exit_1(small_run, capsys):
    out, _ = small_run
    assert main(["explore", "--out-dir", str(out), "--budget-pp", "2", "--cap", "3"]) == 1
    assert "predicted mode" in capsys.readouterr().err


def test_filter_valid_needs_exhaustive_results(small_run, tmp_path):
    out, _ = small_run
    for name in ("baseline.json", "candidates.json", *(f"layer_{i}_curve.csv" for i in range(1, 5))):
        shutil.copy(out / name, tmp_path / name)
    code = main(["explore", "--out-dir", str(tmp_path), "--budget-pp", "2", "--mode", "predicted",
                 "--filter-valid"])
    assert code == 2


def test_changed_input_is_rejected(tmp_path):
    src = tmp_path / "inputs"
    shutil.copytree(FIXTURE_DIR, src)
    out = tmp_path / "out"
    assert main(["baseline", *inputs(src), "--out-dir", str(out)]) == 0
    blob = bytearray((src / "model.bin").read_bytes())
    blob[0] ^= 1
    (src / "model.bin").write_bytes(bytes(blob))
    assert main(["sweep", "--out-dir", str(out), "--k-max", "2"]) == 2


def test_config_file_with_flag_override(small_run, tmp_path):
    out, _ = small_run
    shutil.copy(out / "baseline.json", tmp_path / "baseline.json")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k_max": 3, "layer-budget-pp": 50, "budget_pp": 2}))
    assert main(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path), "--k-max", "2"]) == 0
    curve = io.load_curve(tmp_path / "layer_1_curve.csv")
    assert [p.k for p in curve.points] == [1, 2]
    assert io.read_json(tmp_path / "candidates.json")["layer_al_budget"] == 50

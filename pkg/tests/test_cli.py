import csv
import json

import jsonschema
import pytest

from aqplfc import cli

TINY_DE = {"population": 8, "max_generations": 10, "polish": False}


def run(tmp_path, command, config=None, *extra, out="out"):
    argv = [command, "--out", str(tmp_path / out)]
    if config is not None:
        path = tmp_path / f"{command}-{out}.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return cli.main(argv + list(extra))


def read(tmp_path, name, out="out"):
    return (tmp_path / out / name).read_text()


def test_unknown_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == cli.EXIT_USAGE


@pytest.mark.parametrize("config", [
    {"nonsense": 1},
    {"plant": {"bogus": 2}},
    {"optimizer": {"population": 2}},
    {"prior": {"family": "cauchy", "parameters": []}},
    {"switch": {"q": 0.0}},
    {"version": 99},
])
def test_bad_config_exits_1(tmp_path, config):
    assert run(tmp_path, "simulate", config) == cli.EXIT_USAGE


def test_unreadable_config_exits_1(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1


def test_optimize_report_matches_schema(tmp_path):
    code = run(tmp_path, "optimize", {"plant": {"n": 4}, "optimizer": TINY_DE})
    assert code == 0
    report = json.loads(read(tmp_path, "report.json"))
    jsonschema.validate(report, cli.report_schema())
    assert len(report["best_policy"]) == 4
    assert report["generations_used"] <= 10


def test_schema_rejects_missing_field(tmp_path):
    run(tmp_path, "optimize", {"plant": {"n": 4}, "optimizer": TINY_DE})
    report = json.loads(read(tmp_path, "report.json"))
    del report["best_variance"]
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(report, cli.report_schema())


def test_zero_policy_scan_is_infeasible_and_fails_with_flag(tmp_path):
    cfg = {"plant": {"n_min": 4, "n_max": 16, "samples": 4000, "policy": "zeros"}}
    assert run(tmp_path, "simulate", cfg) == 0
    fit = json.loads(read(tmp_path, "fit.json"))
    assert fit["feasible"] is False
    assert run(tmp_path, "simulate", cfg, "--require-feasible", out="o2") == cli.EXIT_FAIL


def test_point_prior_rows_are_zero(tmp_path):
    # phase 0 with independent photons and a zero policy: every click lands in
    # port 0 and the estimate is exact
    cfg = {"plant": {"n_min": 4, "n_max": 6, "samples": 500, "family": "product-uniform"},
           "prior": {"family": "point", "parameters": [0.0]}}
    assert run(tmp_path, "simulate", cfg) == 0
    rows = list(csv.DictReader(read(tmp_path, "scaling.csv").splitlines()))
    assert [float(r["V_N"]) for r in rows] == [0.0, 0.0, 0.0]
    assert json.loads(read(tmp_path, "fit.json"))["exponent"] is None


def test_simulate_is_byte_identical_across_runs(tmp_path):
    cfg = {"plant": {"n_min": 4, "n_max": 6, "samples": 3000, "strategy": "product-ml"}}
    run(tmp_path, "simulate", cfg, out="a")
    run(tmp_path, "simulate", cfg, out="b")
    assert read(tmp_path, "scaling.csv", "a") == read(tmp_path, "scaling.csv", "b")
    ma = json.loads(read(tmp_path, "manifest-simulate.json", "a"))
    mb = json.loads(read(tmp_path, "manifest-simulate.json", "b"))
    assert ma["config_hash"] == mb["config_hash"]


def test_seed_flag_changes_output(tmp_path):
    cfg = {"plant": {"n_min": 4, "n_max": 4, "samples": 3000}}
    run(tmp_path, "simulate", cfg, "--seed", "1", out="a")
    run(tmp_path, "simulate", cfg, "--seed", "2", out="b")
    assert read(tmp_path, "scaling.csv", "a") != read(tmp_path, "scaling.csv", "b")


def test_manifest_records_materialised_seeds(tmp_path):
    run(tmp_path, "simulate", {"plant": {"n_min": 4, "n_max": 4, "samples": 100}}, "--seed", "7")
    manifest = json.loads(read(tmp_path, "manifest-simulate.json"))
    assert manifest["config"]["optimizer"]["seed"] == 7
    assert manifest["config"]["model"]["split_seed"] == 7
    assert manifest["status"] == "ok"
    assert "scaling.csv" in manifest["outputs"]


def test_orbit_smoke(tmp_path):
    cfg = {"plant": {"n_max": 6}, "optimizer": TINY_DE}
    assert run(tmp_path, "orbit", cfg) == 0
    fit = json.loads(read(tmp_path, "fit.json"))
    assert set(fit) == {"exponent", "intercept", "r_squared", "feasible"}
    rows = read(tmp_path, "orbit_variance.csv").splitlines()
    assert rows[0] == "N,V_N" and len(rows) == 4


def test_train_on_empty_dataset_fails(tmp_path):
    (tmp_path / "out").mkdir()
    (tmp_path / "out" / "dataset.jsonl").write_text("")
    assert run(tmp_path, "train") != 0


def test_dataset_with_only_infeasible_priors_fails(tmp_path):
    cfg = {"dataset": {"priors": [{"family": "wrapped-normal", "parameters": [0.0, 0.2]}], "n_max": 6},
           "optimizer": TINY_DE}
    assert run(tmp_path, "dataset", cfg) == cli.EXIT_RUNTIME


def test_dataset_train_test_pipeline(tmp_path):
    cfg = {
        "dataset": {"grid": {"family": "wrapped-normal", "mu": [0.0, 1.5, 3.0, 4.5], "sigma": [1.0, 1.5]},
                    "n_max": 8},
        "optimizer": {"population": 12, "max_generations": 20},
        "model": {"grid": [[1], [2]], "folds": 2, "model_fraction": 0.75},
    }
    assert run(tmp_path, "dataset", cfg) == 0
    summary = json.loads(read(tmp_path, "dataset_summary.json"))
    assert summary["priors"] == 8 and summary["kept"] + summary["excluded"] == 8
    assert run(tmp_path, "train", cfg) == 0
    model = json.loads(read(tmp_path, "model.json"))
    assert model["kind"] == "knn" and model["hyper"] in ([1], [2])
    code = run(tmp_path, "test", cfg)
    assert code in (cli.EXIT_OK, cli.EXIT_FAIL)
    report = json.loads(read(tmp_path, "report.json"))
    assert "baseline_mean_loss" in report and "loss_ratio" in report
    assert (code == cli.EXIT_OK) == report["passed"]


def test_test_without_model_is_config_error(tmp_path):
    assert run(tmp_path, "test") == cli.EXIT_USAGE


def test_switch_demo_identical_inputs(tmp_path):
    cfg = {"switch": {"trials": 2000, "sensor": [0.6, 0.8], "external": [0.6, 0.8]}}
    assert run(tmp_path, "switch-demo", cfg) == 0
    q = json.loads(read(tmp_path, "switch.json"))["quantum"]
    assert q["outcome_1"] == 0 and q["post_states_valid"]


def test_switch_demo_orthogonal_inputs(tmp_path):
    assert run(tmp_path, "switch-demo", {"switch": {"trials": 4000}}) == 0
    out = json.loads(read(tmp_path, "switch.json"))
    assert abs(out["quantum"]["outcome_0"] / 4000 - 0.5) < 0.04
    assert out["classical"]["routed_to_output"] + out["classical"]["fed_back"] == 4000


def test_loop_demo(tmp_path):
    assert run(tmp_path, "loop-demo") == 0
    out = json.loads(read(tmp_path, "loop.json"))
    assert out["aqp"]["photons"] == 8 and len(out["aqp"]["bits"]) == 8
    assert out["aqp"]["terminated"]
    assert len(read(tmp_path, "aqp_trace.csv").splitlines()) >= 9


def test_switch_demo_q1_routes_everything_out(tmp_path):
    assert run(tmp_path, "switch-demo", {"switch": {"mode": "bernoulli", "q": 1.0, "trials": 500}}) == 0
    out = json.loads(read(tmp_path, "switch.json"))["classical"]
    assert out["routed_to_output"] == 500 and out["fed_back"] == 0

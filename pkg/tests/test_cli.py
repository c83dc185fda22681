import csv
import json

import numpy as np
import pytest

from overbound.cli import RESULT_SCHEMA, load_config, main, read_csv, ConfigError
from overbound.stdnorm import std_normal_quantile

SMALL = {
    "data": {"type": "type1", "n": 3000, "seed": 7},
    "case": {"n_levels": 20},
    "train": {"epochs": 40, "batch_size": 1000, "warmup_epochs": 4, "cooldown_epochs": 4,
              "history_every": 10},
}


def write_config(tmp_path, cfg=SMALL, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def dataset(tmp_path):
    cfg = write_config(tmp_path)
    assert run("generate", "--config", cfg, "--out", tmp_path / "gen") == 0
    return cfg, tmp_path / "gen" / "data.csv"


class TestConfig:
    def test_defaults_mirror_training_table(self):
        cfg = load_config(None)
        assert cfg["case"]["epsilon"] == 0.0025 and cfg["case"]["lambda"] == 1e-5
        assert cfg["case"]["beta"] == 1e-3 and cfg["case"]["n_levels"] == 100
        assert cfg["train"]["epochs"] == 50000 and cfg["metrics"]["ir"] == 1e-3

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, {"bogus": {}}))

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, {"train": {"epoch": 3}}))

    def test_seed_override(self, tmp_path):
        cfg = load_config(write_config(tmp_path), seed=99)
        assert cfg["data"]["seed"] == 99 and cfg["train"]["seed"] == 99

    def test_ablations(self):
        cfg = load_config(None, ablation="no-penalty")
        assert cfg["case"]["lambda"] == 0.0 and cfg["case"]["t"] == pytest.approx(1 - 200e-5)
        assert load_config(None, ablation="t-1")["case"]["t"] == 1.0
        assert load_config(None, ablation="fixed-k")["case"]["learn_k"] is False
        assert load_config(None, ablation="no-weights")["case"]["weighted"] is False
        assert load_config(None, ablation="case3")["case"]["case"] == "case3"
        with pytest.raises(ConfigError):
            load_config(None, ablation="nope")


class TestGenerate:
    def test_rows_and_bytes(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("generate", "--config", cfg, "--out", tmp_path / "a") == 0
        assert run("generate", "--config", cfg, "--out", tmp_path / "b") == 0
        a = (tmp_path / "a" / "data.csv").read_bytes()
        assert a == (tmp_path / "b" / "data.csv").read_bytes()
        assert (tmp_path / "a" / "generate.json").read_bytes() == (tmp_path / "b" / "generate.json").read_bytes()
        rows = a.decode().strip().split("\n")
        assert rows[0] == "value" and len(rows) == 3001

    def test_seed_flag_changes_output(self, tmp_path):
        cfg = write_config(tmp_path)
        run("generate", "--config", cfg, "--out", tmp_path / "a")
        run("generate", "--config", cfg, "--out", tmp_path / "b", "--seed", 8)
        assert (tmp_path / "a" / "data.csv").read_bytes() != (tmp_path / "b" / "data.csv").read_bytes()

    def test_custom_bad_weights(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"data": {"type": "custom", "n": 10,
                                               "components": [[0.5, 0, 1], [0.4, 1, 1]]}})
        assert run("generate", "--config", cfg, "--out", tmp_path / "x") == 2
        assert "error" in capsys.readouterr().err

    def test_custom_mixture(self, tmp_path):
        cfg = write_config(tmp_path, {"data": {"type": "custom", "n": 50, "seed": 1,
                                               "components": [[0.5, 0, 1], [0.5, 1, 2]]}})
        assert run("generate", "--config", cfg, "--out", tmp_path / "x") == 0

    def test_conditional(self, tmp_path):
        cfg = write_config(tmp_path, {"data": {"type": "conditional", "n": 20, "seed": 1}})
        assert run("generate", "--config", cfg, "--out", tmp_path / "x") == 0
        header, cols = read_csv(tmp_path / "x" / "data.csv")
        assert header == ["value", "x"] and cols["x"].size == 20

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert run("generate", "--config", p, "--out", tmp_path / "x") == 2


class TestReadCsv:
    def test_parse_error_names_row_and_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("value,x\n1.0,2.0\n3.0,abc\n")
        with pytest.raises(ConfigError, match=r"row 3, column 'x'"):
            read_csv(p)

    def test_missing_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1.0\n2.0\n")
        with pytest.raises(ConfigError):
            read_csv(p)

    def test_nonfinite(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("value\n1.0\nnan\n")
        with pytest.raises(ConfigError):
            read_csv(p)


class TestFit:
    def test_fit_result(self, tmp_path, dataset):
        cfg, data = dataset
        assert run("fit", data, "--config", cfg, "--out", tmp_path / "f") == 0
        res = json.loads((tmp_path / "f" / "fit.json").read_text())
        assert res["schema_version"] == RESULT_SCHEMA and res["kind"] == "fit"
        assert res["config"]["train"]["epochs"] == 40
        for key in ("pl_l_1", "pl_l_10", "pl_r_1", "pl_r_10"):
            assert np.isfinite(res[key])
        assert res["left"]["sigma"] > 0 and "certification" in res["left"]
        assert res["bound"]["left"]["side"] == "left"

    def test_deterministic(self, tmp_path, dataset):
        cfg, data = dataset
        run("fit", data, "--config", cfg, "--out", tmp_path / "a")
        run("fit", data, "--config", cfg, "--out", tmp_path / "b")
        assert (tmp_path / "a" / "fit.json").read_bytes() == (tmp_path / "b" / "fit.json").read_bytes()

    def test_ablation_flag(self, tmp_path, dataset):
        cfg, data = dataset
        assert run("fit", data, "--config", cfg, "--out", tmp_path / "f", "--ablation", "no-penalty") == 0
        res = json.loads((tmp_path / "f" / "fit.json").read_text())
        assert res["config"]["case"]["lambda"] == 0.0 and res["effective"]["case"]["lambda"] == 0.0
        assert res["config"]["ablation"] == "no-penalty"

    def test_case1_infeasible(self, tmp_path, dataset):
        cfg, data = dataset
        assert run("fit", data, "--config", cfg, "--out", tmp_path / "f", "--case", "case1") == 0
        res = json.loads((tmp_path / "f" / "fit.json").read_text())
        assert res["bound"] is None
        assert {"sigma_up", "sigma_lo", "feasible"} <= set(res["infeasible"]["left"])

    def test_ensemble_records_selection(self, tmp_path, dataset):
        cfg = dict(SMALL, ensemble={"n_members": 2, "seeds": [3, 4]})
        path = write_config(tmp_path, cfg, "ens.json")
        assert run("fit", dataset[1], "--config", path, "--out", tmp_path / "f") == 0
        ens = json.loads((tmp_path / "f" / "fit.json").read_text())["ensemble"]
        assert ens["seeds"] == [3, 4]
        assert ens["selected_left"] == int(np.argmin(ens["left_pl"]))
        assert ens["selected_right"] == int(np.argmax(ens["right_pl"]))

    def test_missing_file(self, tmp_path):
        assert run("fit", tmp_path / "nope.csv", "--out", tmp_path / "f") == 2

    def test_numeric_failure_exit_code(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("value\n" + "\n".join(["1e308", "-1e308"] * 20) + "\n")
        cfg = write_config(tmp_path, dict(SMALL, metrics={"truth": "empirical"}), "e.json")
        with np.errstate(all="ignore"):
            assert run("fit", p, "--config", cfg, "--out", tmp_path / "f") == 3


class TestBaselinesAndReport:
    def test_baselines_and_report(self, tmp_path, dataset):
        cfg, data = dataset
        assert run("baselines", data, "--config", cfg, "--out", tmp_path / "b") == 0
        assert run("fit", data, "--config", cfg, "--out", tmp_path / "f") == 0
        base = json.loads((tmp_path / "b" / "baselines.json").read_text())
        assert {r["method"] for r in base["table"]} == {"paired", "two-step", "quantile"}
        q = base["methods"]["quantile"]
        assert q["left"]["OB"] is not True or q["right"]["OB"] is not True
        assert "pl_l_1" in base["truth_pl"]
        out = tmp_path / "r"
        assert run("report", tmp_path / "f" / "fit.json", tmp_path / "b" / "baselines.json",
                   "--out", out, "--data", data) == 0
        with open(out / "table.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert rows[0]["method"] == "learned"
        fit = json.loads((tmp_path / "f" / "fit.json").read_text())
        left = fit["bound"]["left"]
        with open(out / "qq.csv") as fh:
            qq = [r for r in csv.DictReader(fh) if r["method"] == "learned" and r["side"] == "left"]
        mid = min(qq, key=lambda r: abs(float(r["tau"]) - 0.5))
        tau = float(mid["tau"])
        want = left["mu"] + std_normal_quantile(tau / (1 + left["epsilon"])) * left["sigma"]
        np.testing.assert_allclose(float(mid["bound_quantile"]), want, rtol=1e-12)
        for name in ("hist.csv", "cdf.csv"):
            assert (out / name).stat().st_size > 0

    def test_standard_normal_paired(self, tmp_path):
        cfg = write_config(tmp_path, {"data": {"type": "custom", "n": 200000, "seed": 2,
                                               "components": [[1.0, 0.0, 1.0]]}})
        run("generate", "--config", cfg, "--out", tmp_path / "g")
        assert run("baselines", tmp_path / "g" / "data.csv", "--config", cfg, "--out", tmp_path / "b") == 0
        p = json.loads((tmp_path / "b" / "baselines.json").read_text())["methods"]["paired"]
        for side in ("left", "right"):
            assert abs(p[side]["mu"]) <= 0.05 and abs(p[side]["sigma"] - 1) <= 0.05

    def test_report_schema_mismatch(self, tmp_path):
        p = tmp_path / "r.json"
        p.write_text(json.dumps({"schema_version": "other/0", "kind": "fit"}))
        assert run("report", p, "--out", tmp_path / "o") == 2

    def test_report_empty(self, tmp_path):
        assert run("report", "--out", tmp_path / "o") == 2


class TestFitConditional:
    def test_pipeline(self, tmp_path):
        cfg = {"data": {"type": "conditional", "n": 600, "seed": 3},
               "case": {"n_levels": 10},
               "train": {"epochs": 12, "batch_size": 300, "warmup_epochs": 2, "cooldown_epochs": 2},
               "ensemble": {"n_members": 2, "seeds": [1, 2]},
               "network": {"hidden": [8]}}
        path = write_config(tmp_path, cfg)
        run("generate", "--config", path, "--out", tmp_path / "g")
        assert run("fit-conditional", tmp_path / "g" / "data.csv", "--config", path, "--out", tmp_path / "c") == 0
        res = json.loads((tmp_path / "c" / "fit_conditional.json").read_text())
        sel = res["selection"]
        assert sel["selected_left"] == int(np.argmin(sel["left_pl"]))
        assert sel["selected_right"] == int(np.argmax(sel["right_pl"]))
        assert (tmp_path / "c" / res["weights"]["left"]).exists()
        assert "normalized_conservatism_l" in res

    def test_needs_feature_column(self, tmp_path, dataset):
        assert run("fit-conditional", dataset[1], "--config", dataset[0], "--out", tmp_path / "c") == 2

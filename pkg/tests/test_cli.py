import hashlib
import json
import os

import numpy as np
import pandas as pd
import pytest

from bmim.cli import main


def write_dataset(path, n=70, p=4, seed=0):
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((n, p))
    frame = pd.DataFrame(X, columns=[f"x{i + 1}" for i in range(p)])
    frame["age"] = gen.standard_normal(n)
    frame["y"] = 1.1 * X[:, 0] + 0.3 * frame["age"] + 0.25 * gen.standard_normal(n)
    frame.to_csv(path, index=False)
    return path


def common_args(csv, out, p=4):
    return ["--data", str(csv), "--outcome", "y",
            "--exposures", ",".join(f"x{i + 1}" for i in range(p)),
            "--covariates", "age", "--out", str(out)]


def fit_args(csv, out, extra=()):
    return (["fit"] + common_args(csv, out) +
            ["--method", "bmim", "--groups", "1-2;3-4", "--iters", "300",
             "--burnin", "80", "--thin", "2", "--chains", "1", "--seed", "21"]
            + list(extra))


class TestFit:
    def test_fit_writes_artifacts(self, tmp_path):
        csv = write_dataset(tmp_path / "d.csv")
        out = tmp_path / "out"
        assert main(fit_args(csv, out)) == 0
        for name in ("chain.npy", "chain_meta.json", "weights.csv",
                     "manifest.json"):
            assert (out / name).exists()
        table = pd.read_csv(out / "weights.csv")
        assert list(table.columns) == ["group", "exposure", "index_pip",
                                       "component_pip", "marginal_pip",
                                       "weight_est", "weight_lower",
                                       "weight_upper"]
        assert len(table) == 4

    def test_missing_outcome_column_is_config_error(self, tmp_path, capsys):
        csv = write_dataset(tmp_path / "d.csv")
        out = tmp_path / "out"
        args = fit_args(csv, out)
        args[args.index("--outcome") + 1] = "nope"
        assert main(args) == 2
        assert "nope" in capsys.readouterr().err

    def test_missing_data_file_is_config_error(self, tmp_path):
        assert main(fit_args(tmp_path / "absent.csv", tmp_path / "out")) == 2

    def test_rerun_is_byte_identical(self, tmp_path):
        csv = write_dataset(tmp_path / "d.csv")
        out = tmp_path / "out"
        assert main(fit_args(csv, out)) == 0
        digest1 = hashlib.sha256((out / "chain.npy").read_bytes()).hexdigest()
        meta1 = (out / "chain_meta.json").read_bytes()
        assert main(fit_args(csv, out)) == 0
        digest2 = hashlib.sha256((out / "chain.npy").read_bytes()).hexdigest()
        assert digest1 == digest2
        assert meta1 == (out / "chain_meta.json").read_bytes()

    def test_config_file_with_flag_override(self, tmp_path):
        csv = write_dataset(tmp_path / "d.csv")
        out = tmp_path / "out"
        config = {
            "data": {"path": str(csv), "outcome": "y",
                     "exposures": [f"x{i + 1}" for i in range(4)],
                     "covariates": ["age"]},
            "model": {"method": "bmim", "groups": "1-2;3-4"},
            "sampler": {"iterations": 200, "burnin": 50, "thin": 2,
                        "chains": 1, "seed": 5},
            "output": {"dir": str(out)},
        }
        cfg_path = tmp_path / "run.yaml"
        cfg_path.write_text(json.dumps(config))
        assert main(["fit", "--config", str(cfg_path), "--seed", "9"]) == 0
        meta = json.loads((out / "chain_meta.json").read_text())
        assert meta["settings"]["seed"] == 9

    def test_qgc_fit_writes_weight_table(self, tmp_path):
        csv = write_dataset(tmp_path / "d.csv")
        out = tmp_path / "out"
        args = ["fit"] + common_args(csv, out) + ["--method", "qgc", "--q", "4"]
        assert main(args) == 0
        table = pd.read_csv(out / "qgc_weights.csv")
        assert len(table) == 4
        assert (out / "qgc_summary.txt").exists()


class TestDownstream:
    @pytest.fixture()
    def fitted_dir(self, tmp_path):
        csv = write_dataset(tmp_path / "d.csv")
        out = tmp_path / "out"
        assert main(fit_args(csv, out)) == 0
        return csv, out

    def test_summarize_curves(self, fitted_dir):
        csv, out = fitted_dir
        assert main(["summarize"] + common_args(csv, out)) == 0
        assert (out / "curve_index1.csv").exists()
        frame = pd.read_csv(out / "curve_index1.csv")
        assert list(frame.columns) == ["grid_value", "mean", "lower", "upper",
                                       "label"]

    def test_single_index_yields_one_curve(self, tmp_path):
        csv = write_dataset(tmp_path / "d.csv")
        out = tmp_path / "bsim"
        args = ["fit"] + common_args(csv, out) + [
            "--method", "bsim", "--iters", "200", "--burnin", "50",
            "--thin", "2", "--chains", "1", "--seed", "3"]
        assert main(args) == 0
        assert main(["summarize"] + common_args(csv, out)) == 0
        curves = [f for f in os.listdir(out) if f.startswith("curve_index")]
        assert curves == ["curve_index1.csv"]

    def test_predict_contrast(self, fitted_dir, capsys):
        csv, out = fitted_dir
        assert main(["predict"] + common_args(csv, out) +
                    ["--q-hi", "0.6", "--q-lo", "0.5"]) == 0
        frame = pd.read_csv(out / "contrast.csv")
        assert list(frame.columns) == ["estimate", "lower", "upper"]
        assert len(frame) == 1
        assert "95% CI" in capsys.readouterr().out

    def test_summarize_without_chain_fails_cleanly(self, tmp_path):
        csv = write_dataset(tmp_path / "d.csv")
        assert main(["summarize"] + common_args(csv, tmp_path / "empty")) == 2

    def test_stale_manifest_warns(self, fitted_dir, capsys):
        csv, out = fitted_dir
        frame = pd.read_csv(csv)
        frame["y"] = frame["y"] + 0.5
        frame.to_csv(csv, index=False)
        assert main(["summarize"] + common_args(csv, out)) == 0
        assert "mismatch" in capsys.readouterr().err

    def test_cv_subcommand(self, tmp_path, capsys):
        csv = write_dataset(tmp_path / "d.csv")
        out = tmp_path / "cv"
        assert main(["cv"] + common_args(csv, out) +
                    ["--method", "qgc", "--q", "4", "--k", "3"]) == 0
        frame = pd.read_csv(out / "cv.csv")
        assert frame.loc[0, "method"] == "qgc"
        assert frame.loc[0, "k"] == 3


class TestSimulate:
    def test_four_methods_give_four_rows(self, tmp_path):
        out = tmp_path / "sim"
        args = ["simulate", "--out", str(out), "--scenarios", "B",
                "--methods", "qgc,bsim,bmim,bkmr", "--replicates", "1",
                "--exposure-count", "9", "--n-train", "50", "--n-test", "30",
                "--iters", "120", "--burnin", "40", "--thin", "2",
                "--chains", "1", "--seed", "2"]
        assert main(args) == 0
        table = pd.read_csv(out / "table1.csv")
        assert len(table) == 4
        assert set(table["method"]) == {"qgc", "bsim", "bmim", "bkmr"}
        per_rep = pd.read_csv(out / "simulation_replicates.csv")
        assert len(per_rep) == 4

import json
import os

import numpy as np
import pytest

from helpers import siso_truth
from ssfit.cli import main
from ssfit.io import load_dataset, load_model, save_dataset, save_model
from ssfit.statespace import Dataset, assemble_ladm
from test_io import sample_config


@pytest.fixture
def truth_model(tmp_path):
    spec, layout, theta = siso_truth()
    model = assemble_ladm(spec, theta, layout)
    path = tmp_path / "truth.json"
    save_model(path, model, ladm=spec)
    return str(path), model


class TestSimulate:
    def test_zero_input_no_noise(self, tmp_path, truth_model):
        path, _ = truth_model
        out = str(tmp_path / "sim.csv")
        code = main(["simulate", "--model", path, "--out", out,
                     "--gen", "zero", "--gen-samples", "50", "--no-noise"])
        assert code == 0
        data = load_dataset(out)
        assert np.array_equal(data.y, np.zeros((50, 1)))

    def test_seed_determinism_byte_identical(self, tmp_path, truth_model):
        path, _ = truth_model
        o1, o2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        for out in (o1, o2):
            assert main(["simulate", "--model", path, "--out", out,
                         "--seed", "9", "--gen-samples", "100"]) == 0
        with open(o1, "rb") as f1, open(o2, "rb") as f2:
            assert f1.read() == f2.read()

    def test_prbs_levels(self, tmp_path, truth_model):
        path, _ = truth_model
        out = str(tmp_path / "sim.csv")
        assert main(["simulate", "--model", path, "--out", out,
                     "--gen", "prbs", "--gen-amplitude", "1.5",
                     "--gen-samples", "64"]) == 0
        data = load_dataset(out)
        assert set(np.unique(data.u)) <= {-1.5, 1.5}

    def test_missing_model_is_input_error(self, tmp_path):
        code = main(["simulate", "--model", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "x.csv")])
        assert code == 1


class TestEval:
    def test_noise_free_data_gives_zero_index(self, tmp_path, truth_model):
        path, model = truth_model
        sim = str(tmp_path / "sim.csv")
        assert main(["simulate", "--model", path, "--out", sim,
                     "--gen-samples", "120", "--no-noise"]) == 0
        out = str(tmp_path / "eval")
        assert main(["eval", "--model", path, "--data", sim, "--out", out]) == 0
        summary = json.loads((tmp_path / "eval" / "eval_summary.json").read_text())
        assert summary["mean_q"] == pytest.approx(0.0, abs=1e-12)
        n = summary["n_samples"]
        expected = 0.5 * n * np.log(model.Re[0, 0])
        assert summary["nll"] == pytest.approx(expected, rel=1e-9)

    def test_dimension_mismatch(self, tmp_path, truth_model):
        path, _ = truth_model
        bad = str(tmp_path / "bad.csv")
        save_dataset(bad, Dataset(np.zeros((5, 2)), np.zeros((5, 1))))
        assert main(["eval", "--model", path, "--data", bad,
                     "--out", str(tmp_path / "o")]) == 1


class TestEig:
    def test_stable_filter_inside_disk(self, tmp_path, truth_model, capsys):
        path, _ = truth_model
        code = main(["eig", "--model", path, "--region", "disk 1 0",
                     "--epsilon", "0.03"])
        out = capsys.readouterr().out
        assert code == 0
        assert "direct membership: True" in out
        assert "oracle verdict" in out

    def test_region_parse_error(self, truth_model):
        path, _ = truth_model
        assert main(["eig", "--model", path, "--region", "sphere 1"]) == 1

    def test_jordan_block_against_left_half_plane(self, tmp_path, capsys):
        from ssfit.statespace import InnovationModel

        model = InnovationModel(
            np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 1)),
            np.eye(1, 2), np.zeros((1, 1)), np.zeros(2),
            np.zeros((2, 1)), np.eye(1))
        path = str(tmp_path / "jordan.json")
        save_model(path, model)
        code = main(["eig", "--model", path, "--region", "left_half_plane 0",
                     "--target", "open_loop", "--epsilon", "0.01"])
        out = capsys.readouterr().out
        assert "direct membership: False" in out
        assert "barrier value: inf" in out
        assert code == 0


class TestFitPipeline:
    def test_fit_then_artifacts(self, tmp_path, truth_model):
        path, _ = truth_model
        sim = str(tmp_path / "sim.csv")
        assert main(["simulate", "--model", path, "--out", sim,
                     "--seed", "4", "--gen-samples", "400"]) == 0
        cfg = tmp_path / "cfg.json"
        doc = sample_config()
        doc["constraints"] = []
        doc["solver"] = {"max_inner": 250}
        cfg.write_text(json.dumps(doc))
        out = str(tmp_path / "run")
        code = main(["fit", "--config", str(cfg), "--data", sim, "--out", out])
        assert code in (0, 2)
        assert os.path.exists(os.path.join(out, "model.json"))
        report = json.loads((tmp_path / "run" / "fit_report.json").read_text())
        assert np.isfinite(report["nll"])
        assert "filter_eigs" in report and "wall_time_s" in report

    def test_malformed_csv_reports_row(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(sample_config()))
        bad = tmp_path / "bad.csv"
        bad.write_text("t,u1,y1\n0,1,2\n1,x,3\n")
        code = main(["fit", "--config", str(cfg), "--data", str(bad),
                     "--out", str(tmp_path / "o")])
        err = capsys.readouterr().err
        assert code == 1
        assert ":3" in err

    def test_bad_config_schema(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        doc = sample_config()
        doc["mystery"] = True
        cfg.write_text(json.dumps(doc))
        code = main(["fit", "--config", str(cfg),
                     "--data", str(tmp_path / "missing.csv"),
                     "--out", str(tmp_path / "o")])
        assert code == 1

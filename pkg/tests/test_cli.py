from __future__ import annotations

import json

import numpy as np
import pytest

from screening_thresholds.cli import _parse_rule, main
from screening_thresholds.errors import ParameterError


def _write_sample(path, n_a: int = 40, n_b: int = 360, seed: int = 0):
    rng = np.random.default_rng(seed)
    lines = ["x,z,y,age"]
    for label, n, shift in (("a", n_a, 0.0), ("b", n_b, 1.0)):
        for value in shift + rng.standard_normal(n):
            sick = int(value > shift + 1.5)
            lines.append(f"{value:.6f},{label},{sick},{int(rng.integers(20, 70))}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _run(mocker, *argv: str) -> int:
    mocker.patch("sys.argv", ["screening-thresholds", *map(str, argv)])
    try:
        main()
    except SystemExit as e:
        return e.code
    return 0


class TestParseRule:
    def test_plain(self):
        assert _parse_rule("proportional") == {"kind": "proportional"}

    def test_gamma(self):
        assert _parse_rule("gamma:0.5") == {"kind": "gamma", "gamma": 0.5}

    def test_modified(self):
        assert _parse_rule("modified:k0=2,p_min=0.05") == {
            "kind": "modified",
            "k0": "2",
            "p_min": "0.05",
        }

    def test_subprob(self):
        assert _parse_rule("subprob:0.0489,0.851") == {"kind": "subprob", "g": [0.0489, 0.851]}

    @pytest.mark.parametrize(
        "text", ["median", "gamma:", "gamma:0.1,0.2", "modified:k=2", "constant:1"]
    )
    def test_invalid(self, text):
        with pytest.raises(ParameterError):
            _parse_rule(text)


class TestMain:
    def test_no_arguments_prints_help(self, mocker, capsys):
        assert _run(mocker) == 0
        assert "usage: screening-thresholds" in capsys.readouterr().out

    def test_thresholds_json(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        assert _run(mocker, "thresholds", "-i", data, "--alpha", "0.1", "-q") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["command"] == "thresholds"
        assert report["result"]["kind"] == "estimated_rule"
        assert report["result"]["dist_hat"]["labels"] == ["a", "b"]
        assert report["config"]["alpha"] == 0.1

    def test_thresholds_csv_to_file(self, mocker, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        out = tmp_path / "thresholds.csv"
        assert _run(mocker, "thresholds", "-i", data, "-f", "csv", "-o", out, "-q") == 0
        assert out.read_text().startswith("label,probability,level,standardized,raw,mu,sigma")

    def test_config_file_with_flag_override(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        config = tmp_path / "run.yaml"
        config.write_text(
            f"input: {data}\nalpha: 0.2\nrule:\n  kind: gamma\n  gamma: 0.2\n", encoding="utf-8"
        )
        assert _run(mocker, "thresholds", "-c", config, "--alpha", "0.05", "-q") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["config"]["alpha"] == 0.05
        assert report["config"]["rule"] == {"kind": "gamma", "gamma": 0.2}

    def test_dichotomized_classes(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        argv = ["thresholds", "-i", data, "--z-column", "age", "--dichotomize", "0.9", "-q"]
        assert _run(mocker, *argv) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["result"]["dist_hat"]["labels"] == ["high", "low"]

    def test_optimal(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        argv = ["optimal", "-i", data, "--delta", "2,3", "--sigma", "1,1", "--beta-k", "0.2,0.3"]
        assert _run(mocker, *argv, "--solver", "simplex", "-q") == 0
        report = json.loads(capsys.readouterr().out)
        result = report["result"]
        assert result["kind"] == "optimal_design"
        assert result["rule"]["rule"]["solver"] == "simplex"
        assert result["objective_greedy"] == pytest.approx(result["objective_simplex"], abs=1e-6)
        assert [c["rule"] for c in result["checks"]] == ["optimal", "proportional"]

    def test_optimal_needs_optimal_rule(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        assert _run(mocker, "optimal", "-i", data, "--rule", "constant", "-q") == 2
        assert "Error: ParameterError" in capsys.readouterr().err

    def test_evaluate_with_screening_file(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        screening = _write_sample(tmp_path / "screen.csv", n_a=100, n_b=100, seed=1)
        argv = ["evaluate", "-i", data, "-s", screening, "--y-column", "y", "-q"]
        assert _run(mocker, *argv) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["kind"] == "evaluation"
        assert result["overall"]["n"] == 200
        assert result["overall"]["tp"] is not None

    def test_evaluate_on_learning_sample(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        assert _run(mocker, "evaluate", "-i", data, "-q") == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["overall"]["n"] == 400
        assert result["overall"]["tp"] is None

    def test_bootstrap(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        argv = ["bootstrap", "-i", data, "--alpha", "0.15", "-B", "20", "--seed", "4"]
        assert _run(mocker, *argv, "--workers", "2", "--keep-replicates", "-q") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["result"]["b"] == 20
        assert report["result"]["seed"] == 4
        assert len(report["result"]["replicates"]) == 20
        assert report["config"]["bootstrap"]["keep_replicates"] is True
        assert report["config"]["workers"] == 2

    def test_simulate(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        argv = ["simulate", "-i", data, "--alpha", "0.15", "-N", "500", "-B", "3"]
        assert _run(mocker, *argv, "--smoothing", "pooled", "-q") == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["kind"] == "simulation"
        assert result["n_screen"] == 500
        assert result["smoothing"] == "pooled"

    def test_inadmissible_rule_exit_code(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv", n_a=200, n_b=200)
        assert _run(mocker, "thresholds", "-i", data, "--alpha", "0.01", "-q") == 0
        data = _write_sample(tmp_path / "skewed.csv", n_a=100, n_b=300)
        assert _run(mocker, "thresholds", "-i", data, "--alpha", "0.05", "-q") == 3
        err = capsys.readouterr().err
        assert "Error: AdmissibilityError" in err
        assert "fuse" in err

    def test_missing_input_flag(self, mocker, capsys):
        assert _run(mocker, "thresholds", "-q") == 2
        assert "Error: IngestError" in capsys.readouterr().err

    def test_missing_input_file(self, mocker, capsys, tmp_path):
        assert _run(mocker, "thresholds", "-i", tmp_path / "nope.csv", "-q") == 4
        assert "Error:" in capsys.readouterr().err

    def test_invalid_config_value(self, mocker, capsys, tmp_path):
        data = _write_sample(tmp_path / "learn.csv")
        assert _run(mocker, "thresholds", "-i", data, "--alpha", "1.5", "-q") == 2
        assert "ValidationError" in capsys.readouterr().err

    def test_input_not_utf8(self, mocker, capsys, tmp_path):
        data = tmp_path / "latin1.csv"
        data.write_bytes("x,z\n1.0,café\n2.0,b\n".encode("latin-1"))
        assert _run(mocker, "thresholds", "-i", data, "-q") == 2
        assert "Error: IngestError" in capsys.readouterr().err

    def test_config_not_utf8(self, mocker, capsys, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_bytes("labels: [café]\n".encode("latin-1"))
        assert _run(mocker, "thresholds", "-c", config, "-q") == 2
        assert "UnicodeDecodeError" in capsys.readouterr().err

    @staticmethod
    def _three_classes(path, counts=(64, 136, 200), seed: int = 2):
        rng = np.random.default_rng(seed)
        lines = ["x,z,y"]
        for label, n, shift in zip("abc", counts, (0.0, 1.0, 2.0), strict=True):
            for value in shift + rng.standard_normal(n):
                lines.append(f"{value:.6f},{label},{int(value > shift + 1.5)}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_fuse_minority(self, mocker, capsys, tmp_path):
        data = self._three_classes(tmp_path / "learn.csv")
        assert _run(mocker, "thresholds", "-i", data, "--alpha", "0.15", "-q") == 3
        capsys.readouterr()
        argv = ["thresholds", "-i", data, "--alpha", "0.15", "--fuse-minority", "-q"]
        assert _run(mocker, *argv) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["result"]["dist_hat"]["labels"] == ["a", "rest"]
        assert report["result"]["dist_hat"]["probs"] == pytest.approx([0.16, 0.84])
        assert report["config"]["fuse_minority"] is True

    def test_fuse_minority_relabels_screening_file(self, mocker, capsys, tmp_path):
        data = self._three_classes(tmp_path / "learn.csv")
        screening = self._three_classes(tmp_path / "screen.csv", counts=(30, 30, 40), seed=5)
        argv = ["evaluate", "-i", data, "-s", screening, "--alpha", "0.15", "--fuse-minority"]
        assert _run(mocker, *argv, "--y-column", "y", "-q") == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert [c["label"] for c in result["classes"]] == ["a", "rest"]
        assert [c["n"] for c in result["classes"]] == [30, 70]

    def test_fuse_minority_needs_minority_at_alpha(self, mocker, capsys, tmp_path):
        data = self._three_classes(tmp_path / "learn.csv", counts=(20, 180, 200))
        argv = ["thresholds", "-i", data, "--alpha", "0.15", "--fuse-minority", "-q"]
        assert _run(mocker, *argv) == 2
        assert "Error: ParameterError" in capsys.readouterr().err

"""Tests for the command-line interface.

Most cases drive ``main(argv)`` in process and inspect the JSON it
prints; determinism checks shell out so they cover the real entry
point.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from timo.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, EXIT_OK, main
from timo.container import load_dataset
from timo.synth import generate_dataset


@pytest.fixture(scope="module")
def easy(tmp_path_factory):
    """Noiseless dataset: zero-shot is perfect on it."""
    root = tmp_path_factory.mktemp("cli_easy")
    generate_dataset(root, classes=4, prompts=2, shots=2, dim=12,
                     noise=0.0, corrupt_fraction=0.0, val_queries=12,
                     test_queries=16, seed=5)
    return root


@pytest.fixture(scope="module")
def noisy(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_noisy")
    generate_dataset(root, classes=6, prompts=3, shots=2, dim=24,
                     noise=0.5, corrupt_fraction=0.25, val_queries=40,
                     test_queries=40, seed=9)
    return root


def _eval_args(root, *extra):
    return ["eval",
            "--support-manifest", str(root / "support.manifest.json"),
            "--test-manifest", str(root / "test.manifest.json"), *extra]


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def _stderr_error(capsys):
    lines = [l for l in capsys.readouterr().err.splitlines() if l.strip()]
    return json.loads(lines[-1])["error"]


class TestParsing:
    """Exit codes and JSON error envelopes for bad invocations."""

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == EXIT_OK

    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == EXIT_CONFIG
        assert _stderr_error(capsys)["type"] == "usage"

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["eval", "--bogus"]) == EXIT_CONFIG
        assert _stderr_error(capsys)["type"] == "usage"

    def test_out_abbreviation_is_ambiguous_for_diagnose(self, easy, capsys):
        """diagnose has both --output and --out-dir, so --out is rejected."""
        code = main(["diagnose", "--out", "x",
                     "--support-manifest", str(easy / "support.manifest.json"),
                     "--test-manifest", str(easy / "test.manifest.json")])
        assert code == EXIT_CONFIG
        assert _stderr_error(capsys)["type"] == "usage"


class TestSynthCommand:
    def test_writes_dataset_and_prints_manifests(self, tmp_path, capsys):
        code = main(["synth", "--out-dir", str(tmp_path / "ds"),
                     "--classes", "3", "--prompts", "2", "--shots", "1",
                     "--dim", "8", "--val-queries", "6",
                     "--test-queries", "6", "--seed", "1"])
        assert code == EXIT_OK
        paths = _stdout_json(capsys)
        assert set(paths) == {"support_manifest", "validation_manifest",
                              "test_manifest"}
        text, images, queries = load_dataset(paths["support_manifest"],
                                             paths["test_manifest"])
        assert text.n_classes == 3 and text.n_prompts == 2
        assert images.n_shots == 1
        assert len(queries[0]) == 6

    def test_class_overlap_flag_controls_direction_cosine(self, tmp_path,
                                                          capsys):
        code = main(["synth", "--out-dir", str(tmp_path / "ds"),
                     "--classes", "3", "--prompts", "1", "--shots", "1",
                     "--dim", "16", "--noise", "0", "--class-overlap", "0.3",
                     "--val-queries", "3", "--test-queries", "3",
                     "--seed", "2"])
        assert code == EXIT_OK
        paths = _stdout_json(capsys)
        text, _, _ = load_dataset(paths["support_manifest"])
        # noiseless single prompts are the class directions themselves
        gram = text.features[:, 0, :] @ text.features[:, 0, :].T
        np.testing.assert_allclose(np.diag(gram), 1.0, atol=1e-9)
        off = gram[~np.eye(3, dtype=bool)]
        np.testing.assert_allclose(off, 0.3, atol=1e-9)

    def test_missing_out_dir_rejected(self, capsys):
        assert main(["synth", "--classes", "3"]) == EXIT_CONFIG
        assert _stderr_error(capsys)["type"] == "config"


class TestEvalCommand:
    def test_zero_shot_is_perfect_on_noiseless_data(self, easy, capsys):
        assert main(_eval_args(easy, "--mode", "zero-shot")) == EXIT_OK
        report = _stdout_json(capsys)
        assert report["test"]["top1"] == 1.0
        assert report["backend"] is None

    def test_output_flag_writes_report_file(self, easy, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(_eval_args(easy, "--mode", "timo", "--output", str(out)))
        assert code == EXIT_OK
        assert _stdout_json(capsys) == {"report": str(out)}
        assert json.loads(out.read_text())["mode"] == "timo"

    def test_out_abbreviation_accepted_for_eval(self, easy, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = main(_eval_args(easy, "--mode", "base", "--out", str(out)))
        assert code == EXIT_OK
        assert out.exists()

    def test_flags_override_config_file(self, easy, tmp_path, capsys):
        cfg = {"mode": "timo",
               "alpha": 1.0,
               "support_manifest": "support.manifest.json",
               "test_manifest": "test.manifest.json"}
        cfg_path = easy / "run.json"
        cfg_path.write_text(json.dumps(cfg))
        code = main(["eval", "--config", str(cfg_path), "--alpha", "0.0"])
        assert code == EXIT_OK
        report = _stdout_json(capsys)
        assert report["hyperparameters"]["alpha"] == 0.0

    def test_config_paths_resolve_against_config_dir(self, easy, capsys):
        """Relative manifest paths in a config file are relative to it."""
        cfg_path = easy / "rel.json"
        cfg_path.write_text(json.dumps({
            "mode": "base",
            "support_manifest": "support.manifest.json",
            "test_manifest": "test.manifest.json"}))
        assert main(["eval", "--config", str(cfg_path)]) == EXIT_OK
        assert _stdout_json(capsys)["mode"] == "base"

    def test_missing_test_manifest_rejected(self, easy, capsys):
        code = main(["eval", "--mode", "timo",
                     "--support-manifest",
                     str(easy / "support.manifest.json")])
        assert code == EXIT_CONFIG
        assert "test_manifest" in _stderr_error(capsys)["message"]


class TestSearchCommand:
    def test_alpha_search_prints_best_point(self, noisy, capsys):
        code = main(["search", "--mode", "timo",
                     "--support-manifest", str(noisy / "support.manifest.json"),
                     "--validation-manifest",
                     str(noisy / "validation.manifest.json"),
                     "--test-manifest", str(noisy / "test.manifest.json")])
        assert code == EXIT_OK
        out = _stdout_json(capsys)
        assert out["search"]["evaluations"] == 9  # alpha axis only
        assert out["best"]["alpha"] is not None

    def test_zero_shot_mode_rejected(self, noisy, capsys):
        code = main(["search", "--mode", "zero-shot",
                     "--support-manifest",
                     str(noisy / "support.manifest.json"),
                     "--validation-manifest",
                     str(noisy / "validation.manifest.json")])
        assert code == EXIT_CONFIG

    def test_missing_validation_rejected(self, noisy, capsys):
        code = main(["search", "--mode", "timo-s",
                     "--support-manifest",
                     str(noisy / "support.manifest.json")])
        assert code == EXIT_CONFIG
        assert "validation_manifest" in _stderr_error(capsys)["message"]


class TestDiagnoseCommand:
    def test_writes_three_documented_files(self, noisy, tmp_path, capsys):
        out_dir = tmp_path / "diag"
        code = main(["diagnose", "--out-dir", str(out_dir),
                     "--support-manifest", str(noisy / "support.manifest.json"),
                     "--test-manifest", str(noisy / "test.manifest.json")])
        assert code == EXIT_OK
        paths = _stdout_json(capsys)
        assert set(paths) == {"anomaly", "prompt_quality", "q_statistic"}

        anomaly = (out_dir / "anomaly.csv").read_text().splitlines()
        assert anomaly[0] == ("class_index,class_name,image_prototype_count,"
                              "tgi_refined_count")
        assert len(anomaly) == 1 + 6  # one row per class

        quality = (out_dir / "prompt_quality.csv").read_text().splitlines()
        assert quality[0] == ("class_index,class_name,rank,prompt_index,"
                              "similarity")
        assert len(quality) == 1 + 6 * 3  # one row per (class, prompt)
        ranks = [int(line.split(",")[2]) for line in quality[1:4]]
        assert ranks == [0, 1, 2]

        q = json.loads((out_dir / "q_statistic.json").read_text())
        assert q["pair"] == ["image_branch", "text_branch"]
        assert {"n11", "n00", "n10", "n01", "q", "undefined"} <= set(q)
        assert q["n11"] + q["n00"] + q["n10"] + q["n01"] == 40


class TestFailureModes:
    def test_missing_tensor_file_is_io_error(self, tmp_path, capsys):
        generate_dataset(tmp_path, classes=3, prompts=2, shots=1, dim=8,
                         noise=0.1, val_queries=5, test_queries=5, seed=3)
        (tmp_path / "test.tsr").unlink()
        assert main(_eval_args(tmp_path, "--mode", "base")) == EXIT_IO
        assert _stderr_error(capsys)["type"] == "io"

    def test_corrupt_tensor_magic_is_data_error(self, tmp_path, capsys):
        generate_dataset(tmp_path, classes=3, prompts=2, shots=1, dim=8,
                         noise=0.1, val_queries=5, test_queries=5, seed=3)
        blob = bytearray((tmp_path / "text.tsr").read_bytes())
        blob[:4] = b"NOPE"
        (tmp_path / "text.tsr").write_bytes(bytes(blob))
        assert main(_eval_args(tmp_path, "--mode", "base")) == EXIT_DATA
        assert _stderr_error(capsys)["type"] == "data"

    def test_tiny_val_fraction_is_data_error(self, noisy, capsys):
        code = main(["search", "--mode", "timo",
                     "--support-manifest", str(noisy / "support.manifest.json"),
                     "--validation-manifest",
                     str(noisy / "validation.manifest.json"),
                     "--val-fraction", "0.001"])
        assert code == EXIT_DATA

    def test_unknown_config_file_key_rejected(self, easy, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({
            "mode": "timo", "support_manifest": "s", "test_manifest": "t",
            "mystery": 1}))
        assert main(["eval", "--config", str(cfg_path)]) == EXIT_CONFIG
        assert "mystery" in _stderr_error(capsys)["message"]

    def test_invalid_json_config_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "broken.json"
        cfg_path.write_text("{nope")
        assert main(["eval", "--config", str(cfg_path)]) == EXIT_CONFIG


class TestDeterminism:
    """The installed entry point reproduces results byte for byte."""

    def test_search_trace_reruns_identically(self, noisy, tmp_path):
        traces = []
        outputs = []
        for tag in ("a", "b"):
            trace = tmp_path / f"trace_{tag}.csv"
            cmd = [sys.executable, "-m", "timo.cli", "search",
                   "--mode", "timo-s",
                   "--support-manifest", str(noisy / "support.manifest.json"),
                   "--validation-manifest",
                   str(noisy / "validation.manifest.json"),
                   "--trace-output", str(trace), "--seed", "11"]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            traces.append(trace.read_bytes())
            parsed = json.loads(proc.stdout)
            parsed["search"].pop("trace_path")  # differs by construction
            outputs.append(parsed)
        assert traces[0] == traces[1]
        assert outputs[0] == outputs[1]
        # full timo-s grid for 3 prompts: 9 alphas x 6 betas x 20 gammas
        assert traces[0].decode().count("\n") == 1 + 9 * 6 * 20

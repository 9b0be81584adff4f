"""End-to-end tests for the command-line interface."""
from __future__ import annotations

import json
import pathlib
import shutil

import pytest

from causalops.cli import (
    EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main,
)

ASSETS = pathlib.Path(__file__).resolve().parents[1] / "src" / "causalops" / "assets"


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    """One scenario-S simulation output shared by the CLI tests."""
    out = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--scenario", "S", "--seed", "7",
                 "--out", str(out)])
    assert code == EXIT_OK
    return out


@pytest.fixture(scope="module")
def built_dir(tmp_path_factory, sim_dir):
    """Graph built from the packaged description with the reference-answer
    backend."""
    out = tmp_path_factory.mktemp("built")
    code = main([
        "build-graph",
        "--trace", str(ASSETS / "trace_model_serving_s.json"),
        "--metrics", str(ASSETS / "metrics_model_serving.json"),
        "--common", str(ASSETS / "common_metrics.json"),
        "--backend", f"oracle:{sim_dir / 'truth_confounder.json'}",
        "--out", str(out),
    ])
    assert code == EXIT_OK
    return out


class TestExitCodes:
    def test_unknown_flag_usage(self, capsys):
        assert main(["simulate", "--no-such-flag"]) == EXIT_USAGE
        assert "--no-such-flag" in capsys.readouterr().err

    def test_unknown_subcommand_usage(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_missing_required_usage(self):
        assert main(["simulate"]) == EXIT_USAGE  # --out is required

    def test_validation_error_exit_1(self, tmp_path):
        # A custom fault spec without magnitude is a config error.
        assert main(["simulate", "--fault", "network_slowdown",
                     "--target", "NoSuchLink",
                     "--out", str(tmp_path)]) == EXIT_INVALID

    def test_runtime_error_exit_2(self, tmp_path, sim_dir):
        bad = tmp_path / "not_json.json"
        bad.write_text("{ this is not json")
        assert main(["evaluate", "--pred", str(bad),
                     "--truth", str(sim_dir / "truth_causal.json")]) in (
                         EXIT_INVALID, EXIT_RUNTIME)


class TestSimulate:
    def test_outputs_written(self, sim_dir):
        for name in ("dataset_none.csv", "trace.json",
                     "truth_confounder.json", "truth_causal.json",
                     "fault_none.json"):
            assert (sim_dir / name).exists(), name

    def test_deterministic_rerun(self, sim_dir, tmp_path):
        code = main(["simulate", "--scenario", "S", "--seed", "7",
                     "--out", str(tmp_path)])
        assert code == EXIT_OK
        for name in ("dataset_none.csv", "trace.json", "truth_causal.json"):
            assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()

    def test_suite_fault(self, tmp_path):
        code = main(["simulate", "--scenario", "S", "--fault", "suite",
                     "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert len(list(tmp_path.glob("dataset_*.csv"))) == 7

    def test_named_fault(self, tmp_path):
        code = main(["simulate", "--scenario", "S",
                     "--fault", "batch_misconfig", "--out", str(tmp_path)])
        assert code == EXIT_OK
        meta = json.loads((tmp_path / "fault_batch_misconfig.json").read_text())
        assert meta["fault"] == "batch_misconfig"


class TestBuildEvaluate:
    def test_build_then_evaluate_perfect(self, built_dir, sim_dir, capsys):
        code = main(["evaluate",
                     "--pred", str(built_dir / "causal_graph.json"),
                     "--truth", str(sim_dir / "truth_causal.json")])
        assert code == EXIT_OK
        score = json.loads(capsys.readouterr().out)
        assert score["f1"] == 1.0

    def test_evaluate_identical_files(self, sim_dir, capsys):
        code = main(["evaluate",
                     "--pred", str(sim_dir / "truth_causal.json"),
                     "--truth", str(sim_dir / "truth_causal.json")])
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)["f1"] == 1.0

    def test_evaluate_skeleton_flag(self, sim_dir, capsys):
        code = main(["evaluate", "--skeleton",
                     "--pred", str(sim_dir / "truth_causal.json"),
                     "--truth", str(sim_dir / "truth_causal.json")])
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)["f1"] == 1.0

    def test_noisy_backend_accepted(self, sim_dir, tmp_path):
        code = main([
            "build-graph",
            "--trace", str(ASSETS / "trace_model_serving_s.json"),
            "--metrics", str(ASSETS / "metrics_model_serving.json"),
            "--common", str(ASSETS / "common_metrics.json"),
            "--backend", f"noisy:{sim_dir / 'truth_confounder.json'}:0.0",
            "--cache", str(tmp_path / "cache.json"),
            "--out", str(tmp_path),
        ])
        assert code == EXIT_OK
        assert (tmp_path / "cache.json").exists()
        assert (tmp_path / "suggested_pairs.json").exists()

    def test_unknown_backend_invalid(self, tmp_path):
        code = main([
            "build-graph",
            "--trace", str(ASSETS / "trace_model_serving_s.json"),
            "--metrics", str(ASSETS / "metrics_model_serving.json"),
            "--common", str(ASSETS / "common_metrics.json"),
            "--backend", "telepathy",
            "--out", str(tmp_path),
        ])
        assert code == EXIT_INVALID


class TestValidate:
    def test_truth_decisions(self, sim_dir, tmp_path, capsys):
        code = main([
            "validate",
            "--graph", str(sim_dir / "truth_causal.json"),
            "--data", str(sim_dir / "dataset_none.csv"),
            "--decisions", f"truth:{sim_dir / 'truth_causal.json'}",
            "--out", str(tmp_path / "refined.json"),
        ])
        assert code == EXIT_OK
        refined = (tmp_path / "refined.json").read_text()
        assert json.loads(refined)["edges"]

    def test_decisions_file(self, sim_dir, tmp_path):
        decisions = tmp_path / "decisions.json"
        decisions.write_text("[]")  # reject everything
        code = main([
            "validate",
            "--graph", str(sim_dir / "truth_causal.json"),
            "--data", str(sim_dir / "dataset_none.csv"),
            "--decisions", str(decisions),
            "--out", str(tmp_path / "refined.json"),
        ])
        assert code == EXIT_OK
        before = json.loads((sim_dir / "truth_causal.json").read_text())
        after = json.loads((tmp_path / "refined.json").read_text())
        assert sorted((e["src"], e["dst"]) for e in before["edges"]) \
            == sorted((e["src"], e["dst"]) for e in after["edges"])


class TestLocalizeCommand:
    def test_attribution_output(self, sim_dir, tmp_path, capsys):
        fault_dir = tmp_path / "fault"
        code = main(["simulate", "--scenario", "S", "--seed", "1007",
                     "--fault", "batch_misconfig", "--out", str(fault_dir)])
        assert code == EXIT_OK
        capsys.readouterr()  # drain the simulate status line
        code = main([
            "localize",
            "--graph", str(sim_dir / "truth_causal.json"),
            "--normal", str(sim_dir / "dataset_none.csv"),
            "--anomalous", str(fault_dir / "dataset_batch_misconfig.csv"),
            "--symptom", "Client.latency",
            "--topk", "3",
        ])
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["symptom"] == "Client.latency"
        assert report["ranking"]
        assert all(v >= 0 for v in report["scores"].values())

    def test_unknown_symptom_invalid(self, sim_dir):
        code = main([
            "localize",
            "--graph", str(sim_dir / "truth_causal.json"),
            "--normal", str(sim_dir / "dataset_none.csv"),
            "--anomalous", str(sim_dir / "dataset_none.csv"),
            "--symptom", "No.such_node",
        ])
        assert code == EXIT_INVALID


class TestAuxCommands:
    def test_dump_pairs(self, capsys):
        code = main([
            "dump-pairs",
            "--trace", str(ASSETS / "trace_model_serving_s.json"),
            "--metrics", str(ASSETS / "metrics_model_serving.json"),
            "--common", str(ASSETS / "common_metrics.json"),
        ])
        assert code == EXIT_OK
        lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
        assert lines
        for row in lines:
            assert set(row) == {"a", "b", "locality", "interaction", "perspective"}

    def test_baseline_pc(self, sim_dir, tmp_path):
        code = main(["baseline-pc",
                     "--data", str(sim_dir / "dataset_none.csv"),
                     "--out", str(tmp_path / "pc.json")])
        assert code == EXIT_OK
        obj = json.loads((tmp_path / "pc.json").read_text())
        assert obj["nodes"]

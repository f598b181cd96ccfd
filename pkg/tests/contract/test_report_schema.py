"""
Contract tests for the benchmark report, residual table and timings formats.
"""
import json

import pytest

from cli.main import EXIT_OK, main
from shared.artifact_manager import header_lines, read_csv_with_header
from tests.conftest import set_flags

FOLD_KEYS = {"fold_id", "group", "method", "status", "n_test", "mse_per_target", "mse_pooled",
             "variance_mean", "clamped", "config_digest", "error"}
SUMMARY_KEYS = {"method", "label", "n_folds", "n_failed", "mse_mean", "mse_std", "mse_per_target_mean",
                "config_digest"}
PROVENANCE_KEYS = {"seed", "config_digest", "dataset_digest", "tool_version", "command", "method_digests"}


@pytest.fixture
def benchmark_run(cli_inputs, out_dir):
    args = ["benchmark", *cli_inputs, "--methods", "gbdt,mlp,ensemble", "--protocol", "loso",
            "--seed", "1", "--out", str(out_dir), *set_flags()]
    assert main(args) == EXIT_OK
    return out_dir


class TestReportJson:
    """Shape of benchmark_<protocol>_seed<seed>.json"""

    def load(self, out_dir):
        return json.loads((out_dir / "reports" / "benchmark_loso_seed1.json").read_text(encoding="utf-8"))

    def test_top_level(self, benchmark_run):
        report = self.load(benchmark_run)
        assert report["protocol"] == "loso"
        assert report["seed"] == 1
        assert report["n_folds"] == 3
        assert report["complete"] is True
        assert {"per_solvent", "residual_bias", "metadata", "provenance", "references"} <= set(report)

    def test_methods_and_folds(self, benchmark_run):
        report = self.load(benchmark_run)
        assert [m["method"] for m in report["methods"]] == ["gbdt", "mlp", "ensemble"]
        assert all(set(m) == SUMMARY_KEYS for m in report["methods"])
        assert len(report["folds"]) == 9
        assert all(set(f) == FOLD_KEYS for f in report["folds"])
        assert [(f["fold_id"], f["method"]) for f in report["folds"][:3]] == \
            [(0, "gbdt"), (0, "mlp"), (0, "ensemble")]
        assert all(f["clamped"] for f in report["folds"])

    def test_provenance_and_metadata(self, benchmark_run):
        report = self.load(benchmark_run)
        assert set(report["provenance"]) == PROVENANCE_KEYS
        assert report["provenance"]["seed"] == 1
        assert set(report["provenance"]["method_digests"]) == {"gbdt", "mlp"}
        metadata = report["metadata"]
        assert metadata["residual_sign"] == "true - predicted"
        assert metadata["n_rows"] == 60
        assert metadata["drfp_width"] == 2048
        assert metadata["variance_mode"] == "per_row"


class TestSideFiles:
    """Residual CSV and timings JSON"""

    def test_residuals(self, benchmark_run):
        path = str(benchmark_run / "data" / "residuals_benchmark_loso_seed1.csv")
        frame = read_csv_with_header(path)
        assert list(frame.columns) == ["fold_id", "row_id", "target", "true", "predicted", "residual",
                                       "method", "solvent", "protocol"]
        assert len(frame) == 3 * 60 * 3
        assert (frame["residual"] - (frame["true"] - frame["predicted"])).abs().max() < 1e-9
        header = dict(line.split("=", 1) for line in header_lines(path))
        assert header["seed"] == "1"

    def test_timings(self, benchmark_run):
        timings = json.loads((benchmark_run / "reports" / "timings_benchmark_loso_seed1.json")
                             .read_text(encoding="utf-8"))
        assert set(timings["provenance"]) == PROVENANCE_KEYS
        assert timings["provenance"]["seed"] == 1
        assert len(timings["folds"]) == 9
        assert all(t["wall_time"] >= 0 for t in timings["folds"])

    def test_text_table(self, benchmark_run):
        path = benchmark_run / "reports" / "benchmark_loso_seed1.txt"
        header = dict(line.split("=", 1) for line in header_lines(str(path)))
        assert {"seed", "config_digest", "dataset_digest", "tool_version"} <= set(header)
        assert header["seed"] == "1"
        text = path.read_text(encoding="utf-8")
        body = [line for line in text.splitlines() if not line.startswith("#")]
        assert body[0] == "Protocol loso, seed 1, 3 folds"
        assert "Ensemble" in text

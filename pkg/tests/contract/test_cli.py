"""
Contract tests for the command-line surface: exit codes, artifact names and
byte-identical reruns.
"""
import numpy as np
import pandas as pd

from cli.main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from shared.artifact_manager import header_lines, read_csv_with_header
from tests.conftest import set_flags


class TestUsageErrors:
    """Bad invocations exit with code 2"""

    def test_help(self):
        assert main(["--help"]) == EXIT_OK

    def test_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_missing_data(self, out_dir):
        assert main(["benchmark", "--out", str(out_dir)]) == EXIT_USAGE

    def test_data_file_not_found(self, out_dir, tmp_path):
        assert main(["benchmark", "--data", str(tmp_path / "nope.csv"), "--out", str(out_dir)]) == EXIT_USAGE

    def test_malformed_override(self, cli_inputs, out_dir):
        assert main(["benchmark", *cli_inputs, "--set", "gnn.hidden", "--out", str(out_dir)]) == EXIT_USAGE

    def test_unknown_method(self, cli_inputs, out_dir):
        assert main(["benchmark", *cli_inputs, "--methods", "svm", "--out", str(out_dir)]) == EXIT_USAGE

    def test_missing_config_file(self, cli_inputs, out_dir, tmp_path):
        args = ["benchmark", *cli_inputs, "--config", str(tmp_path / "run.json"), "--out", str(out_dir)]
        assert main(args) == EXIT_USAGE


class TestFingerprint:
    """Tests for the fingerprint command"""

    def test_default_reaction_and_width(self, out_dir):
        assert main(["fingerprint", "--out", str(out_dir)]) == EXIT_OK
        path = out_dir / "data" / "fingerprints_r3_w2048.csv"
        frame = read_csv_with_header(str(path))
        assert len(frame) == 1
        assert len(frame["drfp_hex"][0]) == 2048 // 4
        header = dict(line.split("=", 1) for line in header_lines(str(path)))
        assert {"seed", "config_digest", "tool_version"} <= set(header)

    def test_identical_sides_give_empty_fingerprint(self, out_dir, tmp_path):
        source = tmp_path / "rxn.csv"
        pd.DataFrame({"rxn_smiles": ["CCO>>CCO", "CC#N>>CC(=O)N"]}).to_csv(source, index=False)
        args = ["fingerprint", "--input", str(source), "--width", "64", "--radius", "2", "--out", str(out_dir)]
        assert main(args) == EXIT_OK
        frame = read_csv_with_header(str(out_dir / "data" / "fingerprints_r2_w64.csv"))
        assert frame["drfp_hex"][0] == "0" * 16
        assert frame["drfp_hex"][1] != "0" * 16

    def test_width_must_be_power_of_two(self, out_dir):
        assert main(["fingerprint", "--width", "1000", "--out", str(out_dir)]) == EXIT_USAGE

    def test_unparseable_reaction(self, out_dir, tmp_path):
        source = tmp_path / "rxn.csv"
        source.write_text("rxn_smiles\nC(C>>CC\n", encoding="utf-8")
        assert main(["fingerprint", "--input", str(source), "--out", str(out_dir)]) == EXIT_FAILURE


class TestBenchmark:
    """Tests for the benchmark command"""

    def run(self, cli_inputs, out_dir, *extra, overrides=None):
        return main(["benchmark", *cli_inputs, "--methods", "gbdt", "--protocol", "loso",
                     "--out", str(out_dir), *set_flags(overrides), *extra])

    def test_artifacts(self, cli_inputs, out_dir):
        assert self.run(cli_inputs, out_dir) == EXIT_OK
        for path in ("reports/benchmark_loso_seed0.json", "reports/benchmark_loso_seed0.txt",
                     "reports/timings_benchmark_loso_seed0.json", "data/residuals_benchmark_loso_seed0.csv"):
            assert (out_dir / path).is_file(), path

    def test_rerun_is_byte_identical(self, cli_inputs, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert self.run(cli_inputs, first) == EXIT_OK
        assert self.run(cli_inputs, second) == EXIT_OK
        for path in ("reports/benchmark_loso_seed0.json", "reports/benchmark_loso_seed0.txt",
                     "data/residuals_benchmark_loso_seed0.csv"):
            assert (first / path).read_bytes() == (second / path).read_bytes()

    def test_seed_changes_file_names(self, cli_inputs, out_dir):
        assert self.run(cli_inputs, out_dir, "--seed", "3") == EXIT_OK
        assert (out_dir / "reports" / "benchmark_loso_seed3.json").is_file()

    def test_failed_fold_exits_one(self, cli_inputs, out_dir):
        overrides = {"gbdt": {"min_samples_leaf": 1000}}
        assert self.run(cli_inputs, out_dir, overrides=overrides) == EXIT_FAILURE
        assert (out_dir / "reports" / "benchmark_loso_seed0.json").is_file()


class TestTrainAndPredict:
    """Tests for train followed by predict"""

    def test_checkpoint_round_trip(self, cli_inputs, out_dir):
        flags = set_flags()
        assert main(["train", *cli_inputs, "--methods", "gbdt", "--out", str(out_dir), *flags]) == EXIT_OK
        checkpoint = out_dir / "checkpoints" / "gbdt_seed0.npz"
        assert checkpoint.is_file()
        assert (out_dir / "data" / "curve_gbdt_seed0.csv").is_file()

        args = ["predict", "--checkpoint", str(checkpoint), "--method", "gbdt", *cli_inputs,
                "--out", str(out_dir), *flags]
        assert main(args) == EXIT_OK
        path = out_dir / "data" / "predictions_gbdt_seed0.csv"
        frame = read_csv_with_header(str(path))
        assert list(frame.columns) == ["row_id", "solvent", "pred_sm", "pred_p2", "pred_p3"]
        values = frame[["pred_sm", "pred_p2", "pred_p3"]].to_numpy()
        assert np.all((values >= 0.0) & (values <= 1.0))
        header = dict(line.split("=", 1) for line in header_lines(str(path)))
        assert header["clamped"] == "true"

    def test_predict_refuses_other_configuration(self, cli_inputs, out_dir):
        assert main(["train", *cli_inputs, "--methods", "gbdt", "--out", str(out_dir), *set_flags()]) == EXIT_OK
        checkpoint = out_dir / "checkpoints" / "gbdt_seed0.npz"
        args = ["predict", "--checkpoint", str(checkpoint), "--method", "gbdt", *cli_inputs,
                "--out", str(out_dir), "--set", "gbdt.iterations=99"]
        assert main(args) == EXIT_FAILURE

    def test_ensemble_is_not_trainable(self, cli_inputs, out_dir):
        assert main(["train", *cli_inputs, "--methods", "ensemble", "--out", str(out_dir)]) == EXIT_USAGE


class TestValidateAndPca:
    """Tests for the validate and pca commands"""

    def test_validate_is_report_only(self, out_dir, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text(
            "solvent_a_name,solvent_b_name,pct_b,temperature_c,residence_time_s,yield_sm,yield_p2,yield_p3\n"
            "Methanol,Ethanol,150,80,120,0.5,0.3,0.1\n"
            "Methanol,Ethanol,50,80,120,0.5,0.3,0.1\n",
            encoding="utf-8",
        )
        assert main(["validate", "--data", str(data), "--out", str(out_dir)]) == EXIT_OK
        report = (out_dir / "reports" / "validation_mixtures.json").read_text(encoding="utf-8")
        assert '"is_clean": false' in report

    def test_pca(self, out_dir, tmp_path):
        rng = np.random.default_rng(0)
        raw = pd.DataFrame(rng.normal(size=(6, 4)), columns=["d1", "d2", "d3", "d4"])
        raw.insert(0, "solvent", [f"s{i}" for i in range(6)])
        source = tmp_path / "raw.csv"
        raw.to_csv(source, index=False)
        assert main(["pca", "--table", str(source), "--k", "2", "--out", str(out_dir)]) == EXIT_OK
        path = out_dir / "data" / "pca_raw_k2.csv"
        frame = read_csv_with_header(str(path))
        assert list(frame.columns) == ["solvent", "pc1", "pc2"]
        header = dict(line.split("=", 1) for line in header_lines(str(path)))
        assert len(header["explained_variance_ratio"].split(",")) == 2

    def test_pca_k_out_of_range(self, out_dir, tmp_path):
        source = tmp_path / "raw.csv"
        pd.DataFrame({"solvent": ["a", "b"], "d1": [1.0, 2.0]}).to_csv(source, index=False)
        assert main(["pca", "--table", str(source), "--k", "5", "--out", str(out_dir)]) == EXIT_USAGE

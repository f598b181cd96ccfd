"""
Unit tests for config resolution, the training loop and model bundles.
"""
import numpy as np
import pytest

from autodiff.tensor import Tensor
from predictors.configs import (
    DeepModelConfig,
    GbdtConfig,
    GnnConfig,
    TrainConfig,
    merge_overrides,
    parse_override,
)
from predictors.deepmodel import DeepModel
from predictors.training import (
    ModelBundle,
    TrainingCurve,
    fit_network,
    load_bundle,
    model_family,
    resolve_configs,
    train,
)
from shared.errors import CheckpointMismatch, NonFiniteLoss
from shared.models import Method


class TestResolveConfigs:
    """Tests for resolve_configs and per-family defaults"""

    def test_gnn_defaults(self):
        model, training = resolve_configs("gnn")
        assert isinstance(model, GnnConfig)
        assert training.lr == 3e-4
        assert training.plateau_scheduler
        assert (training.plateau_factor, training.plateau_patience) == (0.7, 30)
        assert training.early_stopping_patience is None
        assert (training.batch_size, training.max_epochs, training.clip_norm, training.weight_decay) == \
            (128, 400, 1.0, 1e-5)

    def test_deepmodel_defaults(self):
        model, training = resolve_configs("deepmodel")
        assert isinstance(model, DeepModelConfig) and not model.plain_mlp
        assert training.lr == 7e-4
        assert training.early_stopping_patience == 50
        assert not training.plateau_scheduler

    def test_mlp_is_plain(self):
        model, _ = resolve_configs("mlp", {"deepmodel": {"plain_mlp": False}})
        assert model.plain_mlp

    def test_gbdt_has_no_train_config(self):
        model, training = resolve_configs("gbdt", {"gbdt": {"iterations": 7}})
        assert isinstance(model, GbdtConfig)
        assert model.iterations == 7
        assert training is None

    def test_ablations_switch_one_flag(self):
        expected = {
            Method.GNN_NO_DRFP: "use_drfp",
            Method.GNN_NO_REACTANT_PRODUCT_GRAPHS: "use_reactant_product_graphs",
            Method.GNN_NO_MIXTURE_ENCODER: "use_mixture_encoder",
            Method.GNN_NO_ATTENTION: "use_attention",
        }
        for method, flag in expected.items():
            model, _ = resolve_configs(method.value, {"gnn": {flag: True}})
            assert getattr(model, flag) is False
            others = [f for f in expected.values() if f != flag]
            assert all(getattr(model, f) for f in others)

    def test_overrides_and_dtype(self, tiny_overrides):
        model, training = resolve_configs("gnn", tiny_overrides, dtype="float64")
        assert model.hidden == 16
        assert training.max_epochs == 3
        assert training.dtype == "float64"

    def test_model_family(self):
        assert model_family("gnn_single_task") == "gnn"
        assert model_family("mlp") == "deepmodel"
        with pytest.raises(ValueError):
            model_family("ensemble")


class TestOverrides:
    """Tests for parse_override and merge_overrides"""

    def test_parse_json_values(self):
        assert parse_override("gnn.hidden=128") == ("gnn", "hidden", 128)
        assert parse_override("gnn.head_hidden=[64, 32]") == ("gnn", "head_hidden", [64, 32])
        assert parse_override("train.dtype=float64") == ("train", "dtype", "float64")

    def test_parse_errors(self):
        with pytest.raises(ValueError):
            parse_override("gnn.hidden")
        with pytest.raises(ValueError):
            parse_override("hidden=3")

    def test_merge_revalidates(self):
        with pytest.raises(ValueError):
            merge_overrides(GnnConfig(), {"heads": 7})
        with pytest.raises(ValueError):
            merge_overrides(TrainConfig(), {"unknown": 1})

    def test_merge_ignores_none(self):
        assert merge_overrides(GbdtConfig(), {"iterations": None}) == GbdtConfig()


class TestFitNetwork:
    """Tests for fit_network"""

    def test_non_finite_loss_names_epoch(self):
        model = DeepModel(3, DeepModelConfig(hidden=8, tokens=2, heads=2, swiglu_blocks=1, head_hidden=4))
        x = np.full((4, 3), np.nan)
        with pytest.raises(NonFiniteLoss) as exc:
            fit_network(model, lambda idx: Tensor(x[idx]), np.zeros((4, 3)), TrainConfig(max_epochs=2), 0)
        assert exc.value.epoch == 0

    def test_curve_bounded_by_max_epochs(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(16, 3)), rng.uniform(size=(16, 3))
        model = DeepModel(3, DeepModelConfig(hidden=8, tokens=2, heads=2, swiglu_blocks=1, head_hidden=4), seed=0)
        curve = fit_network(model, lambda idx: Tensor(x[idx]), y, TrainConfig(max_epochs=4, batch_size=8, lr=1e-2), 0)
        assert len(curve) == 4
        assert curve.best_epoch is not None
        assert not model.training

    def test_early_stop_when_validation_flat(self):
        """lr so small that validation loss never improves after the first epoch"""
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(8, 3)), rng.uniform(size=(8, 3))
        model = DeepModel(3, DeepModelConfig(hidden=8, tokens=2, heads=2, swiglu_blocks=1, head_hidden=4,
                                             dropout=0.0, head_dropout=0.0), seed=0)
        config = TrainConfig(max_epochs=50, lr=1e-300, early_stopping_patience=5, dtype="float64")
        curve = fit_network(model, lambda idx: Tensor(x[idx]), y, config, 0,
                            lambda idx: Tensor(x[idx]), y)
        assert curve.stopped_early
        assert len(curve) == curve.best_epoch + 5 + 1


class TestTrain:
    """Tests for train on the synthetic fixture"""

    @pytest.fixture
    def split(self, single_data):
        records = single_data.dataset.records
        return records[:45], records[45:]

    def run(self, method, split, context, tiny_overrides):
        model_config, train_config = resolve_configs(method, tiny_overrides, dtype="float64")
        return train(method, split[0], split[1], context, model_config, train_config, seed=0)

    def test_gbdt(self, split, context, tiny_overrides):
        bundle, curve = self.run("gbdt", split, context, tiny_overrides)
        assert len(curve) == 1
        assert bundle.predict(split[1]).shape == (15, 3)

    def test_deepmodel(self, split, context, tiny_overrides):
        bundle, curve = self.run("deepmodel", split, context, tiny_overrides)
        assert 1 <= len(curve) <= 3
        assert bundle.standardizer is not None
        assert bundle.predict(split[1]).shape == (15, 3)

    def test_gnn_outputs_in_unit_interval(self, split, context, tiny_overrides):
        bundle, _ = self.run("gnn", split, context, tiny_overrides)
        pred = bundle.predict(split[1])
        assert pred.shape == (15, 3)
        assert np.all((pred > 0) & (pred < 1))

    def test_single_task_trains_one_model_per_target(self, split, context, tiny_overrides):
        bundle, curve = self.run("gnn_single_task", split, context, tiny_overrides)
        assert len(bundle.models) == 3
        assert {p.task for p in curve.points} == {"target0", "target1", "target2"}
        assert bundle.predict(split[1][:4]).shape == (4, 3)

    def test_overlapping_sets_rejected(self, split, context):
        with pytest.raises(ValueError):
            train("gbdt", split[0], split[0][:2], context)

    def test_same_seed_same_predictions(self, split, context, tiny_overrides):
        a, _ = self.run("deepmodel", split, context, tiny_overrides)
        b, _ = self.run("deepmodel", split, context, tiny_overrides)
        assert np.array_equal(a.predict(split[1]), b.predict(split[1]))

    def test_empty_prediction(self, split, context, tiny_overrides):
        bundle, _ = self.run("gbdt", split, context, tiny_overrides)
        assert bundle.predict([]).shape == (0, 3)


class TestBundleCheckpoint:
    """Tests for ModelBundle.save and load_bundle"""

    @pytest.mark.parametrize("method", ["gbdt", "deepmodel", "gnn"])
    def test_round_trip(self, method, single_data, context, tiny_overrides, tmp_path):
        records = single_data.dataset.records
        model_config, train_config = resolve_configs(method, tiny_overrides, dtype="float64")
        bundle, _ = train(method, records[:40], records[40:50], context, model_config, train_config, seed=1)
        path = bundle.save(tmp_path / f"{method}_seed1")
        again = load_bundle(path, context, expected_digest=bundle.digest)
        assert isinstance(again, ModelBundle)
        assert again.digest == bundle.digest
        assert np.allclose(again.predict(records[50:]), bundle.predict(records[50:]), atol=1e-12)

    def test_digest_mismatch(self, single_data, context, tiny_overrides, tmp_path):
        records = single_data.dataset.records
        model_config, _ = resolve_configs("gbdt", tiny_overrides)
        bundle, _ = train("gbdt", records[:30], [], context, model_config)
        path = bundle.save(tmp_path / "gbdt")
        with pytest.raises(CheckpointMismatch):
            load_bundle(path, context, expected_digest="0" * 64)


class TestTrainingCurve:
    """Tests for TrainingCurve"""

    def test_rows(self):
        curve = TrainingCurve()
        curve.append(0, 1.0, 2.0, 1e-3)
        curve.append(1, 0.5, 1.5, 1e-3, task="target0")
        rows = curve.to_rows()
        assert rows[0] == {"epoch": 0, "train_loss": 1.0, "val_loss": 2.0, "lr": 1e-3}
        assert rows[1]["task"] == "target0"
        assert curve.final_train_loss == 0.5

"""
Training entry point for every predictor family.

``train`` fits one method on a training set, using the validation set for
model selection, and returns a ModelBundle plus the per-epoch training curve.
Bundles predict on new records and round-trip through checkpoint files.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from autodiff import ops
from autodiff.checkpoint import load_checkpoint, save_checkpoint
from autodiff.nn import Module
from autodiff.optim import AdamW, EarlyStopping, PlateauScheduler, clip_grad_norm
from autodiff.tensor import Tensor, no_grad
from chem.descriptors import Standardizer
from predictors.configs import (
    DeepModelConfig,
    GbdtConfig,
    GnnConfig,
    TrainConfig,
    default_train_config,
    merge_overrides,
)
from predictors.deepmodel import DeepModel
from predictors.gbdt import GbdtModel, gbdt_fit
from predictors.gnn import N_OUTPUTS, GnnModel
from predictors.inputs import FeatureContext, GnnInputBuilder, batch_slices, target_matrix
from shared.artifact_manager import sha256_json
from shared.config import settings
from shared.errors import CheckpointMismatch, InsufficientData, NonFiniteLoss
from shared.log import get_logger
from shared.models import Method, ReactionRecord

logger = get_logger("Trainer")

ModelConfig = Union[GnnConfig, DeepModelConfig, GbdtConfig]

ABLATION_FLAGS: Dict[str, str] = {
    Method.GNN_NO_DRFP.value: "use_drfp",
    Method.GNN_NO_REACTANT_PRODUCT_GRAPHS.value: "use_reactant_product_graphs",
    Method.GNN_NO_MIXTURE_ENCODER.value: "use_mixture_encoder",
    Method.GNN_NO_ATTENTION.value: "use_attention",
}

GNN_METHODS = {Method.GNN.value, Method.GNN_SINGLE_TASK.value, *ABLATION_FLAGS}
TABULAR_NEURAL = {Method.DEEPMODEL.value, Method.MLP.value}
TRAINABLE = GNN_METHODS | TABULAR_NEURAL | {Method.GBDT.value}


def model_family(method: str) -> str:
    """gnn, deepmodel or gbdt"""
    if method in GNN_METHODS:
        return "gnn"
    if method in TABULAR_NEURAL:
        return "deepmodel"
    if method == Method.GBDT.value:
        return "gbdt"
    raise ValueError(f"method {method!r} cannot be trained directly")


def resolve_configs(
    method: str,
    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
    dtype: Optional[str] = None,
) -> Tuple[ModelConfig, Optional[TrainConfig]]:
    """
    Model and training configs for a method, with ``--set`` style overrides.

    Overrides are keyed by section (gnn, deepmodel, gbdt, train). Ablation
    methods switch off one GNN component after overrides are applied.
    """
    overrides = overrides or {}
    family = model_family(method)
    if family == "gbdt":
        return merge_overrides(GbdtConfig(), overrides.get("gbdt")), None

    train_config = merge_overrides(
        default_train_config(method, dtype or settings.TRAIN_DTYPE), overrides.get("train")
    )
    if family == "deepmodel":
        base = DeepModelConfig(plain_mlp=method == Method.MLP.value)
        config = merge_overrides(base, overrides.get("deepmodel"))
        if method == Method.MLP.value and not config.plain_mlp:
            config = merge_overrides(config, {"plain_mlp": True})
        return config, train_config

    config = merge_overrides(GnnConfig(drfp_width=settings.DRFP_WIDTH), overrides.get("gnn"))
    flag = ABLATION_FLAGS.get(method)
    if flag:
        config = merge_overrides(config, {flag: False})
    return config, train_config


def bundle_digest(method: str, model_config: ModelConfig, train_config: Optional[TrainConfig]) -> str:
    return sha256_json({
        "method": method,
        "model": model_config.digest(),
        "train": train_config.digest() if train_config else None,
    })


@dataclass
class CurvePoint:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    task: Optional[str] = None


@dataclass
class TrainingCurve:
    """Per-epoch losses and learning rate"""

    points: List[CurvePoint] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: Optional[int] = None

    def append(self, epoch: int, train_loss: float, val_loss: float, lr: float, task: Optional[str] = None):
        self.points.append(CurvePoint(epoch, train_loss, val_loss, lr, task))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def final_train_loss(self) -> Optional[float]:
        return self.points[-1].train_loss if self.points else None

    def extend(self, other: "TrainingCurve", task: str) -> None:
        for p in other.points:
            self.append(p.epoch, p.train_loss, p.val_loss, p.lr, task)

    def to_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for p in self.points:
            row = {"epoch": p.epoch, "train_loss": p.train_loss, "val_loss": p.val_loss, "lr": p.lr}
            if p.task is not None:
                row["task"] = p.task
            rows.append(row)
        return rows


@dataclass
class ModelBundle:
    """
    A trained predictor with everything needed to predict on new rows.

    ``models`` holds one network for multi-output methods and one per target
    for ``gnn_single_task``; GBDT bundles keep the boosted ensembles instead.
    """

    method: str
    model_config: ModelConfig
    train_config: Optional[TrainConfig]
    context: FeatureContext
    models: List[Module] = field(default_factory=list)
    gbdt: Optional[GbdtModel] = None
    standardizer: Optional[Standardizer] = None
    seed: int = 0
    input_builder: Optional[GnnInputBuilder] = field(default=None, repr=False)

    @property
    def family(self) -> str:
        return model_family(self.method)

    @property
    def digest(self) -> str:
        return bundle_digest(self.method, self.model_config, self.train_config)

    def _builder(self) -> GnnInputBuilder:
        if self.input_builder is None:
            self.input_builder = GnnInputBuilder(self.context, self.model_config)
        return self.input_builder

    def predict(self, records: Sequence[ReactionRecord]) -> np.ndarray:
        """(n, 3) predicted yields; GNN outputs lie in (0, 1), baselines are unconstrained"""
        records = list(records)
        if not records:
            return np.zeros((0, N_OUTPUTS))
        if self.family == "gbdt":
            return self.gbdt.predict(self.context.baseline(records))
        if self.family == "deepmodel":
            x = self.standardizer.transform(self.context.baseline(records))
            return _predict_batches(self.models[0], lambda idx: x[idx], len(records), self.train_config.batch_size)

        builder = self._builder()
        columns = []
        for model in self.models:
            columns.append(_predict_batches(
                model, lambda idx: builder.build([records[i] for i in idx]), len(records),
                self.train_config.batch_size,
            ))
        if len(columns) == 1:
            return columns[0]
        return np.stack([columns[t][:, t] for t in range(N_OUTPUTS)], axis=1)

    def save(self, path, extra_meta: Optional[Mapping[str, Any]] = None) -> str:
        """Write the bundle as a checkpoint container"""
        arrays: Dict[str, np.ndarray] = {}
        meta: Dict[str, Any] = {
            "kind": self.family,
            "method": self.method,
            "model_config": self.model_config.model_dump(mode="json"),
            "train_config": self.train_config.model_dump(mode="json") if self.train_config else None,
            "config_digest": self.digest,
            "seed": self.seed,
            "n_models": len(self.models),
        }
        if self.gbdt is not None:
            arrays.update({f"gbdt.{k}": v for k, v in self.gbdt.to_arrays().items()})
            meta["n_features"] = self.gbdt.n_features
            meta["dtype"] = "float64"
        for i, model in enumerate(self.models):
            arrays.update({f"model{i}.{k}": v for k, v in model.state_dict().items()})
            meta["dtype"] = self.train_config.dtype
        if self.standardizer is not None:
            arrays.update({f"standardizer.{k}": v for k, v in self.standardizer.state().items()})
            meta["input_dim"] = int(self.standardizer.mean.shape[0])
        meta.update(extra_meta or {})
        return save_checkpoint(path, arrays, meta)


def load_bundle(path, context: FeatureContext, expected_digest: Optional[str] = None) -> ModelBundle:
    """
    Rebuild a bundle from a checkpoint.

    Raises CheckpointMismatch when the stored digest differs from
    ``expected_digest`` or the stored parameters do not fit the stored config.
    """
    arrays, meta = load_checkpoint(path, expected_digest)
    method = meta["method"]
    family = model_family(method)
    train_config = TrainConfig.model_validate(meta["train_config"]) if meta.get("train_config") else None
    seed = int(meta.get("seed", 0))

    def section(prefix: str) -> Dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    if family == "gbdt":
        config = GbdtConfig.model_validate(meta["model_config"])
        gbdt = GbdtModel.from_arrays(section("gbdt."), config, int(meta["n_features"]))
        bundle = ModelBundle(method, config, None, context, gbdt=gbdt, seed=seed)
    elif family == "deepmodel":
        config = DeepModelConfig.model_validate(meta["model_config"])
        model = DeepModel(int(meta["input_dim"]), config, seed, train_config.dtype)
        model.load_state_dict(section("model0."))
        bundle = ModelBundle(method, config, train_config, context, [model.eval()],
                             standardizer=Standardizer.from_state(section("standardizer.")), seed=seed)
    else:
        config = GnnConfig.model_validate(meta["model_config"])
        models = []
        for i in range(int(meta.get("n_models", 1))):
            model = GnnModel(config, seed + i, train_config.dtype)
            model.load_state_dict(section(f"model{i}."))
            models.append(model.eval())
        bundle = ModelBundle(method, config, train_config, context, models, seed=seed)

    if bundle.digest != meta.get("config_digest"):
        raise CheckpointMismatch(f"{path}: stored config does not reproduce its digest")
    return bundle


# --- neural training loop ---------------------------------------------------

BatchFn = Callable[[np.ndarray], Any]


def _predict_batches(model: Module, batch_fn: BatchFn, n: int, batch_size: int) -> np.ndarray:
    model.eval()
    outputs = []
    with no_grad():
        for idx in batch_slices(n, batch_size):
            outputs.append(model(batch_fn(idx)).data.astype(np.float64))
    return np.concatenate(outputs, axis=0) if outputs else np.zeros((0, N_OUTPUTS))


def _loss_mask(config: TrainConfig) -> Optional[np.ndarray]:
    if config.target_mask is None:
        return None
    mask = np.zeros(N_OUTPUTS)
    mask[list(config.target_mask)] = 1.0
    return mask


def _masked_mse(pred: np.ndarray, target: np.ndarray, mask: Optional[np.ndarray]) -> float:
    weight = np.isfinite(target).astype(np.float64)
    if mask is not None:
        weight = weight * mask
    diff = np.where(weight > 0, pred - np.nan_to_num(target), 0.0)
    return float((diff ** 2).sum() / max(weight.sum(), 1.0))


def fit_network(
    model: Module,
    train_batch: BatchFn,
    y_train: np.ndarray,
    config: TrainConfig,
    seed: int,
    val_batch: Optional[BatchFn] = None,
    y_val: Optional[np.ndarray] = None,
    label: str = "model",
) -> TrainingCurve:
    """
    Mini-batch AdamW with global-norm clipping.

    The validation loss drives the plateau scheduler, early stopping and the
    choice of returned parameters; with no validation rows the training loss
    stands in. The best-validation parameters are loaded back at the end.
    """
    n = y_train.shape[0]
    if n == 0:
        raise InsufficientData(0, 1)
    rng = np.random.default_rng(seed)
    mask = _loss_mask(config)
    optimizer = AdamW(model.named_parameters(), lr=config.lr, weight_decay=config.weight_decay)
    scheduler = PlateauScheduler(config.lr, config.plateau_factor, config.plateau_patience) \
        if config.plateau_scheduler else None
    stopper = EarlyStopping(config.early_stopping_patience) if config.early_stopping_patience else None
    has_val = val_batch is not None and y_val is not None and y_val.shape[0] > 0

    curve = TrainingCurve()
    best_loss = math.inf
    best_state = model.state_dict()
    step = 0
    progress = tqdm(total=config.max_epochs, desc=label, leave=False, disable=not settings.SHOW_PROGRESS)

    try:
        for epoch in range(config.max_epochs):
            model.train()
            total = 0.0
            for idx in batch_slices(n, config.batch_size, rng.permutation(n)):
                model.set_step(step)
                step += 1
                optimizer.zero_grad()
                pred = model(train_batch(idx))
                loss = ops.mse_loss(pred, y_train[idx], mask)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteLoss(epoch, value)
                loss.backward()
                clip_grad_norm(model.parameters(), config.clip_norm)
                optimizer.step()
                total += value * idx.size
            train_loss = total / n

            if has_val:
                val_pred = _predict_batches(model, val_batch, y_val.shape[0], config.batch_size)
                val_loss = _masked_mse(val_pred, y_val, mask)
                if not math.isfinite(val_loss):
                    raise NonFiniteLoss(epoch, val_loss)
            else:
                val_loss = train_loss

            curve.append(epoch, train_loss, val_loss, optimizer.lr)
            progress.update(1)
            progress.set_postfix(train=f"{train_loss:.4g}", val=f"{val_loss:.4g}")

            if val_loss < best_loss:
                best_loss = val_loss
                best_state = model.state_dict()
                curve.best_epoch = epoch
            if scheduler is not None:
                optimizer.lr = scheduler.step(val_loss)
            if stopper is not None and stopper.update(val_loss, epoch):
                curve.stopped_early = True
                logger.debug(f"{label}: early stop at epoch {epoch} (best {stopper.best_epoch})")
                break
    finally:
        progress.close()

    model.load_state_dict(best_state)
    model.eval()
    logger.info(f"{label}: {len(curve)} epochs, best val loss {best_loss:.6g} at epoch {curve.best_epoch}")
    return curve


# --- per-family estimators ------------------------------------------------

def _check_disjoint(train_records: Sequence[ReactionRecord], val_records: Sequence[ReactionRecord]) -> None:
    overlap = {r.row_id for r in train_records} & {r.row_id for r in val_records}
    if overlap:
        raise ValueError(f"train and validation sets share rows {sorted(overlap)[:5]}")


def _train_gbdt(method, config: GbdtConfig, train_records, val_records, context, seed):
    records = list(train_records) + list(val_records)
    x = context.baseline(records)
    y = target_matrix(records)
    progress = tqdm(total=config.iterations * y.shape[1], desc=method, leave=False,
                    disable=not settings.SHOW_PROGRESS)
    try:
        model = gbdt_fit(x, y, config, progress)
    finally:
        progress.close()
    curve = TrainingCurve()
    train_loss = _masked_mse(model.predict(x), y, None)
    curve.append(0, train_loss, train_loss, config.learning_rate)
    logger.info(f"{method}: {config.iterations} boosting rounds on {len(records)} rows, train MSE {train_loss:.6g}")
    return ModelBundle(method, config, None, context, gbdt=model, seed=seed), curve


def _train_deepmodel(method, config: DeepModelConfig, train_config: TrainConfig,
                     train_records, val_records, context, seed):
    standardizer = Standardizer().fit(context.baseline(train_records))
    dtype = np.dtype(train_config.dtype)
    x_train = standardizer.transform(context.baseline(train_records)).astype(dtype)
    x_val = standardizer.transform(context.baseline(val_records)).astype(dtype) if val_records else None
    model = DeepModel(x_train.shape[1], config, seed, dtype)
    logger.info(f"{method}: {model.num_parameters()} parameters, input width {x_train.shape[1]}")
    curve = fit_network(
        model, lambda idx: Tensor(x_train[idx]), target_matrix(train_records).astype(dtype), train_config, seed,
        (lambda idx: Tensor(x_val[idx])) if x_val is not None else None,
        target_matrix(val_records) if val_records else None, method,
    )
    bundle = ModelBundle(method, config, train_config, context, [model], standardizer=standardizer, seed=seed)
    return bundle, curve


def _train_gnn(method, config: GnnConfig, train_config: TrainConfig, train_records, val_records, context, seed):
    builder = GnnInputBuilder(context, config)
    dtype = np.dtype(train_config.dtype)
    y_train = target_matrix(train_records).astype(dtype)
    y_val = target_matrix(val_records) if val_records else None

    def batches(records):
        return lambda idx: builder.build([records[i] for i in idx])

    val_fn = batches(val_records) if val_records else None
    if method == Method.GNN_SINGLE_TASK.value:
        models, curve = [], TrainingCurve()
        for t in range(N_OUTPUTS):
            task_config = merge_overrides(train_config, {"target_mask": [t]})
            model = GnnModel(config, seed + t, dtype)
            task_curve = fit_network(model, batches(train_records), y_train, task_config, seed + t,
                                     val_fn, y_val, f"{method}[{t}]")
            curve.extend(task_curve, f"target{t}")
            models.append(model)
    else:
        model = GnnModel(config, seed, dtype)
        logger.info(f"{method}: {model.num_parameters()} parameters, fusion width {config.fusion_width}")
        curve = fit_network(model, batches(train_records), y_train, train_config, seed, val_fn, y_val, method)
        models = [model]

    bundle = ModelBundle(method, config, train_config, context, models, seed=seed, input_builder=builder)
    logger.debug(f"{method}: {builder.cache_size} molecules featurized")
    return bundle, curve


def train(
    method: str,
    train_records: Sequence[ReactionRecord],
    val_records: Sequence[ReactionRecord],
    context: FeatureContext,
    model_config: Optional[ModelConfig] = None,
    train_config: Optional[TrainConfig] = None,
    seed: int = 0,
) -> Tuple[ModelBundle, TrainingCurve]:
    """
    Train one method.

    Args:
        method: gbdt, deepmodel, mlp, gnn, gnn_single_task or a GNN ablation
        train_records: Rows the parameters are fitted on
        val_records: Disjoint rows used for model selection (GBDT folds them into training)
        context: Reaction, descriptor tables and fingerprint settings
        model_config: Architecture; defaults per method
        train_config: Optimization settings; defaults per method
        seed: Seed for initialization, shuffling and dropout

    Returns:
        (bundle, training curve)
    """
    train_records, val_records = list(train_records), list(val_records)
    _check_disjoint(train_records, val_records)
    default_model, default_train = resolve_configs(method)
    model_config = model_config or default_model
    train_config = train_config or default_train
    family = model_family(method)

    if family == "gbdt":
        return _train_gbdt(method, model_config, train_records, val_records, context, seed)
    if family == "deepmodel":
        return _train_deepmodel(method, model_config, train_config, train_records, val_records, context, seed)
    return _train_gnn(method, model_config, train_config, train_records, val_records, context, seed)

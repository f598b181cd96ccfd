"""
Fold worker: trains and evaluates every requested method on one fold.
A failing method is recorded as FAILED with its error and never stops the
other methods of the fold.
"""
import time
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from orchestrator.ensemble import ensemble_combine, prediction_variance
from orchestrator.metrics import clamp_unit, mse
from orchestrator.split_planner import fold_seed
from predictors.inputs import FeatureContext, target_matrix
from predictors.training import resolve_configs, train
from shared.artifact_manager import sha256_json
from shared.config import settings
from shared.errors import BenchError
from shared.log import get_logger
from shared.models import Dataset, Fold, FoldResult, FoldStatus, Method

logger = get_logger("FoldWorker")

NEURAL_PARTNERS = (Method.DEEPMODEL.value, Method.MLP.value, Method.GNN.value)
UNBOUNDED_METHODS = {Method.GBDT.value, Method.DEEPMODEL.value, Method.MLP.value}


def ensemble_partner(methods: Sequence[str]) -> Optional[str]:
    """Neural method the ensemble pairs with GBDT, or None when the pair is incomplete"""
    if Method.GBDT.value not in methods:
        return None
    return next((m for m in NEURAL_PARTNERS if m in methods), None)


class FoldWorker:
    """Executes one fold at a time; safe to share across threads"""

    def __init__(
        self,
        dataset: Dataset,
        context: FeatureContext,
        methods: Sequence[str],
        overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
        variance_mode: Optional[str] = None,
        dtype: Optional[str] = None,
    ):
        self.dataset = dataset
        self.context = context
        self.methods = list(methods)
        self.overrides = overrides or {}
        self.variance_mode = variance_mode or settings.VARIANCE_MODE
        self.dtype = dtype
        self.records = dataset.by_id()
        self.n_targets = dataset.n_targets

    def execute(self, fold: Fold, seed: int) -> List[FoldResult]:
        """Train and score each trainable method, then the ensemble when requested"""
        seed = fold_seed(seed, fold.fold_id)
        train_rows = [self.records[i] for i in fold.train_ids]
        val_rows = [self.records[i] for i in fold.val_ids]
        test_rows = [self.records[i] for i in fold.test_ids]
        truth = target_matrix(test_rows)

        logger.info(f"Fold {fold.fold_id} ({fold.group}): {len(train_rows)} train, "
                    f"{len(val_rows)} val, {len(test_rows)} test")
        results: Dict[str, FoldResult] = {}
        for method in self.methods:
            if method == Method.ENSEMBLE.value:
                continue
            results[method] = self._run_method(method, fold, train_rows, val_rows, test_rows, truth, seed)

        if Method.ENSEMBLE.value in self.methods:
            partner = ensemble_partner(self.methods)
            if partner is not None:
                results[Method.ENSEMBLE.value] = self._ensemble(fold, results[Method.GBDT.value],
                                                                results[partner], truth)
        return [results[m] for m in self.methods if m in results]

    def _score(self, result: FoldResult, pred: np.ndarray, truth: np.ndarray, clamp: bool) -> FoldResult:
        scored = clamp_unit(pred) if clamp else pred
        k = self.n_targets
        metric = mse(scored[:, :k], truth[:, :k])
        result.predictions = scored
        result.variances = prediction_variance(pred, self.variance_mode, k)
        result.variance_mean = float(result.variances.mean()) if result.variances.size else 0.0
        result.mse_per_target = metric.per_target
        result.mse_pooled = metric.pooled
        result.clamped = clamp
        result.status = FoldStatus.COMPLETED
        return result

    def _run_method(self, method, fold, train_rows, val_rows, test_rows, truth, seed) -> FoldResult:
        start_time = time.time()
        result = FoldResult(fold_id=fold.fold_id, group=fold.group, method=method,
                            n_test=len(test_rows), test_ids=list(fold.test_ids))
        try:
            model_config, train_config = resolve_configs(method, self.overrides, self.dtype)
            bundle, _ = train(method, train_rows, val_rows, self.context, model_config, train_config, seed)
            result.config_digest = bundle.digest
            pred = bundle.predict(test_rows)
            if not np.all(np.isfinite(pred)):
                raise FloatingPointError(f"{method} produced non-finite predictions")
            self._score(result, pred, truth, clamp=method in UNBOUNDED_METHODS)
            logger.info(f"Fold {fold.fold_id} {method}: MSE {result.mse_pooled:.6g}")
        except (BenchError, FloatingPointError, ValueError) as e:
            logger.error(f"Fold {fold.fold_id} {method} failed: {e}")
            result.status = FoldStatus.FAILED
            result.error = str(e)
        result.wall_time = time.time() - start_time
        return result

    def _ensemble(self, fold: Fold, gbdt: FoldResult, neural: FoldResult, truth: np.ndarray) -> FoldResult:
        start_time = time.time()
        result = FoldResult(fold_id=fold.fold_id, group=fold.group, method=Method.ENSEMBLE.value,
                            n_test=gbdt.n_test, test_ids=list(fold.test_ids))
        failed = [r.method for r in (gbdt, neural) if r.status != FoldStatus.COMPLETED]
        if failed:
            result.status = FoldStatus.FAILED
            result.error = f"ensemble members failed: {', '.join(failed)}"
            return result
        combined = ensemble_combine(gbdt.predictions, neural.predictions, gbdt.variances, neural.variances)
        result.config_digest = sha256_json({"ensemble": [gbdt.config_digest, neural.config_digest]})
        self._score(result, combined, truth, clamp=True)
        result.variances = None
        result.variance_mean = None
        result.wall_time = gbdt.wall_time + neural.wall_time + (time.time() - start_time)
        logger.info(f"Fold {fold.fold_id} ensemble (gbdt + {neural.method}): MSE {result.mse_pooled:.6g}")
        return result

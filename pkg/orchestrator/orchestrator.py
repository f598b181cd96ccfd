"""
Central orchestrator for benchmark runs.
Plans folds, dispatches them to fold workers and aggregates the results into
a single report.
"""
import asyncio
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from orchestrator.fold_worker import FoldWorker, ensemble_partner
from orchestrator.reports import ABLATION_METHODS, build_report
from orchestrator.split_planner import SplitPlanner
from predictors.inputs import FeatureContext
from shared.config import settings
from shared.log import get_logger
from shared.models import BenchmarkReport, Dataset, FoldResult, Method, Protocol, SplitPlan

logger = get_logger("Orchestrator")


def context_overrides(
    overrides: Optional[Mapping[str, Mapping[str, Any]]],
    context: FeatureContext,
) -> Dict[str, Dict[str, Any]]:
    """Copy of the overrides with the GNN fingerprint width pinned to the context's"""
    merged = {section: dict(values) for section, values in (overrides or {}).items()}
    merged.setdefault("gnn", {}).setdefault("drfp_width", context.drfp_width)
    return merged


def runnable_methods(methods: Sequence[str]) -> List[str]:
    """Requested methods minus an ensemble that has no GBDT + neural pair"""
    methods = list(dict.fromkeys(methods))
    if Method.ENSEMBLE.value in methods and ensemble_partner(methods) is None:
        logger.warning("ensemble needs gbdt plus one of deepmodel, mlp or gnn; skipping it")
        methods.remove(Method.ENSEMBLE.value)
    return methods


class BenchmarkOrchestrator:
    """
    Runs every fold of a protocol, up to ``jobs`` at a time.

    Folds are independent: each gets its own seed and its own models, so
    results do not depend on the number of jobs or on completion order.
    """

    def __init__(
        self,
        dataset: Dataset,
        context: FeatureContext,
        methods: Sequence[str],
        jobs: Optional[int] = None,
        overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
        variance_mode: Optional[str] = None,
        dtype: Optional[str] = None,
        validation_fraction: Optional[float] = None,
    ):
        self.dataset = dataset
        self.context = context
        self.methods = runnable_methods(methods)
        if not self.methods:
            raise ValueError("no runnable methods requested")
        self.jobs = jobs or settings.JOBS
        self.variance_mode = variance_mode or settings.VARIANCE_MODE
        self.planner = SplitPlanner(validation_fraction)
        self.worker = FoldWorker(
            dataset, context, self.methods,
            overrides=context_overrides(overrides, context),
            variance_mode=self.variance_mode,
            dtype=dtype,
        )

    async def _dispatch(self, plan: SplitPlan) -> List[FoldResult]:
        semaphore = asyncio.Semaphore(self.jobs)
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:

            async def run_fold(fold) -> List[FoldResult]:
                async with semaphore:
                    logger.info(f"Dispatching fold {fold.fold_id} ({fold.group})")
                    return await loop.run_in_executor(pool, self.worker.execute, fold, plan.seed)

            batches = await asyncio.gather(*(run_fold(f) for f in plan.folds))
        return [result for batch in batches for result in batch]

    async def run_plan(self, plan: SplitPlan) -> Tuple[SplitPlan, List[FoldResult]]:
        logger.info(f"Running {len(plan.folds)} folds x {len(self.methods)} methods "
                    f"with {self.jobs} job(s)")
        results = await self._dispatch(plan)
        results.sort(key=lambda r: (r.fold_id, self.methods.index(r.method)))
        return plan, results

    async def run(
        self,
        protocol: Protocol,
        seed: int = 0,
        metadata: Optional[Mapping[str, Any]] = None,
        provenance: Optional[Mapping[str, Any]] = None,
        ablation: bool = False,
    ) -> BenchmarkReport:
        """
        Evaluate every method on every fold of ``protocol``.

        Raises:
            TooFewGroups: The dataset cannot be split under the protocol
        """
        plan = self.planner.plan(self.dataset, protocol, seed)
        plan, results = await self.run_plan(plan)
        report = build_report(plan, results, self.dataset, self.methods,
                              metadata=metadata, provenance=provenance, ablation=ablation)
        failed = [f"{r.method}@{r.fold_id}" for r in results if r.error]
        if failed:
            logger.warning(f"{len(failed)} fold(s) failed: {', '.join(failed)}")
        logger.info(f"Benchmark {plan.protocol.value} finished")
        return report


async def ablation_suite(
    dataset: Dataset,
    context: FeatureContext,
    protocol: Protocol,
    seed: int = 0,
    jobs: Optional[int] = None,
    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
    metadata: Optional[Mapping[str, Any]] = None,
    provenance: Optional[Mapping[str, Any]] = None,
) -> BenchmarkReport:
    """Full GNN and its four single-component ablations on identical folds"""
    orchestrator = BenchmarkOrchestrator(dataset, context, list(ABLATION_METHODS), jobs=jobs, overrides=overrides)
    return await orchestrator.run(protocol, seed, metadata=metadata, provenance=provenance, ablation=True)


def run_benchmark(
    dataset: Dataset,
    context: FeatureContext,
    methods: Sequence[str],
    protocol: Protocol,
    seed: int = 0,
    **kwargs: Any,
) -> BenchmarkReport:
    """Synchronous entry point around ``BenchmarkOrchestrator.run``"""
    metadata = kwargs.pop("metadata", None)
    provenance = kwargs.pop("provenance", None)
    orchestrator = BenchmarkOrchestrator(dataset, context, methods, **kwargs)
    return asyncio.run(orchestrator.run(protocol, seed, metadata=metadata, provenance=provenance))

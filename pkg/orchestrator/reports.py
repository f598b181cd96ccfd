"""
Report assembly and rendering: JSON payloads, aligned text tables, residual
tables and the published reference numbers shown alongside measured ones.
"""
from collections import defaultdict
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from orchestrator.metrics import summarize
from predictors.inputs import target_matrix
from shared.models import BenchmarkReport, Dataset, FoldResult, FoldStatus, Method, SplitPlan

TARGET_NAMES = ("sm", "p2", "p3")

METHOD_LABELS: Dict[str, str] = {
    Method.GBDT.value: "GBDT",
    Method.DEEPMODEL.value: "DeepModel",
    Method.MLP.value: "MLP (plain DeepModel)",
    Method.GNN.value: "GNN",
    Method.ENSEMBLE.value: "Ensemble",
    Method.GNN_SINGLE_TASK.value: "GNN (single-task)",
}

ABLATION_LABELS: Dict[str, str] = {
    Method.GNN.value: "GNN (Full)",
    Method.GNN_NO_DRFP.value: "without DRFP features",
    Method.GNN_NO_REACTANT_PRODUCT_GRAPHS.value: "without reactant/product graphs",
    Method.GNN_NO_MIXTURE_ENCODER.value: "without learned mixture encoding",
    Method.GNN_NO_ATTENTION.value: "without multi-head attention",
}

ABLATION_METHODS = tuple(ABLATION_LABELS)

# Published cross-validated MSE as (mean, std) per evaluation subset
REFERENCE_MSE: Dict[str, Dict[str, List[float]]] = {
    Method.GBDT.value: {"single_solvent": [0.0990, 0.0015], "mixture": [0.1050, 0.0018]},
    Method.DEEPMODEL.value: {"single_solvent": [0.0875, 0.0012], "mixture": [0.0920, 0.0016]},
    Method.ENSEMBLE.value: {"single_solvent": [0.0812, 0.0010], "mixture": [0.0845, 0.0014]},
    Method.MLP.value: {"single_solvent": [0.0854, 0.0270], "mixture": [0.0832, 0.0310]},
    Method.GNN.value: {"single_solvent": [0.0038, 0.0003], "mixture": [0.0042, 0.0004]},
    Method.GNN_NO_DRFP.value: {"single_solvent": [0.0078, 0.0006], "mixture": [0.0089, 0.0008]},
    Method.GNN_NO_REACTANT_PRODUCT_GRAPHS.value: {"single_solvent": [0.0125, 0.0010], "mixture": [0.0142, 0.0012]},
    Method.GNN_NO_MIXTURE_ENCODER.value: {"single_solvent": [0.0055, 0.0004], "mixture": [0.0068, 0.0005]},
    Method.GNN_NO_ATTENTION.value: {"single_solvent": [0.0095, 0.0007], "mixture": [0.0108, 0.0009]},
}

REFERENCE_CONSTANTS: Dict[str, float] = {
    "llm_embedding_mse": 0.129,
    "benchmark_mlp_baseline_mse": 0.105,
    "gbdt_loso_mse": 0.099,
    "gnn_headline_mse": 0.0039,
}

YIELD_BINS = (("low", 0.0, 1.0 / 3.0), ("mid", 1.0 / 3.0, 2.0 / 3.0), ("high", 2.0 / 3.0, np.inf))


def method_label(method: str, ablation: bool = False) -> str:
    if ablation and method in ABLATION_LABELS:
        return ABLATION_LABELS[method]
    return METHOD_LABELS.get(method) or ABLATION_LABELS.get(method, method)


def references() -> Dict[str, Any]:
    """Reference numbers with the subset mean next to each pair"""
    per_method = {}
    for method, subsets in REFERENCE_MSE.items():
        entry = {k: list(v) for k, v in subsets.items()}
        entry["mean"] = round((subsets["single_solvent"][0] + subsets["mixture"][0]) / 2.0, 6)
        per_method[method] = entry
    return {"mse": per_method, "constants": dict(REFERENCE_CONSTANTS)}


def solvent_label(record) -> str:
    return " / ".join(record.solvent_names)


def residual_rows(results: Sequence[FoldResult], dataset: Dataset, protocol: str) -> pd.DataFrame:
    """
    One row per (fold, method, test row, measured target).

    residual = true - predicted, so positive values mean underprediction.
    """
    records = dataset.by_id()
    rows = []
    for result in results:
        if result.status != FoldStatus.COMPLETED or result.predictions is None:
            continue
        test = [records[i] for i in result.test_ids]
        truth = target_matrix(test)
        for k, record in enumerate(test):
            for t in range(dataset.n_targets):
                true = truth[k, t]
                if not np.isfinite(true):
                    continue
                pred = float(result.predictions[k, t])
                rows.append({
                    "fold_id": result.fold_id,
                    "row_id": record.row_id,
                    "target": TARGET_NAMES[t],
                    "true": float(true),
                    "predicted": pred,
                    "residual": float(true) - pred,
                    "method": result.method,
                    "solvent": solvent_label(record),
                    "protocol": protocol,
                })
    columns = ["fold_id", "row_id", "target", "true", "predicted", "residual", "method", "solvent", "protocol"]
    return pd.DataFrame(rows, columns=columns)


def residual_bias(residuals: pd.DataFrame) -> Dict[str, Dict[str, float]]:
    """Mean residual per method within low/mid/high true-yield bins"""
    bias: Dict[str, Dict[str, float]] = {}
    for method, group in residuals.groupby("method", sort=True):
        entry = {}
        for name, low, high in YIELD_BINS:
            in_bin = group[(group["true"] >= low) & (group["true"] < high)]
            if len(in_bin):
                entry[name] = float(in_bin["residual"].mean())
        bias[str(method)] = entry
    return bias


def per_solvent_mse(residuals: pd.DataFrame) -> Dict[str, Dict[str, float]]:
    """method -> solvent -> MSE over every scored entry whose row uses that solvent"""
    sums: Dict[str, Dict[str, List[float]]] = defaultdict(lambda: defaultdict(list))
    for method, solvent, residual in zip(residuals["method"], residuals["solvent"], residuals["residual"]):
        for name in solvent.split(" / "):
            sums[method][name].append(residual * residual)
    return {
        method: {name: float(np.mean(values)) for name, values in sorted(by_solvent.items())}
        for method, by_solvent in sorted(sums.items())
    }


def build_report(
    plan: SplitPlan,
    results: Sequence[FoldResult],
    dataset: Dataset,
    methods: Sequence[str],
    metadata: Optional[Mapping[str, Any]] = None,
    provenance: Optional[Mapping[str, Any]] = None,
    ablation: bool = False,
) -> BenchmarkReport:
    """Aggregate fold results into a BenchmarkReport (single writer)"""
    ordered = sorted(results, key=lambda r: (r.fold_id, list(methods).index(r.method)))
    by_method: Dict[str, List[FoldResult]] = defaultdict(list)
    for result in ordered:
        by_method[result.method].append(result)
    summaries = [summarize(m, method_label(m, ablation), by_method[m]) for m in methods if m in by_method]
    residuals = residual_rows(ordered, dataset, plan.protocol.value)
    return BenchmarkReport(
        protocol=plan.protocol,
        seed=plan.seed,
        n_folds=len(plan.folds),
        methods=summaries,
        folds=list(ordered),
        per_solvent=per_solvent_mse(residuals),
        residual_bias=residual_bias(residuals),
        metadata=dict(metadata or {}),
        provenance=dict(provenance or {}),
        references=references(),
    )


def report_payload(report: BenchmarkReport) -> Dict[str, Any]:
    payload = report.model_dump(mode="json")
    payload["complete"] = report.complete
    return payload


def timings_payload(report: BenchmarkReport) -> Dict[str, Any]:
    """Wall times live apart from the report so reruns stay byte-identical"""
    return {
        "protocol": report.protocol.value,
        "seed": report.seed,
        "provenance": report.provenance,
        "folds": [
            {"fold_id": r.fold_id, "method": r.method, "wall_time": round(r.wall_time, 3)}
            for r in report.folds
        ],
    }


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _reference_text(method: str) -> str:
    ref = REFERENCE_MSE.get(method)
    if not ref:
        return "-"
    (s, s_sd), (m, m_sd) = ref["single_solvent"], ref["mixture"]
    return f"{s:.4f}±{s_sd:.4f} / {m:.4f}±{m_sd:.4f}"


def _align(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
    return "\n".join(lines) + "\n"


def render_table(report: BenchmarkReport) -> str:
    """Aligned plain-text comparison of all methods"""
    header = ["Method", "Folds", "Failed", "MSE mean", "MSE std", "Reference (single / mixture)"]
    rows = [
        [s.label, str(s.n_folds), str(s.n_failed), _fmt(s.mse_mean), _fmt(s.mse_std), _reference_text(s.method)]
        for s in report.methods
    ]
    title = f"Protocol {report.protocol.value}, seed {report.seed}, {report.n_folds} folds\n"
    return title + _align(header, rows)


def render_ablation_table(report: BenchmarkReport) -> str:
    """Full GNN first, then each ablation with its change relative to the full model"""
    full = report.summary_for(Method.GNN.value)
    full_mse = full.mse_mean if full else None
    header = ["Variant", "MSE mean", "MSE std", "Change vs full", "Reference (single / mixture)"]
    rows = []
    for method in ABLATION_METHODS:
        s = report.summary_for(method)
        if s is None:
            continue
        delta = "-" if method == Method.GNN.value or s.mse_mean is None or full_mse is None \
            else f"{s.mse_mean - full_mse:+.4f}"
        rows.append([ABLATION_LABELS[method], _fmt(s.mse_mean), _fmt(s.mse_std), delta, _reference_text(method)])
    title = f"GNN ablations, protocol {report.protocol.value}, seed {report.seed}\n"
    return title + _align(header, rows)

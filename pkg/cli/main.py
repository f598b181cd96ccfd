"""
Command-line entry point.

Subcommands wire ingestion, fingerprinting, training, benchmarking and
ablations together. Every artifact embeds the run's provenance.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
import argparse
import asyncio
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from chem.descriptors import (
    ACS_PCA, SPANGE, TABLE_IDS, DescriptorSet, DescriptorTable, load_descriptor_table, pca_table,
)
from chem.drfp import drfp_fingerprint, split_reaction
from ingest.loader import default_reaction, load_dataset
from ingest.validation import validate_dataset
from orchestrator.fold_worker import UNBOUNDED_METHODS
from orchestrator.metrics import clamp_unit
from orchestrator.orchestrator import BenchmarkOrchestrator, ablation_suite, context_overrides
from orchestrator.reports import (
    ABLATION_METHODS, TARGET_NAMES, render_ablation_table, render_table, report_payload, residual_rows,
    timings_payload,
)
from orchestrator.split_planner import carve_validation
from predictors.configs import parse_override
from predictors.inputs import FeatureContext
from predictors.training import TRAINABLE, bundle_digest, load_bundle, resolve_configs, train
from shared.artifact_manager import ArtifactManager, provenance, render_header, sha256_file, sha256_json
from shared.config import settings
from shared.errors import BenchError, RowParseError, SmilesError
from shared.log import get_logger
from shared.models import BenchmarkReport, Dataset, Protocol, RunConfig, Subset

logger = get_logger("CLI")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

RXN_COLUMN = "rxn_smiles"
DEFAULT_PCA_COMPONENTS = 5


class UsageError(Exception):
    """Bad flags or missing inputs; reported with exit code 2"""


# --- argument parsing -----------------------------------------------------

def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="Benchmark CSV file")
    parser.add_argument("--mapping", help="JSON file mapping raw column headers to canonical names")
    parser.add_argument("--subset", choices=[s.value for s in Subset], help="Dataset subset (default mixtures)")
    parser.add_argument("--spange", help="Spange descriptor CSV")
    parser.add_argument("--acs-pca", dest="acs_pca", help="ACS PCA descriptor CSV")
    parser.add_argument("--official", action="store_true", default=None,
                        help="Enforce the published row and solvent counts")


def _add_run_flags(parser: argparse.ArgumentParser, methods: bool = True) -> None:
    parser.add_argument("--config", help="JSON run configuration; flags override its values")
    parser.add_argument("--seed", type=int, help="Run seed (default from SEED)")
    parser.add_argument("--out", help="Output directory (default from OUTPUT_DIR)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="Hyperparameter override, e.g. gnn.hidden=128 (repeatable)")
    if methods:
        parser.add_argument("--methods", help="Comma-separated methods, e.g. gbdt,gnn,ensemble")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solvbench", description="Solvent-yield prediction benchmark toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    fp = sub.add_parser("fingerprint", help="Differential reaction fingerprints as hex CSV")
    fp.add_argument("--input", help=f"CSV with a {RXN_COLUMN!r} column (default: the configured reaction)")
    fp.add_argument("--column", default=RXN_COLUMN, help="Reaction SMILES column name")
    fp.add_argument("--radius", type=int, default=settings.DRFP_RADIUS)
    fp.add_argument("--width", type=int, default=settings.DRFP_WIDTH)
    fp.add_argument("--out", help="Output directory (default from OUTPUT_DIR)")
    fp.add_argument("--seed", type=int, help="Recorded in provenance only")

    tr = sub.add_parser("train", help="Train methods on the whole dataset and write checkpoints")
    _add_data_flags(tr)
    _add_run_flags(tr)

    for name, text in (("benchmark", "Cross-validated comparison of methods"),
                       ("ablate", "Full GNN against its four ablations")):
        p = sub.add_parser(name, help=text)
        _add_data_flags(p)
        _add_run_flags(p, methods=name == "benchmark")
        p.add_argument("--protocol", choices=[pr.value for pr in Protocol], help="Split protocol (default loso)")
        p.add_argument("--jobs", type=int, help="Folds evaluated concurrently")

    va = sub.add_parser("validate", help="Report range violations, duplicates and unknown solvents")
    _add_data_flags(va)
    _add_run_flags(va, methods=False)

    pc = sub.add_parser("pca", help="Reduce a raw descriptor table to k principal components")
    pc.add_argument("--table", required=True, help="Raw descriptor CSV (first column = solvent name)")
    pc.add_argument("--k", type=int, default=DEFAULT_PCA_COMPONENTS)
    pc.add_argument("--table-id", dest="table_id", choices=list(TABLE_IDS), default=ACS_PCA)
    pc.add_argument("--out", help="Output directory (default from OUTPUT_DIR)")

    pr = sub.add_parser("predict", help="Predict yields with a saved checkpoint")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--method", choices=sorted(TRAINABLE),
                    help="Refuse the checkpoint unless it matches this method's configuration")
    _add_data_flags(pr)
    _add_run_flags(pr, methods=False)
    return parser


def parse_overrides(items: Sequence[str], base: Optional[Dict[str, Any]] = None) -> Dict[str, Dict[str, Any]]:
    """Merge ``section.key=value`` strings into a section -> {key: value} table"""
    merged: Dict[str, Dict[str, Any]] = {s: dict(v) for s, v in (base or {}).items()}
    for item in items:
        try:
            section, key, value = parse_override(item)
        except ValueError as e:
            raise UsageError(str(e))
        merged.setdefault(section, {})[key] = value
    return merged


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """JSON config file first, then any flag that was given"""
    data: Dict[str, Any] = {}
    config_path = getattr(args, "config", None)
    if config_path:
        if not Path(config_path).is_file():
            raise UsageError(f"config file not found: {config_path}")
        data = json.loads(Path(config_path).read_text(encoding="utf-8"))

    for name in ("data", "mapping", "subset", "spange", "acs_pca", "protocol", "seed", "out", "jobs", "official"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if getattr(args, "methods", None):
        data["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    data.setdefault("seed", settings.SEED)
    data.setdefault("out", settings.OUTPUT_DIR)
    data.setdefault("jobs", settings.JOBS)
    data.setdefault("spange", settings.SPANGE_TABLE_PATH)
    data.setdefault("acs_pca", settings.ACS_PCA_TABLE_PATH)
    data["overrides"] = parse_overrides(getattr(args, "overrides", []), data.get("overrides"))

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise UsageError(f"invalid run configuration: {e.errors()[0]['msg']}")
    for name in ("data", "mapping", "spange", "acs_pca"):
        path = getattr(config, name)
        if path and not Path(path).is_file():
            raise UsageError(f"--{name.replace('_', '-')} file not found: {path}")
    return config


# --- shared plumbing --------------------------------------------------------

def _require_data(config: RunConfig) -> None:
    if not config.data:
        raise UsageError("--data is required")


def load_inputs(config: RunConfig) -> Dataset:
    _require_data(config)
    return load_dataset(config.data, config.subset, config.mapping, official=config.official,
                        reaction=default_reaction())


def load_tables(config: RunConfig) -> DescriptorSet:
    return DescriptorSet(
        spange=load_descriptor_table(config.spange, SPANGE) if config.spange else None,
        acs_pca=load_descriptor_table(config.acs_pca, ACS_PCA) if config.acs_pca else None,
    )


def dataset_drfp_width(dataset: Dataset) -> Optional[int]:
    """Width of fingerprints supplied by the dataset, if any"""
    for record in dataset.records:
        if record.drfp_hex:
            return len(record.drfp_hex.strip()) * 4
    return None


def build_context(dataset: Dataset, tables: DescriptorSet) -> FeatureContext:
    width = dataset_drfp_width(dataset) or settings.DRFP_WIDTH
    return FeatureContext(dataset.reaction, tables, drfp_radius=settings.DRFP_RADIUS, drfp_width=width)


def run_provenance(config: RunConfig, dataset: Optional[Dataset], command: str,
                   digests: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    """Seed, config digest, dataset digest and tool version for one invocation"""
    recorded = config.model_dump(mode="json", exclude={"out", "jobs"})
    config_digest = sha256_json({"run": recorded, "models": digests or {}})
    return provenance(
        config.seed,
        config_digest=config_digest,
        dataset_digest=dataset.source_digest if dataset else None,
        command=command,
        method_digests=dict(sorted((digests or {}).items())),
    )


def method_digests(methods: Sequence[str], overrides: Dict[str, Dict[str, Any]]) -> Dict[str, str]:
    digests = {}
    for method in methods:
        if method in TRAINABLE:
            model_config, train_config = resolve_configs(method, overrides)
            digests[method] = bundle_digest(method, model_config, train_config)
    return digests


def report_metadata(dataset: Dataset, context: FeatureContext, variance_mode: str) -> Dict[str, Any]:
    return {
        "subset": dataset.subset.value,
        "n_rows": len(dataset.records),
        "n_solvents": len(dataset.roster),
        "n_targets": dataset.n_targets,
        "yield_scale": dataset.yield_scale,
        "yield_scale_reason": dataset.yield_scale_reason,
        "drfp_source": dataset.drfp_source,
        "drfp_radius": context.drfp_radius,
        "drfp_width": context.drfp_width,
        "spange_width": context.tables.n_spange,
        "acs_pca_width": context.tables.n_acs,
        "variance_mode": variance_mode,
        "clamping": "gbdt, deepmodel, mlp and ensemble predictions clamped to [0, 1] before scoring; "
                    "GNN outputs are sigmoid-bounded",
        "residual_sign": "true - predicted",
    }


def _report_stem(kind: str, report: BenchmarkReport) -> str:
    return f"{kind}_{report.protocol.value}_seed{report.seed}"


def write_report(manager: ArtifactManager, kind: str, report: BenchmarkReport, dataset: Dataset,
                 table: str) -> Dict[str, str]:
    stem = _report_stem(kind, report)
    header = {k: v for k, v in report.provenance.items() if not isinstance(v, dict)}
    residuals = residual_rows(report.folds, dataset, report.protocol.value)
    return {
        "json": manager.save_json_report(f"{stem}.json", report_payload(report)),
        "text": manager.save_report(f"{stem}.txt", render_header(header) + table),
        "residuals": manager.save_frame(f"residuals_{stem}.csv", residuals, header),
        "timings": manager.save_json_report(f"timings_{stem}.json", timings_payload(report)),
    }


# --- subcommands --------------------------------------------------------------

def cmd_fingerprint(args: argparse.Namespace) -> int:
    """One hex-encoded fingerprint per reaction row"""
    if args.width <= 0 or args.width & (args.width - 1):
        raise UsageError(f"--width must be a positive power of two, got {args.width}")
    if args.radius < 0:
        raise UsageError("--radius must be non-negative")

    if args.input:
        if not Path(args.input).is_file():
            raise UsageError(f"--input file not found: {args.input}")
        frame = pd.read_csv(args.input, dtype=str, keep_default_na=False)
        if args.column not in frame.columns:
            raise UsageError(f"column {args.column!r} not in {args.input}")
        reactions = list(frame[args.column])
        dataset_digest = sha256_file(args.input)
    else:
        r = default_reaction()
        reactions = [f"{r.starting_material}>>{r.product_2}.{r.product_3}"]
        dataset_digest = None

    rows = []
    for i, text in enumerate(reactions):
        try:
            reactants, products = split_reaction(text)
            fp = drfp_fingerprint(reactants, products, args.radius, args.width)
        except SmilesError as e:
            raise RowParseError(i + 1, args.column, e.message)
        rows.append({"row_id": i, "drfp_hex": fp.to_hex()})

    seed = settings.SEED if args.seed is None else args.seed
    header = provenance(seed, sha256_json({"radius": args.radius, "width": args.width}), dataset_digest)
    manager = ArtifactManager(args.out)
    path = manager.save_frame(f"fingerprints_r{args.radius}_w{args.width}.csv",
                              pd.DataFrame(rows, columns=["row_id", "drfp_hex"]), header)
    logger.info(f"Wrote {len(rows)} fingerprints to {path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Fit each requested method on the dataset (validation carved out) and save it"""
    config = load_run_config(args)
    dataset = load_inputs(config)
    context = build_context(dataset, load_tables(config))
    overrides = context_overrides(config.overrides, context)
    methods = [m for m in config.methods if m in TRAINABLE]
    if not methods:
        raise UsageError("no trainable method requested (ensemble is evaluation-only)")

    lookup = dataset.by_id()
    train_ids, val_ids = carve_validation(list(lookup), lookup, settings.VALIDATION_FRACTION, config.seed)
    train_rows, val_rows = dataset.select(train_ids), dataset.select(val_ids)
    manager = ArtifactManager(config.out)
    meta = run_provenance(config, dataset, "train", method_digests(methods, overrides))
    header = {k: v for k, v in meta.items() if not isinstance(v, dict)}

    for method in methods:
        model_config, train_config = resolve_configs(method, overrides)
        bundle, curve = train(method, train_rows, val_rows, context, model_config, train_config, config.seed)
        stem = f"{method}_seed{config.seed}"
        path = bundle.save(manager.checkpoint_path(f"{stem}.npz"),
                           {"provenance": meta, "drfp_width": context.drfp_width, "subset": dataset.subset.value})
        frame = pd.DataFrame(curve.to_rows())
        manager.save_frame(f"curve_{stem}.csv", frame, {**header, "best_epoch": curve.best_epoch,
                                                        "stopped_early": curve.stopped_early})
        logger.info(f"{method}: {len(curve)} epochs, checkpoint {path}")
    return EXIT_OK


def _finish(report: BenchmarkReport, paths: Dict[str, str]) -> int:
    for kind, path in sorted(paths.items()):
        logger.info(f"{kind}: {path}")
    if not report.complete:
        logger.error("some folds failed; see the report for details")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    dataset = load_inputs(config)
    context = build_context(dataset, load_tables(config))
    overrides = context_overrides(config.overrides, context)
    orchestrator = BenchmarkOrchestrator(dataset, context, config.methods, jobs=config.jobs, overrides=overrides)
    meta = run_provenance(config, dataset, "benchmark", method_digests(orchestrator.methods, overrides))
    report = asyncio.run(orchestrator.run(
        config.protocol, config.seed,
        metadata=report_metadata(dataset, context, orchestrator.variance_mode),
        provenance=meta,
    ))
    paths = write_report(ArtifactManager(config.out), "benchmark", report, dataset, render_table(report))
    print(render_table(report), end="")
    return _finish(report, paths)


def cmd_ablate(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    dataset = load_inputs(config)
    context = build_context(dataset, load_tables(config))
    overrides = context_overrides(config.overrides, context)
    config = config.model_copy(update={"methods": list(ABLATION_METHODS)})
    meta = run_provenance(config, dataset, "ablate", method_digests(ABLATION_METHODS, overrides))
    report = asyncio.run(ablation_suite(
        dataset, context, config.protocol, config.seed, jobs=config.jobs, overrides=overrides,
        metadata=report_metadata(dataset, context, settings.VARIANCE_MODE), provenance=meta,
    ))
    table = render_ablation_table(report)
    paths = write_report(ArtifactManager(config.out), "ablation", report, dataset, table)
    print(table, end="")
    return _finish(report, paths)


def cmd_validate(args: argparse.Namespace) -> int:
    """Report-only: problems are listed, the exit code stays 0"""
    config = load_run_config(args)
    dataset = load_inputs(config)
    tables = load_tables(config)
    report = validate_dataset(dataset, tables if tables.tables() else None)
    payload = report.model_dump(mode="json")
    payload["is_clean"] = report.is_clean
    payload["provenance"] = run_provenance(config, dataset, "validate")
    path = ArtifactManager(config.out).save_json_report(f"validation_{dataset.subset.value}.json", payload)
    if report.is_clean:
        logger.info(f"No issues in {len(dataset.records)} rows; report at {path}")
    else:
        logger.warning(f"{len(report.violations)} issue(s) found; report at {path}")
    return EXIT_OK


def cmd_pca(args: argparse.Namespace) -> int:
    if not Path(args.table).is_file():
        raise UsageError(f"--table file not found: {args.table}")
    raw = pd.read_csv(args.table)
    table = DescriptorTable.from_frame(raw, args.table_id)
    try:
        reduced, basis = pca_table(table, args.k, args.table_id)
    except ValueError as e:
        raise UsageError(str(e))
    ratios = ",".join(f"{v:.6f}" for v in basis.explained_variance_ratio())
    header = {
        **provenance(settings.SEED, sha256_json({"k": args.k, "table_id": args.table_id}), sha256_file(args.table)),
        "explained_variance_ratio": ratios,
    }
    path = ArtifactManager(args.out).save_frame(f"pca_{Path(args.table).stem}_k{args.k}.csv",
                                                reduced.to_frame(), header)
    logger.info(f"{table.width} descriptors reduced to {args.k} components ({ratios}); wrote {path}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    if not Path(args.checkpoint).is_file():
        raise UsageError(f"--checkpoint file not found: {args.checkpoint}")
    dataset = load_inputs(config)
    context = build_context(dataset, load_tables(config))
    expected = None
    if args.method:
        overrides = context_overrides(config.overrides, context)
        expected = bundle_digest(args.method, *resolve_configs(args.method, overrides))
    bundle = load_bundle(args.checkpoint, context, expected)

    pred = bundle.predict(dataset.records)
    clamped = bundle.method in UNBOUNDED_METHODS
    if clamped:
        pred = clamp_unit(pred)
    frame = pd.DataFrame({
        "row_id": [r.row_id for r in dataset.records],
        "solvent": [" / ".join(r.solvent_names) for r in dataset.records],
    })
    for t in range(dataset.n_targets):
        frame[f"pred_{TARGET_NAMES[t]}"] = np.round(pred[:, t], 10)
    meta = run_provenance(config, dataset, "predict", {bundle.method: bundle.digest})
    header = {k: v for k, v in meta.items() if not isinstance(v, dict)}
    header.update({"method": bundle.method, "clamped": str(clamped).lower()})
    path = ArtifactManager(config.out).save_frame(f"predictions_{Path(args.checkpoint).stem}.csv", frame, header)
    logger.info(f"Wrote {len(frame)} predictions to {path}")
    return EXIT_OK


COMMANDS = {
    "fingerprint": cmd_fingerprint,
    "train": cmd_train,
    "benchmark": cmd_benchmark,
    "ablate": cmd_ablate,
    "validate": cmd_validate,
    "pca": cmd_pca,
    "predict": cmd_predict,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except (BenchError, FloatingPointError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE

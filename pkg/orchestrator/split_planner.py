"""
Split planner: decomposes a benchmark run into independent folds.
Each fold holds out one group (solvent, ramp or a random 20%) for testing and
carves a ramp-grouped validation set out of its training rows.
"""
from collections import defaultdict
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shared.config import settings
from shared.errors import TooFewGroups
from shared.log import get_logger
from shared.models import Dataset, Fold, Protocol, ReactionRecord, SplitPlan

logger = get_logger("SplitPlanner")

RANDOM_TEST_FRACTION = 0.2


def fold_seed(seed: int, fold_id: int) -> int:
    """Independent per-fold seed derived from (run seed, fold index)"""
    return int(np.random.SeedSequence([seed, fold_id]).generate_state(1)[0])


def carve_validation(
    train_ids: Sequence[int],
    records: Dict[int, ReactionRecord],
    fraction: float,
    seed: int,
) -> Tuple[List[int], List[int]]:
    """
    Move about ``fraction`` of the training rows into a validation set.

    Whole ramps move together. With a single ramp available the rows are
    split individually instead. At least one training row always remains;
    fewer than two rows leave the validation set empty.

    Returns:
        (remaining train ids, validation ids), both sorted
    """
    ids = sorted(train_ids)
    if len(ids) < 2:
        return ids, []
    target = max(1, int(round(fraction * len(ids))))
    rng = np.random.default_rng(seed)

    by_ramp: Dict[str, List[int]] = defaultdict(list)
    for i in ids:
        by_ramp[records[i].ramp_id].append(i)

    val: List[int] = []
    if len(by_ramp) > 1:
        ramps = sorted(by_ramp)
        for k in rng.permutation(len(ramps)):
            if len(val) >= target:
                break
            members = by_ramp[ramps[k]]
            if len(val) + len(members) >= len(ids):
                continue
            val.extend(members)
    else:
        val = [ids[k] for k in rng.permutation(len(ids))[:min(target, len(ids) - 1)]]

    chosen = set(val)
    return [i for i in ids if i not in chosen], sorted(val)


class SplitPlanner:
    """Builds SplitPlans for the cross-validation protocols"""

    def __init__(self, validation_fraction: Optional[float] = None):
        self.validation_fraction = validation_fraction or settings.VALIDATION_FRACTION
        self._grouping: Dict[Protocol, Callable[[Dataset, int], List[Tuple[str, List[int], List[int]]]]] = {
            Protocol.LOSO: self._leave_one_solvent_out,
            Protocol.LORO: self._leave_one_ramp_out,
            Protocol.RANDOM: self._random_split,
        }

    def plan(self, dataset: Dataset, protocol: Protocol, seed: int = 0) -> SplitPlan:
        """
        Partition the dataset's rows into folds.

        Raises:
            TooFewGroups: Fewer than two groups under the protocol's key
        """
        protocol = Protocol(protocol)
        partitions = self._grouping[protocol](dataset, seed)
        lookup = dataset.by_id()
        folds = []
        for fold_id, (group, train_ids, test_ids) in enumerate(partitions):
            train, val = carve_validation(train_ids, lookup, self.validation_fraction, fold_seed(seed, fold_id))
            folds.append(Fold(fold_id=fold_id, group=group, train_ids=train, test_ids=sorted(test_ids), val_ids=val))
        plan = SplitPlan(protocol=protocol, seed=seed, folds=folds)
        logger.info(f"{protocol.value}: {len(folds)} folds over {len(dataset.records)} rows")
        return plan

    def _leave_one_solvent_out(self, dataset: Dataset, seed: int):
        roster = dataset.roster
        if len(roster) < 2:
            raise TooFewGroups(Protocol.LOSO.value, len(roster))
        partitions = []
        for solvent in roster:
            test = [r.row_id for r in dataset.records if r.involves(solvent)]
            train = [r.row_id for r in dataset.records if not r.involves(solvent)]
            partitions.append((solvent, train, test))
        return partitions

    def _leave_one_ramp_out(self, dataset: Dataset, seed: int):
        ramps: Dict[str, List[int]] = defaultdict(list)
        for r in dataset.records:
            ramps[r.ramp_id].append(r.row_id)
        if len(ramps) < 2:
            raise TooFewGroups(Protocol.LORO.value, len(ramps))
        all_ids = [r.row_id for r in dataset.records]
        partitions = []
        for ramp in sorted(ramps):
            held = set(ramps[ramp])
            partitions.append((ramp, [i for i in all_ids if i not in held], ramps[ramp]))
        return partitions

    def _random_split(self, dataset: Dataset, seed: int):
        ids = np.array([r.row_id for r in dataset.records])
        if ids.size < 2:
            raise TooFewGroups(Protocol.RANDOM.value, int(ids.size))
        order = np.random.default_rng(seed).permutation(ids.size)
        n_test = min(max(1, int(round(RANDOM_TEST_FRACTION * ids.size))), ids.size - 1)
        test = sorted(int(i) for i in ids[order[:n_test]])
        train = sorted(int(i) for i in ids[order[n_test:]])
        return [("random", train, test)]


def make_splits(dataset: Dataset, protocol: Protocol, seed: int = 0) -> SplitPlan:
    return SplitPlanner().plan(dataset, protocol, seed)


def scan_leakage(plan: SplitPlan, records: Dict[int, ReactionRecord]) -> List[str]:
    """
    Exhaustively look for held-out information in training or validation rows.

    Returns:
        One message per leak; empty when the plan is clean
    """
    leaks = []
    for fold in plan.folds:
        fitted = list(fold.train_ids) + list(fold.val_ids)
        overlap = set(fitted) & set(fold.test_ids)
        if overlap:
            leaks.append(f"fold {fold.fold_id}: {len(overlap)} test rows also used for fitting")
        for i in fitted:
            record = records[i]
            if plan.protocol == Protocol.LOSO and record.involves(fold.group):
                leaks.append(f"fold {fold.fold_id}: row {i} uses held-out solvent {fold.group!r}")
            elif plan.protocol == Protocol.LORO and record.ramp_id == fold.group:
                leaks.append(f"fold {fold.fold_id}: row {i} belongs to held-out ramp {fold.group!r}")
    return leaks

"""Sub-explanation expansion and counting.

Starting from each minimal sufficient explanation, patches are deleted one
at a time; a subset whose confidence ratio (against the full image) stays
at or above ``stop_fraction`` is a sub-explanation and is expanded further.
Counting how many sub-explanations clear each threshold separates models
that spread confidence over many patch combinations from models that rely
on a few.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

from .errors import GridError, OracleError
from .imaging import GREY, BaselineStyle, GridSpec, ImageTensor, PatchSet
from .oracles import ClassifierOracle, ConfidenceCache, score_masks
from .search import BRUTE_FORCE_LIMIT, MseRecord, brute_force_mses

DEFAULT_THRESHOLDS = (0.9, 0.8, 0.7, 0.6, 0.5)


class DedupMode(Enum):
    """PER_IMAGE counts each distinct subset once per image; PER_TREE counts
    it once per MSE root it is reachable from."""

    PER_IMAGE = "per_image"
    PER_TREE = "per_tree"


@dataclass(frozen=True)
class CountConfig:
    thresholds: tuple = DEFAULT_THRESHOLDS
    stop_fraction: float = 0.5
    dedup: DedupMode = DedupMode.PER_IMAGE

    def __post_init__(self):
        if not self.thresholds:
            raise OracleError("need at least one threshold")
        if any(not 0.0 < t <= 1.0 for t in self.thresholds):
            raise OracleError("thresholds must lie in (0, 1]")
        if any(a <= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise OracleError("thresholds must be strictly decreasing")
        if not 0.0 < self.stop_fraction <= min(self.thresholds):
            raise OracleError("stop_fraction must be positive and not exceed the smallest threshold")


@dataclass(frozen=True)
class SubExplanationNode:
    patches: PatchSet
    confidence_ratio: float


@dataclass(frozen=True)
class SubExplanationCount:
    image_id: str
    mse_count: int
    thresholds: tuple
    counts: tuple


def expand_subexplanations(
    oracle: ClassifierOracle,
    image: ImageTensor,
    mse: MseRecord,
    config: CountConfig = CountConfig(),
    cache: Optional[ConfidenceCache] = None,
    baseline: BaselineStyle = GREY,
    score_memo: Optional[dict] = None,
) -> set:
    """Breadth-first single-patch deletions below one MSE root.

    Returns the proper subsets of the root whose ratio clears
    ``stop_fraction`` and that are reachable through such subsets; the root
    itself is excluded.  ``score_memo`` shares ratios across roots of the
    same image.
    """
    if mse.full_confidence <= 0:
        raise OracleError("full confidence must be positive to form ratios")
    grid = mse.patches.grid
    memo = score_memo if score_memo is not None else {}
    result: dict = {}
    visited = {mse.patches.bits}
    frontier = deque([mse.patches.bits])
    while frontier:
        to_score = []
        level = []
        while frontier:
            parent = frontier.popleft()
            rem = parent
            while rem:
                low = rem & -rem
                child = parent ^ low
                rem ^= low
                if child == 0 or child in visited:
                    continue
                visited.add(child)
                level.append(child)
                if child not in memo:
                    to_score.append(child)
        if to_score:
            confs = score_masks(oracle, image, baseline, grid, to_score, mse.class_id, cache)
            for bits, conf in zip(to_score, confs):
                memo[bits] = conf / mse.full_confidence
        for bits in level:
            ratio = memo[bits]
            if ratio >= config.stop_fraction:
                result[bits] = ratio
                frontier.append(bits)
    return {
        SubExplanationNode(patches=PatchSet(bits, grid), confidence_ratio=float(ratio))
        for bits, ratio in result.items()
    }


def expand_all(
    oracle: ClassifierOracle,
    image: ImageTensor,
    mses: Sequence[MseRecord],
    config: CountConfig = CountConfig(),
    cache: Optional[ConfidenceCache] = None,
    baseline: BaselineStyle = GREY,
) -> list:
    """Per-root node sets with scores memoized across roots."""
    memo: dict = {}
    return [
        expand_subexplanations(oracle, image, mse, config, cache, baseline, score_memo=memo)
        for mse in mses
    ]


def count_above_thresholds(
    image_id: str,
    nodes_per_mse: Sequence[set],
    config: CountConfig = CountConfig(),
) -> SubExplanationCount:
    if config.dedup is DedupMode.PER_IMAGE:
        merged: dict = {}
        for nodes in nodes_per_mse:
            for node in nodes:
                merged[node.patches.bits] = node.confidence_ratio
        ratios = list(merged.values())
    else:
        ratios = [node.confidence_ratio for nodes in nodes_per_mse for node in nodes]
    counts = tuple(sum(1 for r in ratios if r >= t) for t in config.thresholds)
    return SubExplanationCount(
        image_id=image_id,
        mse_count=len(nodes_per_mse),
        thresholds=tuple(config.thresholds),
        counts=counts,
    )


def brute_force_counts(
    oracle: ClassifierOracle,
    image: ImageTensor,
    grid: GridSpec,
    confidence_fraction: float = 0.9,
    config: CountConfig = CountConfig(),
    cache: Optional[ConfidenceCache] = None,
    baseline: BaselineStyle = GREY,
) -> SubExplanationCount:
    """Independent reference counter.

    Scores every subset, takes the exhaustive-minimality MSEs as roots,
    computes reachable-node sets under the deletion DAG and stop rule by
    table lookup, and counts with per-image dedup.
    """
    n = grid.n_patches
    if n > 12:
        raise GridError(f"brute-force counting limited to 12 patches, got {n}")
    if n > BRUTE_FORCE_LIMIT:
        raise GridError("grid exceeds brute-force capacity")
    roots = brute_force_mses(oracle, image, grid, confidence_fraction, cache, baseline)
    if not roots:
        return SubExplanationCount(
            image_id=image.key,
            mse_count=0,
            thresholds=tuple(config.thresholds),
            counts=tuple(0 for _ in config.thresholds),
        )
    class_id = roots[0].class_id
    full_conf = roots[0].full_confidence
    all_masks = list(range(1, 1 << n))
    confs = score_masks(oracle, image, baseline, grid, all_masks, class_id, cache, 256)
    ratio = {bits: conf / full_conf for bits, conf in zip(all_masks, confs)}
    merged: dict = {}
    for root in roots:
        root_bits = root.patches.bits
        reached = {root_bits}
        # walk submasks by descending size so parents precede children
        order = sorted((b for b in _submasks_inclusive(root_bits)), key=lambda b: -b.bit_count())
        for bits in order:
            if bits not in reached:
                continue
            if bits != root_bits and ratio[bits] < config.stop_fraction:
                continue
            rem = bits
            while rem:
                low = rem & -rem
                child = bits ^ low
                rem ^= low
                if child:
                    reached.add(child)
        for bits in reached:
            if bits != root_bits and ratio[bits] >= config.stop_fraction:
                merged[bits] = ratio[bits]
    counts = tuple(sum(1 for r in merged.values() if r >= t) for t in config.thresholds)
    return SubExplanationCount(
        image_id=image.key,
        mse_count=len(roots),
        thresholds=tuple(config.thresholds),
        counts=counts,
    )


def _submasks_inclusive(bits: int):
    sub = bits
    while True:
        if sub:
            yield sub
        if sub == 0:
            return
        sub = (sub - 1) & bits


def counts_to_csv(counts: Sequence[SubExplanationCount], path) -> None:
    if not counts:
        raise OracleError("no counts to write")
    thresholds = counts[0].thresholds
    header = ["image_id", "mse_count"] + [f"c{int(round(t * 100))}" for t in thresholds]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for item in counts:
            if item.thresholds != thresholds:
                raise OracleError("mixed threshold sets in one CSV")
            writer.writerow([item.image_id, item.mse_count, *item.counts])


def read_counts_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        thresholds = tuple(int(name[1:]) / 100.0 for name in header[2:])
        for row in reader:
            out.append(
                SubExplanationCount(
                    image_id=row[0],
                    mse_count=int(row[1]),
                    thresholds=thresholds,
                    counts=tuple(int(v) for v in row[2:]),
                )
            )
    return out

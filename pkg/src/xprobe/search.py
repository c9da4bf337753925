"""Minimal sufficient explanation search.

A patch set explains an image when its masked composition retains at least
``confidence_fraction`` of the full-image confidence for the predicted
class, and no proper subset does.  ``find_mses`` runs a beam search over
subset sizes; ``brute_force_mses`` enumerates every subset and is the test
oracle the beam is checked against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .errors import GridError, OracleError
from .imaging import GREY, BaselineStyle, GridSpec, ImageTensor, PatchSet
from .oracles import ClassifierOracle, ConfidenceCache, predicted_class, score_masks

EXHAUSTIVE_LIMIT = 20
BRUTE_FORCE_LIMIT = 16


class Minimality(Enum):
    """How thoroughly subsets are checked when deciding minimality.

    IMMEDIATE checks only the one-patch-smaller subsets; EXHAUSTIVE checks
    every non-empty proper subset (bounded to sets of at most 20 patches).
    """

    IMMEDIATE = "immediate"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class BeamConfig:
    confidence_fraction: float = 0.9
    beam_width: int = 5
    max_patch_count: Optional[int] = None
    max_mses: Optional[int] = None
    baseline: BaselineStyle = GREY
    minimality: Minimality = Minimality.IMMEDIATE
    batch_size: int = 32

    def __post_init__(self):
        if not 0.0 < self.confidence_fraction <= 1.0:
            raise OracleError("confidence_fraction must lie in (0, 1]")
        if self.beam_width < 1:
            raise OracleError("beam_width must be at least 1")
        if self.max_mses is not None and self.max_mses < 1:
            raise OracleError("max_mses must be at least 1 when set")


@dataclass(frozen=True)
class MseRecord:
    image_id: str
    class_id: int
    patches: PatchSet
    confidence: float
    full_confidence: float
    minimality: Minimality

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_id": self.image_id,
                "class_id": self.class_id,
                "mask": self.patches.hex,
                "confidence": self.confidence,
                "full_confidence": self.full_confidence,
                "minimality": self.minimality.value,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str, grid: GridSpec) -> "MseRecord":
        obj = json.loads(line)
        return cls(
            image_id=str(obj["image_id"]),
            class_id=int(obj["class_id"]),
            patches=PatchSet(int(obj["mask"], 16), grid),
            confidence=float(obj["confidence"]),
            full_confidence=float(obj["full_confidence"]),
            minimality=Minimality(obj["minimality"]),
        )


def _iter_proper_submasks(bits: int):
    """All non-empty proper submasks of ``bits``, descending."""
    sub = (bits - 1) & bits
    while sub:
        yield sub
        sub = (sub - 1) & bits


def _immediate_submasks(bits: int):
    out = []
    rem = bits
    while rem:
        low = rem & -rem
        out.append(bits ^ low)
        rem ^= low
    return [m for m in out if m]


def _is_minimal(
    oracle,
    image,
    grid,
    bits: int,
    threshold: float,
    mode: Minimality,
    style: BaselineStyle,
    class_id: int,
    cache,
    batch_size: int = 32,
) -> bool:
    if bits.bit_count() <= 1:
        return True
    if mode is Minimality.EXHAUSTIVE:
        if bits.bit_count() > EXHAUSTIVE_LIMIT:
            raise GridError(
                f"exhaustive minimality limited to sets of {EXHAUSTIVE_LIMIT} patches, got {bits.bit_count()}"
            )
        submasks = list(_iter_proper_submasks(bits))
    else:
        submasks = _immediate_submasks(bits)
    confs = score_masks(oracle, image, style, grid, submasks, class_id, cache, batch_size)
    return all(c < threshold for c in confs)


def check_minimality(
    oracle: ClassifierOracle,
    image: ImageTensor,
    patches: PatchSet,
    confidence_fraction: float,
    mode: Minimality,
    cache: Optional[ConfidenceCache] = None,
    baseline: BaselineStyle = GREY,
    class_id: Optional[int] = None,
    full_confidence: Optional[float] = None,
) -> bool:
    """True when no checked subset of ``patches`` clears the threshold."""
    if class_id is None or full_confidence is None:
        class_id, full_confidence = predicted_class(oracle, image)
    threshold = confidence_fraction * full_confidence
    return _is_minimal(
        oracle, image, patches.grid, patches.bits, threshold, mode, baseline, class_id, cache
    )


def find_mses(
    oracle: ClassifierOracle,
    image: ImageTensor,
    grid: GridSpec,
    config: BeamConfig = BeamConfig(),
    cache: Optional[ConfidenceCache] = None,
) -> list:
    """Beam search for all minimal sufficient explanations of an image.

    Level k scores every one-patch expansion of the level k-1 beam.
    Candidates at or above the threshold are pulled out of the beam,
    minimality-checked, and recorded; the beam then keeps the best
    ``beam_width`` remaining candidates (ranked by confidence, ties by
    ascending bitmask).  Returns records sorted by (size, bitmask).
    """
    n = grid.n_patches
    max_level = config.max_patch_count if config.max_patch_count is not None else n
    max_level = min(max_level, n)
    class_id, full_conf = predicted_class(oracle, image)
    threshold = config.confidence_fraction * full_conf
    style = config.baseline

    records: dict = {}
    candidates = [1 << i for i in range(n)]
    level = 1
    done = False
    while candidates and level <= max_level and not done:
        confs = score_masks(
            oracle, image, style, grid, candidates, class_id, cache, config.batch_size
        )
        ranked = sorted(zip(candidates, confs), key=lambda mc: (-mc[1], mc[0]))
        survivors = []
        for bits, conf in ranked:
            if conf >= threshold:
                if bits not in records and _is_minimal(
                    oracle, image, grid, bits, threshold, config.minimality,
                    style, class_id, cache, config.batch_size,
                ):
                    records[bits] = MseRecord(
                        image_id=image.key,
                        class_id=class_id,
                        patches=PatchSet(bits, grid),
                        confidence=float(conf),
                        full_confidence=float(full_conf),
                        minimality=config.minimality,
                    )
                    if config.max_mses is not None and len(records) >= config.max_mses:
                        done = True
                        break
            else:
                survivors.append(bits)
        if done:
            break
        beam = survivors[: config.beam_width]
        seen = set()
        next_candidates = []
        for bits in beam:
            absent = ((1 << n) - 1) ^ bits
            rem = absent
            while rem:
                low = rem & -rem
                child = bits | low
                if child not in seen:
                    seen.add(child)
                    next_candidates.append(child)
                rem ^= low
        next_candidates.sort()
        candidates = next_candidates
        level += 1
    return sorted(records.values(), key=lambda r: (r.patches.size, r.patches.bits))


def brute_force_mses(
    oracle: ClassifierOracle,
    image: ImageTensor,
    grid: GridSpec,
    confidence_fraction: float = 0.9,
    cache: Optional[ConfidenceCache] = None,
    baseline: BaselineStyle = GREY,
    batch_size: int = 256,
) -> list:
    """Exhaustive reference: scores every non-empty subset, keeps the sets
    at or above the threshold none of whose non-empty proper subsets are."""
    n = grid.n_patches
    if n > BRUTE_FORCE_LIMIT:
        raise GridError(f"brute force limited to {BRUTE_FORCE_LIMIT} patches, got {n}")
    class_id, full_conf = predicted_class(oracle, image)
    threshold = confidence_fraction * full_conf
    total = 1 << n
    all_masks = list(range(1, total))
    confs = score_masks(oracle, image, baseline, grid, all_masks, class_id, cache, batch_size)
    above = [False] * total
    for bits, conf in zip(all_masks, confs):
        above[bits] = conf >= threshold
    # any_sub[m]: some non-empty proper submask of m clears the threshold
    any_sub = [False] * total
    for bits in range(1, total):
        if bits.bit_count() < 2:
            continue
        rem = bits
        flag = False
        while rem:
            low = rem & -rem
            child = bits ^ low
            if child and (above[child] or any_sub[child]):
                flag = True
                break
            rem ^= low
        any_sub[bits] = flag
    records = []
    for bits, conf in zip(all_masks, confs):
        if above[bits] and not any_sub[bits]:
            records.append(
                MseRecord(
                    image_id=image.key,
                    class_id=class_id,
                    patches=PatchSet(bits, grid),
                    confidence=float(conf),
                    full_confidence=float(full_conf),
                    minimality=Minimality.EXHAUSTIVE,
                )
            )
    return sorted(records, key=lambda r: (r.patches.size, r.patches.bits))


def write_mse_jsonl(records: Sequence[MseRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_mse_jsonl(path, grid: GridSpec) -> list:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(MseRecord.from_json(line, grid))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise OracleError(f"corrupt MSE record at line {lineno} of {path}: {exc}") from exc
    return records

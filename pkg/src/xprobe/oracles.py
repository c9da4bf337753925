"""Black-box classifier oracles and the cached patch-subset scoring engine.

An oracle maps a batch of images to per-class confidences in [0, 1]
(confidences need not sum to one).  Synthetic oracles implement the three
mental models used throughout the test suite: conjunctive (all required
patches), disjunctive (any complete group), and additive (weighted sum,
squashed).  They judge patch occupancy from pixels, so they stay honest
black boxes over composed images.
"""

from __future__ import annotations

import json
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import DimensionError, OracleError
from .imaging import GREY, BaselineStyle, GridSpec, ImageTensor, PatchSet, make_baseline

_OCCUPANCY_ATOL = 1e-6


class ClassifierOracle(ABC):
    """A named black box scoring images for a class.

    ``evaluations`` counts underlying model evaluations (one per image per
    call) so tests can assert cache behaviour.
    """

    name: str = "oracle"
    class_count: int = 2
    thread_safe: bool = True

    def __init__(self):
        self.evaluations = 0

    @abstractmethod
    def score_batch(self, images: np.ndarray, class_id: int) -> np.ndarray:
        """Confidences for one class over a float32 (B, C, H, W) batch."""

    def scores_full(self, pixels: np.ndarray) -> np.ndarray:
        """All-class confidences for a single (C, H, W) image."""
        batch = pixels[None]
        return np.asarray(
            [float(self.score_batch(batch, c)[0]) for c in range(self.class_count)], dtype=np.float64
        )


class SquashKind(Enum):
    CLAMP = "clamp"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class Conjunctive:
    """High confidence iff every required patch is present."""

    required: tuple
    hi: float = 1.0
    lo: float = 0.05


@dataclass(frozen=True)
class Disjunctive:
    """High confidence iff at least one group is fully present."""

    groups: tuple
    hi: float = 1.0
    lo: float = 0.05


@dataclass(frozen=True)
class Additive:
    """Squashed sum of the weights of present patches."""

    weights: tuple
    squash: SquashKind = SquashKind.CLAMP


SyntheticSpec = Union[Conjunctive, Disjunctive, Additive]


def _validate_spec(spec: SyntheticSpec, n_patches: int):
    if isinstance(spec, Conjunctive):
        if not 0.0 <= spec.lo < spec.hi <= 1.0:
            raise OracleError("conjunctive needs 0 <= lo < hi <= 1")
        if any(not 0 <= p < n_patches for p in spec.required):
            raise OracleError("required patch index out of range")
    elif isinstance(spec, Disjunctive):
        if not 0.0 <= spec.lo < spec.hi <= 1.0:
            raise OracleError("disjunctive needs 0 <= lo < hi <= 1")
        if not spec.groups or any(len(g) == 0 for g in spec.groups):
            raise OracleError("disjunctive needs at least one non-empty group")
        if any(not 0 <= p < n_patches for g in spec.groups for p in g):
            raise OracleError("group patch index out of range")
    elif isinstance(spec, Additive):
        if len(spec.weights) != n_patches:
            raise OracleError(f"additive needs exactly {n_patches} weights")
        if any(w < 0 for w in spec.weights):
            raise OracleError("additive weights must be non-negative")
    else:
        raise OracleError(f"unknown synthetic spec {type(spec).__name__}")


class SyntheticOracle(ClassifierOracle):
    """Patch-occupancy driven classifier used as a controllable test model.

    A patch counts as present when strictly more than ``occupancy_threshold``
    of its pixels differ from the registered baseline (zeros unless
    ``register_baseline`` is called, e.g. for blur-baseline runs).  Class 0
    carries the spec's confidence; all other classes score 0.
    """

    def __init__(
        self,
        spec: SyntheticSpec,
        grid: GridSpec,
        occupancy_threshold: float = 0.5,
        name: str = "synthetic",
        class_count: int = 2,
    ):
        super().__init__()
        if not 0.0 <= occupancy_threshold < 1.0:
            raise OracleError("occupancy_threshold must lie in [0, 1)")
        _validate_spec(spec, grid.n_patches)
        self.spec = spec
        self.grid = grid
        self.occupancy_threshold = occupancy_threshold
        self.name = name
        self.class_count = class_count
        self._baseline_pixels: Optional[np.ndarray] = None

    def register_baseline(self, baseline) -> None:
        """Register the baseline image occupancy is judged against."""
        pixels = baseline.pixels if isinstance(baseline, ImageTensor) else np.asarray(baseline, dtype=np.float32)
        if pixels.shape[1:] != (self.grid.image_height, self.grid.image_width):
            raise DimensionError("baseline does not match the grid dimensions")
        self._baseline_pixels = np.ascontiguousarray(pixels, dtype=np.float32)

    def occupancy_masks(self, images: np.ndarray) -> list:
        """Present-patch bitmask for each image in the batch."""
        if images.shape[2:] != (self.grid.image_height, self.grid.image_width):
            raise DimensionError("batch does not match the grid dimensions")
        baseline = self._baseline_pixels
        if baseline is None:
            baseline = np.zeros(images.shape[1:], dtype=np.float32)
        counts = kernels.occupancy_counts(
            np.ascontiguousarray(images, dtype=np.float32),
            baseline,
            self.grid.patch_id_map(),
            self.grid.n_patches,
            _OCCUPANCY_ATOL,
        )
        present = counts > self.occupancy_threshold * self.grid.pixels_per_patch()[None, :]
        weights = np.uint64(1) << np.arange(self.grid.n_patches, dtype=np.uint64)
        return [int(m) for m in (present.astype(np.uint64) * weights[None, :]).sum(axis=1)]

    def score_mask(self, mask: int) -> float:
        """Confidence of class 0 for a patch-occupancy bitmask."""
        spec = self.spec
        if isinstance(spec, Conjunctive):
            needed = 0
            for p in spec.required:
                needed |= 1 << p
            return spec.hi if (mask & needed) == needed else spec.lo
        if isinstance(spec, Disjunctive):
            for g in spec.groups:
                needed = 0
                for p in g:
                    needed |= 1 << p
                if (mask & needed) == needed:
                    return spec.hi
            return spec.lo
        total = 0.0
        for p, w in enumerate(spec.weights):
            if (mask >> p) & 1:
                total += w
        if spec.squash is SquashKind.CLAMP:
            return min(max(total, 0.0), 1.0)
        return 1.0 / (1.0 + math.exp(-total))

    def score_batch(self, images: np.ndarray, class_id: int) -> np.ndarray:
        if not 0 <= class_id < self.class_count:
            raise OracleError(f"class id {class_id} out of range")
        self.evaluations += images.shape[0]
        if class_id != 0:
            return np.zeros(images.shape[0], dtype=np.float64)
        masks = self.occupancy_masks(images)
        return np.asarray([self.score_mask(m) for m in masks], dtype=np.float64)


class PatchRuleOracle(SyntheticOracle):
    """Synthetic oracle whose class-0 confidence is an arbitrary function of
    the occupancy bitmask; used to craft non-monotone test landscapes."""

    def __init__(self, score_fn: Callable[[int], float], grid: GridSpec, name="rule", occupancy_threshold=0.5):
        # a placeholder spec keeps the base validation happy
        super().__init__(Conjunctive(required=()), grid, occupancy_threshold, name)
        self._score_fn = score_fn

    def score_mask(self, mask: int) -> float:
        return float(self._score_fn(mask))


def make_synthetic(
    spec: SyntheticSpec,
    grid: GridSpec,
    occupancy_threshold: float = 0.5,
    name: str = "synthetic",
) -> SyntheticOracle:
    return SyntheticOracle(spec, grid, occupancy_threshold=occupancy_threshold, name=name)


class ConfidenceCache:
    """Confidence store keyed by (model, image, baseline, subset token, class).

    Subset tokens are hex bitmasks for patch subsets and structured strings
    for fractional compositions.  Thread safe; per-image entries can be
    evicted once an image's pipeline completes.
    """

    def __init__(self):
        self._lock = threading.RLock()
        self._store: dict = {}
        self._baselines: dict = {}
        self.hits = 0
        self.misses = 0

    def get(self, model: str, image_key: str, baseline_key: str, token: str, class_id: int):
        with self._lock:
            value = self._store.get(image_key, {}).get((model, baseline_key, token, class_id))
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def put(self, model: str, image_key: str, baseline_key: str, token: str, class_id: int, confidence: float):
        with self._lock:
            self._store.setdefault(image_key, {})[(model, baseline_key, token, class_id)] = float(confidence)

    def evict_image(self, image_key: str):
        with self._lock:
            self._store.pop(image_key, None)
            self._baselines.pop(image_key, None)

    def __len__(self):
        with self._lock:
            return sum(len(v) for v in self._store.values())

    def baseline_pixels(self, image: ImageTensor, style: BaselineStyle) -> np.ndarray:
        """Baseline image for (image, style), computed once."""
        key = (image.key, style.key)
        with self._lock:
            pix = self._baselines.get(key)
        if pix is None:
            pix = make_baseline(image, style).pixels
            with self._lock:
                self._baselines[key] = pix
        return pix

    def save_jsonl(self, path):
        with self._lock:
            entries = [
                {"model": mk, "image": ik, "baseline": bk, "token": tok, "class": cid, "confidence": conf}
                for ik, sub in sorted(self._store.items())
                for (mk, bk, tok, cid), conf in sorted(sub.items())
            ]
        with open(path, "w") as fh:
            for entry in entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def load_jsonl(self, path):
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    self.put(
                        entry["model"],
                        entry["image"],
                        entry["baseline"],
                        entry["token"],
                        int(entry["class"]),
                        float(entry["confidence"]),
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise OracleError(f"corrupt cache line {lineno} in {path}: {exc}") from exc


def mask_token(grid: GridSpec, bits: int) -> str:
    return f"m:{grid.rows}x{grid.cols}:{bits:x}"


def predicted_class(oracle: ClassifierOracle, image: ImageTensor):
    """Top-1 (class id, confidence) on the full image; ties pick the lowest id."""
    scores = oracle.scores_full(image.pixels)
    idx = int(np.argmax(scores))
    return idx, float(scores[idx])


def score_masks(
    oracle: ClassifierOracle,
    image: ImageTensor,
    style: BaselineStyle,
    grid: GridSpec,
    masks: Sequence[int],
    class_id: int,
    cache: Optional[ConfidenceCache] = None,
    batch_size: int = 32,
) -> list:
    """Scores for raw patch bitmasks, composing only the cache misses.

    Results are independent of caching and batch size; both are throughput
    knobs only.
    """
    if batch_size <= 0:
        raise OracleError("batch_size must be positive")
    confidences: list = [None] * len(masks)
    missing: list = []
    missing_ids: dict = {}
    for i, bits in enumerate(masks):
        if cache is not None:
            hit = cache.get(oracle.name, image.key, style.key, mask_token(grid, bits), class_id)
            if hit is not None:
                confidences[i] = hit
                continue
        if bits in missing_ids:
            missing_ids[bits].append(i)
        else:
            missing_ids[bits] = [i]
            missing.append(bits)
    if missing:
        baseline_pixels = (
            cache.baseline_pixels(image, style) if cache is not None else make_baseline(image, style).pixels
        )
        patch_ids = grid.patch_id_map()
        for start in range(0, len(missing), batch_size):
            chunk = missing[start : start + batch_size]
            composed = kernels.compose_subsets(
                image.pixels, baseline_pixels, patch_ids, np.asarray(chunk, dtype=np.uint64)
            )
            scores = oracle.score_batch(composed, class_id)
            for bits, value in zip(chunk, scores):
                conf = float(value)
                if not 0.0 <= conf <= 1.0 or not math.isfinite(conf):
                    raise OracleError(f"oracle {oracle.name} returned confidence {conf} outside [0, 1]")
                if cache is not None:
                    cache.put(oracle.name, image.key, style.key, mask_token(grid, bits), class_id, conf)
                for i in missing_ids[bits]:
                    confidences[i] = conf
    return confidences


def score_subset(
    oracle: ClassifierOracle,
    image: ImageTensor,
    style: BaselineStyle,
    patches: PatchSet,
    class_id: int,
    cache: Optional[ConfidenceCache] = None,
) -> float:
    """Confidence of the masked composition keeping only ``patches``."""
    return score_masks(oracle, image, style, patches.grid, [patches.bits], class_id, cache)[0]


def score_batch_subsets(
    oracle: ClassifierOracle,
    image: ImageTensor,
    style: BaselineStyle,
    subsets: Sequence[PatchSet],
    class_id: int,
    cache: Optional[ConfidenceCache] = None,
    batch_size: int = 32,
) -> list:
    if not subsets:
        return []
    grid = subsets[0].grid
    for ps in subsets:
        if ps.grid != grid:
            raise DimensionError("all subsets must share one grid")
    return score_masks(oracle, image, style, grid, [ps.bits for ps in subsets], class_id, cache, batch_size)

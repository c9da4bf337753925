"""Attribution maps, insertion/deletion curves, and score normalization.

A perturbation curve walks from the baseline to the image (insertion) or
the image to the baseline (deletion) along the pixel ranking of an
attribution map; its area is the trapezoid average of the stepwise
confidences.  Normalization rescales an area by a model's calibration so
areas are comparable across models.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import AttributionFormatError, DegenerateCalibrationError, OracleError
from .imaging import (
    GREY,
    BaselineStyle,
    Direction,
    GridSpec,
    ImageTensor,
    compose_fractional,
    make_baseline,
)
from .oracles import ClassifierOracle, ConfidenceCache, predicted_class, score_masks

FMAP_MAGIC = b"FMAP"
DEFAULT_MAP_SIZE = 28


class AttributionMap:
    """A (h, w) float map of per-pixel importances in [0, 1]."""

    __slots__ = ("values", "source", "_digest")

    def __init__(self, values, source: str = ""):
        arr = np.ascontiguousarray(values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise AttributionFormatError(f"expected a non-empty 2-d map, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise AttributionFormatError("map contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise AttributionFormatError("map values must lie in [0, 1]")
        self.values = arr
        self.source = source
        self._digest = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def digest(self) -> str:
        if self._digest is None:
            h = hashlib.sha1()
            h.update(str(self.values.shape).encode())
            h.update(self.values.tobytes())
            self._digest = h.hexdigest()[:16]
        return self._digest


@dataclass(frozen=True)
class PerturbationCurve:
    direction: Direction
    confidences: tuple

    @property
    def steps(self) -> int:
        return len(self.confidences) - 1


@dataclass(frozen=True)
class ModelCalibration:
    model: str
    top1_avg: float
    baseline_avg: float
    dataset_id: str = ""


def perturbation_curve(
    oracle: ClassifierOracle,
    image: ImageTensor,
    style: BaselineStyle,
    amap: AttributionMap,
    steps: int,
    class_id: int,
    direction: Direction,
    cache: Optional[ConfidenceCache] = None,
    upsample: str = "nearest",
) -> PerturbationCurve:
    """Confidences at fractions t/steps for t = 0..steps."""
    if steps < 1:
        raise OracleError("steps must be at least 1")
    baseline = (
        ImageTensor(cache.baseline_pixels(image, style), _validate=False)
        if cache is not None
        else make_baseline(image, style)
    )
    confidences = []
    pending = []
    pending_idx = []
    for t in range(steps + 1):
        token = f"f:{direction.value}:{t}:{steps}:{upsample}:{amap.digest}"
        hit = cache.get(oracle.name, image.key, style.key, token, class_id) if cache is not None else None
        confidences.append(hit)
        if hit is None:
            pending.append(compose_fractional(image, baseline, amap.values, t / steps, direction, upsample))
            pending_idx.append(t)
    if pending:
        batch = np.stack([img.pixels for img in pending])
        scores = oracle.score_batch(batch, class_id)
        for t, value in zip(pending_idx, scores):
            conf = float(value)
            if not 0.0 <= conf <= 1.0 or not np.isfinite(conf):
                raise OracleError(f"oracle {oracle.name} returned confidence {conf} outside [0, 1]")
            confidences[t] = conf
            if cache is not None:
                token = f"f:{direction.value}:{t}:{steps}:{upsample}:{amap.digest}"
                cache.put(oracle.name, image.key, style.key, token, class_id, conf)
    return PerturbationCurve(direction=direction, confidences=tuple(confidences))


def auc(curve: PerturbationCurve) -> float:
    """Trapezoid area: mean of adjacent-step confidence averages.

    Summed in exact rational arithmetic with a single rounding at the end,
    so a constant curve at c has area exactly c.
    """
    c = curve.confidences
    steps = len(c) - 1
    if steps < 1:
        raise OracleError("curve needs at least two points")
    total = sum((Fraction(a) + Fraction(b) for a, b in zip(c[:-1], c[1:])), Fraction(0))
    return float(total / (2 * steps))


def calibrate_model(
    oracle: ClassifierOracle,
    images: Sequence[ImageTensor],
    style: BaselineStyle = GREY,
    cache: Optional[ConfidenceCache] = None,
    dataset_id: str = "",
) -> ModelCalibration:
    """Average top-1 confidence and fully-baselined confidence over a dataset."""
    if not images:
        raise OracleError("calibration needs at least one image")
    tops = []
    bases = []
    for image in images:
        class_id, top = predicted_class(oracle, image)
        grid = GridSpec(1, 1, image.height, image.width)
        base = score_masks(oracle, image, style, grid, [0], class_id, cache)[0]
        tops.append(top)
        bases.append(base)
    return ModelCalibration(
        model=oracle.name,
        top1_avg=float(np.mean(tops)),
        baseline_avg=float(np.mean(bases)),
        dataset_id=dataset_id,
    )


def normalize_score(score: float, calibration: ModelCalibration) -> float:
    """Rescale so the baselined level maps to 0 and the top-1 level to 1.

    Values outside [0, 1] are legitimate (a curve can dip below the
    baselined confidence or overshoot the top-1 average).
    """
    spread = calibration.top1_avg - calibration.baseline_avg
    if spread <= 0:
        raise DegenerateCalibrationError(
            f"model {calibration.model}: top-1 average {calibration.top1_avg} "
            f"not above baselined average {calibration.baseline_avg}"
        )
    return (score - calibration.baseline_avg) / spread


def generate_randomized_map(
    oracle: ClassifierOracle,
    image: ImageTensor,
    class_id: int,
    n_masks: int = 2000,
    cell_grid: Optional[GridSpec] = None,
    keep_prob: float = 0.5,
    seed: int = 0,
    cache: Optional[ConfidenceCache] = None,
    style: BaselineStyle = GREY,
) -> AttributionMap:
    """Randomized-masking attribution: average confidence of cell-keep masks.

    Cells are kept independently with ``keep_prob``; the per-cell importance
    is the keep-probability-corrected average of mask confidences, min-max
    normalized (a constant raw map becomes all 0.5).
    """
    if cell_grid is None:
        cell_grid = GridSpec(7, 7, image.height, image.width)
    if not 0.0 < keep_prob < 1.0:
        raise OracleError("keep_prob must lie strictly between 0 and 1")
    if n_masks < 1:
        raise OracleError("n_masks must be at least 1")
    n_cells = cell_grid.n_patches
    rng = np.random.default_rng(seed)
    keep = rng.random((n_masks, n_cells)) < keep_prob
    weights = np.uint64(1) << np.arange(n_cells, dtype=np.uint64)
    masks = [int(m) for m in (keep.astype(np.uint64) * weights[None, :]).sum(axis=1)]
    confs = np.asarray(
        score_masks(oracle, image, style, cell_grid, masks, class_id, cache, 256),
        dtype=np.float64,
    )
    raw = (confs @ keep.astype(np.float64)) / (n_masks * keep_prob)
    lo, hi = raw.min(), raw.max()
    if hi - lo <= 0:
        values = np.full(n_cells, 0.5)
    else:
        values = (raw - lo) / (hi - lo)
    return AttributionMap(values.reshape(cell_grid.rows, cell_grid.cols), source=f"randomized:{oracle.name}")


def save_attribution(amap: AttributionMap, path) -> None:
    """Write the binary map format: magic, u32 height/width, f32 row-major."""
    h, w = amap.values.shape
    with open(path, "wb") as fh:
        fh.write(FMAP_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(amap.values.astype("<f4").tobytes())


def load_attribution(path) -> AttributionMap:
    """Read a binary map or a 16-bit grayscale PNG (values scaled by 65535)."""
    path = str(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == FMAP_MAGIC:
            dims = fh.read(8)
            if len(dims) != 8:
                raise AttributionFormatError(f"{path}: truncated header")
            h, w = struct.unpack("<II", dims)
            if h == 0 or w == 0:
                raise AttributionFormatError(f"{path}: zero-sized map")
            payload = fh.read(4 * h * w)
            if len(payload) != 4 * h * w:
                raise AttributionFormatError(f"{path}: truncated payload, expected {4 * h * w} bytes")
            if fh.read(1):
                raise AttributionFormatError(f"{path}: trailing bytes after payload")
            values = np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float64)
            try:
                return AttributionMap(values, source=path)
            except AttributionFormatError as exc:
                raise AttributionFormatError(f"{path}: {exc}") from exc
    if path.lower().endswith(".png"):
        from PIL import Image

        with Image.open(path) as img:
            if img.mode not in ("I", "I;16"):
                raise AttributionFormatError(f"{path}: expected a 16-bit grayscale PNG, got mode {img.mode}")
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        try:
            return AttributionMap(arr, source=path)
        except AttributionFormatError as exc:
            raise AttributionFormatError(f"{path}: {exc}") from exc
    raise AttributionFormatError(f"{path}: not a recognized attribution map file")


def save_attribution_png(amap: AttributionMap, path) -> None:
    from PIL import Image

    arr = np.round(amap.values * 65535.0).astype(np.uint16)
    Image.fromarray(arr).save(path, format="PNG")

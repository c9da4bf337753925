"""Cross-testing: evaluate every model's curves on every model's maps.

Entry (e, g) averages, over the dataset, the calibrated-normalized area of
the curve computed with evaluator e on the attribution map produced by
generator g.  The matrix rows/columns double as feature vectors for a
kernel-PCA embedding that places models with similar explanation behaviour
close together.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .imaging import GREY, BaselineStyle, Direction, ImageTensor
from .oracles import ClassifierOracle, ConfidenceCache, predicted_class
from .saliency import (
    AttributionMap,
    ModelCalibration,
    auc,
    calibrate_model,
    normalize_score,
    perturbation_curve,
)


@dataclass(frozen=True)
class CrossTestMatrix:
    """Normalized mean areas; rows index evaluators, columns generators."""

    models: tuple
    insertion: np.ndarray
    deletion: np.ndarray
    dataset_id: str = ""
    map_method: str = ""

    def channel(self, direction: Direction) -> np.ndarray:
        return self.insertion if direction is Direction.INSERTION else self.deletion


@dataclass(frozen=True)
class Embedding2D:
    models: tuple
    coords: np.ndarray
    eigenvalues: np.ndarray
    kernel: str


def build_matrix(
    oracles: Sequence[ClassifierOracle],
    maps: Mapping,
    images: Sequence[ImageTensor],
    style: BaselineStyle = GREY,
    steps: int = 100,
    cache: Optional[ConfidenceCache] = None,
    dataset_id: str = "",
    map_method: str = "",
    upsample: str = "nearest",
) -> CrossTestMatrix:
    """Average normalized curve areas for every evaluator/generator pair.

    ``maps`` is keyed by (generator name, image key).  Every evaluator is
    calibrated on the dataset first; a missing map raises ConfigError.
    """
    if not oracles:
        raise ConfigError("need at least one model")
    if not images:
        raise ConfigError("need at least one image")
    names = [o.name for o in oracles]
    if len(set(names)) != len(names):
        raise ConfigError("model names must be unique")
    n = len(oracles)
    ins = np.zeros((n, n), dtype=np.float64)
    dele = np.zeros((n, n), dtype=np.float64)
    for ei, evaluator in enumerate(oracles):
        calibration = calibrate_model(evaluator, images, style, cache, dataset_id)
        for image in images:
            class_id, _ = predicted_class(evaluator, image)
            for gi, generator in enumerate(oracles):
                key = (generator.name, image.key)
                if key not in maps:
                    raise ConfigError(f"missing attribution map for {key}")
                amap = maps[key]
                for direction, acc in ((Direction.INSERTION, ins), (Direction.DELETION, dele)):
                    curve = perturbation_curve(
                        evaluator, image, style, amap, steps, class_id, direction, cache, upsample
                    )
                    acc[ei, gi] += normalize_score(auc(curve), calibration)
        ins[ei] /= len(images)
        dele[ei] /= len(images)
    return CrossTestMatrix(
        models=tuple(names),
        insertion=ins,
        deletion=dele,
        dataset_id=dataset_id,
        map_method=map_method,
    )


def center_kernel(kernel: np.ndarray) -> np.ndarray:
    """Double centering K' = H K H with H = I - (1/n) 11^T."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise DimensionError(f"kernel must be square, got shape {k.shape}")
    n = k.shape[0]
    h = np.eye(n) - np.full((n, n), 1.0 / n)
    return h @ k @ h


def _rbf_kernel(features: np.ndarray, gamma: Optional[float]) -> np.ndarray:
    sq = np.sum(features**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (features @ features.T)
    d2 = np.maximum(d2, 0.0)
    if gamma is None:
        n = features.shape[0]
        iu = np.triu_indices(n, k=1)
        med = float(np.median(np.sqrt(d2[iu]))) if iu[0].size else 0.0
        gamma = 1.0 / (2.0 * med * med) if med > 0 else 1.0
    return np.exp(-gamma * d2)


def kernel_pca_embed(
    matrix: CrossTestMatrix,
    direction: Direction = Direction.INSERTION,
    kernel: str = "rbf",
    gamma: Optional[float] = None,
    dims: int = 2,
) -> Embedding2D:
    """Embed models by kernel PCA of their cross-testing behaviour.

    ``rbf`` builds features from each model's matrix row and column and
    uses a median-heuristic bandwidth; ``precomputed`` symmetrizes the
    channel matrix and treats it as the kernel directly.
    """
    n = len(matrix.models)
    if dims < 1:
        raise ConfigError("dims must be at least 1")
    if n < dims + 1:
        raise ConfigError(f"need at least {dims + 1} models for a {dims}-d embedding, got {n}")
    channel = matrix.channel(direction)
    if kernel == "rbf":
        features = np.hstack([channel, channel.T])
        gram = _rbf_kernel(features, gamma)
    elif kernel == "precomputed":
        gram = (channel + channel.T) / 2.0
    else:
        raise ConfigError(f"unknown kernel {kernel!r}")
    if not np.all(np.isfinite(gram)):
        raise DimensionError("kernel matrix contains non-finite values")
    centered = center_kernel(gram)
    eigenvalues, eigenvectors = np.linalg.eigh(centered)
    order = np.argsort(eigenvalues)[::-1][:dims]
    top_vals = np.maximum(eigenvalues[order], 0.0)
    coords = eigenvectors[:, order] * np.sqrt(top_vals)[None, :]
    # deterministic sign: the largest-magnitude coordinate of each component
    # is made positive
    for k in range(coords.shape[1]):
        col = coords[:, k]
        j = int(np.argmax(np.abs(col)))
        if col[j] < 0:
            coords[:, k] = -col
    return Embedding2D(
        models=matrix.models,
        coords=coords,
        eigenvalues=top_vals,
        kernel=kernel,
    )


def matrix_to_csv(matrix: CrossTestMatrix, insertion_path, deletion_path) -> None:
    for path, data in ((insertion_path, matrix.insertion), (deletion_path, matrix.deletion)):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["evaluator", *matrix.models])
            for name, row in zip(matrix.models, data):
                writer.writerow([name, *[repr(float(v)) for v in row]])


def read_matrix_csv(insertion_path, deletion_path, dataset_id: str = "", map_method: str = "") -> CrossTestMatrix:
    def read_one(path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            names = tuple(header[1:])
            rows = []
            for row in reader:
                rows.append([float(v) for v in row[1:]])
        return names, np.asarray(rows, dtype=np.float64)

    names_i, ins = read_one(insertion_path)
    names_d, dele = read_one(deletion_path)
    if names_i != names_d:
        raise ConfigError("insertion and deletion matrices disagree on models")
    return CrossTestMatrix(models=names_i, insertion=ins, deletion=dele, dataset_id=dataset_id, map_method=map_method)


def embedding_to_csv(embedding: Embedding2D, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model"] + [f"x{k}" for k in range(embedding.coords.shape[1])])
        for name, row in zip(embedding.models, embedding.coords):
            writer.writerow([name, *[repr(float(v)) for v in row]])


def embedding_to_svg(embedding: Embedding2D, path, size: int = 480) -> None:
    """Scatter plot of the first two embedding coordinates."""
    coords = embedding.coords
    if coords.shape[1] < 2:
        raise ConfigError("SVG scatter needs at least two embedding dimensions")
    xs, ys = coords[:, 0], coords[:, 1]
    margin = 48.0
    span_x = max(xs.max() - xs.min(), 1e-12)
    span_y = max(ys.max() - ys.min(), 1e-12)

    def sx(v):
        return margin + (v - xs.min()) / span_x * (size - 2 * margin)

    def sy(v):
        return size - margin - (v - ys.min()) / span_y * (size - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for name, x, y in zip(embedding.models, xs, ys):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="steelblue"/>')
        parts.append(
            f'<text x="{sx(x) + 6:.2f}" y="{sy(y) - 6:.2f}" font-size="11" font-family="sans-serif">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")

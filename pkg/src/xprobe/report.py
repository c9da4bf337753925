"""Dataset-level aggregation and figure/graph exports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class MseStats:
    model: str
    explained_images: int
    unexplained_images: int
    mse_count_mean: Optional[float]
    mse_count_std: Optional[float]
    mse_count_median: Optional[float]
    thresholds: tuple = ()
    subexp_means: tuple = ()


@dataclass(frozen=True)
class SizeHistogram:
    sizes: tuple
    counts: tuple


def aggregate(
    mses_by_image: Mapping,
    counts_by_image: Optional[Mapping] = None,
    model: str = "",
) -> MseStats:
    """Mean/std/median of per-image MSE counts over explained images.

    Std is the sample deviation (0 for a single image); the median of an
    even count averages the middle two.  Sub-explanation means cover the
    images that have at least one MSE.
    """
    per_image = {img: len(records) for img, records in mses_by_image.items()}
    explained = sorted(img for img, c in per_image.items() if c > 0)
    unexplained = len(per_image) - len(explained)
    if not explained:
        return MseStats(
            model=model,
            explained_images=0,
            unexplained_images=unexplained,
            mse_count_mean=None,
            mse_count_std=None,
            mse_count_median=None,
        )
    values = np.asarray([per_image[img] for img in explained], dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    median = float(np.median(values))
    thresholds: tuple = ()
    subexp_means: tuple = ()
    if counts_by_image:
        rows = [counts_by_image[img] for img in explained if img in counts_by_image]
        if rows:
            thresholds = rows[0].thresholds
            if any(r.thresholds != thresholds for r in rows):
                raise ConfigError("mixed threshold sets across images")
            stacked = np.asarray([r.counts for r in rows], dtype=np.float64)
            subexp_means = tuple(float(v) for v in stacked.mean(axis=0))
    return MseStats(
        model=model,
        explained_images=len(explained),
        unexplained_images=unexplained,
        mse_count_mean=mean,
        mse_count_std=std,
        mse_count_median=median,
        thresholds=thresholds,
        subexp_means=subexp_means,
    )


def percent_explained(mses_by_image: Mapping, max_patches: int) -> list:
    """Percentage of images whose smallest MSE uses at most n patches, n = 1..max."""
    if max_patches < 1:
        raise ConfigError("max_patches must be at least 1")
    total = len(mses_by_image)
    if total == 0:
        raise ConfigError("no images to aggregate")
    smallest = []
    for records in mses_by_image.values():
        if records:
            smallest.append(min(r.patches.size for r in records))
    out = []
    for n in range(1, max_patches + 1):
        covered = sum(1 for s in smallest if s <= n)
        out.append(100.0 * covered / total)
    return out


def size_histogram(mses_by_image: Mapping, max_patches: int) -> SizeHistogram:
    counts = [0] * max_patches
    for records in mses_by_image.values():
        for rec in records:
            size = rec.patches.size
            if 1 <= size <= max_patches:
                counts[size - 1] += 1
    return SizeHistogram(sizes=tuple(range(1, max_patches + 1)), counts=tuple(counts))


def export_sag_dot(
    image_id: str,
    roots: Sequence,
    nodes_per_root: Sequence[set],
    max_children: int = 3,
) -> str:
    """One digraph per image over MSE roots and their sub-explanations.

    Node labels show the patch bitmask and the confidence ratio to two
    decimals; each parent keeps its ``max_children`` highest-ratio children.
    """
    if len(roots) != len(nodes_per_root):
        raise ConfigError("roots and node sets must align")
    labels: dict = {}
    edges = set()
    for root, nodes in zip(roots, nodes_per_root):
        ratio = root.confidence / root.full_confidence if root.full_confidence > 0 else 0.0
        labels[root.patches.bits] = max(labels.get(root.patches.bits, 0.0), ratio)
        by_bits = {}
        for node in nodes:
            labels[node.patches.bits] = node.confidence_ratio
            by_bits[node.patches.bits] = node.confidence_ratio
        members = [(root.patches.bits, ratio)] + sorted(by_bits.items())
        for bits, _ in members:
            children = []
            rem = bits
            while rem:
                low = rem & -rem
                child = bits ^ low
                rem ^= low
                if child in by_bits:
                    children.append((child, by_bits[child]))
            children.sort(key=lambda cr: (-cr[1], cr[0]))
            for child, _ in children[:max_children]:
                edges.add((bits, child))
    safe_id = "".join(ch if ch.isalnum() else "_" for ch in image_id)
    lines = [f"digraph sag_{safe_id} {{", "  node [shape=box, fontname=\"sans-serif\"];"]
    for bits in sorted(labels):
        lines.append(f'  "{bits:#x}" [label="{bits:#x}\\n{labels[bits]:.2f}"];')
    for parent, child in sorted(edges):
        lines.append(f'  "{parent:#x}" -> "{child:#x}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def stats_to_csv(stats: Sequence[MseStats], path) -> None:
    if not stats:
        raise ConfigError("no stats to write")
    thresholds = stats[0].thresholds
    header = [
        "model",
        "explained_images",
        "unexplained_images",
        "mse_count_mean",
        "mse_count_std",
        "mse_count_median",
    ] + [f"subexp_mean_c{int(round(t * 100))}" for t in thresholds]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in stats:
            if s.thresholds != thresholds:
                raise ConfigError("mixed threshold sets in one CSV")
            row = [
                s.model,
                s.explained_images,
                s.unexplained_images,
                "" if s.mse_count_mean is None else repr(s.mse_count_mean),
                "" if s.mse_count_std is None else repr(s.mse_count_std),
                "" if s.mse_count_median is None else repr(s.mse_count_median),
            ] + [repr(v) for v in s.subexp_means]
            writer.writerow(row)


def stats_to_json(stats: Sequence[MseStats], path) -> None:
    payload = [
        {
            "model": s.model,
            "explained_images": s.explained_images,
            "unexplained_images": s.unexplained_images,
            "mse_count_mean": s.mse_count_mean,
            "mse_count_std": s.mse_count_std,
            "mse_count_median": s.mse_count_median,
            "thresholds": list(s.thresholds),
            "subexp_means": list(s.subexp_means),
        }
        for s in stats
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def histogram_to_svg(histogram: SizeHistogram, path, title: str = "", width: int = 480, height: int = 320) -> None:
    margin = 40.0
    peak = max(max(histogram.counts), 1)
    n = len(histogram.sizes)
    bar_w = (width - 2 * margin) / n
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="20" font-size="13" text-anchor="middle" font-family="sans-serif">{title}</text>'
        )
    for i, (size, count) in enumerate(zip(histogram.sizes, histogram.counts)):
        bar_h = (height - 2 * margin) * count / peak
        x = margin + i * bar_w
        y = height - margin - bar_h
        parts.append(
            f'<rect x="{x + 1:.2f}" y="{y:.2f}" width="{bar_w - 2:.2f}" height="{bar_h:.2f}" fill="steelblue"/>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{height - margin + 14:.2f}" font-size="10" text-anchor="middle" font-family="sans-serif">{size}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def percent_curve_to_svg(percent: Sequence[float], path, title: str = "", width: int = 480, height: int = 320) -> None:
    margin = 40.0
    n = len(percent)
    points = []
    for i, value in enumerate(percent):
        x = margin + (width - 2 * margin) * (i / max(n - 1, 1))
        y = height - margin - (height - 2 * margin) * (value / 100.0)
        points.append(f"{x:.2f},{y:.2f}")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="20" font-size="13" text-anchor="middle" font-family="sans-serif">{title}</text>'
        )
    parts.append(
        f'<polyline points="{" ".join(points)}" fill="none" stroke="steelblue" stroke-width="2"/>'
    )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")

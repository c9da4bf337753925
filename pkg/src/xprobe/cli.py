"""Command-line pipelines: mse, subexp, saliency, crosstest, report.

A JSON run config names the dataset, models, grid, and stage settings;
flags override individual fields.  Outputs are written atomically and
reruns with the same config and seed are byte-identical.  Exit codes:
0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .adapters import ModelConfig, OnnxOracle, RemoteOracle
from .crosstest import (
    build_matrix,
    embedding_to_csv,
    embedding_to_svg,
    kernel_pca_embed,
    matrix_to_csv,
)
from .errors import ConfigError, XprobeError
from .imaging import (
    BaselineKind,
    BaselineStyle,
    Direction,
    GridSpec,
    ImageTensor,
    load_image,
    make_grid,
)
from .oracles import (
    Additive,
    ConfidenceCache,
    Conjunctive,
    Disjunctive,
    SquashKind,
    SyntheticOracle,
    predicted_class,
)
from .report import (
    aggregate,
    export_sag_dot,
    histogram_to_svg,
    percent_curve_to_svg,
    percent_explained,
    size_histogram,
    stats_to_csv,
    stats_to_json,
)
from .saliency import (
    AttributionMap,
    auc,
    calibrate_model,
    generate_randomized_map,
    load_attribution,
    normalize_score,
    perturbation_curve,
    save_attribution,
)
from .search import BeamConfig, Minimality, MseRecord, find_mses, read_mse_jsonl, write_mse_jsonl
from .subexplain import (
    CountConfig,
    DedupMode,
    SubExplanationNode,
    count_above_thresholds,
    counts_to_csv,
    expand_all,
    read_counts_csv,
)

CACHE_ENV = "XPROBE_CACHE_DIR"


def _atomic_write(path: Path, writer) -> None:
    """Run ``writer(tmp_path)`` then rename into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def load_config(path, overrides: argparse.Namespace) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if overrides.out is not None:
        cfg["out"] = overrides.out
    if overrides.seed is not None:
        cfg["seed"] = overrides.seed
    if overrides.jobs is not None:
        cfg["jobs"] = overrides.jobs
    if overrides.baseline is not None:
        cfg.setdefault("baseline", {})["kind"] = overrides.baseline
    if overrides.beam_width is not None:
        cfg.setdefault("beam", {})["beam_width"] = overrides.beam_width
    if overrides.p_h is not None:
        cfg.setdefault("beam", {})["confidence_fraction"] = overrides.p_h
    if overrides.grid is not None:
        try:
            rows, cols = overrides.grid.lower().split("x")
            cfg.setdefault("grid", {})["rows"] = int(rows)
            cfg.setdefault("grid", {})["cols"] = int(cols)
        except ValueError as exc:
            raise ConfigError(f"--grid expects RxC, got {overrides.grid!r}") from exc
    if overrides.steps is not None:
        cfg.setdefault("saliency", {})["steps"] = overrides.steps
    cfg.setdefault("out", "out")
    cfg.setdefault("seed", 0)
    cfg.setdefault("jobs", 1)
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError("jobs must be a positive integer")
    return cfg


def baseline_style(cfg: dict) -> BaselineStyle:
    section = cfg.get("baseline", {})
    kind = section.get("kind", "grey")
    try:
        bk = BaselineKind(kind)
    except ValueError as exc:
        raise ConfigError(f"unknown baseline kind {kind!r}") from exc
    return BaselineStyle(kind=bk, blur_sigma=float(section.get("blur_sigma", 10.0)))


def load_dataset(cfg: dict) -> list:
    section = cfg.get("dataset")
    if not isinstance(section, dict):
        raise ConfigError("config needs a dataset section")
    kind = section.get("kind")
    if kind == "synthetic":
        count = int(section.get("count", 1))
        height = int(section.get("height", 224))
        width = int(section.get("width", 224))
        channels = int(section.get("channels", 1))
        low = float(section.get("low", 0.25))
        high = float(section.get("high", 1.0))
        if count < 1:
            raise ConfigError("synthetic dataset count must be positive")
        if not 0.0 <= low < high <= 1.0:
            raise ConfigError("synthetic pixel range must satisfy 0 <= low < high <= 1")
        rng = np.random.default_rng(int(section.get("seed", cfg.get("seed", 0))))
        return [
            ImageTensor(
                rng.uniform(low, high, size=(channels, height, width)).astype(np.float32),
                ident=f"synth-{i:04d}",
            )
            for i in range(count)
        ]
    if kind == "images":
        path = Path(section.get("path", ""))
        if not path.exists():
            raise ConfigError(f"dataset path {path} does not exist")
        size = section.get("input_size", 224)
        grayscale = bool(section.get("grayscale", False))
        if path.is_file():
            with open(path) as fh:
                try:
                    entries = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"dataset manifest {path} is not valid JSON: {exc}") from exc
            if not isinstance(entries, list):
                raise ConfigError("dataset manifest must be a JSON list of file paths")
            files = [Path(p) if os.path.isabs(p) else path.parent / p for p in entries]
        else:
            files = sorted(
                p for p in path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
            )
        if not files:
            raise ConfigError(f"dataset {path} contains no images")
        missing = [str(p) for p in files if not p.exists()]
        if missing:
            raise ConfigError(f"dataset files missing: {', '.join(missing[:5])}")
        return [load_image(p, size=size, grayscale=grayscale) for p in files]
    raise ConfigError(f"unknown dataset kind {kind!r}")


def grid_for(cfg: dict, images) -> GridSpec:
    section = cfg.get("grid", {})
    rows = int(section.get("rows", 7))
    cols = int(section.get("cols", 7))
    first = images[0]
    for img in images:
        if (img.height, img.width, img.channels) != (first.height, first.width, first.channels):
            raise ConfigError("all dataset images must share one shape")
    try:
        return make_grid(first.height, first.width, rows, cols)
    except XprobeError as exc:
        raise ConfigError(str(exc)) from exc


def _synthetic_spec(obj: dict):
    kind = obj.get("kind")
    if kind == "conjunctive":
        return Conjunctive(
            required=tuple(int(p) for p in obj.get("required", ())),
            hi=float(obj.get("hi", 1.0)),
            lo=float(obj.get("lo", 0.05)),
        )
    if kind == "disjunctive":
        return Disjunctive(
            groups=tuple(tuple(int(p) for p in g) for g in obj.get("groups", ())),
            hi=float(obj.get("hi", 1.0)),
            lo=float(obj.get("lo", 0.05)),
        )
    if kind == "additive":
        squash = SquashKind(obj.get("squash", "clamp"))
        return Additive(weights=tuple(float(w) for w in obj.get("weights", ())), squash=squash)
    raise ConfigError(f"unknown synthetic spec kind {kind!r}")


def build_models(cfg: dict, grid: GridSpec) -> list:
    section = cfg.get("models")
    if not isinstance(section, list) or not section:
        raise ConfigError("config needs a non-empty models list")
    models = []
    for obj in section:
        kind = obj.get("kind")
        if kind == "synthetic":
            try:
                spec = _synthetic_spec(obj.get("spec", {}))
                model = SyntheticOracle(
                    spec,
                    grid,
                    occupancy_threshold=float(obj.get("occupancy_threshold", 0.5)),
                    name=str(obj.get("name", "synthetic")),
                    class_count=int(obj.get("class_count", 2)),
                )
            except XprobeError as exc:
                raise ConfigError(str(exc)) from exc
        elif kind == "onnx":
            if "config_path" in obj:
                mc = ModelConfig.from_json(obj["config_path"])
            else:
                mc = ModelConfig(
                    name=str(obj.get("name", "onnx")),
                    path_or_url=str(obj.get("path", "")),
                    input_size=int(obj.get("input_size", 224)),
                    mean=tuple(float(v) for v in obj.get("mean", (0.485, 0.456, 0.406))),
                    std=tuple(float(v) for v in obj.get("std", (0.229, 0.224, 0.225))),
                    class_count=int(obj.get("class_count", 1000)),
                )
            if not Path(mc.path_or_url).exists():
                raise ConfigError(f"model file {mc.path_or_url} does not exist")
            models.append(OnnxOracle(mc))
            continue
        elif kind == "remote":
            model = RemoteOracle(
                url=str(obj.get("url", "")),
                name=str(obj.get("name", "remote")),
                class_count=int(obj.get("class_count", 1000)),
            )
        else:
            raise ConfigError(f"unknown model kind {kind!r}")
        models.append(model)
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigError("model names must be unique")
    return models


def beam_config(cfg: dict, style: BaselineStyle) -> BeamConfig:
    section = cfg.get("beam", {})
    try:
        minimality = Minimality(section.get("minimality", "immediate"))
    except ValueError as exc:
        raise ConfigError(f"unknown minimality mode {section.get('minimality')!r}") from exc
    try:
        return BeamConfig(
            confidence_fraction=float(section.get("confidence_fraction", 0.9)),
            beam_width=int(section.get("beam_width", 5)),
            max_patch_count=section.get("max_patch_count"),
            max_mses=section.get("max_mses"),
            baseline=style,
            minimality=minimality,
            batch_size=int(section.get("batch_size", 32)),
        )
    except XprobeError as exc:
        raise ConfigError(str(exc)) from exc


def count_config(cfg: dict) -> CountConfig:
    section = cfg.get("count", {})
    try:
        dedup = DedupMode(section.get("dedup", "per_image"))
    except ValueError as exc:
        raise ConfigError(f"unknown dedup mode {section.get('dedup')!r}") from exc
    try:
        return CountConfig(
            thresholds=tuple(float(t) for t in section.get("thresholds", (0.9, 0.8, 0.7, 0.6, 0.5))),
            stop_fraction=float(section.get("stop_fraction", 0.5)),
            dedup=dedup,
        )
    except XprobeError as exc:
        raise ConfigError(str(exc)) from exc


def _open_cache() -> tuple:
    cache = ConfidenceCache()
    cache_dir = os.environ.get(CACHE_ENV)
    cache_file = None
    if cache_dir:
        cache_file = Path(cache_dir) / "confidences.jsonl"
        if cache_file.exists():
            cache.load_jsonl(cache_file)
    return cache, cache_file


def _close_cache(cache: ConfidenceCache, cache_file) -> None:
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(Path(cache_file), lambda tmp: cache.save_jsonl(tmp))


def _needs_registration(model, style: BaselineStyle) -> bool:
    return isinstance(model, SyntheticOracle) and style.kind is BaselineKind.BLUR


def _map_images(images, jobs: int, fn, serial: bool):
    """Apply ``fn`` per image, merging results in dataset order."""
    if jobs > 1 and not serial:
        results = {}
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(fn, img): img.key for img in images}
            for future, key in futures.items():
                results[key] = future.result()
        return [results[img.key] for img in images]
    return [fn(img) for img in images]


def cmd_mse(cfg: dict) -> None:
    images = load_dataset(cfg)
    grid = grid_for(cfg, images)
    style = baseline_style(cfg)
    models = build_models(cfg, grid)
    beam = beam_config(cfg, style)
    cache, cache_file = _open_cache()
    out = Path(cfg["out"])
    stats = []
    for model in models:
        serial = _needs_registration(model, style) or not model.thread_safe

        def work(img, model=model):
            if _needs_registration(model, style):
                model.register_baseline(cache.baseline_pixels(img, style))
            return find_mses(model, img, grid, beam, cache)

        per_image = _map_images(images, cfg["jobs"], work, serial)
        records = [rec for recs in per_image for rec in recs]
        _atomic_write(out / f"{model.name}.mse.jsonl", lambda tmp: write_mse_jsonl(records, tmp))
        stats.append(
            aggregate({img.key: recs for img, recs in zip(images, per_image)}, None, model=model.name)
        )
        if cache_file is None:
            for img in images:
                cache.evict_image(img.key)
    _atomic_write(out / "mse_stats.csv", lambda tmp: stats_to_csv(stats, tmp))
    _close_cache(cache, cache_file)


def cmd_subexp(cfg: dict) -> None:
    images = load_dataset(cfg)
    grid = grid_for(cfg, images)
    style = baseline_style(cfg)
    models = build_models(cfg, grid)
    counting = count_config(cfg)
    cache, cache_file = _open_cache()
    out = Path(cfg["out"])
    by_key = {img.key: img for img in images}
    for model in models:
        mse_path = out / f"{model.name}.mse.jsonl"
        if not mse_path.exists():
            raise ConfigError(f"missing MSE records {mse_path}; run the mse stage first")
        records = read_mse_jsonl(mse_path, grid)
        by_image: dict = {}
        for rec in records:
            by_image.setdefault(rec.image_id, []).append(rec)
        counts = []
        node_lines = []
        for img in images:
            roots = by_image.get(img.key, [])
            if _needs_registration(model, style):
                model.register_baseline(cache.baseline_pixels(img, style))
            nodes_per_root = expand_all(model, img, roots, counting, cache, style)
            counts.append(count_above_thresholds(img.key, nodes_per_root, counting))
            for root, nodes in zip(roots, nodes_per_root):
                for node in sorted(nodes, key=lambda nd: nd.patches.bits):
                    node_lines.append(
                        json.dumps(
                            {
                                "image_id": img.key,
                                "root_mask": root.patches.hex,
                                "mask": node.patches.hex,
                                "ratio": node.confidence_ratio,
                            },
                            sort_keys=True,
                        )
                    )
            if cache_file is None:
                cache.evict_image(img.key)
        _atomic_write(out / f"{model.name}.counts.csv", lambda tmp: counts_to_csv(counts, tmp))

        def write_nodes(tmp, lines=node_lines):
            with open(tmp, "w") as fh:
                for line in lines:
                    fh.write(line + "\n")

        _atomic_write(out / f"{model.name}.nodes.jsonl", write_nodes)
    _close_cache(cache, cache_file)


def _map_seed(cfg: dict, image_index: int) -> int:
    return (int(cfg.get("seed", 0)) * 1_000_003 + image_index) % (2**63)


def _maps_for(cfg: dict, model, images, grid, style, cache) -> dict:
    section = cfg.get("saliency", {})
    source = section.get("map_source", "randomized")
    maps = {}
    if source == "randomized":
        cell_rows = int(section.get("cell_rows", 7))
        cell_cols = int(section.get("cell_cols", 7))
        cell_grid = make_grid(grid.image_height, grid.image_width, cell_rows, cell_cols)
        n_masks = int(section.get("n_masks", 2000))
        keep_prob = float(section.get("keep_prob", 0.5))
        for idx, img in enumerate(images):
            if _needs_registration(model, style):
                model.register_baseline(cache.baseline_pixels(img, style))
            class_id, _ = predicted_class(model, img)
            maps[(model.name, img.key)] = generate_randomized_map(
                model,
                img,
                class_id,
                n_masks=n_masks,
                cell_grid=cell_grid,
                keep_prob=keep_prob,
                seed=_map_seed(cfg, idx),
                cache=cache,
                style=style,
            )
        return maps
    if source == "files":
        map_dir = Path(section.get("map_dir", ""))
        if not map_dir.exists():
            raise ConfigError(f"map_dir {map_dir} does not exist")
        for img in images:
            candidate = map_dir / model.name / f"{img.key}.fmap"
            if not candidate.exists():
                candidate = map_dir / model.name / f"{img.key}.png"
            if not candidate.exists():
                raise ConfigError(f"no attribution map for model {model.name}, image {img.key}")
            maps[(model.name, img.key)] = load_attribution(candidate)
        return maps
    raise ConfigError(f"unknown map_source {source!r}")


def cmd_saliency(cfg: dict) -> None:
    images = load_dataset(cfg)
    grid = grid_for(cfg, images)
    style = baseline_style(cfg)
    models = build_models(cfg, grid)
    section = cfg.get("saliency", {})
    steps = int(section.get("steps", 100))
    upsample = section.get("upsample", "nearest")
    cache, cache_file = _open_cache()
    out = Path(cfg["out"])
    for model in models:
        maps = _maps_for(cfg, model, images, grid, style, cache)
        if section.get("map_source", "randomized") == "randomized":
            for img in images:
                amap = maps[(model.name, img.key)]
                _atomic_write(
                    out / "maps" / model.name / f"{img.key}.fmap",
                    lambda tmp, amap=amap: save_attribution(amap, tmp),
                )
        calibration = calibrate_model(model, images, style, cache, dataset_id=cfg.get("dataset", {}).get("kind", ""))
        rows = []
        for img in images:
            if _needs_registration(model, style):
                model.register_baseline(cache.baseline_pixels(img, style))
            class_id, _ = predicted_class(model, img)
            amap = maps[(model.name, img.key)]
            values = {}
            for direction in (Direction.INSERTION, Direction.DELETION):
                curve = perturbation_curve(model, img, style, amap, steps, class_id, direction, cache, upsample)
                area = auc(curve)
                values[direction] = (area, normalize_score(area, calibration))
            rows.append(
                [
                    img.key,
                    class_id,
                    repr(values[Direction.INSERTION][0]),
                    repr(values[Direction.DELETION][0]),
                    repr(values[Direction.INSERTION][1]),
                    repr(values[Direction.DELETION][1]),
                ]
            )
            if cache_file is None:
                cache.evict_image(img.key)

        def write_rows(tmp, rows=rows):
            import csv

            with open(tmp, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["image_id", "class_id", "insertion_auc", "deletion_auc", "insertion_norm", "deletion_norm"]
                )
                writer.writerows(rows)

        _atomic_write(out / f"{model.name}.saliency.csv", write_rows)
    _close_cache(cache, cache_file)


def cmd_crosstest(cfg: dict) -> None:
    images = load_dataset(cfg)
    grid = grid_for(cfg, images)
    style = baseline_style(cfg)
    models = build_models(cfg, grid)
    section = cfg.get("crosstest", {})
    dims = int(section.get("dims", 2))
    kernel = section.get("kernel", "rbf")
    channel = Direction(section.get("channel", "insertion"))
    if len(models) < dims + 1:
        raise ConfigError(f"cross-testing embedding needs at least {dims + 1} models")
    steps = int(cfg.get("saliency", {}).get("steps", 100))
    upsample = cfg.get("saliency", {}).get("upsample", "nearest")
    cache, cache_file = _open_cache()
    out = Path(cfg["out"])
    maps: dict = {}
    for model in models:
        maps.update(_maps_for(cfg, model, images, grid, style, cache))
    matrix = build_matrix(
        models,
        maps,
        images,
        style,
        steps,
        cache,
        dataset_id=cfg.get("dataset", {}).get("kind", ""),
        map_method=cfg.get("saliency", {}).get("map_source", "randomized"),
        upsample=upsample,
    )

    ins_path = out / "crosstest_insertion.csv"
    del_path = out / "crosstest_deletion.csv"
    out.mkdir(parents=True, exist_ok=True)
    tmp_ins = ins_path.with_name(ins_path.name + ".tmp")
    tmp_del = del_path.with_name(del_path.name + ".tmp")
    matrix_to_csv(matrix, tmp_ins, tmp_del)
    os.replace(tmp_ins, ins_path)
    os.replace(tmp_del, del_path)
    embedding = kernel_pca_embed(matrix, channel, kernel=kernel, dims=dims)
    _atomic_write(out / "embedding.csv", lambda tmp: embedding_to_csv(embedding, tmp))
    _atomic_write(out / "embedding.svg", lambda tmp: embedding_to_svg(embedding, tmp))
    _close_cache(cache, cache_file)


def cmd_report(cfg: dict) -> None:
    images = load_dataset(cfg)
    grid = grid_for(cfg, images)
    models = build_models(cfg, grid)
    section = cfg.get("report", {})
    max_children = int(section.get("max_children", 3))
    sag_images = int(section.get("sag_images", 2))
    out = Path(cfg["out"])
    report_dir = out / "report"
    stats = []
    for model in models:
        mse_path = out / f"{model.name}.mse.jsonl"
        if not mse_path.exists():
            raise ConfigError(f"missing MSE records {mse_path}; run the mse stage first")
        records = read_mse_jsonl(mse_path, grid)
        by_image: dict = {img.key: [] for img in images}
        for rec in records:
            by_image.setdefault(rec.image_id, []).append(rec)
        counts_path = out / f"{model.name}.counts.csv"
        counts_by_image = None
        if counts_path.exists():
            counts_by_image = {c.image_id: c for c in read_counts_csv(counts_path)}
        stats.append(aggregate(by_image, counts_by_image, model=model.name))
        hist = size_histogram(by_image, grid.n_patches)
        _atomic_write(
            report_dir / f"{model.name}.size_hist.svg",
            lambda tmp: histogram_to_svg(hist, tmp, title=f"MSE sizes: {model.name}"),
        )
        percent = percent_explained(by_image, grid.n_patches)
        _atomic_write(
            report_dir / f"{model.name}.percent_explained.csv",
            lambda tmp: _write_percent_csv(percent, tmp),
        )
        _atomic_write(
            report_dir / f"{model.name}.percent_explained.svg",
            lambda tmp: percent_curve_to_svg(percent, tmp, title=f"% explained: {model.name}"),
        )
        nodes_path = out / f"{model.name}.nodes.jsonl"
        if nodes_path.exists():
            nodes_by_image = _read_nodes(nodes_path, grid)
            written = 0
            for img in images:
                roots = by_image.get(img.key, [])
                if not roots or written >= sag_images:
                    continue
                per_root = nodes_by_image.get(img.key, {})
                node_sets = [per_root.get(r.patches.bits, set()) for r in roots]
                dot = export_sag_dot(img.key, roots, node_sets, max_children=max_children)
                _atomic_write(
                    report_dir / "sag" / model.name / f"{img.key}.dot",
                    lambda tmp, dot=dot: Path(tmp).write_text(dot),
                )
                written += 1
    _atomic_write(report_dir / "stats.csv", lambda tmp: stats_to_csv(stats, tmp))
    _atomic_write(report_dir / "stats.json", lambda tmp: stats_to_json(stats, tmp))


def _write_percent_csv(percent, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["max_patches", "percent_explained"])
        for n, value in enumerate(percent, start=1):
            writer.writerow([n, repr(value)])


def _read_nodes(path, grid) -> dict:
    from .imaging import PatchSet

    nodes: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                image_id = str(obj["image_id"])
                root_bits = int(obj["root_mask"], 16)
                node = SubExplanationNode(
                    patches=PatchSet(int(obj["mask"], 16), grid),
                    confidence_ratio=float(obj["ratio"]),
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise XprobeError(f"corrupt node record at line {lineno} of {path}: {exc}") from exc
            nodes.setdefault(image_id, {}).setdefault(root_bits, set()).add(node)
    return nodes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xprobe",
        description="Dataset-wide explanation probes for black-box image classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("mse", "find minimal sufficient explanations"),
        ("subexp", "expand and count sub-explanations"),
        ("saliency", "attribution maps and insertion/deletion curves"),
        ("crosstest", "cross-testing matrix and model embedding"),
        ("report", "aggregate statistics, figures, and explanation graphs"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON run configuration")
        cmd.add_argument("--out", default=None, help="output directory (overrides config)")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--jobs", type=int, default=None)
        cmd.add_argument("--baseline", choices=["grey", "blur"], default=None)
        cmd.add_argument("--beam-width", type=int, default=None)
        cmd.add_argument("--p-h", dest="p_h", type=float, default=None, help="confidence retention fraction")
        cmd.add_argument("--grid", default=None, help="patch grid as RxC")
        cmd.add_argument("--steps", type=int, default=None, help="perturbation curve steps")
    return parser


COMMANDS = {
    "mse": cmd_mse,
    "subexp": cmd_subexp,
    "saliency": cmd_saliency,
    "crosstest": cmd_crosstest,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except XprobeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

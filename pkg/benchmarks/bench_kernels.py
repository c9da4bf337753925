"""Compare the compiled and numpy inner-loop backends on realistic shapes.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Times compose_subsets and occupancy_counts on 224x224 RGB batches with a
7x7 grid (the default pipeline shape) and a small 18x18 synthetic shape,
then prints the per-call medians and the speedup.  Results are checked for
bit-identity before timing so the comparison is meaningful.
"""

import argparse
import statistics
import time

import numpy as np

from xprobe import _numpy_kernels

try:
    from xprobe import _compiled_kernels
except ImportError:
    _compiled_kernels = None

from xprobe.imaging import make_grid


def _case(height, width, channels, rows, cols, batch, seed):
    rng = np.random.default_rng(seed)
    grid = make_grid(height, width, rows, cols)
    image = rng.uniform(0, 1, size=(channels, height, width)).astype(np.float32)
    baseline = np.zeros_like(image)
    masks = rng.integers(1, 1 << grid.n_patches, size=batch, dtype=np.uint64)
    return grid, image, baseline, masks


def _time(fn, repeats):
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def run_case(label, height, width, channels, rows, cols, batch, repeats):
    grid, image, baseline, masks = _case(height, width, channels, rows, cols, batch, 7)
    backends = {"numpy": _numpy_kernels}
    if _compiled_kernels is not None:
        backends["compiled"] = _compiled_kernels

    composed = {
        name: impl.compose_subsets(image, baseline, grid.patch_id_map(), masks)
        for name, impl in backends.items()
    }
    counts = {
        name: impl.occupancy_counts(
            composed[name], baseline, grid.patch_id_map(), grid.n_patches, 1e-6
        )
        for name, impl in backends.items()
    }
    if _compiled_kernels is not None:
        assert np.array_equal(composed["numpy"], composed["compiled"]), "compose mismatch"
        assert np.array_equal(counts["numpy"], counts["compiled"]), "occupancy mismatch"

    print(f"\n{label}: batch={batch} image={channels}x{height}x{width} grid={rows}x{cols}")
    timings = {}
    for name, impl in backends.items():
        compose_t = _time(
            lambda impl=impl: impl.compose_subsets(image, baseline, grid.patch_id_map(), masks),
            repeats,
        )
        occupancy_t = _time(
            lambda impl=impl, c=composed[name]: impl.occupancy_counts(
                c, baseline, grid.patch_id_map(), grid.n_patches, 1e-6
            ),
            repeats,
        )
        timings[name] = (compose_t, occupancy_t)
        print(f"  {name:9s} compose {compose_t * 1e3:8.2f} ms   occupancy {occupancy_t * 1e3:8.2f} ms")
    if "compiled" in timings:
        for i, op in enumerate(("compose", "occupancy")):
            ratio = timings["numpy"][i] / timings["compiled"][i]
            print(f"  speedup   {op}: {ratio:.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=9)
    args = parser.parse_args()
    if _compiled_kernels is None:
        print("compiled extension not importable; timing the numpy backend only")
    run_case("dataset-scale", 224, 224, 3, 7, 7, 64, args.repeats)
    run_case("synthetic", 18, 18, 1, 3, 6, 512, args.repeats)


if __name__ == "__main__":
    main()

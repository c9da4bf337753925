"""Numpy reference implementations of the composition/occupancy inner loops.

Used when the compiled extension is unavailable; results must be
bit-identical to ``_compiled_kernels``.
"""

import numpy as np

# one-hot patch membership matrices, keyed by the patch-id raster; there is
# one entry per distinct grid so the cache stays tiny
_ONEHOT_CACHE = {}


def compose_subsets(image, baseline, patch_ids, masks):
    """Blend image over baseline for a batch of patch bitmasks.

    image, baseline: float32 (C, H, W); patch_ids: uint8 (H, W);
    masks: uint64 (B,).  Returns float32 (B, C, H, W).
    """
    shifts = patch_ids.astype(np.uint64)
    keep = (masks[:, None, None] >> shifts[None, :, :]) & np.uint64(1)
    keep = keep.astype(bool)[:, None, :, :]
    return np.where(keep, image[None], baseline[None])


def occupancy_counts(images, baseline, patch_ids, n_patches, atol):
    """Count, per patch, the pixels differing from baseline by more than atol.

    A pixel counts as changed when any channel differs.  Returns int64
    (B, n_patches).
    """
    changed = np.any(np.abs(images - baseline[None]) > np.float32(atol), axis=1)
    flat = changed.reshape(changed.shape[0], -1)
    key = (patch_ids.tobytes(), n_patches)
    onehot = _ONEHOT_CACHE.get(key)
    if onehot is None:
        onehot = (patch_ids.reshape(-1, 1) == np.arange(n_patches, dtype=patch_ids.dtype)).astype(np.int64)
        _ONEHOT_CACHE[key] = onehot
    return flat.astype(np.int64) @ onehot

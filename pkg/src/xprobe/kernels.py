"""Backend selection for the pixel-level inner loops.

Prefers the compiled extension; falls back to the numpy implementation when
the extension is missing or ``XPROBE_FORCE_NUMPY`` is set.  Both backends
produce identical outputs.
"""

import os

from . import _numpy_kernels

if os.environ.get("XPROBE_FORCE_NUMPY"):
    _impl = _numpy_kernels
    BACKEND = "numpy"
else:
    try:
        from . import _compiled_kernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _numpy_kernels
        BACKEND = "numpy"


def compose_subsets(image, baseline, patch_ids, masks):
    return _impl.compose_subsets(image, baseline, patch_ids, masks)


def occupancy_counts(images, baseline, patch_ids, n_patches, atol):
    return _impl.occupancy_counts(images, baseline, patch_ids, n_patches, atol)

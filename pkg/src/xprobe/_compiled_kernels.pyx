# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: masked composition and patch occupancy counting.

These two routines sit inside every oracle call made by the subset engines,
so they are written as single fused passes over the pixel data.  Semantics
must stay bit-identical to ``_numpy_kernels``.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def compose_subsets(const cnp.float32_t[:, :, ::1] image,
                    const cnp.float32_t[:, :, ::1] baseline,
                    const cnp.uint8_t[:, ::1] patch_ids,
                    const cnp.uint64_t[::1] masks):
    """Blend image over baseline for a batch of patch bitmasks.

    Pixels whose patch id has its bit set in the mask come from ``image``,
    all others from ``baseline``.  Returns float32 (B, C, H, W).
    """
    cdef Py_ssize_t C = image.shape[0]
    cdef Py_ssize_t H = image.shape[1]
    cdef Py_ssize_t W = image.shape[2]
    cdef Py_ssize_t B = masks.shape[0]
    out_arr = np.empty((B, C, H, W), dtype=np.float32)
    cdef cnp.float32_t[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, c, y, x
    cdef cnp.uint64_t m
    cdef cnp.uint8_t pid
    for b in range(B):
        m = masks[b]
        for y in range(H):
            for x in range(W):
                pid = patch_ids[y, x]
                if (m >> pid) & 1:
                    for c in range(C):
                        out[b, c, y, x] = image[c, y, x]
                else:
                    for c in range(C):
                        out[b, c, y, x] = baseline[c, y, x]
    return out_arr


def occupancy_counts(const cnp.float32_t[:, :, :, ::1] images,
                     const cnp.float32_t[:, :, ::1] baseline,
                     const cnp.uint8_t[:, ::1] patch_ids,
                     int n_patches,
                     double atol):
    """Count, per patch, the pixels differing from baseline by more than atol.

    A pixel counts as changed when any channel differs.  Returns int64
    (B, n_patches).
    """
    cdef Py_ssize_t B = images.shape[0]
    cdef Py_ssize_t C = images.shape[1]
    cdef Py_ssize_t H = images.shape[2]
    cdef Py_ssize_t W = images.shape[3]
    out_arr = np.zeros((B, n_patches), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t b, c, y, x
    cdef cnp.float32_t diff
    cdef cnp.float32_t tol = <cnp.float32_t> atol
    cdef bint changed
    for b in range(B):
        for y in range(H):
            for x in range(W):
                changed = 0
                for c in range(C):
                    diff = images[b, c, y, x] - baseline[c, y, x]
                    if diff > tol or diff < -tol:
                        changed = 1
                        break
                if changed:
                    out[b, patch_ids[y, x]] += 1
    return out_arr

"""Segment-aggregation kernels with a numba fast path and a numpy fallback.

Every GNN layer reduces neighbor rows into per-node accumulators through the
CSR segments (indptr, indices).  These loops dominate runtime, so they are
JIT-compiled with numba when available.  Set LINKLAB_BACKEND=numpy to force
the pure-numpy path (useful for debugging and for the benchmark in
benchmarks/backend_bench.py).  Both paths accumulate in identical order, so
results agree bit for bit.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False


class KernelWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# numpy reference kernels
# ---------------------------------------------------------------------------

def _np_seg_sum(H, indptr, indices):
    n = indptr.shape[0] - 1
    out = np.zeros((n, H.shape[1]), dtype=H.dtype)
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    np.add.at(out, dst, H[indices])
    return out


def _np_seg_sum_weighted(H, w, indptr, indices):
    n = indptr.shape[0] - 1
    out = np.zeros((n, H.shape[1]), dtype=H.dtype)
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    np.add.at(out, dst, H[indices] * w[:, None])
    return out


def _np_seg_sum_scalar(x, indptr):
    n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=x.dtype)
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    np.add.at(out, dst, x)
    return out


def _np_seg_max_scalar(x, indptr):
    n = indptr.shape[0] - 1
    out = np.full(n, -np.inf, dtype=x.dtype)
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    np.maximum.at(out, dst, x)
    return out


def _np_scatter_add_rows(out, idx, rows):
    np.add.at(out, idx, rows)
    return out


# ---------------------------------------------------------------------------
# numba kernels (same accumulation order as the numpy versions)
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:
    _njit = numba.njit(cache=True, nogil=True)

    @_njit
    def _nb_seg_sum(H, indptr, indices):
        n = indptr.shape[0] - 1
        d = H.shape[1]
        out = np.zeros((n, d), dtype=H.dtype)
        for v in range(n):
            for k in range(indptr[v], indptr[v + 1]):
                u = indices[k]
                for j in range(d):
                    out[v, j] += H[u, j]
        return out

    @_njit
    def _nb_seg_sum_weighted(H, w, indptr, indices):
        n = indptr.shape[0] - 1
        d = H.shape[1]
        out = np.zeros((n, d), dtype=H.dtype)
        for v in range(n):
            for k in range(indptr[v], indptr[v + 1]):
                u = indices[k]
                for j in range(d):
                    out[v, j] += w[k] * H[u, j]
        return out

    @_njit
    def _nb_seg_sum_scalar(x, indptr):
        n = indptr.shape[0] - 1
        out = np.zeros(n, dtype=x.dtype)
        for v in range(n):
            for k in range(indptr[v], indptr[v + 1]):
                out[v] += x[k]
        return out

    @_njit
    def _nb_seg_max_scalar(x, indptr):
        n = indptr.shape[0] - 1
        out = np.full(n, -np.inf, dtype=x.dtype)
        for v in range(n):
            for k in range(indptr[v], indptr[v + 1]):
                if x[k] > out[v]:
                    out[v] = x[k]
        return out

    @_njit
    def _nb_scatter_add_rows(out, idx, rows):
        d = out.shape[1]
        for k in range(idx.shape[0]):
            v = idx[k]
            for j in range(d):
                out[v, j] += rows[k, j]
        return out


_KERNELS = {
    "numpy": {
        "seg_sum": _np_seg_sum,
        "seg_sum_weighted": _np_seg_sum_weighted,
        "seg_sum_scalar": _np_seg_sum_scalar,
        "seg_max_scalar": _np_seg_max_scalar,
        "scatter_add_rows": _np_scatter_add_rows,
    }
}
if _HAVE_NUMBA:
    _KERNELS["numba"] = {
        "seg_sum": _nb_seg_sum,
        "seg_sum_weighted": _nb_seg_sum_weighted,
        "seg_sum_scalar": _nb_seg_sum_scalar,
        "seg_max_scalar": _nb_seg_max_scalar,
        "scatter_add_rows": _nb_scatter_add_rows,
    }


def _initial_backend() -> str:
    requested = os.environ.get("LINKLAB_BACKEND", "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if _HAVE_NUMBA:
            return "numba"
        warnings.warn(
            "LINKLAB_BACKEND=numba requested but numba is not importable; "
            "falling back to the numpy kernels",
            KernelWarning,
        )
        return "numpy"
    if requested:
        warnings.warn(
            f"unknown LINKLAB_BACKEND={requested!r}; using default",
            KernelWarning,
        )
    return "numba" if _HAVE_NUMBA else "numpy"


_active = _initial_backend()


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_KERNELS))


def current_backend() -> str:
    return _active


def use_backend(name: str) -> None:
    """Switch kernel implementations at runtime (used by tests/benchmarks)."""
    global _active
    if name not in _KERNELS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    _active = name


def seg_sum(H, indptr, indices):
    """out[v] = sum of H[indices[k]] over k in [indptr[v], indptr[v+1])."""
    return _KERNELS[_active]["seg_sum"](H, indptr, indices)


def seg_sum_weighted(H, w, indptr, indices):
    """out[v] = sum of w[k] * H[indices[k]] over v's CSR segment."""
    return _KERNELS[_active]["seg_sum_weighted"](H, w, indptr, indices)


def seg_sum_scalar(x, indptr):
    """Per-segment sum of edge scalars."""
    return _KERNELS[_active]["seg_sum_scalar"](x, indptr)


def seg_max_scalar(x, indptr):
    """Per-segment max of edge scalars; empty segments yield -inf."""
    return _KERNELS[_active]["seg_max_scalar"](x, indptr)


def scatter_add_rows(out, idx, rows):
    """out[idx[k]] += rows[k], accumulating in index order. Mutates out."""
    return _KERNELS[_active]["scatter_add_rows"](out, idx, rows)

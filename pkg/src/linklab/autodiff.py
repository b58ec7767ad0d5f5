"""Minimal reverse-mode autodiff over numpy arrays.

Covers exactly the operations the GNN layers need: dense matmul, broadcast
add/scale, row gathers, CSR segment reductions (through the backend
kernels, so the training path and the inference path share the same
numerics), softmax over CSR segments, and a fused masked cross-entropy.
"""

from __future__ import annotations

import numpy as np

from . import backend


class Tensor:
    """Node in the tape: a value plus a closure that routes gradients back."""

    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return np.shape(self.value)

    def add_grad(self, g):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else g
        else:
            self.grad = self.grad + g


def tensor(value) -> Tensor:
    return Tensor(np.asarray(value, dtype=np.float64))


def backward(root: Tensor, seed_grad=None) -> None:
    """Accumulate gradients of ``root`` into every reachable tensor."""
    topo: list[Tensor] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    if seed_grad is None:
        seed_grad = np.ones_like(root.value) if isinstance(root.value, np.ndarray) else 1.0
    root.add_grad(seed_grad)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _unbroadcast(g, shape):
    """Sum g down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# dense ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.value + b.value

    def bw(g):
        a.add_grad(_unbroadcast(g, np.shape(a.value)))
        b.add_grad(_unbroadcast(g, np.shape(b.value)))

    return Tensor(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.value - b.value

    def bw(g):
        a.add_grad(_unbroadcast(g, np.shape(a.value)))
        b.add_grad(-_unbroadcast(g, np.shape(b.value)))

    return Tensor(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.value * b.value

    def bw(g):
        a.add_grad(_unbroadcast(g * b.value, np.shape(a.value)))
        b.add_grad(_unbroadcast(g * a.value, np.shape(b.value)))

    return Tensor(out, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.value @ b.value

    def bw(g):
        a.add_grad(g @ b.value.T)
        b.add_grad(a.value.T @ g)

    return Tensor(out, (a, b), bw)


def matvec(a: Tensor, v: Tensor) -> Tensor:
    """(n, d) @ (d,) -> (n,)."""
    out = a.value @ v.value

    def bw(g):
        a.add_grad(np.outer(g, v.value))
        v.add_grad(a.value.T @ g)

    return Tensor(out, (a, v), bw)


def scale_rows(a: Tensor, w: np.ndarray) -> Tensor:
    """Multiply each row of a by a constant per-row factor."""
    out = a.value * w[:, None]

    def bw(g):
        a.add_grad(g * w[:, None])

    return Tensor(out, (a,), bw)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    out = np.concatenate([a.value, b.value], axis=1)
    da = a.value.shape[1]

    def bw(g):
        a.add_grad(g[:, :da])
        b.add_grad(g[:, da:])

    return Tensor(out, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.value, 0.0)

    def bw(g):
        a.add_grad(g * (a.value > 0.0))

    return Tensor(out, (a,), bw)


def leaky_relu(a: Tensor, slope: float) -> Tensor:
    out = np.where(a.value > 0.0, a.value, slope * a.value)

    def bw(g):
        a.add_grad(g * np.where(a.value > 0.0, 1.0, slope))

    return Tensor(out, (a,), bw)


# ---------------------------------------------------------------------------
# gather / segment ops (CSR)
# ---------------------------------------------------------------------------

def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    out = a.value[idx]

    def bw(g):
        acc = np.zeros_like(a.value)
        backend.scatter_add_rows(acc, idx, np.ascontiguousarray(g))
        a.add_grad(acc)

    return Tensor(out, (a,), bw)


def gather_scalar(a: Tensor, idx: np.ndarray) -> Tensor:
    out = a.value[idx]

    def bw(g):
        acc = np.zeros_like(a.value)
        np.add.at(acc, idx, g)
        a.add_grad(acc)

    return Tensor(out, (a,), bw)


def seg_sum(a: Tensor, indptr: np.ndarray, indices: np.ndarray,
            dst: np.ndarray) -> Tensor:
    """out[v] = sum of a[indices[k]] over v's CSR segment.

    ``dst`` must be the per-entry segment owner, i.e. repeat(arange, degrees).
    """
    out = backend.seg_sum(a.value, indptr, indices)

    def bw(g):
        acc = np.zeros_like(a.value)
        backend.scatter_add_rows(acc, indices, np.ascontiguousarray(g[dst]))
        a.add_grad(acc)

    return Tensor(out, (a,), bw)


def seg_sum_weighted(a: Tensor, w: Tensor, indptr: np.ndarray,
                     indices: np.ndarray, dst: np.ndarray) -> Tensor:
    """out[v] = sum of w[k] * a[indices[k]] over v's CSR segment."""
    out = backend.seg_sum_weighted(a.value, w.value, indptr, indices)

    def bw(g):
        g_rows = np.ascontiguousarray(g[dst])
        acc = np.zeros_like(a.value)
        backend.scatter_add_rows(acc, indices, g_rows * w.value[:, None])
        a.add_grad(acc)
        w.add_grad(np.einsum("ij,ij->i", g_rows, a.value[indices]))

    return Tensor(out, (a, w), bw)


def segment_softmax(scores: Tensor, indptr: np.ndarray, dst: np.ndarray) -> Tensor:
    """Softmax of per-entry scores within each CSR segment."""
    shift = backend.seg_max_scalar(scores.value, indptr)
    e = np.exp(scores.value - shift[dst])
    denom = backend.seg_sum_scalar(e, indptr)
    alpha = e / denom[dst]

    def bw(g):
        inner = backend.seg_sum_scalar(g * alpha, indptr)
        scores.add_grad(alpha * (g - inner[dst]))

    return Tensor(alpha, (scores,), bw)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def masked_cross_entropy(logits: Tensor, labels: np.ndarray,
                         mask: np.ndarray) -> Tensor:
    """Mean cross-entropy of softmax(logits) over the masked node ids."""
    z = logits.value[mask]
    y = labels[mask]
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    log_probs = (z - zmax) - np.log(ez.sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(len(y)), y].mean()

    def bw(g):
        probs = ez / ez.sum(axis=1, keepdims=True)
        probs[np.arange(len(y)), y] -= 1.0
        full = np.zeros_like(logits.value)
        full[mask] = probs * (g / len(y))
        logits.add_grad(full)

    return Tensor(loss, (logits,), bw)

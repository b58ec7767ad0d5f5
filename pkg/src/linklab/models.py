"""Forward passes for 4-layer GCN, GAT, GIN and GraphSAGE models.

All arithmetic is float64: the attacks downstream measure posterior deltas
produced by 1e-4 multiplicative feature perturbations, which float32 noise
would swamp.  Inference and training share one tape-based implementation
(see autodiff), so gradients and served posteriors can never disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import backend
from .graph import Graph

ARCHITECTURES = ("gcn", "gat", "gin", "sage")
LEAKY_SLOPE = 0.2


class ModelFormatError(ValueError):
    """Malformed model file."""


class NumericError(ArithmeticError):
    """Non-finite values appeared during a forward pass."""


@dataclass
class ModelConfig:
    arch: str = "gcn"
    hidden_dim: int = 32
    depth: int = 4
    gat_self_loops: bool = True

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown arch {self.arch!r}; valid: {ARCHITECTURES}")
        if not 2 <= self.depth <= 6:
            raise ValueError("depth must be between 2 and 6")


@dataclass
class GnnModel:
    arch: str
    layers: list = field(default_factory=list)  # one {name: ndarray} dict per layer
    feature_dim: int = 0
    hidden_dim: int = 0
    num_classes: int = 0
    gat_self_loops: bool = True

    @property
    def depth(self) -> int:
        return len(self.layers)

    def param_items(self):
        for l, layer in enumerate(self.layers):
            for name in sorted(layer):
                yield f"L{l}.{name}", layer[name]

    def copy(self) -> "GnnModel":
        return GnnModel(
            arch=self.arch,
            layers=[{k: v.copy() for k, v in layer.items()} for layer in self.layers],
            feature_dim=self.feature_dim,
            hidden_dim=self.hidden_dim,
            num_classes=self.num_classes,
            gat_self_loops=self.gat_self_loops,
        )


def _layer_widths(cfg: ModelConfig, feature_dim: int, num_classes: int):
    for l in range(cfg.depth):
        w_in = feature_dim if l == 0 else cfg.hidden_dim
        w_out = num_classes if l == cfg.depth - 1 else cfg.hidden_dim
        yield w_in, w_out


def init_model(cfg: ModelConfig, feature_dim: int, num_classes: int,
               seed: int = 0, weight_init_scale: float = 1.0) -> GnnModel:
    """Glorot-uniform weights, zero biases, GIN epsilon initialized to 0."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out, shape):
        limit = np.sqrt(6.0 / (fan_in + fan_out)) * weight_init_scale
        return rng.uniform(-limit, limit, size=shape)

    layers = []
    for w_in, w_out in _layer_widths(cfg, feature_dim, num_classes):
        if cfg.arch == "gcn":
            layers.append({"W": glorot(w_in, w_out, (w_in, w_out))})
        elif cfg.arch == "gat":
            layers.append({
                "W": glorot(w_in, w_out, (w_in, w_out)),
                "a": glorot(2 * w_out, 1, (2 * w_out,)),
            })
        elif cfg.arch == "gin":
            layers.append({
                "W1": glorot(w_in, w_out, (w_in, w_out)),
                "b1": np.zeros(w_out),
                "W2": glorot(w_out, w_out, (w_out, w_out)),
                "b2": np.zeros(w_out),
                "eps": np.zeros(()),
            })
        else:  # sage
            layers.append({"W": glorot(2 * w_in, w_out, (2 * w_in, w_out))})
    return GnnModel(
        arch=cfg.arch,
        layers=layers,
        feature_dim=feature_dim,
        hidden_dim=cfg.hidden_dim,
        num_classes=num_classes,
        gat_self_loops=cfg.gat_self_loops,
    )


# ---------------------------------------------------------------------------
# layer computations on the tape
# ---------------------------------------------------------------------------

def _csr_arrays(graph: Graph, with_self: bool):
    indptr, indices = graph.csr_with_self() if with_self else graph.csr()
    dst = np.repeat(np.arange(graph.num_nodes, dtype=np.int64), np.diff(indptr))
    return indptr, indices, dst


def _gcn_layer_t(H, params, graph: Graph):
    indptr, indices, dst = _csr_arrays(graph, with_self=True)
    counts = np.diff(indptr).astype(np.float64)
    agg = ad.scale_rows(ad.seg_sum(H, indptr, indices, dst), 1.0 / counts)
    return ad.matmul(agg, params["W"])


def _slice_vec(a: ad.Tensor, start: int, stop: int) -> ad.Tensor:
    out = a.value[start:stop]

    def bw(g):
        acc = np.zeros_like(a.value)
        acc[start:stop] = g
        a.add_grad(acc)

    return ad.Tensor(out, (a,), bw)


def _gat_layer_t(H, params, graph: Graph, include_self: bool):
    indptr, indices, dst = _csr_arrays(graph, with_self=include_self)
    WH = ad.matmul(H, params["W"])
    w_out = WH.shape[1]
    s_dst = ad.matvec(WH, _slice_vec(params["a"], 0, w_out))
    s_src = ad.matvec(WH, _slice_vec(params["a"], w_out, 2 * w_out))
    scores = ad.leaky_relu(
        ad.add(ad.gather_scalar(s_dst, dst), ad.gather_scalar(s_src, indices)),
        LEAKY_SLOPE,
    )
    alpha = ad.segment_softmax(scores, indptr, dst)
    return ad.seg_sum_weighted(WH, alpha, indptr, indices, dst)


def _gin_layer_t(H, params, graph: Graph):
    indptr, indices, dst = _csr_arrays(graph, with_self=False)
    neigh = ad.seg_sum(H, indptr, indices, dst)
    one_plus_eps = ad.add(params["eps"], ad.tensor(1.0))
    pre = ad.add(ad.mul(H, one_plus_eps), neigh)
    h1 = ad.relu(ad.add(ad.matmul(pre, params["W1"]), params["b1"]))
    return ad.add(ad.matmul(h1, params["W2"]), params["b2"])


def _sage_layer_t(H, params, graph: Graph):
    indptr, indices, dst = _csr_arrays(graph, with_self=False)
    counts = np.diff(indptr).astype(np.float64)
    inv = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)
    neigh_mean = ad.scale_rows(ad.seg_sum(H, indptr, indices, dst), inv)
    return ad.matmul(ad.concat_cols(H, neigh_mean), params["W"])


_LAYER_FNS = {
    "gcn": lambda H, p, g, m: _gcn_layer_t(H, p, g),
    "gat": lambda H, p, g, m: _gat_layer_t(H, p, g, m.gat_self_loops),
    "gin": lambda H, p, g, m: _gin_layer_t(H, p, g),
    "sage": lambda H, p, g, m: _sage_layer_t(H, p, g),
}


def forward_tape(model: GnnModel, graph: Graph):
    """Build the full tape; returns (logits tensor, name -> param tensor)."""
    if graph.feature_dim != model.feature_dim:
        raise ValueError(
            f"graph feature_dim {graph.feature_dim} != model feature_dim {model.feature_dim}"
        )
    params = {}
    layer_tensors = []
    for l, layer in enumerate(model.layers):
        tl = {}
        for name, value in layer.items():
            t = ad.Tensor(value)
            params[f"L{l}.{name}"] = t
            tl[name] = t
        layer_tensors.append(tl)

    layer_fn = _LAYER_FNS[model.arch]
    H = ad.tensor(graph.features)
    for l in range(model.depth):
        H = layer_fn(H, layer_tensors[l], graph, model)
        if not np.all(np.isfinite(H.value)):
            raise NumericError(f"{model.arch} layer {l} produced non-finite values")
        if l < model.depth - 1:
            H = ad.relu(H)
    return H, params


def softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: GnnModel, graph: Graph) -> np.ndarray:
    """Per-node softmax posteriors, shape (num_nodes, num_classes)."""
    logits, _ = forward_tape(model, graph)
    return softmax_rows(logits.value)


def posterior(model: GnnModel, graph: Graph, v: int) -> np.ndarray:
    """Row v of forward(model, graph)."""
    graph._check_node(v)
    return forward(model, graph)[v].copy()


# ---------------------------------------------------------------------------
# spec-level single-layer operations (numpy in, numpy out)
# ---------------------------------------------------------------------------

_ACTIVATIONS = {
    "relu": lambda t: ad.relu(t),
    "identity": lambda t: t,
}


def _as_value(result, activation):
    return _ACTIVATIONS[activation](result).value


def gcn_layer(H, graph: Graph, W, activation="relu") -> np.ndarray:
    """h_v = act(W . mean(h_u for u in N(v) + {v}))."""
    return _as_value(_gcn_layer_t(ad.tensor(H), {"W": ad.tensor(W)}, graph), activation)


def gat_layer(H, graph: Graph, W, attention_params, activation="relu",
              include_self=True) -> np.ndarray:
    """Single-head additive attention aggregation (LeakyReLU slope 0.2)."""
    params = {"W": ad.tensor(W), "a": ad.tensor(attention_params)}
    return _as_value(_gat_layer_t(ad.tensor(H), params, graph, include_self), activation)


def gat_attention(H, graph: Graph, W, attention_params, include_self=True):
    """Attention coefficients per CSR entry plus the (indptr, indices) they index."""
    indptr, indices, dst = _csr_arrays(graph, with_self=include_self)
    WH = np.asarray(H, dtype=np.float64) @ np.asarray(W, dtype=np.float64)
    a = np.asarray(attention_params, dtype=np.float64)
    w_out = WH.shape[1]
    scores = WH @ a[:w_out]
    scores = scores[dst] + (WH @ a[w_out:])[indices]
    scores = np.where(scores > 0, scores, LEAKY_SLOPE * scores)
    shift = backend.seg_max_scalar(scores, indptr)
    e = np.exp(scores - shift[dst])
    denom = backend.seg_sum_scalar(e, indptr)
    return e / denom[dst], (indptr, indices)


def gin_layer(H, graph: Graph, mlp_weights, epsilon) -> np.ndarray:
    """h_v = MLP((1 + eps) * h_v + sum of neighbor rows); MLP = affine-ReLU-affine."""
    W1, b1, W2, b2 = (ad.tensor(w) for w in mlp_weights)
    params = {"W1": W1, "b1": b1, "W2": W2, "b2": b2, "eps": ad.tensor(epsilon)}
    return _gin_layer_t(ad.tensor(H), params, graph).value


def sage_layer(H, graph: Graph, W, activation="relu") -> np.ndarray:
    """h_v = act(W . concat(h_v, mean of neighbor rows)); isolated nodes use 0."""
    return _as_value(_sage_layer_t(ad.tensor(H), {"W": ad.tensor(W)}, graph), activation)


# ---------------------------------------------------------------------------
# model file round-trip
# ---------------------------------------------------------------------------
#
# Text format:
#   <arch> <depth> <feature_dim> <hidden_dim> <num_classes>
#   layer <l>
#   <param-name> <ndim> <dims...>
#   <one line of space-separated decimal values per row>
#
# Floats are written with repr(), which round-trips float64 exactly.
# A GAT trained without the self-loop term uses the arch token "gat-noself".

def write_model(model: GnnModel, path) -> None:
    arch_token = model.arch
    if model.arch == "gat" and not model.gat_self_loops:
        arch_token = "gat-noself"
    with open(path, "w") as fh:
        fh.write(f"{arch_token} {model.depth} {model.feature_dim} "
                 f"{model.hidden_dim} {model.num_classes}\n")
        for l, layer in enumerate(model.layers):
            fh.write(f"layer {l}\n")
            for name in sorted(layer):
                arr = np.asarray(layer[name], dtype=np.float64)
                dims = " ".join(str(d) for d in arr.shape)
                fh.write(f"{name} {arr.ndim}{' ' + dims if dims else ''}\n")
                rows = arr.reshape(1, -1) if arr.ndim < 2 else arr
                for row in rows:
                    fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_model(path) -> GnnModel:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise ModelFormatError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 5:
        raise ModelFormatError(f"{path}: header must have 5 fields, got {len(head)}")
    arch_token = head[0]
    gat_self = arch_token != "gat-noself"
    arch = "gat" if arch_token.startswith("gat") else arch_token
    if arch not in ARCHITECTURES:
        raise ModelFormatError(f"{path}: unknown arch {arch_token!r}")
    try:
        depth, feature_dim, hidden_dim, num_classes = (int(x) for x in head[1:])
    except ValueError:
        raise ModelFormatError(f"{path}: non-integer header field") from None

    layers = []
    i = 1
    current = None
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        parts = line.split()
        if parts[0] == "layer":
            current = {}
            layers.append(current)
            i += 1
            continue
        if current is None:
            raise ModelFormatError(f"{path}: line {i + 1}: parameter before any layer")
        name = parts[0]
        try:
            ndim = int(parts[1])
            dims = tuple(int(x) for x in parts[2:2 + ndim])
        except (IndexError, ValueError):
            raise ModelFormatError(f"{path}: line {i + 1}: bad parameter header") from None
        n_rows = dims[0] if ndim == 2 else 1
        values = []
        for r in range(n_rows):
            try:
                values.append([float(x) for x in lines[i + 1 + r].split()])
            except (IndexError, ValueError):
                raise ModelFormatError(
                    f"{path}: line {i + 2 + r}: bad value row for {name!r}"
                ) from None
        arr = np.array(values, dtype=np.float64).reshape(dims)
        if not np.all(np.isfinite(arr)):
            raise ModelFormatError(f"{path}: parameter {name!r} has non-finite entries")
        current[name] = arr
        i += 1 + n_rows

    model = GnnModel(arch=arch, layers=layers, feature_dim=feature_dim,
                     hidden_dim=hidden_dim, num_classes=num_classes,
                     gat_self_loops=gat_self)
    if model.depth != depth:
        raise ModelFormatError(f"{path}: header depth {depth} != {model.depth} layer blocks")
    _validate_widths(model, path)
    return model


def _validate_widths(model: GnnModel, path="model") -> None:
    cfg = ModelConfig(arch=model.arch, hidden_dim=model.hidden_dim, depth=model.depth,
                      gat_self_loops=model.gat_self_loops)
    for l, (w_in, w_out) in enumerate(_layer_widths(cfg, model.feature_dim,
                                                    model.num_classes)):
        layer = model.layers[l]
        key = "W1" if model.arch == "gin" else "W"
        exp_in = 2 * w_in if model.arch == "sage" else w_in
        if key not in layer or layer[key].shape != (exp_in, w_out):
            raise ModelFormatError(
                f"{path}: layer {l} weight shape "
                f"{layer.get(key) is not None and layer[key].shape} != ({exp_in}, {w_out})"
            )

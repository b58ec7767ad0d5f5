"""Full-batch training of GNN weights with tape gradients.

The paper-side protocol gives no training hyperparameters; defaults here are
Adam(0.9, 0.999) at lr 0.01 for 200 epochs with Glorot init.  Training is
deterministic under a fixed seed and returns the weights with the lowest
recorded cross-entropy over the run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import Graph
from .models import GnnModel, ModelConfig, forward_tape, init_model


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    optimizer: str = "adam"  # "adam" or "sgd"
    seed: int = 0
    train_mask: object = None  # node-id iterable; None = all labeled nodes
    weight_init_scale: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _resolve_mask(graph: Graph, train_mask) -> np.ndarray:
    if graph.labels is None:
        raise ValueError("graph has no labels; cannot train")
    if train_mask is None:
        mask = np.flatnonzero(graph.labels >= 0)
    else:
        mask = np.array(sorted(int(v) for v in train_mask), dtype=np.int64)
    if mask.size == 0:
        raise ValueError("train mask is empty")
    if np.any(mask < 0) or np.any(mask >= graph.num_nodes):
        raise ValueError("train mask contains invalid node ids")
    if np.any(graph.labels[mask] < 0):
        raise ValueError("train mask contains unlabeled nodes")
    return mask


def _loss_grads_logits(model: GnnModel, graph: Graph, mask: np.ndarray):
    logits, params = forward_tape(model, graph)
    loss = ad.masked_cross_entropy(logits, graph.labels, mask)
    ad.backward(loss)
    grads = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.value))
        for name, t in params.items()
    }
    return float(loss.value), grads, logits.value


def loss_and_grad(model: GnnModel, graph: Graph, train_mask):
    """Mean cross-entropy over the mask and its gradient per parameter tensor."""
    mask = _resolve_mask(graph, train_mask)
    loss, grads, _ = _loss_grads_logits(model, graph, mask)
    return loss, grads


def train_accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits[mask], axis=1) == labels[mask]))


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, weights, grads):
        self.t += 1
        for name, w in weights.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(w))
            v = self.v.setdefault(name, np.zeros_like(w))
            m += (1 - self.b1) * (g - m)
            v += (1 - self.b2) * (g * g - v)
            m_hat = m / (1 - self.b1 ** self.t)
            v_hat = v / (1 - self.b2 ** self.t)
            w -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, weights, grads):
        for name, w in weights.items():
            w -= self.lr * grads[name]


def train(model_cfg: ModelConfig, graph: Graph, cfg: TrainConfig,
          curve_path=None) -> GnnModel:
    """Train a fresh model; returns the weights with the lowest recorded loss.

    Optionally writes a loss-curve CSV ("epoch,loss,train_acc") to curve_path.
    """
    mask = _resolve_mask(graph, cfg.train_mask)
    model = init_model(model_cfg, graph.feature_dim, graph.num_classes,
                       seed=cfg.seed, weight_init_scale=cfg.weight_init_scale)
    weights = {name: arr for name, arr in model.param_items()}
    opt = _Adam(cfg.learning_rate) if cfg.optimizer == "adam" else _Sgd(cfg.learning_rate)

    best_loss = np.inf
    best_layers = None
    curve = []
    for epoch in range(cfg.epochs):
        loss, grads, logits = _loss_grads_logits(model, graph, mask)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        curve.append((epoch, loss, train_accuracy(logits, graph.labels, mask)))
        if loss < best_loss:
            best_loss = loss
            best_layers = [{k: v.copy() for k, v in layer.items()}
                           for layer in model.layers]
        opt.step(weights, grads)

    # weights after the final step are a candidate too
    logits, _ = forward_tape(model, graph)
    final_loss = float(ad.masked_cross_entropy(logits, graph.labels, mask).value)
    if np.isfinite(final_loss) and final_loss < best_loss:
        best_layers = [{k: v.copy() for k, v in layer.items()}
                       for layer in model.layers]
    model.layers = best_layers

    if curve_path is not None:
        with open(curve_path, "w") as fh:
            fh.write("epoch,loss,train_acc\n")
            for epoch, loss, acc in curve:
                fh.write(f"{epoch},{loss:.10g},{acc:.6f}\n")
    return model

"""Black-box inference facade enforcing the threat model.

Clients open sessions, create auxiliary nodes, wire them to arbitrary
targets, and query posteriors of the nodes they own -- nothing else.
Confidence masking zeroes all but the top-k posterior entries without
renormalizing.  A privileged bypass exists only for the baseline attacks
and the harness; its use is flagged in the query log.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .defenses import DefenseSpec
from .graph import Graph
from .models import GnnModel, forward


class AccessDeniedError(PermissionError):
    """A session touched a node outside its owned set."""


@dataclass
class ServiceConfig:
    mask_top_k: int | None = None
    defense: DefenseSpec | None = None  # descriptive; apply_defense runs upstream
    query_log: bool = False

    def __post_init__(self):
        if self.mask_top_k is not None and self.mask_top_k < 1:
            raise ValueError("mask_top_k must be >= 1 when set")


@dataclass
class AttackSession:
    session_id: int
    service: "VictimService" = None
    owned_nodes: set = field(default_factory=set)
    query_count: int = 0
    perturbation_count: int = 0

    # conveniences so attack code can act through the session handle
    def add_node(self, features) -> int:
        return self.service.adv_add_node(self, features)

    def add_edge(self, own: int, other: int) -> None:
        self.service.adv_add_edge(self, own, other)

    def set_features(self, own: int, features) -> None:
        self.service.adv_set_features(self, own, features)

    def query(self, own: int) -> np.ndarray:
        return self.service.query(self, own)


def mask_posterior(p: np.ndarray, k: int | None) -> np.ndarray:
    """Zero all but the k largest entries (ties to the lower index); no renorm."""
    if k is None or k >= p.shape[0]:
        return p.copy()
    keep = np.argsort(-p, kind="stable")[:k]
    out = np.zeros_like(p)
    out[keep] = p[keep]
    return out


class VictimService:
    """Serves one mutable graph; per-pair isolation is the caller's job."""

    def __init__(self, model: GnnModel, graph: Graph, config: ServiceConfig | None = None):
        self.model = model
        self.graph = graph
        self.config = config or ServiceConfig()
        self._lock = threading.RLock()
        self._cache_version = -1
        self._cache_posteriors = None
        self._next_session = 0
        self._log_seq = 0
        self.query_log: list[tuple] = []

    # -- internals -----------------------------------------------------------

    def _posteriors(self) -> np.ndarray:
        if self._cache_version != self.graph.version:
            self._cache_posteriors = forward(self.model, self.graph)
            self._cache_version = self.graph.version
        return self._cache_posteriors

    def _log(self, session, op, node, privileged) -> None:
        if self.config.query_log:
            sid = -1 if session is None else session.session_id
            self.query_log.append((self._log_seq, sid, op, int(node), int(privileged)))
        self._log_seq += 1

    def _require_owned(self, session: AttackSession, node: int) -> None:
        if node not in session.owned_nodes:
            raise AccessDeniedError(
                f"session {session.session_id} does not own node {node}"
            )

    # -- session API (the adversary's view) -----------------------------------

    def open_session(self) -> AttackSession:
        with self._lock:
            session = AttackSession(session_id=self._next_session, service=self)
            self._next_session += 1
            return session

    def adv_add_node(self, session: AttackSession, features) -> int:
        with self._lock:
            node = self.graph.add_node(features)
            session.owned_nodes.add(node)
            self._log(session, "add_node", node, False)
            return node

    def adv_add_edge(self, session: AttackSession, own: int, other: int) -> None:
        with self._lock:
            self._require_owned(session, own)
            self.graph.add_edge(own, other)
            self._log(session, "add_edge", other, False)

    def adv_set_features(self, session: AttackSession, own: int, features) -> None:
        with self._lock:
            self._require_owned(session, own)
            self.graph.set_features(own, features)
            session.perturbation_count += 1
            self._log(session, "set_features", own, False)

    def query(self, session: AttackSession, own: int) -> np.ndarray:
        with self._lock:
            self._require_owned(session, own)
            session.query_count += 1
            self._log(session, "query", own, False)
            return mask_posterior(self._posteriors()[own], self.config.mask_top_k)

    # -- privileged API (baselines and harness only) ---------------------------

    def privileged_query(self, v: int) -> np.ndarray:
        with self._lock:
            self.graph._check_node(v)
            self._log(None, "query", v, True)
            return self._posteriors()[v].copy()

    def privileged_set_features(self, v: int, features) -> None:
        with self._lock:
            self.graph.set_features(v, features)
            self._log(None, "set_features", v, True)

    # -- log export ------------------------------------------------------------

    def write_query_log(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("seq,session,op,node,privileged\n")
            for row in self.query_log:
                fh.write(",".join(str(x) for x in row) + "\n")

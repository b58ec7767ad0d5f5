"""Edge-inference attacks run through the session API.

Each attack scores one (target, candidate) pair with a Link Possibility
Score (LPS) computed purely from posteriors of adversary-owned auxiliary
nodes.  The thresholding pipeline then predicts the top-d_hat nonzero
scores as edges.  Influence attacks perturb an auxiliary node's features
multiplicatively by (1 - alpha) across all dimensions and normalize the
observed posterior change by alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distances import DistanceMetric, distance, parse_metric
from .graph import Graph, restore, snapshot
from .service import VictimService

ATTACK_METHODS = ("sim", "sim2", "inf1", "inf2", "inf3")
AUX_STRATEGIES = ("random", "duplication", "mean", "dataset_typical", "median")

_DEFAULT_METRICS = {
    "sim": DistanceMetric.CORRELATION,
    "sim2": DistanceMetric.CORRELATION,
    "inf2": DistanceMetric.COSINE,
}


@dataclass
class AttackSpec:
    method: str = "inf3"
    metric: DistanceMetric | str | None = None  # sim/sim2/inf2 only
    alpha: float = 1e-4
    aux_strategy: str = "random"

    def __post_init__(self):
        if self.method not in ATTACK_METHODS:
            raise ValueError(f"unknown attack method {self.method!r}; valid: {ATTACK_METHODS}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.aux_strategy not in AUX_STRATEGIES:
            raise ValueError(
                f"unknown aux strategy {self.aux_strategy!r}; valid: {AUX_STRATEGIES}"
            )
        if self.metric is None:
            self.metric = _DEFAULT_METRICS.get(self.method)
        elif not isinstance(self.metric, DistanceMetric):
            self.metric = parse_metric(self.metric)


@dataclass
class LpsTable:
    target: int
    method: str
    metric: DistanceMetric | None = None
    scores: dict = field(default_factory=dict)  # candidate id -> LPS


def aux_features(strategy: str, graph: Graph, t: int, rng=None) -> np.ndarray:
    """Feature vector for auxiliary nodes; rejects zero-norm results.

    random: seeded standard normal; duplication: copy of t's features;
    mean/median: column-wise over all pre-existing nodes; dataset_typical:
    the node closest (Euclidean) to the mean, lowest id on ties.
    """
    if strategy not in AUX_STRATEGIES:
        raise ValueError(f"unknown aux strategy {strategy!r}; valid: {AUX_STRATEGIES}")
    if strategy == "random":
        rng = rng if rng is not None else np.random.default_rng()
        vec = rng.standard_normal(graph.feature_dim)
    elif strategy == "duplication":
        graph._check_node(t)
        vec = graph.features[t].copy()
    elif strategy == "mean":
        vec = graph.features.mean(axis=0)
    elif strategy == "dataset_typical":
        mean = graph.features.mean(axis=0)
        dists = np.linalg.norm(graph.features - mean, axis=1)
        vec = graph.features[int(np.argmin(dists))].copy()  # argmin ties -> lowest id
    else:  # median
        vec = np.median(graph.features, axis=0)
    if np.linalg.norm(vec) == 0.0:
        raise ValueError(
            f"aux strategy {strategy!r} produced a zero-norm feature vector; "
            "multiplicative perturbation would be a no-op"
        )
    return vec


def _check_pair(graph: Graph, t: int, c: int) -> None:
    graph._check_node(t)
    graph._check_node(c)
    if t == c:
        raise ValueError("target and candidate must differ")


# ---------------------------------------------------------------------------
# per-pair LPS transcripts
# ---------------------------------------------------------------------------

def lps_sim(session, t: int, c: int, spec: AttackSpec, aux: np.ndarray) -> float:
    """Insert twins a1-t and a2-c; LPS = 1 - distance(p_a1, p_a2)."""
    _check_pair(session.service.graph, t, c)
    a1 = session.add_node(aux)
    a2 = session.add_node(aux)
    session.add_edge(a1, t)
    session.add_edge(a2, c)
    return 1.0 - distance(spec.metric, session.query(a1), session.query(a2))


def lps_sim2(session, t: int, c: int, spec: AttackSpec, aux: np.ndarray) -> float:
    """SIM setup, then bridge a1 to c and score how little the distance moves.

    Returned as -(absolute distance change) so that the generic top-d_hat
    selection keeps the most-stable pairs; always <= 0.
    """
    _check_pair(session.service.graph, t, c)
    a1 = session.add_node(aux)
    a2 = session.add_node(aux)
    session.add_edge(a1, t)
    session.add_edge(a2, c)
    d_before = distance(spec.metric, session.query(a1), session.query(a2))
    session.add_edge(a1, c)
    d_after = distance(spec.metric, session.query(a1), session.query(a2))
    return -abs(d_after - d_before)


def lps_inf1(session, t: int, c: int, spec: AttackSpec, aux: np.ndarray) -> float:
    """Perturb a1 (on t), observe a2 (on c); LPS = ||delta p_a2||_2 / alpha."""
    _check_pair(session.service.graph, t, c)
    a1 = session.add_node(aux)
    a2 = session.add_node(aux)
    session.add_edge(a1, t)
    session.add_edge(a2, c)
    p_before = session.query(a2)
    session.set_features(a1, (1.0 - spec.alpha) * aux)
    p_after = session.query(a2)
    return float(np.linalg.norm(p_after - p_before)) / spec.alpha


def _inf_anchor_deltas(session, t, c, spec, aux):
    """Shared INF2/INF3 transcript: perturb a2, watch a1 and the anchor."""
    _check_pair(session.service.graph, t, c)
    a1 = session.add_node(aux)
    a2 = session.add_node(aux)
    anchor = session.add_node(aux)
    session.add_edge(a1, t)
    session.add_edge(a2, c)
    session.add_edge(anchor, c)
    p1 = session.query(a1)
    pa = session.query(anchor)
    session.set_features(a2, (1.0 - spec.alpha) * aux)
    d1 = session.query(a1) - p1
    da = session.query(anchor) - pa
    return d1, da


def lps_inf2(session, t: int, c: int, spec: AttackSpec, aux: np.ndarray) -> float:
    """LPS = 1 - distance(delta p_a1, delta p_anchor); 0 if both deltas vanish."""
    d1, da = _inf_anchor_deltas(session, t, c, spec, aux)
    if not d1.any() and not da.any():
        return 0.0
    return 1.0 - distance(spec.metric, d1, da)


def lps_inf3(session, t: int, c: int, spec: AttackSpec, aux: np.ndarray) -> float:
    """LPS = ||delta p_a1|| / ||delta p_anchor|| (alpha cancels)."""
    d1, da = _inf_anchor_deltas(session, t, c, spec, aux)
    denom = float(np.linalg.norm(da))
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(d1)) / denom


_LPS_FNS = {
    "sim": lps_sim,
    "sim2": lps_sim2,
    "inf1": lps_inf1,
    "inf2": lps_inf2,
    "inf3": lps_inf3,
}


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def compute_lps(service: VictimService, t: int, c: int, spec: AttackSpec,
                rng=None, aux: np.ndarray | None = None) -> float:
    """One pair on the current serving graph (no snapshot; callers isolate)."""
    if aux is None:
        aux = aux_features(spec.aux_strategy, service.graph, t, rng)
    session = service.open_session()
    return _LPS_FNS[spec.method](session, t, c, spec, aux)


def compute_lps_table(service: VictimService, t: int, candidates, spec: AttackSpec,
                      rng=None) -> LpsTable:
    """Score every candidate, snapshotting and restoring around each pair."""
    if len(candidates) == 0:
        raise ValueError("candidate set must be nonempty")
    table = LpsTable(target=t, method=spec.method,
                     metric=spec.metric if spec.method in ("sim", "sim2", "inf2") else None)
    for c in candidates:
        snap = snapshot(service.graph)
        try:
            table.scores[int(c)] = compute_lps(service, t, int(c), spec, rng)
        finally:
            restore(service.graph, snap)
    return table


def select_predictions(scores: dict, d_hat: int, exclude_zero: bool = True) -> dict:
    """Alg.-1 thresholding: predicted iff LPS > (d_hat+1)-th largest and nonzero.

    With fewer than d_hat+1 candidates the threshold is -inf, so every
    (nonzero-scoring) candidate is predicted.  At most d_hat positives.
    """
    if d_hat < 0:
        raise ValueError("d_hat must be >= 0")
    values = sorted(scores.values(), reverse=True)
    threshold = values[d_hat] if len(values) > d_hat else -np.inf
    return {
        c: bool(s > threshold and (not exclude_zero or s != 0.0))
        for c, s in scores.items()
    }


def run_attack(service: VictimService, t: int, candidates, d_hat: int,
               spec: AttackSpec, rng=None) -> dict:
    """Full per-target attack: LPS per candidate, then top-d_hat thresholding."""
    table = compute_lps_table(service, t, candidates, spec, rng)
    return select_predictions(table.scores, d_hat, exclude_zero=spec.method != "sim2")


def write_lps_dump(tables, path) -> None:
    """Debug CSV: target,candidate,method,metric,lps."""
    with open(path, "w") as fh:
        fh.write("target,candidate,method,metric,lps\n")
        for table in tables:
            metric = table.metric.value if table.metric is not None else ""
            for c in sorted(table.scores):
                fh.write(f"{table.target},{c},{table.method},{metric},"
                         f"{table.scores[c]!r}\n")

"""Reference baselines run under their stronger (privileged) threat models.

LSA-0 scores candidates by correlation similarity between the target's and
the candidate's posteriors, queried directly.  The influence baseline (LTA)
perturbs each candidate's own features and measures the normed posterior
change at the target.  Both leave the graph exactly as they found it and
produce score tables that feed the shared top-d_hat thresholding.
"""

from __future__ import annotations

import numpy as np

from .attacks import LpsTable
from .distances import DistanceMetric, distance
from .service import VictimService


def lsa0_scores(service: VictimService, t: int, candidates) -> LpsTable:
    """LPS(c) = 1 - correlation_distance(posterior(t), posterior(c))."""
    table = LpsTable(target=t, method="lsa0", metric=DistanceMetric.CORRELATION)
    p_t = service.privileged_query(t)
    for c in candidates:
        if int(c) == t:
            raise ValueError("candidate set must not contain the target")
        p_c = service.privileged_query(int(c))
        table.scores[int(c)] = 1.0 - distance(DistanceMetric.CORRELATION, p_t, p_c)
    return table


def lta_scores(service: VictimService, t: int, candidates, alpha: float = 1e-4) -> LpsTable:
    """LPS(c) = ||posterior'(t) - posterior(t)||_2 / alpha after perturbing c.

    Each candidate's features are scaled by (1 - alpha) and restored
    afterwards; topology is never touched.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    table = LpsTable(target=t, method="lta")
    p_t = service.privileged_query(t)
    for c in candidates:
        c = int(c)
        if c == t:
            raise ValueError("candidate set must not contain the target")
        original = service.graph.features[c].copy()
        service.privileged_set_features(c, (1.0 - alpha) * original)
        p_t_after = service.privileged_query(t)
        service.privileged_set_features(c, original)
        table.scores[c] = float(np.linalg.norm(p_t_after - p_t)) / alpha
    return table

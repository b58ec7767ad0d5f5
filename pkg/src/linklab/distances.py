"""Closed-form distance metrics used to compare posterior vectors.

Degenerate denominators follow a fixed convention: Cosine with a zero
vector and Correlation with a constant vector return distance 0 (maximal
similarity); Canberra skips 0/0 terms; Bray-Curtis with a zero denominator
returns 0.  These conventions keep every metric total and deterministic.
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class DistanceMetric(Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    CORRELATION = "correlation"
    CHEBYSHEV = "chebyshev"
    BRAYCURTIS = "braycurtis"
    CANBERRA = "canberra"
    MANHATTAN = "manhattan"
    SQUARE_EUCLIDEAN = "square_euclidean"


def _cosine(x, y):
    nx = np.sqrt(x @ x)
    ny = np.sqrt(y @ y)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return 1.0 - (x @ y) / (nx * ny)


def _correlation(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0.0:
        return 0.0
    return 1.0 - (xc @ yc) / denom


def _braycurtis(x, y):
    denom = np.sum(x + y)
    if denom == 0.0:
        return 0.0
    return np.sum(np.abs(x - y)) / denom


def _canberra(x, y):
    num = np.abs(x - y)
    denom = np.abs(x) + np.abs(y)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom != 0.0)
    return float(np.sum(terms))


_FORMS = {
    DistanceMetric.COSINE: _cosine,
    DistanceMetric.EUCLIDEAN: lambda x, y: float(np.sqrt(np.sum((x - y) ** 2))),
    DistanceMetric.CORRELATION: _correlation,
    DistanceMetric.CHEBYSHEV: lambda x, y: float(np.max(np.abs(x - y))),
    DistanceMetric.BRAYCURTIS: _braycurtis,
    DistanceMetric.CANBERRA: _canberra,
    DistanceMetric.MANHATTAN: lambda x, y: float(np.sum(np.abs(x - y))),
    DistanceMetric.SQUARE_EUCLIDEAN: lambda x, y: float(np.sum((x - y) ** 2)),
}


def parse_metric(name) -> DistanceMetric:
    if isinstance(name, DistanceMetric):
        return name
    try:
        return DistanceMetric(str(name).strip().lower())
    except ValueError:
        valid = ", ".join(m.value for m in DistanceMetric)
        raise ValueError(f"unknown distance metric {name!r}; valid: {valid}") from None


def distance(metric, x, y) -> float:
    """Distance between two equal-length vectors under the named metric."""
    metric = parse_metric(metric)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape or x.shape[0] < 1:
        raise ValueError(f"expected equal-length 1-D vectors, got {x.shape} and {y.shape}")
    return float(_FORMS[metric](x, y))

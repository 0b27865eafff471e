"""Shared reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way and avoids
the package's own numeric kernels: the normal CDF comes from math.erfc,
pair statistics from explicit double loops, and maxima from exhaustive
sweeps.
"""

from __future__ import annotations

import math

import numpy as np

from youdenfit import BiomarkerPanel


def phi(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def double_loop_auc(diseased, healthy) -> float:
    """Empirical AUC with explicit half-weight ties, pair by pair."""
    total = 0.0
    for d in diseased:
        for h in healthy:
            if d > h:
                total += 1.0
            elif d == h:
                total += 0.5
    return total / (len(diseased) * len(healthy))


def double_loop_smoothed_auc(diseased, healthy, h: float) -> float:
    total = 0.0
    for d in diseased:
        for s in healthy:
            total += phi((d - s) / h)
    return total / (len(diseased) * len(healthy))


def sweep_youden(diseased, healthy, cutoff: float) -> float:
    """Definition-style Youden at one cutoff: both indicators use <=."""
    spec = sum(1 for s in healthy if s <= cutoff) / len(healthy)
    miss = sum(1 for d in diseased if d <= cutoff) / len(diseased)
    return spec - miss


def exhaustive_best_youden(diseased, healthy) -> float:
    """Maximum empirical Youden over midpoints of pooled distinct values."""
    pooled = sorted(set(list(diseased) + list(healthy)))
    candidates = [pooled[0] - 1.0, pooled[-1] + 1.0]
    candidates += [0.5 * (a + b) for a, b in zip(pooled, pooled[1:])]
    return max(sweep_youden(diseased, healthy, c) for c in candidates)


def random_panel(seed: int, n1: int = 8, n0: int = 9, p: int = 3,
                 shift: float = 0.8) -> BiomarkerPanel:
    """Small MVN panel with a mild class shift on every marker."""
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal((n1, p)) + shift
    x0 = rng.standard_normal((n0, p))
    measurements = np.vstack([x1, x0])
    labels = np.array([1] * n1 + [0] * n0)
    return BiomarkerPanel(measurements, labels)

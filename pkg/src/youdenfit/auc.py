"""Empirical AUC, its kernel-smoothed surrogate, and the surrogate's gradient.

The empirical AUC is the fraction of (diseased, healthy) pairs where the
diseased score is larger, ties counting one half.  The smoothed surrogate
replaces each pairwise indicator with a standard normal CDF of the score
difference over a bandwidth h, which makes the objective continuously
differentiable in the weights with a closed-form gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtr
from scipy.stats import rankdata

from .core import (
    BiomarkerPanel,
    CombinationWeights,
    ScoreSplit,
    ValidationError,
    project_scores,
)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Bandwidth:
    """Positive, finite kernel bandwidth in score units."""

    h: float

    def __post_init__(self) -> None:
        h = float(self.h)
        if not math.isfinite(h) or h <= 0.0:
            raise ValidationError(f"bandwidth must be positive and finite, got {self.h!r}")
        object.__setattr__(self, "h", h)


def default_bandwidth(n_diseased: int, n_healthy: int) -> Bandwidth:
    """Bandwidth (n1 * n0) ** -0.1, shrinking as the pair count grows.

    Computed from the class counts of the panel being fit, not the pooled
    total.
    """
    n1 = int(n_diseased)
    n0 = int(n_healthy)
    if n1 < 1 or n0 < 1:
        raise ValidationError("class counts must be at least 1")
    return Bandwidth(float(n1 * n0) ** -0.1)


def _bandwidth_value(h: Bandwidth | float) -> float:
    if isinstance(h, Bandwidth):
        return h.h
    val = float(h)
    if not math.isfinite(val) or val <= 0.0:
        raise ValidationError(f"bandwidth must be positive and finite, got {h!r}")
    return val


def empirical_auc(scores: ScoreSplit) -> float:
    """Probability that a diseased score exceeds a healthy one, ties worth half.

    Evaluated through pooled average ranks in O(n log n).  Every term is a
    dyadic rational (counts plus halves), so the rank form equals the
    pairwise double loop exactly, including tie weights.
    """
    d = scores.diseased_scores
    h = scores.healthy_scores
    n1 = d.shape[0]
    n0 = h.shape[0]
    ranks = rankdata(np.concatenate([d, h]), method="average")
    concordant = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    return float(concordant / (n1 * n0))


def smoothed_auc(
    panel: BiomarkerPanel, weights: CombinationWeights, h: Bandwidth | float
) -> float:
    """Mean over class pairs of Phi((diseased score - healthy score) / h).

    Phi is the standard normal CDF, evaluated through the complementary
    error function (absolute error below 1e-15).  The result lies strictly
    inside (0, 1) and converges to ``empirical_auc`` as h shrinks on data
    without exact ties.
    """
    hv = _bandwidth_value(h)
    split = project_scores(panel, weights)
    return _pair_value(split.diseased_scores, split.healthy_scores, hv)


def smoothed_auc_gradient(
    panel: BiomarkerPanel, weights: CombinationWeights, h: Bandwidth | float
) -> NDArray[np.float64]:
    """Gradient of ``smoothed_auc`` in the free components of the weights.

    The leading coefficient is held fixed, so the result has length p - 1:
    component k is the mean over pairs of
    phi(score difference / h) * (difference in biomarker k+1) / h,
    with phi the standard normal density.  Requires ``weights.values[0]``
    equal to +1 or -1, the fitted-weight convention.
    """
    hv = _bandwidth_value(h)
    if weights.p != panel.p:
        raise ValidationError(
            f"weights have {weights.p} components but panel has {panel.p} biomarkers"
        )
    if abs(weights.values[0]) != 1.0:
        raise ValidationError(
            "gradient is defined for unit-magnitude leading coefficient weights"
        )
    x1 = panel.diseased_measurements()
    x0 = panel.healthy_measurements()
    s1 = x1 @ weights.values
    s0 = x0 @ weights.values
    _, grad = _pair_value_free_grad(x1, x0, s1, s0, hv, want_value=False)
    return grad


# Shared kernels.  The optimizer evaluates these directly on pre-split
# measurement blocks to avoid rebuilding panel objects inside its loop.


def _pair_value(s1: NDArray, s0: NDArray, h: float) -> float:
    z = (s1[:, None] - s0[None, :]) / h
    return float(ndtr(z).mean())


def _pair_value_free_grad(
    x1: NDArray,
    x0: NDArray,
    s1: NDArray,
    s0: NDArray,
    h: float,
    want_value: bool = True,
) -> tuple[float, NDArray[np.float64]]:
    """Smoothed AUC and its gradient over the free (non-leading) components."""
    n1 = s1.shape[0]
    n0 = s0.shape[0]
    z = (s1[:, None] - s0[None, :]) / h
    value = float(ndtr(z).mean()) if want_value else math.nan
    with np.errstate(over="ignore"):
        dens = np.exp(-0.5 * z * z) * _INV_SQRT_2PI
    row = dens.sum(axis=1)
    col = dens.sum(axis=0)
    scale = 1.0 / (n1 * n0 * h)
    grad = (x1[:, 1:].T @ row - x0[:, 1:].T @ col) * scale
    return value, grad


def _norm_pdf(z: NDArray) -> NDArray:
    with np.errstate(over="ignore"):
        return np.exp(-0.5 * z * z) * _INV_SQRT_2PI

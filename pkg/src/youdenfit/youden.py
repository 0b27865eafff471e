"""Empirical Youden index and cutoff search over a combined score.

The empirical index at a cutoff c is the fraction of healthy scores at or
below c minus the fraction of diseased scores at or below c; a score exactly
at the cutoff classifies as negative.  As a function of c this is a
right-continuous step function, constant between consecutive distinct score
values, so evaluating it at midpoints of the pooled distinct values plus two
outside sentinels attains the global maximum exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .auc import Bandwidth
from .core import (
    BiomarkerPanel,
    CombinationWeights,
    CutoffPolicy,
    ScoreSplit,
    ValidationError,
    YoudenFit,
    project_scores,
)
from .optimize import OptimizerConfig, estimate_weights


@dataclass(frozen=True, eq=False)
class CutoffCandidates:
    """Strictly increasing cutoff grid bracketing all pooled score values."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 1 or vals.shape[0] < 2:
            raise ValidationError("candidates must be a vector of at least 2 cutoffs")
        if not np.isfinite(vals).all():
            raise ValidationError("candidates must be finite")
        if not (np.diff(vals) > 0).all():
            raise ValidationError("candidates must be strictly increasing")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def youden_at(scores: ScoreSplit, cutoff: float) -> float:
    """Empirical specificity minus miss rate at a cutoff.

    Equals mean(healthy <= cutoff) - mean(diseased <= cutoff).
    """
    c = float(cutoff)
    if not math.isfinite(c):
        raise ValidationError("cutoff must be finite")
    spec = np.count_nonzero(scores.healthy_scores <= c) / scores.n_healthy
    miss = np.count_nonzero(scores.diseased_scores <= c) / scores.n_diseased
    return float(spec - miss)


def candidate_cutoffs(scores: ScoreSplit) -> CutoffCandidates:
    """Midpoints of consecutive distinct pooled scores, plus outer sentinels.

    The empirical Youden step function is constant on the interval between
    consecutive distinct values, so this finite set realizes the maximum
    over all real cutoffs exactly.
    """
    distinct = np.unique(scores.pooled())
    lo = distinct[0] - 1.0
    if lo == distinct[0]:  # value too large in magnitude for the offset to register
        lo = np.nextafter(distinct[0], -np.inf)
    hi = distinct[-1] + 1.0
    if hi == distinct[-1]:
        hi = np.nextafter(distinct[-1], np.inf)
    mids = 0.5 * (distinct[:-1] + distinct[1:])
    # unique() also collapses midpoints that round onto each other for
    # adjacent floating-point values
    values = np.unique(np.concatenate([[lo], mids, [hi]]))
    return CutoffCandidates(values)


def _candidate_youden(scores: ScoreSplit, cands: NDArray) -> NDArray:
    sd = np.sort(scores.diseased_scores)
    sh = np.sort(scores.healthy_scores)
    m = np.searchsorted(sd, cands, side="right")
    k = np.searchsorted(sh, cands, side="right")
    return k / scores.n_healthy - m / scores.n_diseased


def estimate_cutoff(scores: ScoreSplit, policy: CutoffPolicy = CutoffPolicy.MEDIAN) -> float:
    """Cutoff maximizing the empirical Youden index.

    Among the candidate cutoffs attaining the maximum (the exact tie set),
    returns the median, minimum, or maximum per ``policy``.  The median of
    an even-sized tie set is the mean of its two central values; when that
    mean falls in a gap between non-adjacent tied candidates and would not
    itself attain the maximum, the lower central candidate is returned
    instead, so the fitted cutoff always achieves the maximal value.
    """
    if not isinstance(policy, CutoffPolicy):
        raise ValidationError(f"policy must be a CutoffPolicy, got {policy!r}")
    cands = candidate_cutoffs(scores).values
    vals = _candidate_youden(scores, cands)
    ties = cands[vals == vals.max()]
    if policy is CutoffPolicy.MIN:
        return float(ties[0])
    if policy is CutoffPolicy.MAX:
        return float(ties[-1])
    t = ties.shape[0]
    if t % 2 == 1:
        return float(ties[t // 2])
    mid = 0.5 * (ties[t // 2 - 1] + ties[t // 2])
    if youden_at(scores, mid) == vals.max():
        return float(mid)
    return float(ties[t // 2 - 1])


def _operating_point(
    weights: CombinationWeights,
    split: ScoreSplit,
    cutoff: float,
    policy: CutoffPolicy,
) -> YoudenFit:
    m = int(np.count_nonzero(split.diseased_scores <= cutoff))
    k = int(np.count_nonzero(split.healthy_scores <= cutoff))
    n1 = split.n_diseased
    n0 = split.n_healthy
    return YoudenFit(
        weights=weights,
        cutoff=float(cutoff),
        youden=k / n0 - m / n1,
        sensitivity=1.0 - m / n1,
        specificity=k / n0,
        cutoff_policy=policy,
    )


def fit_two_stage(
    panel: BiomarkerPanel,
    config: OptimizerConfig | None = None,
    policy: CutoffPolicy = CutoffPolicy.MEDIAN,
    h: Bandwidth | float | None = None,
) -> YoudenFit:
    """Fit weights by smoothed AUC ascent, then the cutoff by exact search.

    Stage one estimates combination weights on the smoothed empirical AUC;
    stage two projects the panel onto them and picks the cutoff maximizing
    the empirical Youden index over the exact candidate set.
    """
    weights = estimate_weights(panel, config, h)
    split = project_scores(panel, weights)
    cutoff = estimate_cutoff(split, policy)
    return _operating_point(weights, split, cutoff, policy)


def evaluate_fit(fit: YoudenFit, panel: BiomarkerPanel) -> YoudenFit:
    """Recompute the operating point of a frozen fit on another panel.

    No refitting: the weights and cutoff stay fixed and only sensitivity,
    specificity, and the Youden value are recounted, so the result can be
    negative on data where the classes swap sides.
    """
    split = project_scores(panel, fit.weights)
    return _operating_point(fit.weights, split, fit.cutoff, fit.cutoff_policy)

"""Score-method confidence intervals for proportions and the Youden index.

Wilson endpoints are the roots of (p - phat)^2 = z^2 p (1 - p) / n; the
Bernoulli variances at those endpoints bound the variance of the estimated
proportion.  Centering at the adjusted-count estimate and combining the
lower/upper variance bounds of the two class proportions in quadrature
yields an asymmetric interval for their difference, which is the Youden
index at a fitted cutoff (specificity minus miss rate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .core import BiomarkerPanel, ValidationError, YoudenFit, project_scores


@dataclass(frozen=True)
class IntervalEstimate:
    """A (lower, upper) interval at a given confidence level.

    Youden intervals are reported as the formulas produce them and may
    protrude beyond [-1, 1] unless clipping was requested where the
    interval was built.
    """

    lower: float
    upper: float
    level: float

    def __post_init__(self) -> None:
        lower = float(self.lower)
        upper = float(self.upper)
        level = float(self.level)
        if not (math.isfinite(lower) and math.isfinite(upper)):
            raise ValidationError("interval endpoints must be finite")
        if lower > upper:
            raise ValidationError(f"interval is inverted: ({lower}, {upper})")
        if not 0.0 < level < 1.0:
            raise ValidationError(f"confidence level must be in (0, 1), got {level}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "level", level)

    @property
    def width(self) -> float:
        return self.upper - self.lower


def normal_quantile(q: float) -> float:
    """Inverse standard normal CDF (absolute error below 1e-9)."""
    qv = float(q)
    if not 0.0 < qv < 1.0:
        raise ValidationError(f"quantile argument must be in (0, 1), got {q!r}")
    return float(ndtri(qv))


def _z_value(alpha: float) -> float:
    a = float(alpha)
    if not 0.0 < a < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha!r}")
    return normal_quantile(1.0 - a / 2.0)


def wilson_interval(successes: int, n: int, alpha: float = 0.05) -> IntervalEstimate:
    """Wilson score interval for a binomial proportion.

    l, u = [phat + z^2/2n -+ z*sqrt(phat(1-phat)/n + z^2/4n^2)] / (1 + z^2/n)

    with phat = successes/n and z the upper alpha/2 normal quantile.  The
    boundary cases successes = 0 and successes = n pin the matching endpoint
    to exactly 0 or 1, the exact root of the defining quadratic.
    """
    n_int = int(n)
    s_int = int(successes)
    if n_int < 1:
        raise ValidationError("n must be at least 1")
    if not 0 <= s_int <= n_int:
        raise ValidationError(f"successes must lie in [0, {n_int}], got {successes!r}")
    z = _z_value(alpha)
    z2 = z * z
    phat = s_int / n_int
    denom = 1.0 + z2 / n_int
    center = (phat + z2 / (2.0 * n_int)) / denom
    margin = z * math.sqrt(phat * (1.0 - phat) / n_int + z2 / (4.0 * n_int * n_int)) / denom
    lower = 0.0 if s_int == 0 else center - margin
    upper = 1.0 if s_int == n_int else center + margin
    return IntervalEstimate(lower, upper, 1.0 - float(alpha))


def variance_bounds(interval: IntervalEstimate, n: int) -> tuple[float, float]:
    """Bernoulli variances at the interval endpoints: (l(1-l)/n, u(1-u)/n).

    Not ordered; each is the variance bound at its own endpoint.
    """
    n_int = int(n)
    if n_int < 1:
        raise ValidationError("n must be at least 1")
    lo = interval.lower
    up = interval.upper
    if not (0.0 <= lo <= 1.0 and 0.0 <= up <= 1.0):
        raise ValidationError("variance bounds need endpoints in [0, 1]")
    return lo * (1.0 - lo) / n_int, up * (1.0 - up) / n_int


def ac_adjusted_proportions(
    neg_at_or_below: int,
    n0: int,
    pos_at_or_below: int,
    n1: int,
    alpha: float = 0.05,
) -> tuple[float, float]:
    """Adjusted-count proportion estimates (count + z^2/2) / (n + z^2).

    Applied to the healthy and diseased at-or-below-cutoff counts; the
    adjustment shrinks both proportions away from 0 and 1.
    """
    z = _z_value(alpha)
    z2 = z * z
    k = int(neg_at_or_below)
    m = int(pos_at_or_below)
    n0i = int(n0)
    n1i = int(n1)
    if n0i < 1 or n1i < 1:
        raise ValidationError("class sizes must be at least 1")
    if not 0 <= k <= n0i or not 0 <= m <= n1i:
        raise ValidationError("counts must lie within their class sizes")
    p0 = (k + z2 / 2.0) / (n0i + z2)
    p1 = (m + z2 / 2.0) / (n1i + z2)
    return float(p0), float(p1)


def _cutoff_counts(fit: YoudenFit, panel: BiomarkerPanel) -> tuple[int, int, int, int]:
    split = project_scores(panel, fit.weights)
    k = int(np.count_nonzero(split.healthy_scores <= fit.cutoff))
    m = int(np.count_nonzero(split.diseased_scores <= fit.cutoff))
    return k, split.n_healthy, m, split.n_diseased


def youden_interval(
    fit: YoudenFit,
    panel: BiomarkerPanel,
    alpha: float = 0.05,
    clip: bool = False,
) -> tuple[float, IntervalEstimate]:
    """Square-and-add interval for the Youden index at a fitted cutoff.

    Counts scores at or below the fitted cutoff per class on the given
    (training) panel, builds each class's Wilson interval and variance
    bounds, and returns the adjusted-count point estimate

        J_AC = p0_AC - p1_AC

    with the interval

        J_L = J_AC - z * sqrt(Var_l(p0) + Var_u(p1))
        J_U = J_AC + z * sqrt(Var_u(p0) + Var_l(p1)).

    Endpoints are reported as computed; ``clip`` truncates them to [-1, 1]
    for presentation.
    """
    k, n0, m, n1 = _cutoff_counts(fit, panel)
    z = _z_value(alpha)
    p0, p1 = ac_adjusted_proportions(k, n0, m, n1, alpha)
    var0_l, var0_u = variance_bounds(wilson_interval(k, n0, alpha), n0)
    var1_l, var1_u = variance_bounds(wilson_interval(m, n1, alpha), n1)
    point = p0 - p1
    lower = point - z * math.sqrt(var0_l + var1_u)
    upper = point + z * math.sqrt(var0_u + var1_l)
    if clip:
        lower = max(lower, -1.0)
        upper = min(upper, 1.0)
    return float(point), IntervalEstimate(lower, upper, 1.0 - float(alpha))


def youden_interval_np(
    fit: YoudenFit,
    panel: BiomarkerPanel,
    alpha: float = 0.05,
    clip: bool = False,
) -> IntervalEstimate:
    """Same construction as ``youden_interval`` but centered at the
    unadjusted empirical Youden index.

    Identical width, different center; the comparison baseline.
    """
    k, n0, m, n1 = _cutoff_counts(fit, panel)
    z = _z_value(alpha)
    var0_l, var0_u = variance_bounds(wilson_interval(k, n0, alpha), n0)
    var1_l, var1_u = variance_bounds(wilson_interval(m, n1, alpha), n1)
    point = k / n0 - m / n1
    lower = point - z * math.sqrt(var0_l + var1_u)
    upper = point + z * math.sqrt(var0_u + var1_l)
    if clip:
        lower = max(lower, -1.0)
        upper = min(upper, 1.0)
    return IntervalEstimate(lower, upper, 1.0 - float(alpha))

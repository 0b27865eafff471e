"""Linking score performance under an error-prone reference to the truth.

When labels come from a reference test with known positive and negative
predictive values, the apparent (proxy) AUC and Youden index of any score
are affine in the true ones with slope ppv + npv - 1.  Requiring that slope
to be positive makes the maps invertible: proxy indices correct back to the
true scale by division.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .auc import Bandwidth
from .core import BiomarkerPanel, CutoffPolicy, ValidationError, YoudenFit
from .optimize import OptimizerConfig
from .youden import fit_two_stage


class IllConditionedReferenceError(ValidationError):
    """The reference is too close to uninformative to invert the proxy map."""


_MIN_ATTENUATION = 1e-9


@dataclass(frozen=True)
class ReferenceQuality:
    """Positive and negative predictive values of an imperfect reference.

    Requires ppv + npv > 1: the reference must carry information about the
    true condition.
    """

    ppv: float
    npv: float

    def __post_init__(self) -> None:
        ppv = float(self.ppv)
        npv = float(self.npv)
        for name, val in (("ppv", ppv), ("npv", npv)):
            if not (math.isfinite(val) and 0.0 <= val <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {val!r}")
        if not ppv + npv > 1.0:
            raise ValidationError(
                f"ppv + npv must exceed 1, got {ppv + npv}; "
                "an uninformative reference cannot be corrected for"
            )
        object.__setattr__(self, "ppv", ppv)
        object.__setattr__(self, "npv", npv)

    @property
    def attenuation(self) -> float:
        """Slope ppv + npv - 1 of the proxy-index maps."""
        return self.ppv + self.npv - 1.0


def _checked_attenuation(quality: ReferenceQuality) -> float:
    att = quality.attenuation
    if att < _MIN_ATTENUATION:
        raise IllConditionedReferenceError(
            f"ppv + npv - 1 = {att!r} is too small to invert the proxy map"
        )
    return att


def proxy_auc(true_auc: float, quality: ReferenceQuality) -> float:
    """Apparent AUC against the reference: (ppv+npv-1)*AUC - (ppv+npv)/2 + 1.

    Strictly increasing in the true AUC, with 1/2 as a fixed point.
    """
    auc = float(true_auc)
    if not 0.0 <= auc <= 1.0:
        raise ValidationError(f"AUC must lie in [0, 1], got {true_auc!r}")
    s = quality.ppv + quality.npv
    return (s - 1.0) * auc - s / 2.0 + 1.0


def true_auc_from_proxy(proxy: float, quality: ReferenceQuality) -> float:
    """Invert ``proxy_auc``: (proxy + (ppv+npv)/2 - 1) / (ppv+npv-1)."""
    att = _checked_attenuation(quality)
    s = quality.ppv + quality.npv
    return (float(proxy) + s / 2.0 - 1.0) / att


def proxy_youden(true_youden: float, quality: ReferenceQuality) -> float:
    """Apparent Youden index against the reference: (ppv+npv-1) * J."""
    j = float(true_youden)
    if not -1.0 <= j <= 1.0:
        raise ValidationError(f"Youden index must lie in [-1, 1], got {true_youden!r}")
    return quality.attenuation * j


def true_youden_from_proxy(proxy: float, quality: ReferenceQuality) -> float:
    """Invert ``proxy_youden`` by dividing out ppv + npv - 1."""
    return float(proxy) / _checked_attenuation(quality)


def reference_quality_from_error_rates(
    sensitivity: float, specificity: float, prevalence: float
) -> ReferenceQuality:
    """Predictive values of a reference with known error rates, by Bayes' rule.

    ppv = Se*pi / (Se*pi + (1-Sp)(1-pi)) and npv analogously, where pi is
    the prevalence of the true condition.  Intended for simulations where
    the corruption mechanism is known; nothing here estimates quality from
    data.
    """
    se = float(sensitivity)
    sp = float(specificity)
    pi = float(prevalence)
    for name, val in (("sensitivity", se), ("specificity", sp)):
        if not 0.0 < val <= 1.0:
            raise ValidationError(f"{name} must lie in (0, 1], got {val!r}")
    if not 0.0 < pi < 1.0:
        raise ValidationError(f"prevalence must lie in (0, 1), got {prevalence!r}")
    ppv = se * pi / (se * pi + (1.0 - sp) * (1.0 - pi))
    npv = sp * (1.0 - pi) / (sp * (1.0 - pi) + (1.0 - se) * pi)
    return ReferenceQuality(ppv, npv)


@dataclass(frozen=True, eq=False)
class ImperfectFit:
    """Two-stage fit on reference labels, with optional corrected index.

    ``fit`` carries the weights, cutoff, and proxy-scale Youden index
    exactly as fitted against the reference labels; weights and cutoff are
    reported uncorrected since they estimate the same optimum as under a
    gold standard.  ``corrected_youden`` is the division-corrected estimate
    of the true-scale index (None without a supplied quality), reported as
    computed: ``correction_in_range`` flags when it left [-1, 1].
    """

    fit: YoudenFit
    corrected_youden: float | None
    correction_in_range: bool = True


def fit_two_stage_imperfect(
    panel: BiomarkerPanel,
    config: OptimizerConfig | None = None,
    policy: CutoffPolicy = CutoffPolicy.MEDIAN,
    quality: ReferenceQuality | None = None,
    h: Bandwidth | float | None = None,
) -> ImperfectFit:
    """Run the two-stage pipeline on reference labels and optionally correct.

    The pipeline is identical to ``fit_two_stage`` with labels read as
    reference outcomes; with a perfect reference the output coincides with
    the gold-standard fit.  When ``quality`` is given the proxy-scale Youden
    index is divided by ppv + npv - 1 to estimate the true-scale index.
    """
    fit = fit_two_stage(panel, config, policy, h)
    if quality is None:
        return ImperfectFit(fit, None, True)
    corrected = true_youden_from_proxy(fit.youden, quality)
    return ImperfectFit(fit, corrected, -1.0 <= corrected <= 1.0)

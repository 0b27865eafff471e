"""Shared domain types for linear biomarker combination fits.

A panel couples an n x p measurement matrix with binary class labels.
Weights collapse each row to a scalar score; ScoreSplit carries those scores
grouped by class, and YoudenFit records a fitted score/cutoff pair together
with its achieved operating point.  All types are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class DegenerateNormalizationError(ValidationError):
    """A weight vector cannot be scaled to a unit leading coefficient."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class LabelKind(Enum):
    """Provenance of a panel's labels: error-free or from an imperfect reference.

    Interpretation metadata only; no numeric routine branches on it.
    """

    GOLD_STANDARD = "gold_standard"
    IMPERFECT_REFERENCE = "imperfect_reference"


class CutoffPolicy(Enum):
    """Rule for picking one cutoff when several attain the same Youden value."""

    MEDIAN = "median"
    MIN = "min"
    MAX = "max"


def _finite_float_array(values: object, name: str, ndim: int) -> NDArray[np.float64]:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name} must contain only finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BiomarkerPanel:
    """An n x p measurement matrix with one binary label per row.

    Labels must be integer 0 (healthy / reference negative) or 1 (diseased /
    reference positive); any other value or dtype is rejected rather than
    coerced.  Both classes must be present and row order is preserved, so
    class extraction is reproducible.

    Parameters
    ----------
    measurements : array_like, shape (n, p)
        Biomarker values, finite, in arbitrary units.
    labels : array_like of int, shape (n,)
        Class label per row, 0 or 1.
    label_kind : LabelKind
        Whether labels come from a gold standard or an imperfect reference.
        Metadata only.
    """

    measurements: NDArray[np.float64]
    labels: NDArray[np.int64]
    label_kind: LabelKind = LabelKind.GOLD_STANDARD

    def __post_init__(self) -> None:
        meas = _finite_float_array(self.measurements, "measurements", ndim=2)
        n, p = meas.shape
        if n < 2:
            raise ValidationError(f"panel needs at least 2 rows, got {n}")
        if p < 1:
            raise ValidationError("panel needs at least 1 biomarker column")

        labels = np.array(self.labels, copy=True)
        if labels.ndim != 1 or labels.shape[0] != n:
            raise ValidationError(
                f"labels must be a length-{n} vector, got shape {labels.shape}"
            )
        if labels.dtype.kind not in "iu":
            raise ValidationError(
                f"labels must have an integer dtype, got {labels.dtype}; "
                "values are not coerced"
            )
        if not np.isin(labels, (0, 1)).all():
            bad = labels[~np.isin(labels, (0, 1))][0]
            raise ValidationError(f"labels must be 0 or 1, found {bad}")
        labels = labels.astype(np.int64)
        labels.setflags(write=False)

        n1 = int(np.count_nonzero(labels))
        if n1 == 0 or n1 == n:
            raise ValidationError("both label classes must be present")

        if not isinstance(self.label_kind, LabelKind):
            raise ValidationError(f"label_kind must be a LabelKind, got {self.label_kind!r}")

        object.__setattr__(self, "measurements", meas)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.measurements.shape[0])

    @property
    def p(self) -> int:
        return int(self.measurements.shape[1])

    @property
    def n_diseased(self) -> int:
        return int(np.count_nonzero(self.labels))

    @property
    def n_healthy(self) -> int:
        return self.n - self.n_diseased

    def diseased_measurements(self) -> NDArray[np.float64]:
        """Rows with label 1, in input order."""
        return self.measurements[self.labels == 1]

    def healthy_measurements(self) -> NDArray[np.float64]:
        """Rows with label 0, in input order."""
        return self.measurements[self.labels == 0]


@dataclass(frozen=True, eq=False)
class CombinationWeights:
    """Linear combination coefficients, one per biomarker.

    Fitted weights use the unit-magnitude leading coefficient convention:
    values[0] is +1, or -1 when the data favored a reversed leading marker
    (recorded by ``orientation_flipped``).  Scores are always computed from
    ``values`` as given; no sign juggling happens downstream.
    """

    values: NDArray[np.float64]
    orientation_flipped: bool = False

    def __post_init__(self) -> None:
        vals = _finite_float_array(self.values, "weights", ndim=1)
        if vals.shape[0] < 1:
            raise ValidationError("weights need at least one component")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "orientation_flipped", bool(self.orientation_flipped))

    @property
    def p(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class ScoreSplit:
    """Combined scores grouped by class, input row order preserved."""

    diseased_scores: NDArray[np.float64]
    healthy_scores: NDArray[np.float64]

    def __post_init__(self) -> None:
        d = _finite_float_array(self.diseased_scores, "diseased_scores", ndim=1)
        h = _finite_float_array(self.healthy_scores, "healthy_scores", ndim=1)
        if d.shape[0] < 1 or h.shape[0] < 1:
            raise ValidationError("both score groups must be non-empty")
        object.__setattr__(self, "diseased_scores", d)
        object.__setattr__(self, "healthy_scores", h)

    @property
    def n_diseased(self) -> int:
        return int(self.diseased_scores.shape[0])

    @property
    def n_healthy(self) -> int:
        return int(self.healthy_scores.shape[0])

    def pooled(self) -> NDArray[np.float64]:
        """All scores, diseased first."""
        return np.concatenate([self.diseased_scores, self.healthy_scores])


@dataclass(frozen=True, eq=False)
class YoudenFit:
    """A fitted (weights, cutoff) pair with its achieved operating point.

    Scores at or below ``cutoff`` classify as negative.  ``youden`` equals
    ``sensitivity + specificity - 1`` up to float rounding; it may be
    negative when a fit is re-evaluated on data where the classes swap sides.
    """

    weights: CombinationWeights
    cutoff: float
    youden: float
    sensitivity: float
    specificity: float
    cutoff_policy: CutoffPolicy

    def __post_init__(self) -> None:
        if not isinstance(self.weights, CombinationWeights):
            raise ValidationError("weights must be CombinationWeights")
        if not isinstance(self.cutoff_policy, CutoffPolicy):
            raise ValidationError("cutoff_policy must be a CutoffPolicy")
        for name in ("cutoff", "youden", "sensitivity", "specificity"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if not 0.0 <= self.sensitivity <= 1.0:
            raise ValidationError(f"sensitivity outside [0, 1]: {self.sensitivity}")
        if not 0.0 <= self.specificity <= 1.0:
            raise ValidationError(f"specificity outside [0, 1]: {self.specificity}")
        gap = abs(self.youden - (self.sensitivity + self.specificity - 1.0))
        if gap > 1e-12:
            raise ValidationError(
                "youden must equal sensitivity + specificity - 1, "
                f"off by {gap:.3e}"
            )


def project_scores(panel: BiomarkerPanel, weights: CombinationWeights) -> ScoreSplit:
    """Collapse a panel to scalar scores and split them by class.

    Returns the dot product of each row with ``weights.values``, grouped by
    label with input row order preserved inside each group.

    Raises
    ------
    ValidationError
        If the weight length does not match the panel's column count.
    NumericError
        If any combined score overflows to a non-finite value.
    """
    if weights.p != panel.p:
        raise ValidationError(
            f"weights have {weights.p} components but panel has {panel.p} biomarkers"
        )
    scores = panel.measurements @ weights.values
    if not np.isfinite(scores).all():
        raise NumericError("combined scores overflowed to non-finite values")
    mask = panel.labels == 1
    return ScoreSplit(scores[mask], scores[~mask])


def normalize_weights(raw: object) -> CombinationWeights:
    """Scale a coefficient vector so its first component is exactly 1.

    A negative leading coefficient divides through, flipping every sign and
    reversing the orientation of the combined score; the flip is recorded in
    the result's ``orientation_flipped`` flag.

    Raises
    ------
    DegenerateNormalizationError
        If ``abs(raw[0]) < 1e-10``: such a vector has no representation in
        the leading-one convention, and silently permuting biomarkers would
        change the reported model.
    """
    arr = _finite_float_array(raw, "weights", ndim=1)
    if arr.shape[0] < 1:
        raise ValidationError("weights need at least one component")
    lead = float(arr[0])
    if abs(lead) < 1e-10:
        raise DegenerateNormalizationError(
            f"leading coefficient {lead!r} is too close to zero to normalize"
        )
    return CombinationWeights(arr / lead, orientation_flipped=lead < 0)

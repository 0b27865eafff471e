"""Seeded synthetic panel generators for repeatable benchmarking.

Four designs: multivariate normal classes with identity covariance
calibrated to a target Youden index, equal- and unequal-covariance normal
classes with exchangeable correlation, and binary markers whose labels
follow a logistic model.  Labels can optionally be passed through an
error-prone reference with known sensitivity and specificity.

All randomness flows through numpy's PCG64 generator seeded by a
SeedSequence, with a documented draw order (diseased block, healthy block,
then split permutations, then corruption), so equal seeds give bit-identical
panels across runs and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit, ndtr, ndtri

from .core import (
    BiomarkerPanel,
    CombinationWeights,
    LabelKind,
    ValidationError,
)

#: Graded mean shifts for the correlated normal designs.
DEFAULT_GRADED_MEANS = (0.4, 0.7, 1.0, 1.3, 1.6)

#: Marker success rates for the binary design.
DEFAULT_BINARY_RATES = (0.7, 0.6, 0.5, 0.4, 0.3)

# Coefficient sets spanning negative-to-positive effects, one per supported
# prevalence; the intercept calibration lands near zero for each at its own
# prevalence.
_BINARY_COEFFICIENTS = {
    0.25: (-2.40, -1.30, -0.20, 0.90, 2.00),
    0.50: (-2.25, -0.80, 0.65, 2.10, 3.55),
    0.75: (-1.00, 0.10, 1.20, 2.30, 3.40),
}


@dataclass(frozen=True)
class MvnIdentityDesign:
    """Standard normal classes, diseased mean shifted along the equiangular
    direction so the best linear score attains ``target_youden``."""

    target_youden: float
    dim: int = 5

    def __post_init__(self) -> None:
        t = float(self.target_youden)
        if not 0.0 < t < 1.0:
            raise ValidationError(f"target youden must be in (0, 1), got {self.target_youden!r}")
        if int(self.dim) < 1:
            raise ValidationError("dim must be at least 1")
        object.__setattr__(self, "target_youden", t)
        object.__setattr__(self, "dim", int(self.dim))


def _check_exchangeable(corr: float, p: int, name: str) -> float:
    c = float(corr)
    lo = -1.0 / (p - 1) if p > 1 else -1.0
    if not lo < c < 1.0:
        raise ValidationError(
            f"{name} = {corr!r} gives a non-positive-definite covariance for p = {p}"
        )
    return c


@dataclass(frozen=True, eq=False)
class MvnEqualCovDesign:
    """Normal classes sharing an exchangeable-correlation covariance."""

    mu_diseased: tuple[float, ...]
    correlation: float

    def __post_init__(self) -> None:
        mu = tuple(float(v) for v in np.atleast_1d(np.asarray(self.mu_diseased, dtype=float)))
        if len(mu) < 1 or not all(math.isfinite(v) for v in mu):
            raise ValidationError("mu_diseased must be a finite vector")
        corr = _check_exchangeable(self.correlation, len(mu), "correlation")
        object.__setattr__(self, "mu_diseased", mu)
        object.__setattr__(self, "correlation", corr)

    @property
    def dim(self) -> int:
        return len(self.mu_diseased)


@dataclass(frozen=True, eq=False)
class MvnUnequalCovDesign:
    """Normal classes with different exchangeable correlations per class."""

    mu_diseased: tuple[float, ...]
    correlation_diseased: float
    correlation_healthy: float

    def __post_init__(self) -> None:
        mu = tuple(float(v) for v in np.atleast_1d(np.asarray(self.mu_diseased, dtype=float)))
        if len(mu) < 1 or not all(math.isfinite(v) for v in mu):
            raise ValidationError("mu_diseased must be a finite vector")
        c1 = _check_exchangeable(self.correlation_diseased, len(mu), "correlation_diseased")
        c0 = _check_exchangeable(self.correlation_healthy, len(mu), "correlation_healthy")
        object.__setattr__(self, "mu_diseased", mu)
        object.__setattr__(self, "correlation_diseased", c1)
        object.__setattr__(self, "correlation_healthy", c0)

    @property
    def dim(self) -> int:
        return len(self.mu_diseased)


@dataclass(frozen=True, eq=False)
class BinaryLogisticDesign:
    """Independent binary markers; disease drawn from a logistic risk model.

    Class sizes are random in this design: each subject's label is Bernoulli
    in the logistic probability of its marker pattern.  With ``intercept``
    None the intercept is calibrated by bisection so the population
    prevalence matches the scenario's.
    """

    marker_rates: tuple[float, ...] = DEFAULT_BINARY_RATES
    coefficients: tuple[float, ...] = _BINARY_COEFFICIENTS[0.50]
    intercept: float | None = None

    def __post_init__(self) -> None:
        rates = tuple(float(v) for v in np.atleast_1d(np.asarray(self.marker_rates, dtype=float)))
        coefs = tuple(float(v) for v in np.atleast_1d(np.asarray(self.coefficients, dtype=float)))
        if len(rates) < 1 or not all(0.0 < r < 1.0 for r in rates):
            raise ValidationError("marker_rates must lie strictly in (0, 1)")
        if len(coefs) != len(rates):
            raise ValidationError(
                f"coefficients ({len(coefs)}) and marker_rates ({len(rates)}) lengths differ"
            )
        if not all(math.isfinite(c) for c in coefs):
            raise ValidationError("coefficients must be finite")
        if len(rates) > 20:
            raise ValidationError("binary designs support at most 20 markers")
        if self.intercept is not None and not math.isfinite(float(self.intercept)):
            raise ValidationError("intercept must be finite")
        object.__setattr__(self, "marker_rates", rates)
        object.__setattr__(self, "coefficients", coefs)
        object.__setattr__(
            self, "intercept", None if self.intercept is None else float(self.intercept)
        )

    @property
    def dim(self) -> int:
        return len(self.marker_rates)


Design = MvnIdentityDesign | MvnEqualCovDesign | MvnUnequalCovDesign | BinaryLogisticDesign


def default_binary_design(prevalence: float) -> BinaryLogisticDesign:
    """The stock binary design for a supported prevalence (0.25, 0.5, 0.75)."""
    for key, coefs in _BINARY_COEFFICIENTS.items():
        if abs(float(prevalence) - key) < 1e-9:
            return BinaryLogisticDesign(DEFAULT_BINARY_RATES, coefs, None)
    raise ValidationError(
        f"no stock coefficient set for prevalence {prevalence!r}; "
        "construct a BinaryLogisticDesign with explicit coefficients"
    )


@dataclass(frozen=True)
class ScenarioSpec:
    """One sampling scenario: design, total size, prevalence, seed.

    ``reference`` is an optional (sensitivity, specificity) pair; when set,
    generated labels are corrupted through that reference and panels carry
    the imperfect-reference label kind.  ``train_fraction`` splits the
    sample per class into train and test panels.
    """

    design: Design
    n: int
    prevalence: float
    seed: int
    reference: tuple[float, float] | None = None
    train_fraction: float | None = None

    def __post_init__(self) -> None:
        if not isinstance(
            self.design,
            (MvnIdentityDesign, MvnEqualCovDesign, MvnUnequalCovDesign, BinaryLogisticDesign),
        ):
            raise ValidationError(f"unsupported design: {self.design!r}")
        n = int(self.n)
        pi = float(self.prevalence)
        if not 0.0 < pi < 1.0:
            raise ValidationError(f"prevalence must be in (0, 1), got {self.prevalence!r}")
        n1 = round(n * pi)
        if n1 < 2 or n - n1 < 2:
            raise ValidationError(
                f"n = {n} at prevalence {pi} rounds to class sizes {n1} and {n - n1}; "
                "each must be at least 2"
            )
        seed = int(self.seed)
        if seed < 0 or seed >= 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        if self.reference is not None:
            se, sp = (float(v) for v in self.reference)
            if not (0.5 < se <= 1.0 and 0.5 < sp <= 1.0):
                raise ValidationError(
                    f"reference sensitivity and specificity must lie in (0.5, 1], got {self.reference!r}"
                )
            object.__setattr__(self, "reference", (se, sp))
        if self.train_fraction is not None:
            f = float(self.train_fraction)
            if not 0.0 < f < 1.0:
                raise ValidationError(f"train_fraction must be in (0, 1), got {self.train_fraction!r}")
            object.__setattr__(self, "train_fraction", f)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "prevalence", pi)
        object.__setattr__(self, "seed", seed)


def mu_for_target_youden(j0: float, p: int) -> NDArray[np.float64]:
    """Diseased mean achieving Youden index j0 under identity covariance.

    Returns delta * (1, ..., 1)/sqrt(p) with delta = 2 * quantile((j0+1)/2):
    the optimal score along this mean has normal class distributions one
    delta apart, giving population Youden 2 * Phi(delta / 2) - 1 = j0.
    """
    j = float(j0)
    if not 0.0 < j < 1.0:
        raise ValidationError(f"target youden must be in (0, 1), got {j0!r}")
    if int(p) < 1:
        raise ValidationError("p must be at least 1")
    delta = 2.0 * float(ndtri((j + 1.0) / 2.0))
    return np.full(int(p), delta / math.sqrt(int(p)))


def _exchangeable_cov(p: int, corr: float) -> NDArray[np.float64]:
    return (1.0 - corr) * np.eye(p) + corr * np.ones((p, p))


def _cholesky(cov: NDArray) -> NDArray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("covariance is not positive definite") from exc


def _class_params(design: Design):
    """Mean and Cholesky factor per class for the normal designs."""
    if isinstance(design, MvnIdentityDesign):
        mu1 = mu_for_target_youden(design.target_youden, design.dim)
        chol = np.eye(design.dim)
        return mu1, chol, np.zeros(design.dim), chol
    if isinstance(design, MvnEqualCovDesign):
        mu1 = np.asarray(design.mu_diseased)
        chol = _cholesky(_exchangeable_cov(design.dim, design.correlation))
        return mu1, chol, np.zeros(design.dim), chol
    if isinstance(design, MvnUnequalCovDesign):
        mu1 = np.asarray(design.mu_diseased)
        chol1 = _cholesky(_exchangeable_cov(design.dim, design.correlation_diseased))
        chol0 = _cholesky(_exchangeable_cov(design.dim, design.correlation_healthy))
        return mu1, chol1, np.zeros(design.dim), chol0
    raise ValidationError(f"not a normal design: {design!r}")


def calibrated_intercept(design: BinaryLogisticDesign, prevalence: float) -> float:
    """Intercept making the population prevalence of the logistic model exact.

    The expectation runs over the full enumeration of marker patterns, so
    the bisection target is exact, not Monte Carlo.
    """
    pi = float(prevalence)
    if not 0.0 < pi < 1.0:
        raise ValidationError(f"prevalence must be in (0, 1), got {prevalence!r}")
    if design.intercept is not None:
        return design.intercept
    p = design.dim
    patterns = np.array(
        np.meshgrid(*[[0.0, 1.0]] * p, indexing="ij")
    ).reshape(p, -1).T
    rates = np.asarray(design.marker_rates)
    pattern_probs = np.prod(np.where(patterns == 1.0, rates, 1.0 - rates), axis=1)
    risk = patterns @ np.asarray(design.coefficients)

    def prevalence_at(b: float) -> float:
        return float(pattern_probs @ expit(risk + b))

    lo, hi = -60.0, 60.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if prevalence_at(mid) < pi:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def corrupt_reference(labels: object, se: float, sp: float, seed: object) -> NDArray[np.int64]:
    """Pass labels through an error-prone reference.

    Each true 1 stays 1 with probability ``se``; each true 0 stays 0 with
    probability ``sp``; flips are independent across subjects.  ``seed`` is
    an integer or a numpy Generator.
    """
    se_v = float(se)
    sp_v = float(sp)
    if not (0.5 < se_v <= 1.0 and 0.5 < sp_v <= 1.0):
        raise ValidationError(
            f"sensitivity and specificity must lie in (0.5, 1], got ({se!r}, {sp!r})"
        )
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.dtype.kind not in "iu" or not np.isin(arr, (0, 1)).all():
        raise ValidationError("labels must be a vector of 0/1 integers")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(
        np.random.SeedSequence(int(seed))
    )
    u = rng.random(arr.shape[0])
    return np.where(arr == 1, u < se_v, u >= sp_v).astype(np.int64)


def _split_indices(labels: NDArray, fraction: float, rng: np.random.Generator):
    """Stratified index split; original row order kept inside each part."""
    train_parts = []
    test_parts = []
    for cls in (1, 0):  # diseased permutation drawn first
        idx = np.flatnonzero(labels == cls)
        perm = rng.permutation(idx.shape[0])
        k = idx.shape[0]
        take = min(max(int(round(fraction * k)), 1), k - 1) if k > 1 else k
        chosen = idx[perm[:take]]
        rest = idx[perm[take:]]
        train_parts.append(chosen)
        test_parts.append(rest)
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return train, test


def generate(spec: ScenarioSpec) -> tuple[BiomarkerPanel, BiomarkerPanel | None]:
    """Draw one sample from a scenario; returns (train, test or None).

    Normal designs draw round(prevalence * n) diseased rows and the
    remainder healthy (diseased block first); the binary design draws all
    marker rows and then labels from the logistic model, so its class sizes
    are random.  The optional split is stratified by the generated labels,
    and optional reference corruption is applied to the split panels (train
    first), marking them with the imperfect-reference label kind.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    design = spec.design
    if isinstance(design, BinaryLogisticDesign):
        rates = np.asarray(design.marker_rates)
        x = (rng.random((spec.n, design.dim)) < rates).astype(np.float64)
        intercept = calibrated_intercept(design, spec.prevalence)
        risk = expit(x @ np.asarray(design.coefficients) + intercept)
        labels = (rng.random(spec.n) < risk).astype(np.int64)
    else:
        mu1, chol1, mu0, chol0 = _class_params(design)
        n1 = round(spec.n * spec.prevalence)
        n0 = spec.n - n1
        x1 = mu1 + rng.standard_normal((n1, design.dim)) @ chol1.T
        x0 = mu0 + rng.standard_normal((n0, design.dim)) @ chol0.T
        x = np.vstack([x1, x0])
        labels = np.concatenate([np.ones(n1, dtype=np.int64), np.zeros(n0, dtype=np.int64)])

    kind = LabelKind.GOLD_STANDARD if spec.reference is None else LabelKind.IMPERFECT_REFERENCE

    if spec.train_fraction is None:
        if spec.reference is not None:
            labels = corrupt_reference(labels, *spec.reference, rng)
        return BiomarkerPanel(x, labels, kind), None

    train_idx, test_idx = _split_indices(labels, spec.train_fraction, rng)
    train_labels = labels[train_idx]
    test_labels = labels[test_idx]
    if spec.reference is not None:
        train_labels = corrupt_reference(train_labels, *spec.reference, rng)
        test_labels = corrupt_reference(test_labels, *spec.reference, rng)
    train = BiomarkerPanel(x[train_idx], train_labels, kind)
    test = BiomarkerPanel(x[test_idx], test_labels, kind)
    return train, test


@dataclass(frozen=True, eq=False)
class PopulationTruth:
    """Analytic optimum of a design: oriented weights, cutoff, Youden index."""

    weights: CombinationWeights
    cutoff: float
    youden: float


def population_truth(design: Design) -> PopulationTruth | None:
    """Analytic population optimum where one exists.

    Known in closed form for the identity and equal-covariance normal
    designs (optimal direction proportional to the covariance-solved mean
    difference); None for the others.  Weights follow the unit-magnitude
    leading coefficient convention of fitted weights.
    """
    if isinstance(design, MvnIdentityDesign):
        mu1 = mu_for_target_youden(design.target_youden, design.dim)
        raw = mu1
        cov = np.eye(design.dim)
        separation_sq = float(mu1 @ mu1)
    elif isinstance(design, MvnEqualCovDesign):
        mu1 = np.asarray(design.mu_diseased)
        cov = _exchangeable_cov(design.dim, design.correlation)
        raw = np.linalg.solve(cov, mu1)
        separation_sq = float(mu1 @ raw)
    else:
        return None
    lead = raw[0]
    if abs(lead) < 1e-10:
        return None  # optimum has no representation with a leading weight
    w = raw / abs(lead)
    weights = CombinationWeights(w, orientation_flipped=lead < 0)
    cutoff = float(w @ mu1 / 2.0)  # healthy mean is zero and variances match
    youden = 2.0 * float(ndtr(math.sqrt(separation_sq) / 2.0)) - 1.0
    return PopulationTruth(weights, cutoff, youden)

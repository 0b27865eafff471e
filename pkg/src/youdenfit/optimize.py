"""Weight estimation by smoothed-objective ascent.

Stage one maximizes the smoothed empirical AUC over the free weight
components; the simultaneous baseline maximizes the smoothed Youden
objective jointly over weights and cutoff.  Both use a BFGS-style
quasi-Newton ascent with Armijo backtracking and deterministic multi-start.

Starts alternate the sign of the leading coefficient.  The smoothed AUC of a
negated weight vector is one minus the original, so a search fixed to a
positive leading coefficient can never represent optima whose leading
coefficient is negative; alternating orientation keeps the search exhaustive
while preserving the unit-magnitude leading coefficient convention.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtr

from .auc import Bandwidth, _bandwidth_value, _norm_pdf, _pair_value, default_bandwidth
from .core import (
    BiomarkerPanel,
    CombinationWeights,
    NumericError,
    ValidationError,
)


class ConvergenceWarning(RuntimeWarning):
    """No start improved on its initial point within tolerance."""


class LineSearch(Enum):
    BACKTRACKING = "backtracking"


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for the multi-start quasi-Newton ascent."""

    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    n_starts: int = 10
    start_spread: float = 1.0
    seed: int = 0
    line_search: LineSearch = LineSearch.BACKTRACKING

    def __post_init__(self) -> None:
        if int(self.max_iterations) < 1:
            raise ValidationError("max_iterations must be at least 1")
        if int(self.n_starts) < 1:
            raise ValidationError("n_starts must be at least 1")
        if not (float(self.gradient_tolerance) > 0.0):
            raise ValidationError("gradient_tolerance must be positive")
        if not (float(self.start_spread) > 0.0):
            raise ValidationError("start_spread must be positive")
        if int(self.seed) < 0 or int(self.seed) >= 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        if not isinstance(self.line_search, LineSearch):
            raise ValidationError("line_search must be a LineSearch value")
        object.__setattr__(self, "max_iterations", int(self.max_iterations))
        object.__setattr__(self, "n_starts", int(self.n_starts))
        object.__setattr__(self, "gradient_tolerance", float(self.gradient_tolerance))
        object.__setattr__(self, "start_spread", float(self.start_spread))
        object.__setattr__(self, "seed", int(self.seed))


# ============================================================
# quasi-Newton ascent with Armijo backtracking
# ============================================================

_ARMIJO_C1 = 1e-4
_SHRINK = 0.5
_MAX_BACKTRACKS = 55
_ITERATE_LIMIT = 1e3   # iterate inf-norm this large means a saturated ray
_FLAT_GAIN = 1e-9      # accepted-step gain counted as real progress
_FLAT_PATIENCE = 10    # consecutive flat steps tolerated before giving up


def _bfgs_max(value_fn, grad_fn, x0, cfg: OptimizerConfig):
    """Maximize value_fn from x0.  Returns (x, value, stalled)."""
    x = np.array(x0, dtype=np.float64)
    f = value_fn(x)
    g = grad_fn(x)
    if not math.isfinite(f) or not np.isfinite(g).all():
        raise NumericError("objective is non-finite at a start point")
    dim = x.size
    ident = np.eye(dim)
    h_inv = ident.copy()
    took_step = False
    flat_steps = 0
    for _ in range(cfg.max_iterations):
        if np.max(np.abs(g), initial=0.0) < cfg.gradient_tolerance:
            break
        d = h_inv @ g
        slope = float(d @ g)
        if slope <= 0.0 or not math.isfinite(slope):
            # curvature model went bad; restart from steepest ascent
            h_inv = ident.copy()
            d = g.copy()
            slope = float(g @ g)
            if slope <= 0.0:
                break
        step = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            x_new = x + step * d
            f_new = value_fn(x_new)
            if math.isfinite(f_new) and f_new >= f + _ARMIJO_C1 * step * slope:
                accepted = True
                break
            step *= _SHRINK
        if not accepted:
            break
        g_new = grad_fn(x_new)
        if not np.isfinite(g_new).all():
            raise NumericError("objective gradient is non-finite")
        s = x_new - x
        y_desc = g - g_new  # gradient change of the negated (minimized) objective
        gain = float(f_new) - f
        x, f, g = x_new, float(f_new), g_new
        took_step = True
        # The smoothed objective has no interior maximum along directions
        # where the leading marker is uninformative: iterates can drift up a
        # saturated ray forever, gaining nothing.  Cut those runs short once
        # the iterate is deep in saturation or the value has flattened out.
        if np.max(np.abs(x), initial=0.0) > _ITERATE_LIMIT:
            break
        flat_steps = flat_steps + 1 if gain < _FLAT_GAIN else 0
        if flat_steps >= _FLAT_PATIENCE:
            break
        sy = float(s @ y_desc)
        if sy > 1e-12 * (np.linalg.norm(s) * np.linalg.norm(y_desc) + 1e-300):
            rho = 1.0 / sy
            v = ident - rho * np.outer(s, y_desc)
            h_inv = v @ h_inv @ v.T + rho * np.outer(s, s)
    stalled = (not took_step) and (np.max(np.abs(g), initial=0.0) >= cfg.gradient_tolerance)
    return x, f, stalled


# ============================================================
# objective adapters
# ============================================================


def _auc_objective(x1, x0, sigma: float, h: float):
    base1 = sigma * x1[:, 0]
    base0 = sigma * x0[:, 0]
    free1 = x1[:, 1:]
    free0 = x0[:, 1:]
    n1 = x1.shape[0]
    n0 = x0.shape[0]
    scale = 1.0 / (n1 * n0 * h)

    def value(theta):
        s1 = base1 + free1 @ theta
        s0 = base0 + free0 @ theta
        return _pair_value(s1, s0, h)

    def grad(theta):
        s1 = base1 + free1 @ theta
        s0 = base0 + free0 @ theta
        z = (s1[:, None] - s0[None, :]) / h
        dens = _norm_pdf(z)
        return (free1.T @ dens.sum(axis=1) - free0.T @ dens.sum(axis=0)) * scale

    return value, grad


def _sim_objective(x1, x0, sigma: float, h: float):
    base1 = sigma * x1[:, 0]
    base0 = sigma * x0[:, 0]
    free1 = x1[:, 1:]
    free0 = x0[:, 1:]
    n1 = x1.shape[0]
    n0 = x0.shape[0]

    def split(xvec):
        theta = xvec[:-1]
        c = xvec[-1]
        return base1 + free1 @ theta, base0 + free0 @ theta, c

    def value(xvec):
        s1, s0, c = split(xvec)
        return float(ndtr((c - s0) / h).mean() - ndtr((c - s1) / h).mean())

    def grad(xvec):
        s1, s0, c = split(xvec)
        f1 = _norm_pdf((c - s1) / h)
        f0 = _norm_pdf((c - s0) / h)
        g_theta = (free1.T @ f1) / (n1 * h) - (free0.T @ f0) / (n0 * h)
        g_c = f0.mean() / h - f1.mean() / h
        return np.concatenate([g_theta, [g_c]])

    return value, grad


# ============================================================
# multi-start drivers
# ============================================================


# Largest start magnitude per free component.  A noisy near-zero leading
# mean difference explodes the ratio below, and a start that large sits on
# the saturated shoulder of the smoothed objective where gradients vanish
# and no ascent escapes.  The cap only moves the start; iterates may grow
# past it, since growth happens through the live-gradient region.
_INIT_CAP = 5.0


def _moment_init(x1, x0) -> NDArray[np.float64]:
    # pooled-covariance discriminant direction, normalized by its leading
    # component; zeros when that component is too small to divide by,
    # norm-capped otherwise
    diff = x1.mean(axis=0) - x0.mean(axis=0)
    p = diff.shape[0]
    n1, n0 = x1.shape[0], x0.shape[0]
    direction = diff
    if n1 >= 2 and n0 >= 2 and n1 + n0 > p + 2:
        pooled = (
            (n1 - 1) * np.cov(x1, rowvar=False)
            + (n0 - 1) * np.cov(x0, rowvar=False)
        ) / (n1 + n0 - 2)
        pooled = np.atleast_2d(pooled)
        ridge = 1e-6 * max(float(np.trace(pooled)) / p, 1.0)
        try:
            solved = np.linalg.solve(pooled + ridge * np.eye(p), diff)
        except np.linalg.LinAlgError:
            solved = diff
        if np.isfinite(solved).all():
            direction = solved
    lead = direction[0]
    p_free = p - 1
    if not np.isfinite(lead) or abs(lead) < 1e-12:
        return np.zeros(p_free)
    theta = direction[1:] / lead
    if not np.isfinite(theta).all():
        return np.zeros(p_free)
    largest = np.max(np.abs(theta), initial=0.0)
    if largest > _INIT_CAP:
        theta = theta * (_INIT_CAP / largest)
    return theta


def _start_thetas(theta0: NDArray, cfg: OptimizerConfig):
    """Per-index start points: the moment guess for the first pair of
    orientations, then seeded normal draws centered alternately on the
    moment guess and on the origin, so one misleading guess cannot pull
    every start into the same neighborhood."""
    starts = []
    for k in range(cfg.n_starts):
        sigma = 1.0 if k % 2 == 0 else -1.0
        if k < 2:
            theta = theta0.copy()
        else:
            center = theta0 if (k // 2) % 2 == 0 else np.zeros_like(theta0)
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=cfg.seed, spawn_key=(k,))
            )
            theta = center + cfg.start_spread * rng.standard_normal(theta0.size)
        starts.append((sigma, theta))
    return starts


def _warn_if_all_stalled(stall_flags) -> None:
    if stall_flags and all(stall_flags):
        warnings.warn(
            "no start improved on its initial point; returning the best start",
            ConvergenceWarning,
            stacklevel=3,
        )


def estimate_weights(
    panel: BiomarkerPanel,
    config: OptimizerConfig | None = None,
    h: Bandwidth | float | None = None,
) -> CombinationWeights:
    """Estimate combination weights by maximizing the smoothed empirical AUC.

    Runs ``config.n_starts`` quasi-Newton ascents over the free components
    and returns the best result under the unit-magnitude leading coefficient
    convention.  With one biomarker there is nothing to optimize and the
    weights are (1,).

    The achieved smoothed AUC is at least the value at every start point.
    Identical inputs give identical outputs; the per-start seed stream is
    fixed, so raising ``n_starts`` never returns a worse optimum.
    """
    cfg = config if config is not None else OptimizerConfig()
    if panel.p == 1:
        return CombinationWeights(np.ones(1))
    x1 = panel.diseased_measurements()
    x0 = panel.healthy_measurements()
    hv = _bandwidth_value(h) if h is not None else default_bandwidth(
        panel.n_diseased, panel.n_healthy
    ).h

    best = None  # (value, start index, sigma, theta)
    stall_flags = []
    for k, (sigma, theta_k) in enumerate(_start_thetas(_moment_init(x1, x0), cfg)):
        value_fn, grad_fn = _auc_objective(x1, x0, sigma, hv)
        theta_opt, f_opt, stalled = _bfgs_max(value_fn, grad_fn, theta_k, cfg)
        stall_flags.append(stalled)
        if best is None or f_opt > best[0]:
            best = (f_opt, k, sigma, theta_opt)
    _warn_if_all_stalled(stall_flags)
    _, _, sigma, theta = best
    values = np.concatenate([[sigma], theta])
    return CombinationWeights(values, orientation_flipped=sigma < 0)


def estimate_weights_sim(
    panel: BiomarkerPanel,
    config: OptimizerConfig | None = None,
    h: Bandwidth | float | None = None,
) -> tuple[CombinationWeights, float]:
    """Jointly maximize the smoothed Youden objective over weights and cutoff.

    The objective is the mean smoothed specificity minus the mean smoothed
    miss rate; weights and cutoff move together in one ascent.  This is the
    simultaneous baseline: returns (weights, cutoff).
    """
    cfg = config if config is not None else OptimizerConfig()
    x1 = panel.diseased_measurements()
    x0 = panel.healthy_measurements()
    hv = _bandwidth_value(h) if h is not None else default_bandwidth(
        panel.n_diseased, panel.n_healthy
    ).h

    theta0 = _moment_init(x1, x0) if panel.p > 1 else np.zeros(0)
    best = None  # (value, start index, sigma, x vector)
    stall_flags = []
    for k, (sigma, theta_k) in enumerate(_start_thetas(theta0, cfg)):
        s1 = sigma * x1[:, 0] + x1[:, 1:] @ theta_k
        s0 = sigma * x0[:, 0] + x0[:, 1:] @ theta_k
        lo = min(s1.min(), s0.min())
        hi = max(s1.max(), s0.max())
        x_start = np.concatenate([theta_k, [0.5 * (lo + hi)]])
        value_fn, grad_fn = _sim_objective(x1, x0, sigma, hv)
        x_opt, f_opt, stalled = _bfgs_max(value_fn, grad_fn, x_start, cfg)
        stall_flags.append(stalled)
        if best is None or f_opt > best[0]:
            best = (f_opt, k, sigma, x_opt)
    _warn_if_all_stalled(stall_flags)
    _, _, sigma, x_opt = best
    values = np.concatenate([[sigma], x_opt[:-1]])
    weights = CombinationWeights(values, orientation_flipped=sigma < 0)
    return weights, float(x_opt[-1])

"""Experiment runners behind the command line interface.

Three experiment kinds, all driven by a plain key=value config file:

* ``coverage``  - per scenario cell, repeatedly generate a panel, fit the
  two-stage combination, and interval the Youden index; aggregate coverage
  of the true value, average interval length, and mean limits.
* ``compare``   - per cell, generate a train/test split, fit the two-stage
  and the simultaneous methods on the same training panel (optionally with
  labels passed through an error-prone reference), and aggregate the mean
  and variance of the train and test Youden index per method.
* ``simulate``  - emit a single generated panel as CSV.

Replication r of cell c derives every random stream from the seed tuple
(base seed, c, r), so results do not depend on scheduling or thread count
and aggregation always runs in replication order.  Reports are JSON with
stable, versioned field names; wall time is tracked for the human-readable
rendering only and never enters the JSON.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    BiomarkerPanel,
    CombinationWeights,
    CutoffPolicy,
    LabelKind,
    ValidationError,
    YoudenFit,
    project_scores,
)
from .imperfect import ReferenceQuality, true_youden_from_proxy
from .inference import youden_interval, youden_interval_np
from .optimize import OptimizerConfig, estimate_weights_sim
from .simgen import (
    BinaryLogisticDesign,
    DEFAULT_GRADED_MEANS,
    Design,
    MvnEqualCovDesign,
    MvnIdentityDesign,
    MvnUnequalCovDesign,
    ScenarioSpec,
    corrupt_reference,
    default_binary_design,
    generate,
    population_truth,
)
from .youden import fit_two_stage, youden_at

SCHEMA_VERSION = 1

_COVERAGE_METHODS = ("proposed", "np")


class ConfigError(ValidationError):
    """A config file problem; the message carries source and line number."""


# ============================================================
# config file parsing
# ============================================================


def parse_config_text(text: str, source: str = "<config>") -> dict[str, tuple[int, str]]:
    """Parse key=value lines into {key: (line number, raw value)}.

    Blank lines and '#' comments (whole-line or trailing) are ignored;
    duplicate keys are rejected so a typo cannot silently lose a setting.
    """
    items: dict[str, tuple[int, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in items:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        items[key] = (lineno, value)
    return items


def parse_config_file(path: str) -> dict[str, tuple[int, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


_MISSING = object()


class _Config:
    """Typed, consume-tracking view over parsed config items."""

    def __init__(self, items: dict[str, tuple[int, str]], source: str):
        self.items = dict(items)
        self.source = source

    def _take(self, key: str):
        return self.items.pop(key, None)

    def get(self, key: str, parse, default=_MISSING):
        entry = self._take(key)
        if entry is None:
            if default is _MISSING:
                raise ConfigError(f"{self.source}: missing required key {key!r}")
            return default
        lineno, raw = entry
        try:
            return parse(raw)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"{self.source}:{lineno}: invalid value for {key!r}: {exc}") from exc

    def reject_leftovers(self, experiment: str) -> None:
        if self.items:
            key = min(self.items, key=lambda k: self.items[k][0])
            lineno = self.items[key][0]
            raise ConfigError(
                f"{self.source}:{lineno}: key {key!r} is not recognized for {experiment} runs"
            )


def _as_float(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _as_int(raw: str) -> int:
    return int(raw, 10)


def _as_float_list(raw: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",")]
    if any(not p for p in parts):
        raise ValueError("empty element in list")
    return tuple(_as_float(p) for p in parts)


def _as_int_list(raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",")]
    if any(not p for p in parts):
        raise ValueError("empty element in list")
    return tuple(_as_int(p) for p in parts)


def _as_policy(raw: str) -> CutoffPolicy:
    try:
        return CutoffPolicy(raw.strip().lower())
    except ValueError:
        raise ValueError("must be one of median, min, max") from None


def _as_methods(raw: str) -> tuple[str, ...]:
    name = raw.strip().lower()
    if name == "both":
        return ("tsm", "sim")
    if name in ("tsm", "sim"):
        return (name,)
    raise ValueError("must be one of tsm, sim, both")


# ============================================================
# plan construction
# ============================================================


@dataclass(frozen=True, eq=False)
class CellScenario:
    """One grid cell: a concrete design at one (prevalence, n, reference)."""

    index: int
    design: Design
    n: int
    prevalence: float
    reference: tuple[float, float] | None
    truth: float | None
    scenario_id: str


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    """Everything a coverage or compare run needs, fully validated."""

    experiment: str
    cells: tuple[CellScenario, ...]
    replications: int
    seed: int
    alpha: float | None
    policy: CutoffPolicy
    methods: tuple[str, ...]
    train_fraction: float | None
    n_starts: int
    max_iterations: int


@dataclass(frozen=True, eq=False)
class SimulatePlan:
    design: Design
    n: int
    prevalence: float
    seed: int
    reference: tuple[float, float] | None


def _design_label(design: Design) -> str:
    if isinstance(design, MvnIdentityDesign):
        return f"mvn-identity j0={design.target_youden:g} p={design.dim}"
    if isinstance(design, MvnEqualCovDesign):
        return f"mvn-equal-cov gamma={design.correlation:g}"
    if isinstance(design, MvnUnequalCovDesign):
        return (
            f"mvn-unequal-cov gamma1={design.correlation_diseased:g}"
            f" gamma0={design.correlation_healthy:g}"
        )
    return f"binary-logistic p={design.dim}"


def _scenario_id(design: Design, prevalence: float, n: int,
                 reference: tuple[float, float] | None) -> str:
    sid = f"{_design_label(design)} pi={prevalence:g} n={n}"
    if reference is not None:
        sid += f" se={reference[0]:g} sp={reference[1]:g}"
    return sid


def _design_dict(design: Design) -> dict:
    if isinstance(design, MvnIdentityDesign):
        return {"kind": "mvn-identity", "target_youden": design.target_youden, "dim": design.dim}
    if isinstance(design, MvnEqualCovDesign):
        return {
            "kind": "mvn-equal-cov",
            "means": list(design.mu_diseased),
            "correlation": design.correlation,
        }
    if isinstance(design, MvnUnequalCovDesign):
        return {
            "kind": "mvn-unequal-cov",
            "means": list(design.mu_diseased),
            "correlation_diseased": design.correlation_diseased,
            "correlation_healthy": design.correlation_healthy,
        }
    return {
        "kind": "binary-logistic",
        "marker_rates": list(design.marker_rates),
        "coefficients": list(design.coefficients),
        "intercept": design.intercept,
    }


def _design_axis(cfg: _Config, experiment: str):
    """Read design keys; returns a list of per-axis-value design factories.

    The grid axis lives on the design parameter each family naturally sweeps
    (target Youden for the identity design, correlation for the shared
    covariance design); the other designs contribute a single axis point.
    Factories take the cell prevalence, which only the binary design uses.
    """
    kind = cfg.get("design", str).strip().lower()
    if kind == "identity":
        targets = cfg.get("target_youden", _as_float_list)
        dim = cfg.get("dim", _as_int, 5)
        return [lambda pi, t=t: MvnIdentityDesign(t, dim) for t in targets]
    if kind == "equal-cov":
        means = cfg.get("means", _as_float_list, DEFAULT_GRADED_MEANS)
        gammas = cfg.get("correlation", _as_float_list)
        return [lambda pi, g=g: MvnEqualCovDesign(means, g) for g in gammas]
    if kind == "unequal-cov":
        means = cfg.get("means", _as_float_list, DEFAULT_GRADED_MEANS)
        g1 = cfg.get("correlation_diseased", _as_float)
        g0 = cfg.get("correlation_healthy", _as_float)
        return [lambda pi: MvnUnequalCovDesign(means, g1, g0)]
    if kind == "binary":
        rates = cfg.get("rates", _as_float_list, None)
        coefs = cfg.get("coefficients", _as_float_list, None)
        intercept = cfg.get("intercept", _as_float, None)
        if coefs is None:
            if rates is not None or intercept is not None:
                raise ConfigError(
                    f"{cfg.source}: rates/intercept require explicit coefficients; "
                    "without them the stock design for the cell prevalence is used"
                )
            return [lambda pi: default_binary_design(pi)]
        if rates is None:
            return [lambda pi: BinaryLogisticDesign(coefficients=coefs, intercept=intercept)]
        return [lambda pi: BinaryLogisticDesign(rates, coefs, intercept)]
    raise ConfigError(
        f"{cfg.source}: design must be one of identity, equal-cov, unequal-cov, binary; "
        f"got {kind!r}"
    )


def _reference_axis(cfg: _Config) -> list[tuple[float, float] | None]:
    ses = cfg.get("reference_sensitivity", _as_float_list, None)
    sps = cfg.get("reference_specificity", _as_float_list, None)
    if (ses is None) != (sps is None):
        raise ConfigError(
            f"{cfg.source}: reference_sensitivity and reference_specificity "
            "must be given together"
        )
    if ses is None:
        return [None]
    if len(ses) != len(sps):
        raise ConfigError(
            f"{cfg.source}: reference_sensitivity and reference_specificity "
            f"have different lengths ({len(ses)} vs {len(sps)}); they pair elementwise"
        )
    return list(zip(ses, sps))


def _apply_overrides(values: dict, overrides: dict) -> dict:
    merged = dict(values)
    for key, val in overrides.items():
        if val is not None:
            merged[key] = val
    return merged


def build_plan(
    experiment: str,
    items: dict[str, tuple[int, str]],
    source: str = "<config>",
    **overrides,
) -> ExperimentPlan:
    """Validate a parsed config into an ExperimentPlan.

    ``overrides`` are CLI values (seed, reps, alpha, cutoff_policy, method)
    applied on top of the config file; None means "not given".
    """
    if experiment not in ("coverage", "compare"):
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = _Config(items, source)

    factories = _design_axis(cfg, experiment)
    prevalences = cfg.get("prevalence", _as_float_list)
    ns = cfg.get("n", _as_int_list)

    settings = {
        "seed": cfg.get("seed", _as_int, 0),
        "reps": cfg.get("reps", _as_int, 1000),
        "cutoff_policy": cfg.get("cutoff_policy", _as_policy, CutoffPolicy.MEDIAN),
    }
    n_starts = cfg.get("n_starts", _as_int, 10)
    max_iterations = cfg.get("max_iterations", _as_int, 500)

    if experiment == "coverage":
        settings["alpha"] = cfg.get("alpha", _as_float, 0.05)
        references: list[tuple[float, float] | None] = [None]
        methods: tuple[str, ...] = _COVERAGE_METHODS
        train_fraction = None
    else:
        settings["method"] = cfg.get("method", _as_methods, ("tsm", "sim"))
        references = _reference_axis(cfg)
        train_fraction = cfg.get("train_fraction", _as_float, 0.5)

    cfg.reject_leftovers(experiment)
    settings = _apply_overrides(settings, overrides)

    if isinstance(settings.get("cutoff_policy"), str):
        settings["cutoff_policy"] = _as_policy(settings["cutoff_policy"])
    if isinstance(settings.get("method"), str):
        settings["method"] = _as_methods(settings["method"])
    if experiment == "compare":
        methods = settings["method"]
        alpha = None
    else:
        alpha = float(settings["alpha"])
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"{source}: alpha must be in (0, 1), got {alpha}")
    reps = int(settings["reps"])
    if reps < 1:
        raise ConfigError(f"{source}: reps must be at least 1, got {reps}")
    seed = int(settings["seed"])

    cells = []
    index = 0
    for factory in factories:
        for prevalence in prevalences:
            design = factory(prevalence)
            truth = None
            if experiment == "coverage":
                known = population_truth(design)
                if known is None:
                    raise ConfigError(
                        f"{source}: coverage needs a design with an analytic optimum "
                        "(identity or equal-cov)"
                    )
                truth = known.youden
            for n in ns:
                for reference in references:
                    # construct a throwaway spec so every cell is validated
                    # before any replication runs
                    ScenarioSpec(
                        design, n, prevalence, seed=0,
                        reference=reference, train_fraction=train_fraction,
                    )
                    cells.append(
                        CellScenario(
                            index=index,
                            design=design,
                            n=n,
                            prevalence=float(prevalence),
                            reference=reference,
                            truth=truth,
                            scenario_id=_scenario_id(design, prevalence, n, reference),
                        )
                    )
                    index += 1

    return ExperimentPlan(
        experiment=experiment,
        cells=tuple(cells),
        replications=reps,
        seed=seed,
        alpha=alpha,
        policy=settings["cutoff_policy"],
        methods=methods,
        train_fraction=train_fraction,
        n_starts=n_starts,
        max_iterations=max_iterations,
    )


def build_simulate_plan(
    items: dict[str, tuple[int, str]],
    source: str = "<config>",
    seed: int | None = None,
) -> SimulatePlan:
    """Validate a parsed config into a single-panel SimulatePlan."""
    cfg = _Config(items, source)
    factories = _design_axis(cfg, "simulate")
    prevalences = cfg.get("prevalence", _as_float_list)
    ns = cfg.get("n", _as_int_list)
    cfg_seed = cfg.get("seed", _as_int, 0)
    references = _reference_axis(cfg)
    cfg.reject_leftovers("simulate")
    if len(factories) != 1 or len(prevalences) != 1 or len(ns) != 1 or len(references) != 1:
        raise ConfigError(f"{source}: simulate takes exactly one value per key, not a grid")
    prevalence = prevalences[0]
    design = factories[0](prevalence)
    plan = SimulatePlan(
        design=design,
        n=ns[0],
        prevalence=float(prevalence),
        seed=int(seed if seed is not None else cfg_seed),
        reference=references[0],
    )
    ScenarioSpec(plan.design, plan.n, plan.prevalence, seed=plan.seed, reference=plan.reference)
    return plan


# ============================================================
# per-replication work (top-level so process pools can pickle it)
# ============================================================


@dataclass(frozen=True, eq=False)
class _RepTask:
    experiment: str
    cell: CellScenario
    rep: int
    base_seed: int
    alpha: float | None
    policy: CutoffPolicy
    methods: tuple[str, ...]
    train_fraction: float | None
    n_starts: int
    max_iterations: int


def _rep_seeds(task: _RepTask) -> tuple[int, int, int, int]:
    ss = np.random.SeedSequence(entropy=(task.base_seed, task.cell.index, task.rep))
    state = ss.generate_state(4, dtype=np.uint64)
    return tuple(int(v) for v in state)


def _optimizer_config(task: _RepTask, seed: int) -> OptimizerConfig:
    return OptimizerConfig(
        max_iterations=task.max_iterations, n_starts=task.n_starts, seed=seed
    )


def _evaluated_youden(panel: BiomarkerPanel, weights: CombinationWeights,
                      cutoff: float) -> float:
    return youden_at(project_scores(panel, weights), cutoff)


def _coverage_payload(task: _RepTask) -> dict:
    data_seed, _, opt_seed, _ = _rep_seeds(task)
    spec = ScenarioSpec(task.cell.design, task.cell.n, task.cell.prevalence, seed=data_seed)
    panel, _unused = generate(spec)
    fit = fit_two_stage(panel, config=_optimizer_config(task, opt_seed), policy=task.policy)
    truth = task.cell.truth
    point, ci = youden_interval(fit, panel, alpha=task.alpha)
    ci_np = youden_interval_np(fit, panel, alpha=task.alpha)
    return {
        "proposed": {
            "point": point,
            "lower": ci.lower,
            "upper": ci.upper,
            "length": ci.width,
            "covered": bool(ci.lower < truth < ci.upper),
            "train_youden": fit.youden,
        },
        "np": {
            "point": fit.youden,
            "lower": ci_np.lower,
            "upper": ci_np.upper,
            "length": ci_np.width,
            "covered": bool(ci_np.lower < truth < ci_np.upper),
            "train_youden": fit.youden,
        },
    }


def _compare_payload(task: _RepTask) -> dict:
    data_seed, corrupt_seed, opt_seed_tsm, opt_seed_sim = _rep_seeds(task)
    spec = ScenarioSpec(
        task.cell.design, task.cell.n, task.cell.prevalence,
        seed=data_seed, train_fraction=task.train_fraction,
    )
    train_gold, test_gold = generate(spec)

    fit_panel = train_gold
    if task.cell.reference is not None:
        se, sp = task.cell.reference
        noisy = corrupt_reference(
            train_gold.labels, se, sp,
            np.random.default_rng(np.random.SeedSequence(corrupt_seed)),
        )
        fit_panel = BiomarkerPanel(
            train_gold.measurements, noisy, LabelKind.IMPERFECT_REFERENCE
        )

    payload = {}
    if "tsm" in task.methods:
        fit = fit_two_stage(
            fit_panel, config=_optimizer_config(task, opt_seed_tsm), policy=task.policy
        )
        payload["tsm"] = {
            "train_youden": _evaluated_youden(train_gold, fit.weights, fit.cutoff),
            "test_youden": _evaluated_youden(test_gold, fit.weights, fit.cutoff),
        }
    if "sim" in task.methods:
        weights, cutoff = estimate_weights_sim(
            fit_panel, config=_optimizer_config(task, opt_seed_sim)
        )
        payload["sim"] = {
            "train_youden": _evaluated_youden(train_gold, weights, cutoff),
            "test_youden": _evaluated_youden(test_gold, weights, cutoff),
        }
    return payload


def _run_replication(task: _RepTask) -> tuple[int, str | None, dict | None]:
    """One replication; returns (rep, error message or None, payload or None)."""
    try:
        if task.experiment == "coverage":
            return task.rep, None, _coverage_payload(task)
        return task.rep, None, _compare_payload(task)
    except Exception as exc:  # recorded per replication, never fatal
        return task.rep, f"{type(exc).__name__}: {exc}", None


# ============================================================
# aggregation and reports
# ============================================================


@dataclass(frozen=True, eq=False)
class MethodAggregate:
    """Per-method summary of one cell's completed replications."""

    method: str
    coverage_rate: float | None = None
    average_length: float | None = None
    mean_lower: float | None = None
    mean_upper: float | None = None
    train_youden_mean: float | None = None
    train_youden_var: float | None = None
    test_youden_mean: float | None = None
    test_youden_var: float | None = None

    def __post_init__(self) -> None:
        if self.coverage_rate is not None and not 0.0 <= self.coverage_rate <= 1.0:
            raise ValidationError(f"coverage rate outside [0, 1]: {self.coverage_rate}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "coverage_rate": self.coverage_rate,
            "average_length": self.average_length,
            "mean_lower": self.mean_lower,
            "mean_upper": self.mean_upper,
            "train_youden_mean": self.train_youden_mean,
            "train_youden_var": self.train_youden_var,
            "test_youden_mean": self.test_youden_mean,
            "test_youden_var": self.test_youden_var,
        }


@dataclass(frozen=True, eq=False)
class CellResult:
    scenario_id: str
    design: Design
    n: int
    prevalence: float
    reference: tuple[float, float] | None
    truth: float | None
    requested_replications: int
    failures: tuple[tuple[int, str], ...]
    aggregates: tuple[MethodAggregate, ...]
    replication_log: tuple[dict, ...] | None

    @property
    def completed_replications(self) -> int:
        return self.requested_replications - len(self.failures)

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario_id,
            "design": _design_dict(self.design),
            "n": self.n,
            "prevalence": self.prevalence,
            "reference": None
            if self.reference is None
            else {"sensitivity": self.reference[0], "specificity": self.reference[1]},
            "truth": self.truth,
            "requested_replications": self.requested_replications,
            "completed_replications": self.completed_replications,
            "failures": [
                {"replication": rep, "error": msg} for rep, msg in self.failures
            ],
            "aggregates": [agg.to_dict() for agg in self.aggregates],
        }
        if self.replication_log is not None:
            out["replication_log"] = list(self.replication_log)
        return out


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """A finished run: settings echo plus per-cell results.

    ``wall_time_seconds`` is kept for the human rendering; the JSON omits it
    so identical (config, seed, single-thread) runs serialize identically.
    """

    experiment: str
    seed: int
    alpha: float | None
    cutoff_policy: CutoffPolicy
    methods: tuple[str, ...]
    replications: int
    train_fraction: float | None
    n_starts: int
    max_iterations: int
    cells: tuple[CellResult, ...]
    wall_time_seconds: float
    software_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "software_version": self.software_version,
            "experiment": self.experiment,
            "seed": self.seed,
            "alpha": self.alpha,
            "cutoff_policy": self.cutoff_policy.value,
            "methods": list(self.methods),
            "replications": self.replications,
            "train_fraction": self.train_fraction,
            "optimizer": {
                "n_starts": self.n_starts,
                "max_iterations": self.max_iterations,
            },
            "cells": [cell.to_dict() for cell in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _mean(values: list[float]) -> float | None:
    return float(np.mean(np.asarray(values, dtype=np.float64))) if values else None


def _variance(values: list[float]) -> float | None:
    if len(values) < 2:
        return None
    return float(np.var(np.asarray(values, dtype=np.float64), ddof=1))


def _aggregate_cell(
    plan: ExperimentPlan,
    cell: CellScenario,
    outcomes: list[tuple[int, str | None, dict | None]],
    keep_log: bool,
) -> CellResult:
    failures = tuple((rep, msg) for rep, msg, _ in outcomes if msg is not None)
    completed = [(rep, payload) for rep, msg, payload in outcomes if msg is None]

    aggregates = []
    log: list[dict] = []
    for method in plan.methods:
        rows = [(rep, payload[method]) for rep, payload in completed]
        if keep_log:
            for rep, row in rows:
                log.append({"replication": rep, "method": method, **row})
        if plan.experiment == "coverage":
            aggregates.append(
                MethodAggregate(
                    method=method,
                    coverage_rate=_mean([float(r["covered"]) for _, r in rows]),
                    average_length=_mean([r["length"] for _, r in rows]),
                    mean_lower=_mean([r["lower"] for _, r in rows]),
                    mean_upper=_mean([r["upper"] for _, r in rows]),
                    train_youden_mean=_mean([r["train_youden"] for _, r in rows]),
                    train_youden_var=_variance([r["train_youden"] for _, r in rows]),
                )
            )
        else:
            aggregates.append(
                MethodAggregate(
                    method=method,
                    train_youden_mean=_mean([r["train_youden"] for _, r in rows]),
                    train_youden_var=_variance([r["train_youden"] for _, r in rows]),
                    test_youden_mean=_mean([r["test_youden"] for _, r in rows]),
                    test_youden_var=_variance([r["test_youden"] for _, r in rows]),
                )
            )

    return CellResult(
        scenario_id=cell.scenario_id,
        design=cell.design,
        n=cell.n,
        prevalence=cell.prevalence,
        reference=cell.reference,
        truth=cell.truth,
        requested_replications=plan.replications,
        failures=failures,
        aggregates=tuple(aggregates),
        replication_log=tuple(log) if keep_log else None,
    )


def _run_cells(plan: ExperimentPlan, threads: int, keep_log: bool) -> tuple[CellResult, ...]:
    results = []
    for cell in plan.cells:
        tasks = [
            _RepTask(
                experiment=plan.experiment,
                cell=cell,
                rep=rep,
                base_seed=plan.seed,
                alpha=plan.alpha,
                policy=plan.policy,
                methods=plan.methods,
                train_fraction=plan.train_fraction,
                n_starts=plan.n_starts,
                max_iterations=plan.max_iterations,
            )
            for rep in range(plan.replications)
        ]
        if threads <= 1:
            outcomes = [_run_replication(task) for task in tasks]
        else:
            chunk = max(1, len(tasks) // (threads * 8))
            with ProcessPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(_run_replication, tasks, chunksize=chunk))
        results.append(_aggregate_cell(plan, cell, outcomes, keep_log))
    return tuple(results)


def _run_experiment(plan: ExperimentPlan, threads: int, keep_replications: bool) -> ExperimentReport:
    started = time.perf_counter()
    cells = _run_cells(plan, threads, keep_replications)
    return ExperimentReport(
        experiment=plan.experiment,
        seed=plan.seed,
        alpha=plan.alpha,
        cutoff_policy=plan.policy,
        methods=plan.methods,
        replications=plan.replications,
        train_fraction=plan.train_fraction,
        n_starts=plan.n_starts,
        max_iterations=plan.max_iterations,
        cells=cells,
        wall_time_seconds=time.perf_counter() - started,
    )


def run_coverage(plan: ExperimentPlan, threads: int = 1,
                 keep_replications: bool = False) -> ExperimentReport:
    """Interval coverage experiment over the plan's scenario grid."""
    if plan.experiment != "coverage":
        raise ValidationError(f"plan is for {plan.experiment!r}, not coverage")
    return _run_experiment(plan, threads, keep_replications)


def run_compare(plan: ExperimentPlan, threads: int = 1,
                keep_replications: bool = False) -> ExperimentReport:
    """Method comparison experiment over the plan's scenario grid."""
    if plan.experiment != "compare":
        raise ValidationError(f"plan is for {plan.experiment!r}, not compare")
    return _run_experiment(plan, threads, keep_replications)


def run_simulate(plan: SimulatePlan) -> BiomarkerPanel:
    """Generate the single panel a simulate plan describes."""
    spec = ScenarioSpec(
        plan.design, plan.n, plan.prevalence, seed=plan.seed, reference=plan.reference
    )
    panel, _ = generate(spec)
    return panel


# ============================================================
# text rendering
# ============================================================


def _fmt(value: float | None, width: int = 8, digits: int = 4) -> str:
    if value is None:
        return " " * (width - 1) + "-"
    return f"{value:{width}.{digits}f}"


def render_report_text(report: ExperimentReport) -> str:
    """Aligned table mirroring the layout of the summary tables."""
    lines = []
    sid_width = max([len(c.scenario_id) for c in report.cells] + [len("scenario")])
    if report.experiment == "coverage":
        header = (
            f"{'scenario':<{sid_width}}  {'method':<8}  {'reps':>5}  "
            f"{'CR':>8}  {'AL':>8}  {'LL':>8}  {'UL':>8}"
        )
        lines.append(header)
        for cell in report.cells:
            for agg in cell.aggregates:
                lines.append(
                    f"{cell.scenario_id:<{sid_width}}  {agg.method:<8}  "
                    f"{cell.completed_replications:>5}  "
                    f"{_fmt(agg.coverage_rate)}  {_fmt(agg.average_length)}  "
                    f"{_fmt(agg.mean_lower)}  {_fmt(agg.mean_upper)}"
                )
            if cell.failures:
                lines.append(
                    f"  {len(cell.failures)} failed replication(s); "
                    f"first: {cell.failures[0][1]}"
                )
    else:
        header = (
            f"{'scenario':<{sid_width}}  {'method':<8}  {'reps':>5}  "
            f"{'train mean':>10}  {'train var':>9}  {'test mean':>9}  {'test var':>8}"
        )
        lines.append(header)
        for cell in report.cells:
            for agg in cell.aggregates:
                lines.append(
                    f"{cell.scenario_id:<{sid_width}}  {agg.method:<8}  "
                    f"{cell.completed_replications:>5}  "
                    f"{_fmt(agg.train_youden_mean, 10)}  {_fmt(agg.train_youden_var, 9)}  "
                    f"{_fmt(agg.test_youden_mean, 9)}  {_fmt(agg.test_youden_var, 8)}"
                )
            if cell.failures:
                lines.append(
                    f"  {len(cell.failures)} failed replication(s); "
                    f"first: {cell.failures[0][1]}"
                )
    lines.append(f"seed: {report.seed}")
    lines.append(f"wall time: {report.wall_time_seconds:.1f} s")
    return "\n".join(lines) + "\n"


# ============================================================
# single-panel fitting (the `fit` subcommand)
# ============================================================


def _weights_list(weights: CombinationWeights) -> list[float]:
    return [float(v) for v in weights.values]


def _interval_dict(interval) -> dict:
    return {"lower": interval.lower, "upper": interval.upper, "level": interval.level}


def _sim_block(panel: BiomarkerPanel, weights: CombinationWeights, cutoff: float) -> dict:
    split = project_scores(panel, weights)
    m = int(np.count_nonzero(split.diseased_scores <= cutoff))
    k = int(np.count_nonzero(split.healthy_scores <= cutoff))
    return {
        "weights": _weights_list(weights),
        "orientation_flipped": weights.orientation_flipped,
        "cutoff": float(cutoff),
        "youden": k / split.n_healthy - m / split.n_diseased,
        "sensitivity": 1.0 - m / split.n_diseased,
        "specificity": k / split.n_healthy,
    }


def run_fit(
    panel: BiomarkerPanel,
    alpha: float = 0.05,
    policy: CutoffPolicy = CutoffPolicy.MEDIAN,
    methods: tuple[str, ...] = ("tsm",),
    quality: ReferenceQuality | None = None,
    seed: int = 0,
    n_starts: int = 10,
) -> dict:
    """Fit the requested methods on one panel; returns the report dict.

    The two-stage block always carries the square-and-add interval and its
    empirically-centered variant; the simultaneous block reports only its
    operating point.  With a reference ``quality`` the two-stage Youden is
    divided by the attenuation into a true-scale estimate.
    """
    if not 0.0 < float(alpha) < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha!r}")
    config = OptimizerConfig(n_starts=n_starts, seed=seed)
    results: dict[str, dict] = {}
    if "tsm" in methods:
        fit = fit_two_stage(panel, config=config, policy=policy)
        point, ci = youden_interval(fit, panel, alpha=alpha)
        ci_np = youden_interval_np(fit, panel, alpha=alpha)
        corrected = None
        in_range = None
        if quality is not None:
            corrected = true_youden_from_proxy(fit.youden, quality)
            in_range = bool(-1.0 <= corrected <= 1.0)
        results["tsm"] = {
            "weights": _weights_list(fit.weights),
            "orientation_flipped": fit.weights.orientation_flipped,
            "cutoff": fit.cutoff,
            "youden": fit.youden,
            "sensitivity": fit.sensitivity,
            "specificity": fit.specificity,
            "ac_youden": point,
            "interval": _interval_dict(ci),
            "interval_np": _interval_dict(ci_np),
            "corrected_youden": corrected,
            "correction_in_range": in_range,
        }
    if "sim" in methods:
        weights, cutoff = estimate_weights_sim(panel, config=config)
        results["sim"] = _sim_block(panel, weights, cutoff)
    return {
        "schema_version": SCHEMA_VERSION,
        "software_version": __version__,
        "command": "fit",
        "panel": {
            "n_diseased": panel.n_diseased,
            "n_healthy": panel.n_healthy,
            "n_markers": panel.p,
        },
        "alpha": float(alpha),
        "cutoff_policy": policy.value,
        "seed": int(seed),
        "reference_quality": None
        if quality is None
        else {"ppv": quality.ppv, "npv": quality.npv, "attenuation": quality.attenuation},
        "results": results,
    }


def render_fit_text(report: dict) -> str:
    panel = report["panel"]
    lines = [
        f"panel: {panel['n_diseased']} diseased / {panel['n_healthy']} healthy / "
        f"{panel['n_markers']} marker(s)"
    ]
    titles = {"tsm": "two-stage fit", "sim": "simultaneous fit"}
    level = 100.0 * (1.0 - report["alpha"])
    for method, block in report["results"].items():
        lines.append(titles[method])
        lines.append("  weights: " + "  ".join(f"{w:.6f}" for w in block["weights"]))
        lines.append(f"  cutoff:  {block['cutoff']:.6f}")
        lines.append(
            f"  youden:  {block['youden']:.4f}  "
            f"(sensitivity {block['sensitivity']:.4f}, specificity {block['specificity']:.4f})"
        )
        if method == "tsm":
            ci = block["interval"]
            ci_np = block["interval_np"]
            lines.append(f"  adjusted-count youden: {block['ac_youden']:.4f}")
            lines.append(f"  {level:.1f}% CI:      [{ci['lower']:.4f}, {ci['upper']:.4f}]")
            lines.append(f"  {level:.1f}% CI (NP): [{ci_np['lower']:.4f}, {ci_np['upper']:.4f}]")
            if block["corrected_youden"] is not None:
                note = "" if block["correction_in_range"] else "  (outside [-1, 1])"
                lines.append(f"  corrected youden: {block['corrected_youden']:.4f}{note}")
    return "\n".join(lines) + "\n"


def fit_report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ============================================================
# CSV input and output
# ============================================================


def read_panel_csv(path: str,
                   label_kind: LabelKind = LabelKind.GOLD_STANDARD) -> BiomarkerPanel:
    """Read a panel from CSV: a header with one ``label`` column, the rest
    numeric biomarker columns in order.

    Labels must be literal 0 or 1; anything else and every number that does
    not parse is reported with its line and column.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if header.count("label") != 1:
            raise ValidationError(
                f"{path}: header must contain exactly one 'label' column, got {header!r}"
            )
        label_col = header.index("label")
        if len(header) < 2:
            raise ValidationError(f"{path}: no biomarker columns besides 'label'")

        labels: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            raw_label = row[label_col].strip()
            if raw_label not in ("0", "1"):
                raise ValidationError(
                    f"{path}:{lineno}: column 'label': must be 0 or 1, got {raw_label!r}"
                )
            labels.append(int(raw_label))
            values = []
            for col, cell in enumerate(row):
                if col == label_col:
                    continue
                text = cell.strip()
                try:
                    value = float(text)
                except ValueError:
                    raise ValidationError(
                        f"{path}:{lineno}: column {header[col]!r}: not a number: {text!r}"
                    ) from None
                if not math.isfinite(value):
                    raise ValidationError(
                        f"{path}:{lineno}: column {header[col]!r}: non-finite value {text!r}"
                    )
                values.append(value)
            rows.append(values)
        if not rows:
            raise ValidationError(f"{path}: no data rows")

    return BiomarkerPanel(
        np.array(rows, dtype=np.float64),
        np.array(labels, dtype=np.int64),
        label_kind,
    )


def write_panel_csv(panel: BiomarkerPanel, stream) -> None:
    """Write a panel as CSV (columns: label, x1..xp; full float precision)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["label"] + [f"x{j + 1}" for j in range(panel.p)])
    for i in range(panel.n):
        writer.writerow(
            [int(panel.labels[i])] + [repr(float(v)) for v in panel.measurements[i]]
        )

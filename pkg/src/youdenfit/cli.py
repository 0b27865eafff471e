"""Command line entry point.

Subcommands: ``fit`` (one CSV panel), ``coverage`` and ``compare`` (config-
driven Monte-Carlo experiments), ``simulate`` (emit one generated panel as
CSV).  Exit codes: 0 success, 2 validation or config error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import CutoffPolicy, LabelKind, NumericError, ValidationError
from .harness import (
    build_plan,
    build_simulate_plan,
    fit_report_json,
    parse_config_file,
    read_panel_csv,
    render_fit_text,
    render_report_text,
    run_compare,
    run_coverage,
    run_fit,
    run_simulate,
    write_panel_csv,
)
from .imperfect import ReferenceQuality

_METHOD_SETS = {"tsm": ("tsm",), "sim": ("sim",), "both": ("tsm", "sim")}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="youdenfit",
        description=(
            "Linear biomarker combination maximizing the Youden index: "
            "two-stage fitting, confidence intervals, and simulation experiments."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit methods on a CSV panel")
    fit.add_argument("--input", required=True, help="CSV with a 'label' column")
    fit.add_argument("--alpha", type=float, default=0.05, help="interval miss rate")
    fit.add_argument(
        "--cutoff-policy", choices=["median", "min", "max"], default="median",
        help="tie-break among maximizing cutoffs",
    )
    fit.add_argument(
        "--method", choices=["tsm", "sim", "both"], default="tsm",
        help="which fitting methods to run",
    )
    fit.add_argument("--ppv", type=float, help="reference positive predictive value")
    fit.add_argument("--npv", type=float, help="reference negative predictive value")
    fit.add_argument("--seed", type=int, default=0, help="optimizer multistart seed")
    fit.add_argument("--out", help="write the JSON report here")

    for name in ("coverage", "compare"):
        exp = sub.add_parser(name, help=f"run the {name} experiment from a config file")
        exp.add_argument("--config", required=True, help="key=value config file")
        exp.add_argument("--seed", type=int, help="override the config seed")
        exp.add_argument("--reps", type=int, help="override the replication count")
        if name == "coverage":
            exp.add_argument("--alpha", type=float, help="override the interval miss rate")
        else:
            exp.add_argument(
                "--method", choices=["tsm", "sim", "both"], help="override the method set"
            )
        exp.add_argument(
            "--cutoff-policy", choices=["median", "min", "max"],
            help="override the cutoff tie-break policy",
        )
        exp.add_argument("--out", help="write the JSON report here")
        exp.add_argument(
            "--keep-replications", action="store_true",
            help="include the per-replication log in the JSON report",
        )
        exp.add_argument("--threads", type=int, default=1, help="worker processes")

    sim = sub.add_parser("simulate", help="emit one generated panel as CSV")
    sim.add_argument("--config", required=True, help="key=value config file")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--out", help="write the CSV here (default stdout)")

    return parser


def _reference_quality(args: argparse.Namespace) -> ReferenceQuality | None:
    if args.ppv is None and args.npv is None:
        return None
    if args.ppv is None or args.npv is None:
        raise ValidationError("--ppv and --npv must be given together")
    return ReferenceQuality(args.ppv, args.npv)


def _cmd_fit(args: argparse.Namespace) -> int:
    quality = _reference_quality(args)
    kind = LabelKind.GOLD_STANDARD if quality is None else LabelKind.IMPERFECT_REFERENCE
    panel = read_panel_csv(args.input, label_kind=kind)
    report = run_fit(
        panel,
        alpha=args.alpha,
        policy=CutoffPolicy(args.cutoff_policy),
        methods=_METHOD_SETS[args.method],
        quality=quality,
        seed=args.seed,
    )
    sys.stdout.write(render_fit_text(report))
    if args.out:
        Path(args.out).write_text(fit_report_json(report), encoding="utf-8")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    items = parse_config_file(args.config)
    overrides = {
        "seed": args.seed,
        "reps": args.reps,
        "cutoff_policy": args.cutoff_policy,
        "alpha": getattr(args, "alpha", None),
        "method": getattr(args, "method", None),
    }
    plan = build_plan(args.command, items, source=args.config, **overrides)
    runner = run_coverage if args.command == "coverage" else run_compare
    if args.threads < 1:
        raise ValidationError(f"--threads must be at least 1, got {args.threads}")
    report = runner(plan, threads=args.threads, keep_replications=args.keep_replications)
    sys.stdout.write(render_report_text(report))
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    items = parse_config_file(args.config)
    plan = build_simulate_plan(items, source=args.config, seed=args.seed)
    panel = run_simulate(plan)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_panel_csv(panel, fh)
    else:
        write_panel_csv(panel, sys.stdout)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command in ("coverage", "compare"):
            return _cmd_experiment(args)
        return _cmd_simulate(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

import json
from pathlib import Path

import numpy as np
import pytest

from youdenfit import (
    BiomarkerPanel,
    NumericError,
    ValidationError,
    cli,
)
from youdenfit.harness import (
    ConfigError,
    build_plan,
    build_simulate_plan,
    fit_report_json,
    parse_config_text,
    read_panel_csv,
    render_report_text,
    run_compare,
    run_coverage,
    run_fit,
    run_simulate,
    write_panel_csv,
)

DATA = Path(__file__).parent / "data"


def write(tmp_path: Path, name: str, text: str) -> str:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# ------------------------------------------------------------
# CSV reading and writing
# ------------------------------------------------------------

def test_read_panel_reports_bad_number_with_location(tmp_path):
    path = write(tmp_path, "p.csv", "label,x1\n1,2.0\n0,oops\n")
    with pytest.raises(ValidationError, match=r"p\.csv:3: column 'x1': not a number: 'oops'"):
        read_panel_csv(path)


def test_read_panel_rejects_nonliteral_labels(tmp_path):
    path = write(tmp_path, "p.csv", "label,x1\n1.0,2.0\n0,1.0\n")
    with pytest.raises(ValidationError, match=r"column 'label': must be 0 or 1"):
        read_panel_csv(path)


def test_read_panel_rejects_non_finite(tmp_path):
    path = write(tmp_path, "p.csv", "label,x1\n1,inf\n0,1.0\n")
    with pytest.raises(ValidationError, match="non-finite"):
        read_panel_csv(path)


def test_read_panel_structure_errors(tmp_path):
    with pytest.raises(ValidationError, match="empty file"):
        read_panel_csv(write(tmp_path, "a.csv", ""))
    with pytest.raises(ValidationError, match="exactly one 'label'"):
        read_panel_csv(write(tmp_path, "b.csv", "x1,x2\n1.0,2.0\n"))
    with pytest.raises(ValidationError, match="exactly one 'label'"):
        read_panel_csv(write(tmp_path, "c.csv", "label,label,x1\n1,0,2.0\n"))
    with pytest.raises(ValidationError, match="no biomarker columns"):
        read_panel_csv(write(tmp_path, "d.csv", "label\n1\n"))
    with pytest.raises(ValidationError, match="expected 3 fields, got 2"):
        read_panel_csv(write(tmp_path, "e.csv", "label,x1,x2\n1,2.0\n"))
    with pytest.raises(ValidationError, match="no data rows"):
        read_panel_csv(write(tmp_path, "f.csv", "label,x1\n\n\n"))
    with pytest.raises(ValidationError, match="cannot read"):
        read_panel_csv(str(tmp_path / "missing.csv"))


def test_read_panel_skips_blank_rows_and_orders_columns(tmp_path):
    path = write(tmp_path, "p.csv",
                 "x1,label,x2\n1.5,1,2.5\n\n0.5,0,0.25\n,,\n")
    panel = read_panel_csv(path)
    assert panel.n == 2
    assert panel.measurements.tolist() == [[1.5, 2.5], [0.5, 0.25]]
    assert panel.labels.tolist() == [1, 0]


def test_write_read_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    panel = BiomarkerPanel(rng.standard_normal((7, 3)) * 1e-3,
                           np.array([1, 1, 1, 0, 0, 0, 0]))
    path = tmp_path / "round.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_panel_csv(panel, fh)
    back = read_panel_csv(str(path))
    assert np.array_equal(back.measurements, panel.measurements)
    assert np.array_equal(back.labels, panel.labels)


def test_single_marker_csv_fit(tmp_path):
    rows = "\n".join(f"1,{v}" for v in (2.0, 2.5, 3.0))
    rows += "\n" + "\n".join(f"0,{v}" for v in (0.0, 0.5, 1.0))
    path = write(tmp_path, "one.csv", "label,x1\n" + rows + "\n")
    report = run_fit(read_panel_csv(path))
    blk = report["results"]["tsm"]
    assert blk["weights"] == [1.0]
    assert blk["youden"] == 1.0
    assert 1.0 < blk["cutoff"] < 2.0


# ------------------------------------------------------------
# golden single-panel report
# ------------------------------------------------------------

def test_golden_fit_report_bytes():
    panel = read_panel_csv(str(DATA / "panel_small.csv"))
    report = run_fit(panel, alpha=0.05, methods=("tsm", "sim"), seed=0)
    expected = (DATA / "fit_small.json").read_text(encoding="utf-8")
    assert fit_report_json(report) == expected


# ------------------------------------------------------------
# config parsing and plan building
# ------------------------------------------------------------

def test_parse_config_text_comments_and_duplicates():
    items = parse_config_text("# top\nseed = 4  # trailing\n\nn = 60\n")
    assert items == {"seed": (2, "4"), "n": (4, "60")}
    with pytest.raises(ConfigError, match=r"<config>:3: duplicate key 'seed'"):
        parse_config_text("seed = 1\nn = 2\nseed = 3\n")
    with pytest.raises(ConfigError, match=r"expected 'key = value'"):
        parse_config_text("just words\n")


def coverage_items(**extra):
    base = {
        "design": (1, "identity"),
        "target_youden": (2, "0.45"),
        "prevalence": (3, "0.5"),
        "n": (4, "60"),
        "reps": (5, "3"),
        "n_starts": (6, "2"),
        "seed": (7, "9"),
    }
    base.update(extra)
    return base


def test_build_plan_grid_and_truth():
    items = coverage_items(target_youden=(2, "0.45, 0.6"), n=(4, "60, 100"))
    plan = build_plan("coverage", items)
    assert len(plan.cells) == 4
    assert [c.index for c in plan.cells] == [0, 1, 2, 3]
    assert len({c.scenario_id for c in plan.cells}) == 4
    assert plan.cells[0].truth == pytest.approx(0.45, abs=1e-12)
    assert plan.cells[2].truth == pytest.approx(0.6, abs=1e-12)
    assert plan.methods == ("proposed", "np")


def test_build_plan_rejects_unknown_key():
    items = coverage_items(bogus=(8, "1"))
    with pytest.raises(ConfigError, match=r":8: key 'bogus' is not recognized"):
        build_plan("coverage", items)


def test_coverage_needs_analytic_truth():
    items = {
        "design": (1, "binary"),
        "prevalence": (2, "0.5"),
        "n": (3, "60"),
    }
    with pytest.raises(ConfigError, match="analytic optimum"):
        build_plan("coverage", items)


def test_compare_reference_axis():
    items = {
        "design": (1, "identity"),
        "target_youden": (2, "0.45"),
        "prevalence": (3, "0.5"),
        "n": (4, "80"),
        "reference_sensitivity": (5, "1.0, 0.9"),
        "reference_specificity": (6, "1.0, 0.9"),
    }
    plan = build_plan("compare", items)
    assert [c.reference for c in plan.cells] == [(1.0, 1.0), (0.9, 0.9)]
    items["reference_specificity"] = (6, "1.0")
    with pytest.raises(ConfigError, match="different lengths"):
        build_plan("compare", items)
    del items["reference_specificity"]
    with pytest.raises(ConfigError, match="must be given together"):
        build_plan("compare", items)


def test_cli_overrides_beat_config():
    plan = build_plan("coverage", coverage_items(), seed=77, reps=5,
                      cutoff_policy="max")
    assert plan.seed == 77
    assert plan.replications == 5
    assert plan.policy.value == "max"


# ------------------------------------------------------------
# experiment runners
# ------------------------------------------------------------

def small_coverage_plan(reps=3):
    return build_plan("coverage", coverage_items(reps=(5, str(reps))))


def test_coverage_report_is_reproducible_and_wall_time_free():
    a = run_coverage(small_coverage_plan())
    b = run_coverage(small_coverage_plan())
    assert a.to_json() == b.to_json()
    assert "wall_time" not in a.to_json()
    assert a.to_json() == a.to_json()
    payload = json.loads(a.to_json())
    assert payload["schema_version"] == 1
    assert payload["cells"][0]["completed_replications"] == 3
    cr = payload["cells"][0]["aggregates"][0]["coverage_rate"]
    assert 0.0 <= cr <= 1.0
    assert "wall time" in render_report_text(a)


def test_replication_log_recomputes_aggregates():
    report = run_coverage(small_coverage_plan(reps=4), keep_replications=True)
    cell = report.cells[0]
    for agg in cell.aggregates:
        rows = [r for r in cell.replication_log if r["method"] == agg.method]
        assert len(rows) == 4
        assert agg.coverage_rate == pytest.approx(
            np.mean([float(r["covered"]) for r in rows]), abs=1e-15)
        assert agg.average_length == pytest.approx(
            np.mean([r["length"] for r in rows]), abs=1e-15)


def test_thread_pool_matches_serial():
    serial = run_coverage(small_coverage_plan(reps=4), threads=1)
    pooled = run_coverage(small_coverage_plan(reps=4), threads=2)
    assert serial.to_json() == pooled.to_json()


def test_compare_run_aggregates():
    items = {
        "design": (1, "equal-cov"),
        "correlation": (2, "0.7"),
        "prevalence": (3, "0.5"),
        "n": (4, "60"),
        "reps": (5, "2"),
        "n_starts": (6, "2"),
        "seed": (7, "3"),
    }
    report = run_compare(build_plan("compare", items))
    assert report.methods == ("tsm", "sim")
    cell = report.cells[0]
    assert not cell.failures
    for agg in cell.aggregates:
        assert -1.0 <= agg.train_youden_mean <= 1.0
        assert agg.test_youden_mean is not None
        assert agg.train_youden_var >= 0.0
    text = render_report_text(report)
    assert "train mean" in text
    assert cell.scenario_id in text


def test_runner_rejects_wrong_plan_kind():
    plan = small_coverage_plan()
    with pytest.raises(ValidationError):
        run_compare(plan)


def test_simulate_plan_rejects_grids():
    items = {
        "design": (1, "identity"),
        "target_youden": (2, "0.45"),
        "prevalence": (3, "0.5"),
        "n": (4, "30, 60"),
    }
    with pytest.raises(ConfigError, match="exactly one value"):
        build_simulate_plan(items)


def test_simulate_round_trip():
    items = {
        "design": (1, "identity"),
        "target_youden": (2, "0.45"),
        "prevalence": (3, "0.5"),
        "n": (4, "30"),
        "seed": (5, "11"),
    }
    panel = run_simulate(build_simulate_plan(items))
    assert panel.n == 30
    assert int(panel.labels.sum()) == 15


# ------------------------------------------------------------
# command line
# ------------------------------------------------------------

def coverage_config_text(reps=2):
    return (
        "design = identity\ntarget_youden = 0.45\nprevalence = 0.5\n"
        f"n = 60\nreps = {reps}\nn_starts = 2\nseed = 9\n"
    )


def test_cli_fit_writes_json(tmp_path, capsys):
    out = tmp_path / "fit.json"
    code = cli.main(["fit", "--input", str(DATA / "panel_small.csv"),
                     "--method", "both", "--out", str(out)])
    assert code == 0
    assert "two-stage fit" in capsys.readouterr().out
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert set(payload["results"]) == {"tsm", "sim"}


def test_cli_fit_validation_errors(tmp_path, capsys):
    assert cli.main(["fit", "--input", str(tmp_path / "nope.csv")]) == 2
    assert "error:" in capsys.readouterr().err
    path = write(tmp_path, "p.csv", "label,x1\n1,2.0\n0,1.0\n")
    assert cli.main(["fit", "--input", path, "--ppv", "0.9"]) == 2
    assert "--npv" in capsys.readouterr().err


def test_cli_numeric_failures_exit_3(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise NumericError("objective is not finite")

    monkeypatch.setattr(cli, "run_fit", boom)
    code = cli.main(["fit", "--input", str(DATA / "panel_small.csv")])
    assert code == 3
    assert "numeric failure" in capsys.readouterr().err


def test_cli_coverage_byte_identical_reports(tmp_path, capsys):
    cfg = write(tmp_path, "cov.cfg", coverage_config_text())
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert cli.main(["coverage", "--config", cfg, "--out", str(out1)]) == 0
    assert cli.main(["coverage", "--config", cfg, "--out", str(out2)]) == 0
    capsys.readouterr()
    assert out1.read_bytes() == out2.read_bytes()


def test_cli_config_errors_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "design = identity\ndesign = identity\n")
    assert cli.main(["coverage", "--config", cfg]) == 2
    assert "duplicate key" in capsys.readouterr().err
    assert cli.main(["coverage", "--config", str(tmp_path / "none.cfg")]) == 2
    capsys.readouterr()


def test_cli_simulate_deterministic_and_overridable(tmp_path, capsys):
    cfg = write(tmp_path, "sim.cfg",
                "design = identity\ntarget_youden = 0.6\n"
                "prevalence = 0.5\nn = 24\nseed = 4\n")
    a, b, c = (tmp_path / name for name in ("a.csv", "b.csv", "c.csv"))
    assert cli.main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", str(b)]) == 0
    assert cli.main(["simulate", "--config", cfg, "--seed", "5",
                     "--out", str(c)]) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    panel = read_panel_csv(str(a))
    assert panel.n == 24

"""End-to-end runs through the command-line entry point."""
from __future__ import annotations

import re
from pathlib import Path

import pytest

from impliedcurves import cli

TRUTH_TEXT = """
truth.start = 2024-03-01T00:00:00Z
truth.days = 2
truth.first_expiry_days = 45
truth.expiry_spacing_days = 45
truth.expiry_count = 2
truth.strikes = 12
truth.moneyness_lo = 0.6
truth.moneyness_hi = 1.8
truth.noise_sd = 0.001
truth.outlier_fraction = 0.1
truth.seed = 5
truth.active_count = 0
"""

CONFIG_TEXT = """
io.input_dir = input
io.store_dir = store
io.output_dir = out
synth.truth_file = truth.conf
"""


def make_workspace(root: Path, config_text: str = CONFIG_TEXT) -> Path:
    (root / "truth.conf").write_text(TRUTH_TEXT, encoding="utf-8")
    config = root / "curves.conf"
    config.write_text(config_text, encoding="utf-8")
    (root / "input").mkdir(exist_ok=True)
    return config


def run(command: str, config: Path, *extra: str) -> int:
    return cli.main([command, "--config", str(config), *extra])


def report_numbers(capsys) -> list[int]:
    out = capsys.readouterr().out.strip().splitlines()[-1]
    return [int(v) for v in re.findall(r"\d+", out)]


@pytest.fixture(scope="module")
def pipeline_ws(tmp_path_factory):
    """A workspace with the full synth -> plot chain already run."""
    root = tmp_path_factory.mktemp("cli_e2e")
    config = make_workspace(root)
    for command in ("synth", "ingest", "estimate", "tenors", "plot"):
        assert cli.main([command, "--config", str(config)]) == 0
    return root, config


# --- the full chain ----------------------------------------------------------

def test_end_to_end_row_conservation(tmp_path, capsys):
    config = make_workspace(tmp_path)

    assert run("synth", config) == 0
    synth_rows, pairs, outliers, excluded = report_numbers(capsys)
    assert excluded == 0
    assert pairs == 48 * 2 * 12
    assert outliers == round(0.1 * 12) * 48 * 2
    dataset = tmp_path / "input" / "dataset.csv"
    assert synth_rows == len(dataset.read_text().splitlines()) - 1

    assert run("ingest", config) == 0
    files, rows_ok, days, rejected = report_numbers(capsys)
    assert (files, days, rejected) == (1, 2, 0)
    assert rows_ok == synth_rows
    store_files = sorted(
        p.name for p in (tmp_path / "store" / "BTC").glob("????-??-??.csv")
    )
    assert store_files == ["2024-03-01.csv", "2024-03-02.csv"]
    stored = sum(
        len((tmp_path / "store" / "BTC" / name).read_text().splitlines()) - 1
        for name in store_files
    )
    assert stored == rows_ok

    assert run("estimate", config) == 0
    curve_rows, days, rejections = report_numbers(capsys)
    assert days == 2
    assert curve_rows == 4                        # 2 days x 2 expiries
    curves = (tmp_path / "out" / "curves.csv").read_text().splitlines()
    assert curves[0] == "date,expiry,tau_years,rate_crypto,rate_ref,n_used,lambda,pooled_hours,flags"
    assert len(curves) - 1 == curve_rows

    assert run("tenors", config, "--tenors", "45") == 0
    tenor_rows, dates = report_numbers(capsys)[-2:]
    assert dates == 2
    tenors = (tmp_path / "out" / "tenors.csv").read_text().splitlines()
    assert tenors[0] == "date,tenor_days,leg,rate"
    assert len(tenors) - 1 == tenor_rows == 2 * 2  # 2 dates x 2 legs

    assert run("plot", config) == 0
    plots = sorted(p.name for p in (tmp_path / "out" / "plots").glob("*.svg"))
    assert plots == ["curve_2024-03-02.svg", "tenor_45d.svg"]
    svg = (tmp_path / "out" / "plots" / "curve_2024-03-02.svg").read_text()
    assert 'id="leg-crypto"' in svg and 'id="leg-ref"' in svg

    assert not list(tmp_path.rglob("*.tmp"))


def test_estimated_rates_near_truth(pipeline_ws):
    root, _ = pipeline_ws
    rows = (root / "out" / "curves.csv").read_text().splitlines()[1:]
    assert rows
    for row in rows:
        fields = row.split(",")
        rate_crypto, rate_ref = float(fields[3]), float(fields[4])
        assert abs(rate_crypto - 0.0) < 0.01
        assert abs(rate_ref - 0.0) < 0.01


def test_reruns_are_byte_identical(pipeline_ws, capsys):
    root, config = pipeline_ws
    first = {
        name: (root / "out" / name).read_bytes()
        for name in ("curves.csv", "tenors.csv", "rejections.csv")
    }
    plots = {p.name: p.read_bytes() for p in (root / "out" / "plots").glob("*.svg")}
    for command in ("estimate", "tenors", "plot"):
        assert run(command, config) == 0
    capsys.readouterr()
    for name, blob in first.items():
        assert (root / "out" / name).read_bytes() == blob, name
    for p in (root / "out" / "plots").glob("*.svg"):
        assert p.read_bytes() == plots[p.name], p.name


def test_synth_seed_override_changes_dataset(tmp_path, capsys):
    config = make_workspace(tmp_path)
    assert run("synth", config, "--seed", "1") == 0
    blob1 = (tmp_path / "input" / "dataset.csv").read_bytes()
    assert run("synth", config, "--seed", "1") == 0
    assert (tmp_path / "input" / "dataset.csv").read_bytes() == blob1
    assert run("synth", config, "--seed", "2") == 0
    assert (tmp_path / "input" / "dataset.csv").read_bytes() != blob1
    capsys.readouterr()


# --- edge cases -----------------------------------------------------------------

def test_ingest_empty_input_dir(tmp_path, capsys):
    config = make_workspace(tmp_path)
    assert run("ingest", config) == 0
    assert report_numbers(capsys) == [0, 0, 0, 0]
    assert (tmp_path / "store" / "BTC").is_dir()
    rejections = (tmp_path / "store" / "BTC" / "ingest_rejections.csv")
    assert len(rejections.read_text().splitlines()) == 1    # header only


def test_ingest_missing_input_dir_fails(tmp_path, capsys):
    config = make_workspace(tmp_path)
    (tmp_path / "input").rmdir()
    assert run("ingest", config) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_min_days_can_filter_everything(tmp_path, capsys):
    config = make_workspace(
        tmp_path, CONFIG_TEXT + "filters.min_days = 10000\n"
    )
    assert run("synth", config) == 0
    assert run("ingest", config) == 0
    assert run("estimate", config) == 0
    capsys.readouterr()
    curves = (tmp_path / "out" / "curves.csv").read_text().splitlines()
    assert len(curves) == 1                       # header only, exit 0


def test_tenors_before_estimate_fails(tmp_path, capsys):
    config = make_workspace(tmp_path)
    assert run("tenors", config) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_corrupted_row_is_rejected_not_fatal(tmp_path, capsys):
    config = make_workspace(tmp_path)
    assert run("synth", config) == 0
    dataset = tmp_path / "input" / "dataset.csv"
    lines = dataset.read_text().splitlines()
    lines[5] = "garbage,row"
    dataset.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert run("ingest", config) == 0
    _, rows_ok, _, rejected = report_numbers(capsys)
    assert rejected == 1
    assert rows_ok == len(lines) - 2              # header and the bad row
    rejections = (tmp_path / "store" / "BTC" / "ingest_rejections.csv")
    body = rejections.read_text().splitlines()
    assert len(body) == 2
    assert body[1].startswith("dataset.csv,5,")


def test_plot_without_data_renders_placeholders(tmp_path, capsys):
    config = make_workspace(tmp_path)
    (tmp_path / "out").mkdir()
    (tmp_path / "out" / "curves.csv").write_text(
        "date,expiry,tau_years,rate_crypto,rate_ref,n_used,lambda,pooled_hours,flags\n"
    )
    (tmp_path / "out" / "tenors.csv").write_text("date,tenor_days,leg,rate\n")
    assert run("plot", config) == 0
    capsys.readouterr()
    plots = {p.name: p.read_text() for p in (tmp_path / "out" / "plots").glob("*.svg")}
    assert set(plots) == {"curves.svg", "tenors.svg"}
    assert all("no data" in svg for svg in plots.values())


def test_bad_flag_values_exit_one(tmp_path, capsys):
    config = make_workspace(tmp_path)
    assert run("estimate", config, "--lambda-policy", "sometimes") == 1
    assert capsys.readouterr().err.startswith("error:")
    assert run("tenors", config, "--tenors", "x,y") == 1
    assert capsys.readouterr().err.startswith("error:")


def test_synth_requires_a_truth_spec(tmp_path, capsys):
    config = make_workspace(tmp_path, "io.input_dir = input\n")
    assert run("synth", config) == 1
    assert "truth" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["ingest", "--config", str(tmp_path / "nope.conf")]) == 1
    assert capsys.readouterr().err.startswith("error:")

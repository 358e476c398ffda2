"""Acceptance criteria for the whole artifact.

Each test is one criterion, checked at its stated tolerance; the terminal
summary prints one PASS/FAIL line per criterion.  Criteria 9 and 10 share
a one-year synthetic workspace built once per session.
"""
from __future__ import annotations

import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from impliedcurves import cli
from impliedcurves.curve import YieldCurve, build_curve, interpolate_tenor
from impliedcurves.estimator import (
    EstimatorInput,
    ZcEstimate,
    estimate_slice,
    gradient,
    objective,
    solve_closed_form,
)
from impliedcurves.ransac import (
    RansacConfig,
    Kept,
    Rejected,
    ransac_line,
    spread_screen,
    SpreadPoint,
)
from impliedcurves.synth import brute_force_minimize, generate_market

from helpers import flat_spec, one_slice, truth_zc
from test_curve import make_estimate, expiry_at


def random_estimator_input(seed: int) -> EstimatorInput:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 51))
    while True:
        m = rng.uniform(0.2, 3.0, n)
        if float(np.var(m)) > 1e-3:
            break
    a0 = rng.uniform(0.5, 1.1)
    b0 = rng.uniform(0.5, 1.1)
    y = a0 - b0 * m + rng.normal(0.0, 0.01, n)
    lam = (0.0, 1.0, float(n), 10.0 * n)[seed % 4]
    return EstimatorInput(
        moneyness=tuple(float(v) for v in m),
        y=tuple(float(v) for v in y),
        lam=lam,
        futures_ratio=float(a0 / b0),
    )


def test_criterion_01_oracle_equivalence():
    started = time.perf_counter()
    for seed in range(200):
        inp = random_estimator_input(seed)
        alpha, beta, _ = solve_closed_form(inp)
        got = brute_force_minimize(inp)
        assert abs(got.alpha - alpha) <= 1e-6, seed
        assert abs(got.beta - beta) <= 1e-6, seed
    assert time.perf_counter() - started < 60.0


def test_criterion_02_exact_recovery():
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    for case in range(1000):
        r_ref = float(rng.uniform(-0.05, 0.25))
        r_crypto = float(rng.uniform(-0.05, 0.25))
        days = (45.0, 91.0, 180.0, 365.0)[case % 4]
        spec = flat_spec(
            r_ref, r_crypto, days_to_expiry=days, n_strikes=12, seed=case
        )
        est = estimate_slice(one_slice(spec), RansacConfig(seed=case))
        assert isinstance(est, ZcEstimate), case
        assert abs(est.rate_ref - r_ref) <= 1e-10, case
        assert abs(est.rate_crypto - r_crypto) <= 1e-10, case
    assert time.perf_counter() - started < 5.0


def test_criterion_03_noisy_recovery():
    hits = 0
    trials = 500
    for seed in range(trials):
        spec = flat_spec(0.04, 0.01, n_strikes=30, noise_sd=0.002, seed=seed)
        est = estimate_slice(one_slice(spec), RansacConfig(seed=seed))
        assert isinstance(est, ZcEstimate)
        assert est.lambda_used == est.n_used       # lambda = n policy
        tau = est.tau_years
        ok_crypto = abs(est.zc_crypto - truth_zc(0.01, tau)) <= 0.005
        ok_ref = abs(est.zc_ref - truth_zc(0.04, tau)) <= 0.005
        hits += ok_crypto and ok_ref
    assert hits >= 0.95 * trials


def test_criterion_04_outlier_trimming():
    displacement = 3.0 * math.sqrt(0.004)
    n, n_out = 50, 10
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-0.8, 0.6, n)
        y = -1.01 * x + 0.02
        planted = rng.choice(n, size=n_out, replace=False)
        signs = np.where(rng.integers(0, 2, n_out) == 0, -1.0, 1.0)
        y[planted] += signs * displacement * rng.uniform(1.0, 2.0, n_out)
        points = [SpreadPoint(float(a), float(b)) for a, b in zip(x, y)]

        cfg = RansacConfig(seed=seed)
        result = ransac_line(points, cfg)
        assert abs(result.slope - (-1.01)) <= 0.02, seed
        flagged = {i for i, ok in enumerate(result.inlier_flags) if not ok}
        assert flagged == set(int(i) for i in planted), seed
        rerun = ransac_line(points, cfg)
        assert rerun == result, seed


def test_criterion_05_slope_screen_rule():
    kept = spread_screen(
        one_slice(flat_spec(0.04, 0.01, spread_slope=-1.05)).observations,
        RansacConfig(seed=1),
    )
    assert isinstance(kept, Kept)
    rejected = spread_screen(
        one_slice(flat_spec(0.04, 0.01, spread_slope=-1.15)).observations,
        RansacConfig(seed=1),
    )
    assert isinstance(rejected, Rejected)


def test_criterion_06_gradient_check():
    rng = np.random.default_rng(66)
    for point in range(100):
        inp = random_estimator_input(point)
        alpha = float(rng.uniform(-1.5, 1.5))
        beta = float(rng.uniform(-1.5, 1.5))
        g_a, g_b = gradient(inp, alpha, beta)
        h = 1e-4
        fd_a = (objective(inp, alpha + h, beta) - objective(inp, alpha - h, beta)) / (2 * h)
        fd_b = (objective(inp, alpha, beta + h) - objective(inp, alpha, beta - h)) / (2 * h)
        scale = max(1.0, abs(g_a), abs(g_b))
        assert abs(g_a - fd_a) / scale <= 1e-6, point
        assert abs(g_b - fd_b) / scale <= 1e-6, point


def test_criterion_07_large_lambda_consistency():
    from dataclasses import replace

    for seed in range(100):
        inp = replace(random_estimator_input(seed), lam=1e8)
        alpha, beta, _ = solve_closed_form(inp)
        rel = abs(alpha / beta - inp.futures_ratio) / abs(inp.futures_ratio)
        assert rel <= 1e-6, seed


def test_criterion_08_tenor_interpolation():
    from datetime import date

    curve = build_curve(date(2024, 3, 1), [
        (expiry_at(56.0), make_estimate(56.0 / 365.0, 0.010, 0.010)),
        (expiry_at(119.0), make_estimate(119.0 / 365.0, 0.020, 0.020)),
    ])
    expected = 0.01 + ((90.0 - 56.0) / (119.0 - 56.0)) * 0.01
    for leg in ("crypto", "ref"):
        got = interpolate_tenor(curve, 90.0, leg)
        assert abs(got - expected) <= 1e-12

    rng = np.random.default_rng(88)
    for _ in range(50):
        days = np.sort(rng.uniform(20.0, 400.0, 4))
        if float(np.min(np.diff(days))) < 1.0:
            continue
        rates = rng.uniform(-0.05, 0.25, 4)
        curve = build_curve(date(2024, 3, 1), [
            (expiry_at(float(d)), make_estimate(float(d) / 365.0, float(r), float(r)))
            for d, r in zip(days, rates)
        ])
        for d, r in zip(days, rates):
            got = interpolate_tenor(curve, float(d), "ref")
            assert abs(got - float(r)) <= 1e-12


YEAR_TRUTH = """
truth.start = 2024-01-01T00:00:00Z
truth.days = 365
truth.spot = 60000
truth.spot_vol = 0.5
truth.first_expiry_days = 60
truth.expiry_spacing_days = 60
truth.expiry_count = 8
truth.strikes = 30
truth.moneyness_lo = 0.5
truth.moneyness_hi = 2.0
truth.noise_sd = 0.002
truth.outlier_fraction = 0.10
truth.outlier_magnitude = 0.25
truth.rate_ref = 0:0.04
truth.rate_crypto = 0:0.0
truth.active_count = 2
truth.active_min_days = 30
truth.seed = 2024
"""

YEAR_CONFIG = """
io.input_dir = input
io.store_dir = {store}
io.output_dir = {out}
synth.truth_file = truth.conf
"""


def year_config(root: Path, tag: str, input_dir: str = "input") -> Path:
    text = YEAR_CONFIG.format(store=f"store{tag}", out=f"out{tag}")
    if input_dir != "input":
        text = text.replace("io.input_dir = input", f"io.input_dir = {input_dir}")
    path = root / f"curves{tag}.conf"
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def year_workspace(tmp_path_factory):
    """One year of hourly synthetic quotes plus a timed baseline run."""
    root = tmp_path_factory.mktemp("acceptance_year")
    (root / "truth.conf").write_text(YEAR_TRUTH, encoding="utf-8")
    (root / "input").mkdir()
    config = year_config(root, "A")
    assert cli.main(["synth", "--config", str(config)]) == 0

    started = time.perf_counter()
    for command in ("ingest", "estimate", "tenors"):
        assert cli.main([command, "--config", str(config)]) == 0
    elapsed = time.perf_counter() - started
    return root, config, elapsed


def read_tenor_rows(path: Path, tenor: float) -> dict[str, list[float]]:
    legs: dict[str, list[float]] = {"crypto": [], "ref": []}
    for line in path.read_text().splitlines()[1:]:
        date_str, tenor_str, leg, rate = line.split(",")
        if float(tenor_str) == tenor and rate:
            legs[leg].append(float(rate))
    return legs


def test_criterion_09_end_to_end_year(year_workspace):
    root, config, elapsed = year_workspace
    assert elapsed < 30.0

    legs = read_tenor_rows(root / "outA" / "tenors.csv", 90.0)
    assert len(legs["crypto"]) >= 300 and len(legs["ref"]) >= 300

    def rmse(values, truth):
        return math.sqrt(math.fsum((v - truth) ** 2 for v in values) / len(values))

    assert rmse(legs["crypto"], 0.0) <= 0.005     # 50 bp per leg
    assert rmse(legs["ref"], 0.04) <= 0.005
    mean_crypto = math.fsum(legs["crypto"]) / len(legs["crypto"])
    assert abs(mean_crypto) <= 0.002              # within 20 bp of zero


def test_criterion_10_determinism_and_resilience(year_workspace):
    root, config_a, _ = year_workspace

    # a second full run over the same inputs is byte-identical
    config_b = year_config(root, "B")
    for command in ("ingest", "estimate", "tenors"):
        assert cli.main([command, "--config", str(config_b)]) == 0
    for rel in ("curves.csv", "tenors.csv", "rejections.csv"):
        assert (root / "outB" / rel).read_bytes() == (root / "outA" / rel).read_bytes(), rel
    store_a = sorted(p.name for p in (root / "storeA" / "BTC").glob("*.csv"))
    store_b = sorted(p.name for p in (root / "storeB" / "BTC").glob("*.csv"))
    assert store_a == store_b
    for name in store_a:
        assert (root / "storeB" / "BTC" / name).read_bytes() == \
            (root / "storeA" / "BTC" / name).read_bytes(), name

    # corrupting 1% of input rows still runs and only moves rejection counts
    corrupted_dir = root / "inputC"
    corrupted_dir.mkdir()
    lines = (root / "input" / "dataset.csv").read_text().splitlines()
    corrupted = 0
    for i in range(1, len(lines)):
        if i % 100 == 0:
            lines[i] = "corrupted,beyond,repair"
            corrupted += 1
    (corrupted_dir / "dataset.csv").write_text("\n".join(lines) + "\n", "utf-8")
    assert corrupted >= len(lines) // 101

    config_c = year_config(root, "C", input_dir="inputC")
    for command in ("ingest", "estimate", "tenors"):
        assert cli.main([command, "--config", str(config_c)]) == 0

    rejections_c = (root / "storeC" / "BTC" / "ingest_rejections.csv").read_text()
    assert len(rejections_c.splitlines()) - 1 == corrupted
    rejections_a = (root / "storeA" / "BTC" / "ingest_rejections.csv").read_text()
    assert len(rejections_a.splitlines()) - 1 == 0

    def curve_keys(path: Path) -> list[tuple[str, str]]:
        rows = path.read_text().splitlines()[1:]
        return [tuple(r.split(",")[:2]) for r in rows]

    assert curve_keys(root / "outC" / "curves.csv") == \
        curve_keys(root / "outA" / "curves.csv")

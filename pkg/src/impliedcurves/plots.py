"""Static SVG figures for curves and tenor series.

Rendering is byte-deterministic: the SVG hash salt is pinned, the date
metadata is stripped, and figure geometry is fixed, so rerunning a plot on
the same inputs reproduces the same file.  Each plotted leg carries a gid
(``leg-crypto`` / ``leg-ref``) that downstream checks can look for.
"""
from __future__ import annotations

import csv
from datetime import date, datetime
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .config import PipelineConfig
from .curve import YieldCurve
from .errors import CurveError
from .pipeline import read_curves_csv, write_atomic

LEG_STYLE = {
    "crypto": dict(color="#d97706", marker="o"),
    "ref": dict(color="#2563eb", marker="s"),
}


def _deterministic_rc() -> dict:
    return {
        "svg.hashsalt": "impliedcurves",
        "figure.figsize": (8.0, 5.0),
        "figure.dpi": 100,
        "font.family": "DejaVu Sans",
    }


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    import io as _io

    buf = _io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    write_atomic(path, buf.getvalue())


def _no_data_figure(title: str):
    fig, ax = plt.subplots()
    ax.set_title(title)
    ax.annotate(
        "no data", xy=(0.5, 0.5), xycoords="axes fraction",
        ha="center", va="center", fontsize=14, color="#666666",
    )
    return fig


def render_curve_svg(curve: YieldCurve, path: Path) -> None:
    """One valuation day's rates against days to expiry, one line per leg."""
    with plt.rc_context(_deterministic_rc()):
        title = f"implied yields {curve.valuation_date.isoformat()}"
        legs = {
            "crypto": [(p.tau_years, p.rate_crypto) for p in curve.points if p.rate_crypto is not None],
            "ref": [(p.tau_years, p.rate_ref) for p in curve.points if p.rate_ref is not None],
        }
        if not legs["crypto"] and not legs["ref"]:
            _save(_no_data_figure(title), path)
            return
        fig, ax = plt.subplots()
        for leg, pts in legs.items():
            if not pts:
                continue
            days = [tau * 365.0 for tau, _ in pts]
            rates = [rate * 100.0 for _, rate in pts]
            (line,) = ax.plot(days, rates, label=leg, **LEG_STYLE[leg])
            line.set_gid(f"leg-{leg}")
        ax.set_xlabel("days to expiry")
        ax.set_ylabel("rate, % per year")
        ax.set_title(title)
        ax.legend()
        ax.grid(True, alpha=0.3)
        _save(fig, path)


def render_tenor_svg(
    tenor_days: float, rows: list[tuple[date, str, float]], path: Path
) -> None:
    """One tenor's rate history, one line per leg; rows are (date, leg, rate)."""
    with plt.rc_context(_deterministic_rc()):
        title = f"{tenor_days:g}-day tenor"
        if not rows:
            _save(_no_data_figure(title), path)
            return
        fig, ax = plt.subplots()
        for leg in ("crypto", "ref"):
            pts = [(d, r) for d, lg, r in rows if lg == leg]
            if not pts:
                continue
            (line,) = ax.plot(
                [d for d, _ in pts], [r * 100.0 for _, r in pts],
                label=leg, markersize=3, linewidth=1.0, **LEG_STYLE[leg],
            )
            line.set_gid(f"leg-{leg}")
        ax.set_xlabel("date")
        ax.set_ylabel("rate, % per year")
        ax.set_title(title)
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.autofmt_xdate()
        _save(fig, path)


def _read_tenors_csv(path: Path) -> dict[float, list[tuple[date, str, float]]]:
    if not path.is_file():
        raise CurveError(f"missing {path}; run tenors first")
    by_tenor: dict[float, list[tuple[date, str, float]]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        needed = {"date", "tenor_days", "leg", "rate"}
        if reader.fieldnames is None or needed - set(reader.fieldnames):
            raise CurveError(f"{path}: malformed header")
        for row in reader:
            try:
                by_tenor.setdefault(float(row["tenor_days"]), []).append(
                    (date.fromisoformat(row["date"]), row["leg"], float(row["rate"]))
                )
            except (ValueError, KeyError) as exc:
                raise CurveError(f"{path}: bad row {row!r}: {exc}") from None
    return by_tenor


def _selected_dates(cfg: PipelineConfig, curves: list[YieldCurve]) -> list[YieldCurve]:
    if cfg.plot_dates == "all":
        return curves
    if cfg.plot_dates == "last":
        return curves[-1:]
    try:
        wanted = {
            date.fromisoformat(part.strip())
            for part in cfg.plot_dates.split(",") if part.strip()
        }
    except ValueError:
        raise CurveError(f"bad plot.dates value {cfg.plot_dates!r}") from None
    return [c for c in curves if c.valuation_date in wanted]


def run_plot(cfg: PipelineConfig) -> list[Path]:
    """Render curve and tenor figures; returns the files written."""
    plot_dir = cfg.output_dir / "plots"
    written: list[Path] = []

    curves = read_curves_csv(cfg.output_dir / "curves.csv")
    if not curves:
        path = plot_dir / "curves.svg"
        with plt.rc_context(_deterministic_rc()):
            _save(_no_data_figure("implied yields"), path)
        written.append(path)
    else:
        for curve in _selected_dates(cfg, curves):
            path = plot_dir / f"curve_{curve.valuation_date.isoformat()}.svg"
            render_curve_svg(curve, path)
            written.append(path)

    by_tenor = _read_tenors_csv(cfg.output_dir / "tenors.csv")
    if not by_tenor:
        path = plot_dir / "tenors.svg"
        with plt.rc_context(_deterministic_rc()):
            _save(_no_data_figure("tenor series"), path)
        written.append(path)
    else:
        for tenor in sorted(by_tenor):
            rows = sorted(by_tenor[tenor], key=lambda r: (r[0], r[1]))
            path = plot_dir / f"tenor_{tenor:g}d.svg"
            render_tenor_svg(tenor, rows, path)
            written.append(path)
    return written

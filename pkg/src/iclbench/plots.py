"""Render the pipeline's CSV tables with matplotlib.

The CSVs are the source of truth; everything here is a convenience view of
them.  All functions take a CSV path and an output directory, write one file
named after the input table, and return the written paths.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["plot_curves", "plot_spd", "plot_profiles", "plot_mpr", "plot_risk"]


def _read_table(path) -> list[dict]:
    """CSV rows as dicts; values parsed as float where possible, '#' lines skipped."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            columns = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty table") from None
        for raw in reader:
            row = {}
            for name, cell in zip(columns, raw):
                try:
                    row[name] = float(cell)
                except ValueError:
                    row[name] = cell
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def _grouped(rows, *keys):
    out: dict[tuple, list[dict]] = {}
    for row in rows:
        out.setdefault(tuple(row[k] for k in keys), []).append(row)
    return out


def _grid_axes(n: int, panel=(3.2, 2.6)):
    ncols = min(3, n)
    nrows = math.ceil(n / ncols)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(panel[0] * ncols, panel[1] * nrows), squeeze=False
    )
    flat = [ax for row in axes for ax in row]
    for ax in flat[n:]:
        ax.set_visible(False)
    return fig, flat[:n]


def _save(fig, path) -> list[str]:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return [str(path)]


def _out_path(csv_path, out_dir, fmt) -> Path:
    return Path(out_dir) / f"{Path(csv_path).stem}.{fmt}"


def plot_curves(csv_path, out_dir, fmt="pdf") -> list[str]:
    """One log-scale error-vs-t panel per scenario, a line per learner."""
    rows = _read_table(csv_path)
    by_scenario = _grouped(rows, "scenario_id")
    fig, axes = _grid_axes(len(by_scenario))
    for ax, (key, group) in zip(axes, sorted(by_scenario.items())):
        for (learner,), series in sorted(_grouped(group, "learner_id").items()):
            series.sort(key=lambda r: r["t"])
            ax.plot([r["t"] for r in series], [r["mse"] for r in series],
                    label=learner, linewidth=1.2)
        ax.set_yscale("log")
        ax.set_title(key[0], fontsize=9)
        ax.set_xlabel("demonstrations t")
        ax.set_ylabel("MSE")
    axes[0].legend(fontsize=7)
    return _save(fig, _out_path(csv_path, out_dir, fmt))


def plot_spd(csv_path, out_dir, fmt="pdf") -> list[str]:
    """Squared prediction differences against the reference learner, per scenario."""
    rows = _read_table(csv_path)
    by_scenario = _grouped(rows, "scenario_id")
    fig, axes = _grid_axes(len(by_scenario))
    for ax, (key, group) in zip(axes, sorted(by_scenario.items())):
        for (learner, ref), series in sorted(
            _grouped(group, "learner_id", "reference_id").items()
        ):
            series.sort(key=lambda r: r["t"])
            ax.plot([r["t"] for r in series], [r["spd"] for r in series],
                    label=f"{learner} vs {ref}", linewidth=1.2)
        ax.set_yscale("log")
        ax.set_title(key[0], fontsize=9)
        ax.set_xlabel("demonstrations t")
        ax.set_ylabel("sq. prediction diff.")
    axes[0].legend(fontsize=7)
    return _save(fig, _out_path(csv_path, out_dir, fmt))


def plot_profiles(csv_path, out_dir, fmt="pdf") -> list[str]:
    """Performance profiles: fraction of scenarios within factor tau, per Q."""
    rows = _read_table(csv_path)
    by_q = _grouped(rows, "Q")
    fig, axes = _grid_axes(len(by_q))
    for ax, (key, group) in zip(axes, sorted(by_q.items())):
        for (learner,), series in sorted(_grouped(group, "learner_id").items()):
            series.sort(key=lambda r: r["tau"])
            ax.step([r["tau"] for r in series], [r["rho"] for r in series],
                    where="post", label=learner, linewidth=1.2)
        ax.set_title(f"Q = {key[0]:g}", fontsize=9)
        ax.set_xlabel("ratio threshold tau")
        ax.set_ylabel("fraction of scenarios")
        ax.set_ylim(-0.05, 1.05)
    axes[0].legend(fontsize=7)
    return _save(fig, _out_path(csv_path, out_dir, fmt))


def plot_mpr(csv_path, out_dir, fmt="pdf") -> list[str]:
    """Mean performance ratio as a function of the requirement quantile Q."""
    rows = _read_table(csv_path)
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    for (learner,), series in sorted(_grouped(rows, "learner_id").items()):
        series.sort(key=lambda r: r["Q"])
        finite = [r for r in series if math.isfinite(r["mpr"])]
        ax.plot([r["Q"] for r in finite], [r["mpr"] for r in finite],
                marker="o", markersize=3, label=learner, linewidth=1.2)
    ax.axhline(1.0, color="gray", linewidth=0.8, linestyle=":")
    ax.set_xlabel("requirement quantile Q")
    ax.set_ylabel("mean performance ratio")
    ax.legend(fontsize=7)
    return _save(fig, _out_path(csv_path, out_dir, fmt))


def plot_risk(csv_path, out_dir, fmt="pdf") -> list[str]:
    """Bayes risk (and excess risk when present) against t, with stderr bands."""
    rows = _read_table(csv_path)
    have_excess = any(
        isinstance(r.get("excess_risk"), float) and math.isfinite(r["excess_risk"])
        for r in rows
    )
    n_panels = 2 if have_excess else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(4.2 * n_panels, 3.0), squeeze=False)
    panels = axes[0]

    def band(ax, series, val, err, label):
        pts = [
            r for r in series
            if isinstance(r.get(val), float) and math.isfinite(r[val])
        ]
        ts = [r["t"] for r in pts]
        vs = [r[val] for r in pts]
        es = [r[err] if isinstance(r.get(err), float) else 0.0 for r in pts]
        ax.plot(ts, vs, label=label, linewidth=1.2)
        ax.fill_between(ts, [v - e for v, e in zip(vs, es)],
                        [v + e for v, e in zip(vs, es)], alpha=0.25, linewidth=0)

    for (sid, learner), series in sorted(
        _grouped(rows, "scenario_id", "learner_id").items()
    ):
        series.sort(key=lambda r: r["t"])
        name = f"{sid}" if not isinstance(learner, str) or not learner else f"{sid}/{learner}"
        band(panels[0], series, "bayes_risk", "bayes_stderr", name)
        if have_excess:
            band(panels[1], series, "excess_risk", "excess_stderr", name)
    panels[0].set_title("Bayes risk", fontsize=9)
    panels[0].set_yscale("log")
    if have_excess:
        panels[1].set_title("excess risk", fontsize=9)
    for ax in panels:
        ax.set_xlabel("demonstrations t")
        ax.legend(fontsize=7)
    return _save(fig, _out_path(csv_path, out_dir, fmt))

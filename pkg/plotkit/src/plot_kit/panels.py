"""Panel rendering from the pinned CSV artifacts.

This package deliberately knows nothing about the producer beyond the two
file schemas: ``evolution.csv`` (per scheme/time/node GP statistics) and
``paths.csv`` (sample paths, finite training trajectories, training targets).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "EVOLUTION_SCHEMA",
    "PATHS_SCHEMA",
    "SchemaError",
    "NoRowsError",
    "PanelSpec",
    "load_table",
    "panel_data",
    "render",
    "render_grid",
]

EVOLUTION_SCHEMA = (
    "scheme",
    "t",
    "node_index",
    "node_coord",
    "prior_mean",
    "prior_std",
    "post_mean",
    "post_std",
)
PATHS_SCHEMA = ("kind", "scheme", "t", "path_index", "node_index", "node_coord", "value")

_NUMERIC = {
    "t",
    "node_index",
    "node_coord",
    "prior_mean",
    "prior_std",
    "post_mean",
    "post_std",
    "path_index",
    "value",
}


class SchemaError(ValueError):
    """CSV columns do not match the pinned schema."""

    def __init__(self, path, expected, found):
        self.missing = [c for c in expected if c not in found]
        self.unexpected = [c for c in found if c not in expected]
        super().__init__(
            f"{path}: column mismatch; missing={self.missing} unexpected={self.unexpected}"
        )


class NoRowsError(ValueError):
    """A filter selected nothing (error code: no_rows)."""


@dataclass(frozen=True)
class PanelSpec:
    """One rendered column: a CSV, a scheme filter, and the times to draw."""

    csv_path: str
    scheme: str
    times: tuple
    out_path: str
    paths_csv: str | None = None
    paths_kind: str = "gp"
    max_paths: int | None = None
    title: str = ""

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))


def load_table(path: str, expected=EVOLUTION_SCHEMA) -> dict:
    """Read a CSV into column arrays, validating the exact column set."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(path, expected, []) from None
        if list(header) != list(expected):
            raise SchemaError(path, expected, header)
        raw_rows = [row for row in reader if row]
    columns: dict = {}
    for j, name in enumerate(header):
        values = [row[j] for row in raw_rows]
        if name in _NUMERIC:
            columns[name] = np.array([float(v) for v in values], dtype=float)
        else:
            columns[name] = np.array(values, dtype=object)
    columns["__len__"] = len(raw_rows)
    return columns


def _select(table: dict, mask: np.ndarray) -> dict:
    return {k: (v[mask] if isinstance(v, np.ndarray) else int(mask.sum())) for k, v in table.items()}


def panel_data(evolution: dict, scheme: str, t: float) -> dict:
    """Rows of one (scheme, time) slice, sorted by node coordinate."""
    mask = (evolution["scheme"] == scheme) & (evolution["t"] == t)
    if not mask.any():
        raise NoRowsError(f"no_rows: scheme={scheme!r} t={t!r} selected nothing")
    rows = _select(evolution, mask)
    order = np.argsort(rows["node_coord"], kind="stable")
    return {
        "coord": rows["node_coord"][order],
        "mean": rows["prior_mean"][order],
        "std": rows["prior_std"][order],
        "post_mean": rows["post_mean"][order],
        "post_std": rows["post_std"][order],
    }


def _path_curves(paths: dict, kind: str, scheme: str, t: float, max_paths=None):
    mask = (paths["kind"] == kind) & (paths["t"] == t)
    if scheme:
        mask &= paths["scheme"] == scheme
    rows = _select(paths, mask)
    curves = []
    if rows["__len__"] == 0:
        return curves
    for pid in np.unique(rows["path_index"]):
        if max_paths is not None and len(curves) >= max_paths:
            break
        sub_mask = rows["path_index"] == pid
        order = np.argsort(rows["node_coord"][sub_mask], kind="stable")
        curves.append(
            (rows["node_coord"][sub_mask][order], rows["value"][sub_mask][order])
        )
    return curves


def _train_points(paths: dict):
    mask = paths["kind"] == "train"
    rows = _select(paths, mask)
    return rows["node_coord"], rows["value"]


def _draw_panel(ax, data, curves, train_xy, t):
    for x, y in curves:
        ax.plot(x, y, color="tab:blue", linewidth=0.7, alpha=0.7, zorder=1)
    ax.fill_between(
        data["coord"],
        data["mean"] - 2.0 * data["std"],
        data["mean"] + 2.0 * data["std"],
        color="red",
        alpha=0.15,
        linewidth=0,
        zorder=2,
    )
    ax.plot(data["coord"], data["mean"], color="red", linewidth=1.6, zorder=3)
    if train_xy is not None and train_xy[0].size:
        ax.scatter(train_xy[0], train_xy[1], color="black", s=18, zorder=4)
    ax.set_title(f"t = {t:g}", fontsize=9)
    ax.set_xlabel("node coordinate")


def render(panel: PanelSpec) -> dict:
    """Render one panel column (rows = requested times) to ``panel.out_path``.

    Returns the plotted arrays per time so callers can verify them against
    the CSV exactly.
    """
    evolution = load_table(panel.csv_path, EVOLUTION_SCHEMA)
    paths = load_table(panel.paths_csv, PATHS_SCHEMA) if panel.paths_csv else None
    n_rows = len(panel.times)
    fig, axes = plt.subplots(n_rows, 1, figsize=(4.0, 2.6 * n_rows), squeeze=False)
    plotted = {}
    train_xy = _train_points(paths) if paths is not None else None
    for i, t in enumerate(panel.times):
        data = panel_data(evolution, panel.scheme, t)
        curves = (
            _path_curves(paths, panel.paths_kind, panel.scheme if panel.paths_kind == "gp" else "",
                         t, panel.max_paths)
            if paths is not None
            else []
        )
        _draw_panel(axes[i, 0], data, curves, train_xy, t)
        plotted[t] = data
    if panel.title:
        fig.suptitle(panel.title, fontsize=10)
    fig.tight_layout()
    fig.savefig(panel.out_path, dpi=110)
    plt.close(fig)
    return plotted


def render_grid(
    evolution_csv: str,
    paths_csv: str,
    out_path: str,
    times=None,
    max_paths: int | None = None,
) -> dict:
    """Three-column figure: finite trainings, exact-aggregation GP, sampled GP.

    Column 1 draws the finite-network trajectories over the first scheme's GP
    band; columns 2 and 3 draw GP sample paths for the first and second
    scheme.  Returns all plotted arrays keyed by (column, t).
    """
    evolution = load_table(evolution_csv, EVOLUTION_SCHEMA)
    paths = load_table(paths_csv, PATHS_SCHEMA)
    schemes = list(dict.fromkeys(evolution["scheme"]))
    if not schemes:
        raise NoRowsError("no_rows: evolution.csv is empty")
    base = schemes[0]
    sampled = schemes[1] if len(schemes) > 1 else schemes[0]

    def times_for(scheme, restrict_to=None):
        mask = evolution["scheme"] == scheme
        ts = np.unique(evolution["t"][mask])
        if restrict_to is not None:
            ts = ts[np.isin(ts, restrict_to)]
        return ts

    gcn_times = np.unique(paths["t"][paths["kind"] == "gcn"])
    if times is None:
        base_times = times_for(base, restrict_to=gcn_times if gcn_times.size else None)
        positive = base_times[base_times > 0]
        picks = []
        if positive.size:
            picks = [positive[0], positive[positive.size // 2], positive[-1]]
        else:
            picks = list(base_times[:1])
        times = list(dict.fromkeys(picks))
    times = [float(t) for t in times]

    columns = [
        ("finite networks", base, "gcn"),
        ("exact aggregation", base, "gp"),
        ("sampled aggregation", sampled, "gp"),
    ]
    fig, axes = plt.subplots(
        len(times), len(columns), figsize=(3.6 * len(columns), 2.5 * len(times)), squeeze=False
    )
    train_xy = _train_points(paths)
    plotted = {}
    for col, (title, scheme, kind) in enumerate(columns):
        scheme_times = times_for(scheme)
        for row, t in enumerate(times):
            # each scheme's grid may append its own final time; clamp to it
            t_eff = t if (scheme_times == t).any() else float(scheme_times[-1])
            data = panel_data(evolution, scheme, t_eff)
            curves = _path_curves(paths, kind, scheme if kind == "gp" else "", t_eff, max_paths)
            _draw_panel(axes[row, col], data, curves, train_xy, t_eff)
            if row == 0:
                axes[row, col].set_title(f"{title}\nt = {t_eff:g}", fontsize=9)
            plotted[(title, t_eff)] = data
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return plotted
